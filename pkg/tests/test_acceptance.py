"""
Acceptance criteria, one test per criterion.

Each test records a single ``CRITERION n: PASS|FAIL ...`` line; the lines
are printed in the pytest terminal summary and when the module is run as a
script.  Reference values are the published tables for the reference problem
(gamma = 1, tau1 = 1, beta = (x2, x1)).
"""

import sys
from math import factorial

import numpy as np
import pytest

from edg_control.assembly import DiscreteTriple, apply_B1, apply_B2, energy_B1, energy_B2
from edg_control.basis import ScalarBasis, build_spaces, triangle_quadrature
from edg_control.condensation import condense, reconstruct
from edg_control.harness import StudyConfig, run_convergence
from edg_control.mesh import build_structured

from conftest import setup_problem
from test_condensation import dense_reduction

LEVELS = (8, 16, 32, 64, 128)
RATE_TOL = 0.15
ABS_TOL = 0.25
IDENTITY_TOL = 1e-10
COMMUTE_TOL = 1e-8
OPTIMALITY_TOL = 1e-10

TABLE_1 = {
    "q": [2.8775e-01, 1.4501e-01, 7.2649e-02, 3.6342e-02, 1.8173e-02],
    "p": [2.1036e-01, 1.0341e-01, 5.1480e-02, 2.5712e-02, 1.2852e-02],
    "y": [1.1842e-02, 3.2095e-03, 8.4824e-04, 2.1887e-04, 5.5641e-05],
    "z": [1.8304e-02, 5.3420e-03, 1.4422e-03, 3.7460e-04, 9.5451e-05],
}
TABLE_1_ORDERS = {
    "q": [0.98861, 0.99716, 0.99929, 0.99982],
    "p": [1.0244, 1.0063, 1.0016, 1.0004],
    "y": [1.8834, 1.9198, 1.9544, 1.9759],
    "z": [1.7767, 1.8891, 1.9449, 1.9725],
}
TABLE_2 = {
    "q": [1.8365e-02, 4.9165e-03, 1.2726e-03, 3.2189e-04, 8.0742e-05],
    "p": [1.6649e-02, 5.6050e-03, 1.5952e-03, 4.1463e-04, 1.0475e-04],
    "y": [1.3524e-03, 1.8347e-04, 2.3956e-05, 3.0691e-06, 3.8882e-07],
    "z": [3.2125e-03, 4.2489e-04, 5.4721e-05, 6.9745e-06, 8.8190e-07],
}
TABLE_2_ORDERS = {
    "q": [1.9012, 1.9498, 1.9831, 1.9952],
    "p": [1.5707, 1.8129, 1.9439, 1.9848],
    "y": [2.8819, 2.9371, 2.9645, 2.9807],
    "z": [2.9186, 2.9569, 2.9719, 2.9834],
}

RESULTS = {}


def record(number, ok, detail):
    line = f"CRITERION {number}: {'PASS' if ok else 'FAIL'} {detail}"
    RESULTS[number] = line
    print(line)
    return ok


_STUDIES = {}


def study(k):
    # both paths on every level, so criteria 3 and 7 reuse the table runs
    if k not in _STUDIES:
        _STUDIES[k] = run_convergence(StudyConfig(k=k, approach="both", levels=LEVELS))
    return _STUDIES[k]


def table_check(report, table, orders):
    failures = []
    for name, ref in table.items():
        got = report.errors[name]
        for n, e, r in zip(report.levels, got, ref):
            dev = e / r - 1
            if abs(dev) > ABS_TOL:
                failures.append(f"{name}(n={n}) error {e:.4e} vs {r:.4e} ({dev:+.0%})")
        for i, (o, r) in enumerate(zip(report.orders[name], orders[name])):
            if abs(o - r) > RATE_TOL:
                pair = f"{report.levels[i]}->{report.levels[i + 1]}"
                failures.append(f"{name}({pair}) order {o:.4f} vs {r:.4f}")
    return failures


def _table_criterion(number, k, table, orders):
    failures = table_check(study(k), table, orders)
    detail = (f"k={k} levels {LEVELS[0]}..{LEVELS[-1]}: all rates within {RATE_TOL} and errors "
              f"within {ABS_TOL:.0%}" if not failures
              else f"k={k}: {len(failures)} mismatches: " + "; ".join(failures))
    return record(number, not failures, detail)


def test_criterion_1_table1():
    assert _table_criterion(1, 0, TABLE_1, TABLE_1_ORDERS), RESULTS[1]


def test_criterion_2_table2():
    assert _table_criterion(2, 1, TABLE_2, TABLE_2_ORDERS), RESULTS[2]


def test_criterion_3_commutativity():
    worst = max(max(d.values()) for k in (0, 1) for d in study(k).discrepancy)
    mesh, s, params, data, b = setup_problem(n=8, k=0, tau2=1.0)
    from edg_control.solve import check_commutativity, solve_do, solve_od
    violated = check_commutativity(solve_od(mesh, s, params, data, blocks=b),
                                   solve_do(mesh, s, params, data, blocks=b))["z"]
    ok = worst <= COMMUTE_TOL and violated > 1e-4
    assert record(3, ok, f"max OD/DO discrepancy {worst:.2e} (<= {COMMUTE_TOL:.0e}) over "
                         f"k=0,1 levels {LEVELS}; tau2=tau1 z discrepancy {violated:.4e} "
                         f"(> 1e-4)"), RESULTS[3]


def test_criterion_4_identities():
    rng = np.random.default_rng(4)
    worst_energy = worst_adjoint = 0.0
    min_violation = np.inf
    for n in (2, 4, 8):
        for k in (0, 1):
            _, s, _, _, b = setup_problem(n=n, k=k)
            _, _, _, _, bad = setup_problem(n=n, k=k, tau2=1.0)
            for _ in range(20):
                v, w = DiscreteTriple.random(s, rng), DiscreteTriple.random(s, rng)
                for form, energy in ((apply_B1, energy_B1), (apply_B2, energy_B2)):
                    ref = energy(v, b.disc)
                    worst_energy = max(worst_energy, abs(form(v, v, b.disc) - ref) / abs(ref))
                for blocks, good in ((b, True), (bad, False)):
                    t1 = apply_B1(v, w.scaled(1.0, -1.0, -1.0), blocks.disc)
                    t2 = apply_B2(w, v.scaled(-1.0, 1.0, 1.0), blocks.disc)
                    d = abs(t1 + t2) / (abs(t1) + abs(t2))
                    if good:
                        worst_adjoint = max(worst_adjoint, d)
                    else:
                        min_violation = min(min_violation, d)
    ok = worst_energy <= IDENTITY_TOL and worst_adjoint <= IDENTITY_TOL and min_violation > 1e-6
    assert record(4, ok, f"energy identity {worst_energy:.1e}, adjoint identity "
                         f"{worst_adjoint:.1e} (<= {IDENTITY_TOL:.0e}); with tau2=tau1 the "
                         f"adjoint defect is >= {min_violation:.1e}"), RESULTS[4]


def test_criterion_5_condensation():
    rng = np.random.default_rng(5)
    worst_op = worst_row = 0.0
    for n in (1, 2):
        for k in (0, 1):
            _, s, _, _, b = setup_problem(n=n, k=k)
            ops = condense(b)
            G5, G6, H3, _ = dense_reduction(b)
            if G5.size:
                worst_op = max(worst_op, np.abs(ops.G5.toarray() - G5).max(),
                               np.abs(ops.G6.toarray() - G6).max(), np.abs(ops.H3 - H3).max())
            for _ in range(10):
                g, zeta = rng.standard_normal(s.n_free), rng.standard_normal(s.n_scalar)
                a, y = reconstruct(ops, g, zeta)
                r1 = b.A1 @ a - b.A2 @ y + b.A3 @ g + b.b2
                r2 = b.A2.T @ a + b.A4 @ y + b.A5 @ g - b.A6 @ zeta - (b.b3 - b.b4)
                worst_row = max(worst_row, np.abs(r1).max(initial=0.0),
                                np.abs(r2).max(initial=0.0))
    ok = worst_op <= 1e-10 and worst_row <= 1e-10
    assert record(5, ok, f"G5/G6/H3 vs dense elimination {worst_op:.1e}, block-row residuals "
                         f"{worst_row:.1e} (<= 1e-10)"), RESULTS[5]


def test_criterion_6_unit_suite():
    problems = []
    for n in range(1, 17):
        m = build_structured(n)
        counts = (m.n_vertices, m.n_elements, m.n_faces, len(m.boundary_faces))
        if counts != ((n + 1) ** 2, 2 * n * n, 3 * n * n + 2 * n, 4 * n):
            problems.append(f"counts n={n}")
        if m.n_vertices - m.n_faces + m.n_elements != 1:
            problems.append(f"Euler n={n}")
        if abs(m.signed_areas().sum() - 1) > 1e-14:
            problems.append(f"area n={n}")
    rng = np.random.default_rng(6)
    u = rng.random((50, 2))
    pts = np.where(u.sum(axis=1, keepdims=True) > 1, 1 - u, u)
    for degree in range(4):
        if np.max(np.abs(ScalarBasis(degree).values(pts).sum(axis=1) - 1)) > 1e-13:
            problems.append(f"partition of unity degree {degree}")
    for exactness in range(1, 15):
        rule = triangle_quadrature(exactness)
        x, y = rule.points.T
        for t in range(rule.exactness + 1):
            for bexp in range(t + 1):
                a = t - bexp
                exact = factorial(a) * factorial(bexp) / factorial(a + bexp + 2)
                if abs(np.sum(rule.weights * x**a * y**bexp) - exact) > 1e-15:
                    problems.append(f"quadrature {exactness}: x^{a} y^{bexp}")
    for (n, k), free in {(1, 0): 0, (2, 0): 1, (2, 1): 9, (4, 0): 9, (4, 1): 49}.items():
        if build_spaces(build_structured(n), k).n_free != free:
            problems.append(f"trace dofs n={n} k={k}")
    assert record(6, not problems, "mesh counts, Euler relation, areas, partition of unity, "
                                   "monomial quadrature, trace dof counts" if not problems
                  else "; ".join(problems)), RESULTS[6]


def test_criterion_7_optimality():
    worst = 0.0
    for k in (0, 1):
        for per_level in study(k).optimality:
            worst = max(worst, *per_level.values())
    assert record(7, worst <= OPTIMALITY_TOL,
                  f"max ||gamma u + z||/||z|| = {worst:.1e} over OD and DO, k=0,1, "
                  f"levels {LEVELS}"), RESULTS[7]


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
