"""
Solution paths for the discrete optimality system.

``solve_od`` assembles the fully coupled system in the unknowns
(q, y, y_hat, p, z, z_hat, u) and solves it directly.  ``solve_do``
condenses the state equations, solves the reduced equality-constrained
quadratic program through its KKT system and recovers the dual fields from
the discrete adjoint equations.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import assemble_blocks, constraint_matrix, dual_operator, state_operator
from .condensation import condense, reconstruct
from .errors import FactorizationError, InvalidComparison

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10
FIELDS = ("q", "y", "y_trace", "p", "z", "z_trace", "u")


def relative_residual(A, x, b):
    r = np.linalg.norm(A @ x - b)
    nb = np.linalg.norm(b)
    return float(r / nb) if nb > 0 else float(r)


# Symmetric minimum-degree ordering with diagonal pivots keeps the fill of
# these pattern-symmetric systems low; threshold partial pivoting destroys
# the ordering and is kept only as a fallback.
_STRATEGIES = (
    dict(permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
         options=dict(SymmetricMode=True)),
    dict(permc_spec="COLAMD"),
)


def _lu_solve(A, b, tol, refine, opts):
    lu = spla.splu(A, **opts)
    x = lu.solve(b)
    res = relative_residual(A, x, b)
    for _ in range(refine):
        if res <= tol or not np.isfinite(res):
            break
        x = x + lu.solve(b - A @ x)
        res = relative_residual(A, x, b)
    return x, res


def sparse_solve(A, b, tol=RESIDUAL_TOL, refine=2):
    """
    Solve ``A x = b`` by sparse LU.

    A fill-reducing symmetric ordering with diagonal pivots is tried first;
    if it breaks down or misses ``tol`` (after a couple of
    iterative-refinement sweeps), the solve is repeated with partial
    pivoting.

    Raises
    ------
    FactorizationError
        If the matrix is singular or the residual target is not reached.
    """
    A = sp.csc_matrix(A)
    b = np.asarray(b, dtype=float)
    if A.shape[0] != A.shape[1] or A.shape[0] != len(b):
        raise FactorizationError(f"incompatible system shapes {A.shape} and {b.shape}")
    if A.shape[0] == 0:
        return np.zeros(0)
    err = "no factorization attempted"
    for opts in _STRATEGIES:
        try:
            x, res = _lu_solve(A, b, tol, refine, opts)
        except RuntimeError as exc:
            err = f"sparse LU failed: {exc}"
            continue
        if np.isfinite(res) and res <= tol:
            return x
        err = f"relative residual {res:.3e} exceeds {tol:.1e}"
        log.debug("LU strategy %s: %s", opts["permc_spec"], err)
    raise FactorizationError(err)


@dataclass(frozen=True)
class SolutionFields:
    """
    Coefficient vectors of all discrete fields.

    Traces hold free dofs only; ``linear_residual`` is the largest relative
    residual among the linear solves performed.
    """

    q: np.ndarray
    p: np.ndarray
    y: np.ndarray
    z: np.ndarray
    u: np.ndarray
    y_trace: np.ndarray
    z_trace: np.ndarray
    approach: str
    linear_residual: float
    n: int = 0
    k: int = 0
    info: dict = field(default_factory=dict, compare=False)

    def optimality_defect(self, gamma):
        """``||gamma u + z|| / ||z||`` on the coefficient vectors."""
        nz = np.linalg.norm(self.z)
        d = np.linalg.norm(gamma * self.u + self.z)
        return float(d / nz) if nz > 0 else float(d)


def _setup(mesh, spaces, params, data, blocks):
    if blocks is None:
        blocks = assemble_blocks(mesh, spaces, params, data)
    return blocks


def _embed(M, r0, c0, shape):
    M = sp.coo_matrix(M)
    return sp.coo_matrix((M.data, (M.row + r0, M.col + c0)), shape=shape)


def od_system(blocks):
    """
    Coupled matrix and right-hand side of the full discrete optimality system.

    Unknown order: q, y, y_hat, p, z, z_hat, u; equation order: the three
    rows of the first form, the three rows of the second form, optimality.
    """
    s = blocks.spaces
    N1, N2, Nf = s.n_flux, s.n_scalar, s.n_free
    nx = N1 + N2 + Nf
    shape = (2 * nx + N2, 2 * nx + N2)
    gamma = blocks.params.gamma
    A6 = blocks.A6

    K1, K1c = state_operator(blocks)
    K2 = dual_operator(blocks)
    A = (_embed(K1, 0, 0, shape)
         + _embed(-A6, N1, 2 * nx, shape)
         + _embed(-A6, nx + N1, N1, shape)
         + _embed(K2, nx, nx, shape)
         + _embed(A6, 2 * nx, nx + N1, shape)
         + _embed(gamma * A6, 2 * nx, 2 * nx, shape)).tocsc()

    rhs1 = np.concatenate([np.zeros(N1), blocks.b3, np.zeros(Nf)]) - K1c @ blocks.g_constrained
    rhs2 = np.concatenate([np.zeros(N1), -blocks.b1, np.zeros(Nf)])
    return A, np.concatenate([rhs1, rhs2, np.zeros(N2)])


def _unpack_od(x, s):
    N1, N2, Nf = s.n_flux, s.n_scalar, s.n_free
    sizes = [N1, N2, Nf, N1, N2, Nf, N2]
    parts = np.split(x, np.cumsum(sizes)[:-1])
    return dict(zip(FIELDS, parts))


def solve_od(mesh, spaces, params, data, blocks=None):
    """Optimize-then-discretize: one sparse solve of the coupled system."""
    blocks = _setup(mesh, spaces, params, data, blocks)
    A, rhs = od_system(blocks)
    x = sparse_solve(A, rhs)
    res = relative_residual(A, x, rhs)
    f = _unpack_od(x, spaces)
    log.debug("OD n=%d k=%d unknowns=%d residual=%.2e", mesh.n, spaces.k, len(x), res)
    return SolutionFields(q=f["q"], p=f["p"], y=f["y"], z=f["z"], u=f["u"],
                          y_trace=f["y_trace"], z_trace=f["z_trace"], approach="OD",
                          linear_residual=res, n=mesh.n, k=spaces.k,
                          info={"unknowns": len(x)})


@dataclass
class ReducedQP:
    """
    Reduced problem in (trace, control):

        min 1/2 [g; c]^T [[B1, B2], [B3, B4]] [g; c] + [b5; b6]^T [g; c]
        s.t. G5 g + G6 c = H3
    """

    B1: sp.csr_matrix
    B2: sp.csr_matrix
    B3: sp.csr_matrix
    B4: sp.csr_matrix
    b5: np.ndarray
    b6: np.ndarray
    G5: sp.csr_matrix
    G6: sp.csr_matrix
    H3: np.ndarray

    @property
    def hessian(self):
        return sp.bmat([[self.B1, self.B2], [self.B3, self.B4]], format="csr")

    @property
    def gradient(self):
        return np.concatenate([self.b5, self.b6])

    @property
    def constraint(self):
        return sp.hstack([self.G5, self.G6], format="csr")

    def kkt(self):
        G = self.constraint
        A = sp.bmat([[self.hessian, G.T], [G, None]], format="csc")
        return A, np.concatenate([-self.gradient, self.H3])


def reduced_qp(blocks, ops):
    gamma = blocks.params.gamma
    A6 = blocks.A6
    G3, G4 = ops.G3, ops.G4
    r = A6 @ ops.H2 - blocks.b1
    return ReducedQP(
        B1=(G3.T @ A6 @ G3).tocsr(),
        B2=(G3.T @ A6 @ G4).tocsr(),
        B3=(G4.T @ A6 @ G3).tocsr(),
        B4=(G4.T @ A6 @ G4 + gamma * A6).tocsr(),
        b5=G3.T @ r,
        b6=G4.T @ r,
        G5=ops.G5, G6=ops.G6, H3=ops.H3,
    )


def solve_adjoint(blocks, y):
    """
    Dual fields from the discrete adjoint equations of the constrained problem.

    Stationarity of the Lagrangian in (q, y, y_hat) reads ``C^T lam = -dJ``
    with multipliers ``lam = (p, -z, z_hat)``.
    """
    s = blocks.spaces
    N1, N2, Nf = s.n_flux, s.n_scalar, s.n_free
    C = constraint_matrix(blocks)
    dJ = np.concatenate([np.zeros(N1), blocks.A6 @ y - blocks.b1, np.zeros(Nf)])
    lam = sparse_solve(C.T, -dJ)
    res = relative_residual(C.T, lam, -dJ)
    p, mz, zt = np.split(lam, [N1, N1 + N2])
    return p, -mz, zt, res


def solve_do(mesh, spaces, params, data, blocks=None):
    """Discretize-then-optimize: condensed QP solved through its KKT system."""
    blocks = _setup(mesh, spaces, params, data, blocks)
    ops = condense(blocks)
    qp = reduced_qp(blocks, ops)
    A, rhs = qp.kkt()
    x = sparse_solve(A, rhs)
    res = relative_residual(A, x, rhs)
    Nf = spaces.n_free
    trace, control = x[:Nf], x[Nf:Nf + spaces.n_scalar]
    q, y = reconstruct(ops, trace, control)
    p, z, z_trace, res_adj = solve_adjoint(blocks, y)
    log.debug("DO n=%d k=%d kkt=%d residuals=%.2e/%.2e", mesh.n, spaces.k, len(x), res, res_adj)
    return SolutionFields(q=q, p=p, y=y, z=z, u=control, y_trace=trace, z_trace=z_trace,
                          approach="DO", linear_residual=max(res, res_adj), n=mesh.n,
                          k=spaces.k, info={"unknowns": len(x), "kkt_residual": res,
                                            "adjoint_residual": res_adj})


def check_commutativity(od, do_):
    """Relative discrepancy ``||a - b|| / ||a||`` for each coefficient vector."""
    if (od.n, od.k) != (do_.n, do_.k):
        raise InvalidComparison(f"different discretizations: (n, k) = {(od.n, od.k)} vs {(do_.n, do_.k)}")
    out = {}
    for name in FIELDS:
        a, b = getattr(od, name), getattr(do_, name)
        if a.shape != b.shape:
            raise InvalidComparison(f"field {name} has shapes {a.shape} and {b.shape}")
        na = np.linalg.norm(a)
        d = np.linalg.norm(a - b)
        out[name] = float(d / na) if na > 0 else float(d)
    return out
