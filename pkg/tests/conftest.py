import numpy as np
import pytest

from edg_control.assembly import assemble_blocks
from edg_control.basis import build_spaces
from edg_control.mesh import build_structured
from edg_control.problems import derive_data, get_problem


def setup_problem(name="paper", n=4, k=0, gamma=1.0, tau1=1.0, tau2=None,
                  boundary_vertices="constrained", with_data=True):
    spec = get_problem(name, gamma=gamma, tau1=tau1)
    data = derive_data(spec)
    params = spec.params(tau2)
    mesh = build_structured(n)
    spaces = build_spaces(mesh, k, boundary_vertices)
    blocks = assemble_blocks(mesh, spaces, params, data if with_data else None)
    return mesh, spaces, params, data, blocks


def element_nodes(mesh, degree):
    """Physical nodal points of the degree-``degree`` Lagrange basis, (E, nb, 2)."""
    from edg_control.basis import lagrange_nodes
    ref = lagrange_nodes(degree)
    p = mesh.vertices[mesh.triangles]
    jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)
    return p[:, None, 0, :] + np.einsum("ecd,qd->eqc", jac, ref)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])
