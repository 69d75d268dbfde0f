"""
Reference-element bases, quadrature and degree-of-freedom maps.

Reference triangle has vertices (0, 0), (1, 0), (0, 1); reference edge is
[0, 1].  All bases are nodal Lagrange with equispaced nodes.
"""

from dataclasses import dataclass
from functools import lru_cache
from math import ceil

import numpy as np
from scipy.special import roots_jacobi

from .errors import InvalidArgument, UnsupportedDegree

MAX_EXACTNESS = 60
BOUNDARY_VERTEX_MODES = ("constrained", "free")


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    exactness: int

    def __len__(self):
        return len(self.weights)


def _check_exactness(exactness):
    if int(exactness) != exactness or exactness < 0:
        raise InvalidArgument(f"exactness must be a nonnegative integer, got {exactness!r}")
    if exactness > MAX_EXACTNESS:
        raise UnsupportedDegree(
            f"quadrature exactness {exactness} exceeds supported maximum {MAX_EXACTNESS}")


@lru_cache(maxsize=None)
def edge_quadrature(exactness):
    """Gauss-Legendre rule on [0, 1] exact for polynomials of the given degree."""
    _check_exactness(exactness)
    m = max(1, ceil((exactness + 1) / 2))
    x, w = np.polynomial.legendre.leggauss(m)
    return QuadratureRule(points=(x + 1) / 2, weights=w / 2, exactness=2 * m - 1)


@lru_cache(maxsize=None)
def triangle_quadrature(exactness):
    """
    Collapsed (Duffy) Gauss rule on the reference triangle.

    The square [0, 1]^2 is mapped onto the triangle by
    ``(u, v) -> (u, v (1 - u))``; the Jacobian factor ``1 - u`` is absorbed
    into a Gauss-Jacobi rule, so all weights are positive.
    """
    _check_exactness(exactness)
    if exactness < 1:
        raise InvalidArgument("triangle quadrature needs exactness >= 1")
    m = max(1, ceil((exactness + 1) / 2))
    xj, wj = roots_jacobi(m, 1.0, 0.0)
    u = (xj + 1) / 2
    wu = wj / 4
    xl, wl = np.polynomial.legendre.leggauss(m)
    v = (xl + 1) / 2
    wv = wl / 2
    U, V = np.meshgrid(u, v, indexing="ij")
    points = np.column_stack([U.ravel(), (V * (1 - U)).ravel()])
    weights = np.outer(wu, wv).ravel()
    return QuadratureRule(points=points, weights=weights, exactness=2 * m - 1)


def _exponents(degree):
    return [(t - b, b) for t in range(degree + 1) for b in range(t + 1)]


def lagrange_nodes(degree):
    """Equispaced nodes of P_degree on the reference triangle."""
    if degree == 0:
        return np.array([[1 / 3, 1 / 3]])
    return np.array([[i / degree, j / degree]
                     for j in range(degree + 1) for i in range(degree + 1 - j)])


class ScalarBasis:
    """Nodal Lagrange basis of P_degree on the reference triangle."""

    def __init__(self, degree):
        if int(degree) != degree or degree < 0:
            raise InvalidArgument(f"degree must be nonnegative, got {degree!r}")
        self.degree = int(degree)
        self.nodes = lagrange_nodes(self.degree)
        self.exponents = np.array(_exponents(self.degree))
        vander = self._monomials(self.nodes)
        self.coeffs = np.linalg.inv(vander)

    def __len__(self):
        return len(self.nodes)

    def _monomials(self, x):
        x = np.atleast_2d(x)
        a, b = self.exponents.T
        return x[:, :1] ** a * x[:, 1:] ** b

    def values(self, x):
        """Basis values at points ``x`` of shape (N, 2); returns (N, nb)."""
        return self._monomials(x) @ self.coeffs

    def gradients(self, x):
        """Reference gradients at ``x``; returns (N, nb, 2)."""
        x = np.atleast_2d(x)
        a, b = self.exponents.T
        with np.errstate(divide="ignore", invalid="ignore"):
            dx = np.where(a > 0, a * x[:, :1] ** np.maximum(a - 1, 0) * x[:, 1:] ** b, 0.0)
            dy = np.where(b > 0, b * x[:, :1] ** a * x[:, 1:] ** np.maximum(b - 1, 0), 0.0)
        return np.stack([dx @ self.coeffs, dy @ self.coeffs], axis=-1)


class EdgeBasis:
    """Nodal Lagrange basis of P_degree on [0, 1] with nodes ``m / degree``."""

    def __init__(self, degree):
        if int(degree) != degree or degree < 1:
            raise InvalidArgument(f"edge degree must be >= 1, got {degree!r}")
        self.degree = int(degree)
        self.nodes = np.arange(degree + 1) / degree

    def __len__(self):
        return self.degree + 1

    def values(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.ones((len(t), self.degree + 1))
        for m, tm in enumerate(self.nodes):
            for j, tj in enumerate(self.nodes):
                if j != m:
                    out[:, m] *= (t - tj) / (tm - tj)
        return out


@lru_cache(maxsize=None)
def scalar_basis(degree):
    return ScalarBasis(degree)


def eval_scalar_basis(degree, point):
    """
    Values and reference gradients of the degree-``degree`` nodal basis.

    Returns
    -------
    values : (nb,) array
    gradients : (nb, 2) array
    """
    basis = scalar_basis(degree)
    x = np.asarray(point, dtype=float).reshape(1, 2)
    return basis.values(x)[0], basis.gradients(x)[0]


@dataclass(frozen=True, eq=False)
class SpaceSet:
    """
    Discrete spaces for a given ``k``.

    The flux space is [P_k]^2 per element (x-components first), the scalar
    space is P_{k+1} per element and the trace space is the continuous
    piecewise P_{k+1} space on the skeleton.

    ``element_trace_dofs[e, s, m]`` is the global trace dof of node ``m`` on
    local side ``s`` of element ``e``, with ``m = 0`` at local vertex ``s``
    and ``m = k + 1`` at local vertex ``s + 1``.
    """

    k: int
    n_elements: int
    trace_nodes: np.ndarray
    element_trace_dofs: np.ndarray
    free: np.ndarray
    constrained: np.ndarray
    boundary_vertices: str = "constrained"

    @property
    def flux_dofs_per_component(self):
        return (self.k + 1) * (self.k + 2) // 2

    @property
    def flux_dofs_per_element(self):
        return 2 * self.flux_dofs_per_component

    @property
    def scalar_dofs_per_element(self):
        return (self.k + 2) * (self.k + 3) // 2

    @property
    def trace_degree(self):
        return self.k + 1

    @property
    def n_flux(self):
        return self.n_elements * self.flux_dofs_per_element

    @property
    def n_scalar(self):
        return self.n_elements * self.scalar_dofs_per_element

    @property
    def n_trace(self):
        return len(self.trace_nodes)

    @property
    def n_free(self):
        return len(self.free)

    @property
    def n_constrained(self):
        return len(self.constrained)

    @property
    def free_index(self):
        """Map from global trace dof to position among free dofs (-1 if constrained)."""
        idx = -np.ones(self.n_trace, dtype=np.int64)
        idx[self.free] = np.arange(self.n_free)
        return idx

    def flux_dofs(self):
        nv = self.flux_dofs_per_element
        return np.arange(self.n_flux).reshape(self.n_elements, nv)

    def scalar_dofs(self):
        nw = self.scalar_dofs_per_element
        return np.arange(self.n_scalar).reshape(self.n_elements, nw)

    def expand_trace(self, free_values, constrained_values=None):
        """Full trace vector from free values (and optional constrained values)."""
        full = np.zeros(self.n_trace)
        full[self.free] = free_values
        if constrained_values is not None:
            full[self.constrained] = constrained_values
        return full


def build_trace_dofmap(mesh, k, boundary_vertices="constrained"):
    """
    Continuous skeleton numbering for the degree-(k+1) trace space.

    Global dofs are vertex nodes first (one per vertex) followed by ``k``
    face-interior nodes per face, ordered from the lower to the higher
    vertex index of the face.  A node is constrained iff it lies on the
    boundary.

    With ``boundary_vertices="free"`` each boundary vertex additionally
    owns a free dof used only by interior faces, so the interior-face trace
    is not tied to the boundary data at boundary vertices.

    Returns
    -------
    trace_nodes, element_trace_dofs, free, constrained
    """
    if boundary_vertices not in BOUNDARY_VERTEX_MODES:
        raise InvalidArgument(f"unknown boundary_vertices mode {boundary_vertices!r}")
    if int(k) != k or k < 0:
        raise InvalidArgument(f"k must be a nonnegative integer, got {k!r}")
    V, F = mesh.n_vertices, mesh.n_faces
    faces = mesh.faces
    on_bnd_vertex = mesh.boundary_vertex_mask()

    t = (np.arange(1, k + 1) / (k + 1))[None, :, None]
    a = mesh.vertices[faces[:, 0]][:, None, :]
    b = mesh.vertices[faces[:, 1]][:, None, :]
    face_nodes = (a + t * (b - a)).reshape(-1, 2)
    nodes = [mesh.vertices, face_nodes]
    constrained_mask = [on_bnd_vertex, np.repeat(mesh.face_is_boundary, k)]

    vertex_dof_for_interior = np.arange(V)
    if boundary_vertices == "free":
        touched = np.zeros(V, dtype=bool)
        touched[faces[~mesh.face_is_boundary].ravel()] = True
        bv = np.flatnonzero(on_bnd_vertex & touched)
        extra = V + F * k + np.arange(len(bv))
        vertex_dof_for_interior = vertex_dof_for_interior.copy()
        vertex_dof_for_interior[bv] = extra
        nodes.append(mesh.vertices[bv])
        constrained_mask.append(np.zeros(len(bv), dtype=bool))
    trace_nodes = np.concatenate(nodes)
    constrained_mask = np.concatenate(constrained_mask)

    T = mesh.n_elements
    tri = mesh.triangles
    start = tri
    end = np.roll(tri, -1, axis=1)
    fidx = mesh.element_faces
    bnd_side = mesh.side_is_boundary()
    dofs = np.empty((T, 3, k + 2), dtype=np.int64)
    vmap_start = np.where(bnd_side, start, vertex_dof_for_interior[start])
    vmap_end = np.where(bnd_side, end, vertex_dof_for_interior[end])
    dofs[:, :, 0] = vmap_start
    dofs[:, :, k + 1] = vmap_end
    if k > 0:
        m = np.arange(1, k + 1)
        forward = (start < end)[..., None]
        j = np.where(forward, m - 1, k - m)
        dofs[:, :, 1:k + 1] = V + fidx[..., None] * k + j

    free = np.flatnonzero(~constrained_mask)
    constrained = np.flatnonzero(constrained_mask)
    return trace_nodes, dofs, free, constrained


def build_spaces(mesh, k, boundary_vertices="constrained"):
    nodes, dofs, free, constrained = build_trace_dofmap(mesh, k, boundary_vertices)
    return SpaceSet(k=int(k), n_elements=mesh.n_elements, trace_nodes=nodes,
                    element_trace_dofs=dofs, free=free, constrained=constrained,
                    boundary_vertices=boundary_vertices)


def interpolate_boundary(g, mesh, k, spaces=None):
    """
    Nodal interpolation of boundary data at the constrained trace nodes.

    Returns values ordered like ``spaces.constrained``.
    """
    if spaces is None:
        spaces = build_spaces(mesh, k)
    x = spaces.trace_nodes[spaces.constrained]
    return np.asarray(g(x), dtype=float).reshape(len(x))
