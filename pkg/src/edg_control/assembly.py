"""
Assembly of the EDG blocks and direct evaluation of the EDG bilinear forms.

Element contributions are computed for all elements at once with batched
``einsum`` products and scattered into global sparse matrices.  Each
interior face is visited once from each adjacent element, so face terms
are sums over the element boundaries.

Trace blocks are first assembled against *all* trace dofs and then split
into free and constrained columns; constrained trace values carry the
interpolated boundary data.

Unknown layout: flux dofs ``e * nv + c * nk + a`` (component ``c`` of flux
basis ``a`` on element ``e``), scalar dofs ``e * nw + i``.  Nothing here
writes to shared state, so element batches may be split across workers and
merged by summing COO triplets.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .basis import EdgeBasis, edge_quadrature, scalar_basis, triangle_quadrature
from .errors import InvalidArgument, StabilizationError


def assembly_exactness(k):
    return 2 * (k + 2)


def error_exactness(k):
    return 2 * (k + 2) + 4


class Discretization:
    """
    Quadrature-point data for a mesh, a space set and parameters.

    Volume arrays are indexed ``[element, point, ...]`` and face arrays
    ``[element, side, point, ...]``.
    """

    def __init__(self, mesh, spaces, params, exactness=None):
        self.mesh = mesh
        self.spaces = spaces
        self.params = params
        k = spaces.k
        self.k = k
        self.exactness = assembly_exactness(k) if exactness is None else exactness
        self.h = mesh.h

        self.flux_basis = scalar_basis(k)
        self.scalar_basis = scalar_basis(k + 1)
        self.trace_basis = EdgeBasis(k + 1)
        self.nk = len(self.flux_basis)
        self.nw = len(self.scalar_basis)
        self.nm = k + 2

        p = mesh.vertices[mesh.triangles]
        jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)
        self.det = np.linalg.det(jac)
        self.jinv = np.linalg.inv(jac)
        self._volume(p, jac)
        self._faces(p)

    def _volume(self, p, jac):
        rule = triangle_quadrature(self.exactness)
        self.vol_rule = rule
        self.xq = p[:, None, 0, :] + np.einsum("ecd,qd->eqc", jac, rule.points)
        self.wq = self.det[:, None] * rule.weights[None, :]
        self.phi_v = self.flux_basis.values(rule.points)
        self.phi_w = self.scalar_basis.values(rule.points)
        # physical gradient: grad phi = J^{-T} grad_ref phi
        self.grad_v = np.einsum("qad,edc->eqac", self.flux_basis.gradients(rule.points), self.jinv)
        self.grad_w = np.einsum("qid,edc->eqic", self.scalar_basis.gradients(rule.points), self.jinv)
        xf = self.xq.reshape(-1, 2)
        E, Q = self.wq.shape
        self.beta_q = np.asarray(self.params.beta(xf), dtype=float).reshape(E, Q, 2)
        self.divb_q = np.asarray(self.params.div_beta(xf), dtype=float).reshape(E, Q)

    def _faces(self, p):
        rule = edge_quadrature(self.exactness)
        self.edge_rule = rule
        t = rule.points
        ref = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        ref_pts = np.stack([ref[s] + t[:, None] * (ref[(s + 1) % 3] - ref[s]) for s in range(3)])
        self.phi_v_side = np.stack([self.flux_basis.values(x) for x in ref_pts])
        self.phi_w_side = np.stack([self.scalar_basis.values(x) for x in ref_pts])
        self.psi = self.trace_basis.values(t)

        a = p
        b = np.roll(p, -1, axis=1)
        self.xs = a[:, :, None, :] + t[None, None, :, None] * (b - a)[:, :, None, :]
        lengths = self.mesh.side_lengths()
        self.ws = lengths[:, :, None] * rule.weights[None, None, :]
        self.normals = self.mesh.normals()
        E, _, T, _ = self.xs.shape
        beta = np.asarray(self.params.beta(self.xs.reshape(-1, 2)), dtype=float).reshape(E, 3, T, 2)
        self.bn = np.einsum("estc,esc->est", beta, self.normals)
        self.interior = ~self.mesh.side_is_boundary()

        tau1 = float(self.params.tau1)
        self.stab1 = np.full_like(self.bn, 1.0 / self.h + tau1)
        self.stab2 = 1.0 / self.h + self.tau2()

    def tau2(self):
        """Second stabilization function at face points."""
        if self.params.tau2 is None:
            return self.params.tau1 - self.bn
        return np.full_like(self.bn, float(self.params.tau2))

    def check_stabilization(self):
        """Raise if ``min(tau1 - beta.n / 2) <= 0`` at any face point."""
        margin = self.params.tau1 - 0.5 * self.bn
        worst = np.min(margin, axis=2)
        e, s = np.unravel_index(np.argmin(worst), worst.shape)
        if worst[e, s] <= 0:
            raise StabilizationError(self.mesh.element_faces[e, s], worst[e, s])

    # -- field evaluation -------------------------------------------------

    def _flux(self, alpha):
        return np.asarray(alpha, dtype=float).reshape(-1, 2, self.nk)

    def _scalar(self, beta):
        return np.asarray(beta, dtype=float).reshape(-1, self.nw)

    def flux_at_volume(self, alpha):
        return np.einsum("eca,qa->eqc", self._flux(alpha), self.phi_v)

    def flux_divergence(self, alpha):
        return np.einsum("eca,eqac->eq", self._flux(alpha), self.grad_v)

    def flux_normal_at_sides(self, alpha):
        vals = np.einsum("eca,sta->estc", self._flux(alpha), self.phi_v_side)
        return np.einsum("estc,esc->est", vals, self.normals)

    def scalar_at_volume(self, beta):
        return self._scalar(beta) @ self.phi_w.T

    def scalar_gradient(self, beta):
        return np.einsum("ei,eqic->eqc", self._scalar(beta), self.grad_w)

    def scalar_at_sides(self, beta):
        return np.einsum("ei,sti->est", self._scalar(beta), self.phi_w_side)

    def trace_at_sides(self, full_trace):
        local = np.asarray(full_trace, dtype=float)[self.spaces.element_trace_dofs]
        return np.einsum("esm,tm->est", local, self.psi)


@dataclass(frozen=True)
class DiscreteTriple:
    """Coefficients of a (flux, scalar, free trace) triple."""

    flux: np.ndarray
    scalar: np.ndarray
    trace: np.ndarray

    def __neg__(self):
        return DiscreteTriple(-self.flux, -self.scalar, -self.trace)

    def scaled(self, flux=1.0, scalar=1.0, trace=1.0):
        return DiscreteTriple(flux * self.flux, scalar * self.scalar, trace * self.trace)

    def concat(self):
        return np.concatenate([self.flux, self.scalar, self.trace])

    @classmethod
    def split(cls, vec, spaces):
        n1, n2 = spaces.n_flux, spaces.n_scalar
        return cls(vec[:n1], vec[n1:n1 + n2], vec[n1 + n2:n1 + n2 + spaces.n_free])

    @classmethod
    def random(cls, spaces, rng):
        return cls(rng.standard_normal(spaces.n_flux), rng.standard_normal(spaces.n_scalar),
                   rng.standard_normal(spaces.n_free))

    def check(self, spaces):
        if (len(self.flux), len(self.scalar), len(self.trace)) != (
                spaces.n_flux, spaces.n_scalar, spaces.n_free):
            raise InvalidArgument("triple lengths do not match the space dimensions")


@dataclass
class LocalBlocks:
    """Element matrices; trace columns/rows use the side-local node layout."""

    A1: np.ndarray
    A2: np.ndarray
    A3: np.ndarray
    A4: np.ndarray
    A5: np.ndarray
    A6: np.ndarray
    A7: np.ndarray
    A8: np.ndarray
    Abeta: np.ndarray
    C4: np.ndarray
    A5_dual: np.ndarray
    A7_dual: np.ndarray
    A8_dual: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    b3: np.ndarray
    b4: np.ndarray


@dataclass
class BlockSystem:
    """
    Global blocks of the discrete state equations.

    ``A3, A5, A7, A8`` act on free trace dofs.  ``b_trace = A8[free, constrained] g``
    is the constrained-trace contribution to the trace rows; it vanishes when
    no interior face touches the boundary through a constrained node.
    The ``full`` dictionary keeps blocks against all trace dofs and the
    dual-side blocks built with ``tau2``.
    """

    A1: sp.csr_matrix
    A2: sp.csr_matrix
    A3: sp.csr_matrix
    A4: sp.csr_matrix
    A5: sp.csr_matrix
    A6: sp.csr_matrix
    A7: sp.csr_matrix
    A8: sp.csr_matrix
    b1: np.ndarray
    b2: np.ndarray
    b3: np.ndarray
    b4: np.ndarray
    b_trace: np.ndarray
    g_constrained: np.ndarray
    local: LocalBlocks
    disc: Discretization
    full: dict = field(default_factory=dict)

    @property
    def mesh(self):
        return self.disc.mesh

    @property
    def spaces(self):
        return self.disc.spaces

    @property
    def params(self):
        return self.disc.params


def _blockdiag_sides(m):
    # (E, 3, nm, nm) -> (E, 3 nm, 3 nm)
    E, S, n, _ = m.shape
    out = np.zeros((E, S * n, S * n))
    for s in range(S):
        out[:, s * n:(s + 1) * n, s * n:(s + 1) * n] = m[:, s]
    return out


def local_blocks(disc, data=None, g_constrained=None):
    """Element matrices and load vectors for every element."""
    E = disc.mesh.n_elements
    nk, nw, nm = disc.nk, disc.nw, disc.nm
    wq, ws = disc.wq, disc.ws

    mv = np.einsum("eq,qa,qb->eab", wq, disc.phi_v, disc.phi_v)
    A1 = np.zeros((E, 2 * nk, 2 * nk))
    A1[:, :nk, :nk] = mv
    A1[:, nk:, nk:] = mv
    A2 = np.einsum("eq,eqac,qj->ecaj", wq, disc.grad_v, disc.phi_w).reshape(E, 2 * nk, nw)
    A6 = np.einsum("eq,qi,qj->eij", wq, disc.phi_w, disc.phi_w)

    bgrad = np.einsum("eqc,eqic->eqi", disc.beta_q, disc.grad_w)
    conv = np.einsum("eq,eqi,qj->eij", wq, bgrad, disc.phi_w)
    react = np.einsum("eq,qi,qj->eij", wq * disc.divb_q, disc.phi_w, disc.phi_w)

    def face_ww(coef):
        return np.einsum("est,sti,stj->eij", ws * coef, disc.phi_w_side, disc.phi_w_side)

    def face_wm(coef):
        return np.einsum("est,sti,tm->eism", ws * coef, disc.phi_w_side, disc.psi).reshape(E, nw, 3 * nm)

    def face_mm(coef):
        return _blockdiag_sides(np.einsum("est,tm,tl->esml", ws * coef, disc.psi, disc.psi))

    A3 = np.einsum("est,esc,sta,tm->ecasm", ws, disc.normals, disc.phi_v_side,
                   disc.psi).reshape(E, 2 * nk, 3 * nm)
    A4 = -conv - react + face_ww(disc.stab1)
    A5 = face_wm(disc.bn - disc.stab1)
    A7 = face_wm(disc.stab1).transpose(0, 2, 1)
    A8 = face_mm(disc.stab1)
    Abeta = face_mm(disc.bn)
    C4 = conv + face_ww(disc.stab2)
    A5_dual = -face_wm(disc.bn + disc.stab2)
    A7_dual = face_wm(disc.stab2).transpose(0, 2, 1)
    A8_dual = face_mm(disc.stab2)

    zero_w = np.zeros((E, nw))
    b1, b3 = zero_w, zero_w.copy()
    if data is not None:
        xf = disc.xq.reshape(-1, 2)
        yd = np.asarray(data.y_d(xf), dtype=float).reshape(wq.shape)
        f = np.asarray(data.f(xf), dtype=float).reshape(wq.shape)
        b1 = np.einsum("eq,qi->ei", wq * yd, disc.phi_w)
        b3 = np.einsum("eq,qi->ei", wq * f, disc.phi_w)

    spaces = disc.spaces
    gloc = np.zeros(spaces.n_trace)
    if g_constrained is not None:
        gloc[spaces.constrained] = g_constrained
    gloc = gloc[spaces.element_trace_dofs].reshape(E, 3 * nm)
    b2 = np.einsum("eam,em->ea", A3, gloc)
    b4 = np.einsum("eim,em->ei", A5, gloc)
    return LocalBlocks(A1, A2, A3, A4, A5, A6, A7, A8, Abeta, C4, A5_dual, A7_dual,
                       A8_dual, b1, b2, b3, b4)


def scatter(local, rows, cols, shape):
    """Sum element matrices ``local[e]`` into a global CSR matrix."""
    E, I, J = local.shape
    r = np.broadcast_to(rows[:, :, None], (E, I, J)).ravel()
    c = np.broadcast_to(cols[:, None, :], (E, I, J)).ravel()
    return sp.coo_matrix((local.ravel(), (r, c)), shape=shape).tocsr()


def scatter_vector(local, rows, size):
    out = np.zeros(size)
    np.add.at(out, rows.ravel(), local.ravel())
    return out


def assemble_blocks(mesh, spaces, params, data=None, check=True):
    """
    Assemble the blocks ``A1``-``A8`` and vectors ``b1``-``b4``.

    Parameters
    ----------
    mesh : Mesh
    spaces : SpaceSet
    params : Params
    data : ProblemData or None
        Supplies ``f``, ``g`` and ``y_d``; ``None`` means homogeneous data.
    check : bool
        Verify the stabilization condition at every face point.
    """
    disc = Discretization(mesh, spaces, params)
    if check:
        disc.check_stabilization()
    g_c = np.zeros(spaces.n_constrained)
    if data is not None:
        g_c = np.asarray(data.g(spaces.trace_nodes[spaces.constrained]), dtype=float).reshape(-1)
    loc = local_blocks(disc, data, g_c)

    E = mesh.n_elements
    N1, N2, NT = spaces.n_flux, spaces.n_scalar, spaces.n_trace
    fd, sd = spaces.flux_dofs(), spaces.scalar_dofs()
    td = spaces.element_trace_dofs.reshape(E, -1)
    free, cons = spaces.free, spaces.constrained

    full = {
        "A3": scatter(loc.A3, fd, td, (N1, NT)),
        "A5": scatter(loc.A5, sd, td, (N2, NT)),
        "A7": scatter(loc.A7, td, sd, (NT, N2)),
        "A8": scatter(loc.A8, td, td, (NT, NT)),
        "Abeta": scatter(loc.Abeta, td, td, (NT, NT)),
        "C4": scatter(loc.C4, sd, sd, (N2, N2)),
        "A5_dual": scatter(loc.A5_dual, sd, td, (N2, NT)),
        "A7_dual": scatter(loc.A7_dual, td, sd, (NT, N2)),
        "A8_dual": scatter(loc.A8_dual, td, td, (NT, NT)),
    }
    A8f = full["A8"][free]
    return BlockSystem(
        A1=scatter(loc.A1, fd, fd, (N1, N1)),
        A2=scatter(loc.A2, fd, sd, (N1, N2)),
        A3=full["A3"][:, free],
        A4=scatter(loc.A4, sd, sd, (N2, N2)),
        A5=full["A5"][:, free],
        A6=scatter(loc.A6, sd, sd, (N2, N2)),
        A7=full["A7"][free],
        A8=A8f[:, free],
        b1=loc.b1.ravel().copy(),
        b2=loc.b2.ravel().copy(),
        b3=loc.b3.ravel().copy(),
        b4=loc.b4.ravel().copy(),
        b_trace=A8f[:, cons] @ g_c,
        g_constrained=g_c,
        local=loc,
        disc=disc,
        full=full,
    )


def state_operator(blocks):
    """
    Matrix of the first EDG form with rows (r, w, mu) and columns
    (q, y, free trace); returned with the constrained-trace columns separately.
    """
    b = blocks
    f, c = b.spaces.free, b.spaces.constrained
    A3, A5, A7 = b.full["A3"], b.full["A5"], b.full["A7"][f]
    A8mb = (b.full["A8"] - b.full["Abeta"])[f]
    rows = [[b.A1, -b.A2, A3], [b.A2.T, b.A4, A5], [-A3[:, f].T, -A7, A8mb]]
    K_free = sp.bmat([[r[0], r[1], r[2][:, f]] for r in rows], format="csr")
    K_cons = sp.bmat([[r[2][:, c]] for r in rows], format="csr")
    return K_free, K_cons


def dual_operator(blocks):
    """Matrix of the second EDG form (built with ``tau2``), free traces only."""
    b = blocks
    f = b.spaces.free
    A3 = b.full["A3"][:, f]
    return sp.bmat([
        [b.A1, -b.A2, A3],
        [b.A2.T, b.full["C4"], b.full["A5_dual"][:, f]],
        [-A3.T, -b.full["A7_dual"][f], (b.full["A8_dual"] + b.full["Abeta"])[f][:, f]],
    ], format="csr")


def constraint_matrix(blocks):
    """Left-hand block of the discrete state equations in matrix form (without control)."""
    b = blocks
    return sp.bmat([[b.A1, -b.A2, b.A3],
                    [b.A2.T, b.A4, b.A5],
                    [b.A3.T, b.A7, -b.A8]], format="csr")


# -- direct evaluation of the bilinear forms -------------------------------

def _fields(disc, triple):
    triple.check(disc.spaces)
    full = disc.spaces.expand_trace(triple.trace)
    return dict(
        q=disc.flux_at_volume(triple.flux),
        divq=disc.flux_divergence(triple.flux),
        qn=disc.flux_normal_at_sides(triple.flux),
        y=disc.scalar_at_volume(triple.scalar),
        grad_y=disc.scalar_gradient(triple.scalar),
        ys=disc.scalar_at_sides(triple.scalar),
        t=disc.trace_at_sides(full),
    )


def apply_B1(triple, test, disc):
    """
    First EDG bilinear form evaluated by quadrature.

    ``triple`` is (q, y, y_hat) and ``test`` is (r, w, mu); traces are free
    dofs only.
    """
    d = disc
    u, v = _fields(d, triple), _fields(d, test)
    ws = d.ws
    inter = d.interior[:, :, None]
    s1 = d.stab1
    vol = (np.sum(d.wq * np.einsum("eqc,eqc->eq", u["q"], v["q"]))
           - np.sum(d.wq * u["y"] * v["divq"])
           - np.sum(d.wq * np.einsum("eqc,eqc->eq", u["q"] + d.beta_q * u["y"][..., None],
                                     v["grad_y"]))
           - np.sum(d.wq * d.divb_q * u["y"] * v["y"]))
    face = (np.sum(ws * inter * u["t"] * v["qn"])
            + np.sum(ws * (u["qn"] + s1 * u["ys"]) * v["ys"])
            + np.sum(ws * inter * (d.bn - s1) * u["t"] * v["ys"])
            - np.sum(ws * inter * (u["qn"] + d.bn * u["t"] + s1 * (u["ys"] - u["t"])) * v["t"]))
    return float(vol + face)


def apply_B2(triple, test, disc):
    """Second EDG bilinear form, (p, z, z_hat) against (r, w, mu)."""
    d = disc
    u, v = _fields(d, triple), _fields(d, test)
    ws = d.ws
    inter = d.interior[:, :, None]
    s2 = d.stab2
    vol = (np.sum(d.wq * np.einsum("eqc,eqc->eq", u["q"], v["q"]))
           - np.sum(d.wq * u["y"] * v["divq"])
           - np.sum(d.wq * np.einsum("eqc,eqc->eq", u["q"] - d.beta_q * u["y"][..., None],
                                     v["grad_y"])))
    face = (np.sum(ws * inter * u["t"] * v["qn"])
            + np.sum(ws * (u["qn"] + s2 * u["ys"]) * v["ys"])
            - np.sum(ws * inter * (d.bn + s2) * u["t"] * v["ys"])
            - np.sum(ws * inter * (u["qn"] - d.bn * u["t"] + s2 * (u["ys"] - u["t"])) * v["t"]))
    return float(vol + face)


def energy_B1(triple, disc):
    """Closed-form value of ``B1(v; v)`` (coercivity identity)."""
    d = disc
    u = _fields(d, triple)
    coef = d.stab1 - 0.5 * d.bn
    jump = u["ys"] - u["t"]
    inter = d.interior[:, :, None]
    return float(np.sum(d.wq * np.einsum("eqc,eqc->eq", u["q"], u["q"]))
                 + np.sum(d.ws * inter * coef * jump**2)
                 - 0.5 * np.sum(d.wq * d.divb_q * u["y"]**2)
                 + np.sum(d.ws * ~inter * coef * u["ys"]**2))


def energy_B2(triple, disc):
    """Closed-form value of ``B2(v; v)``."""
    d = disc
    u = _fields(d, triple)
    coef = d.stab2 + 0.5 * d.bn
    jump = u["ys"] - u["t"]
    inter = d.interior[:, :, None]
    return float(np.sum(d.wq * np.einsum("eqc,eqc->eq", u["q"], u["q"]))
                 + np.sum(d.ws * inter * coef * jump**2)
                 - 0.5 * np.sum(d.wq * d.divb_q * u["y"]**2)
                 + np.sum(d.ws * ~inter * coef * u["ys"]**2))


def dump_matrix(matrix, path):
    """Write a sparse matrix as ``row col value`` lines."""
    coo = sp.coo_matrix(matrix)
    with open(path, "w") as fh:
        fh.write(f"# {coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r} {c} {float(v)!r}\n")
