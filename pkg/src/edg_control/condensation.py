"""
Static condensation of the flux and scalar unknowns.

The first two block rows of the state equations are solved element by
element, giving

    alpha  = G1 gamma + G2 zeta + H1
    beta_y = G3 gamma + G4 zeta + H2

and substitution into the trace rows gives ``G5 gamma + G6 zeta = H3``
with

    G5 = A3^T G1 + A7 G3 - A8,   G6 = A3^T G2 + A7 G4,
    H3 = b_trace - A3^T H1 - A7 H2.

Only the small per-element blocks of ``A1`` and ``A4 + A2^T A1^{-1} A2``
are ever factored.
"""

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .assembly import scatter
from .errors import CondensationError


@dataclass
class ElementFactors:
    """LU factors of the per-element ``A1`` and Schur blocks."""

    a1: list
    schur: list

    def solve_a1(self, e, rhs):
        return sla.lu_solve(self.a1[e], rhs)

    def solve_schur(self, e, rhs):
        return sla.lu_solve(self.schur[e], rhs)


@dataclass
class CondensedOperators:
    G1: sp.csr_matrix
    G2: sp.csr_matrix
    G3: sp.csr_matrix
    G4: sp.csr_matrix
    G5: sp.csr_matrix
    G6: sp.csr_matrix
    H1: np.ndarray
    H2: np.ndarray
    H3: np.ndarray
    local: dict
    factors: ElementFactors
    blocks: object

    @property
    def spaces(self):
        return self.blocks.spaces


def _lu(block, e, what):
    if not np.all(np.isfinite(block)):
        raise CondensationError(e, f"non-finite {what} block")
    with warnings.catch_warnings():
        # singularity is reported below with the element index
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(block, check_finite=False)
    d = np.abs(np.diag(lu))
    if d.min() <= 1e-14 * max(d.max(), 1e-300):
        raise CondensationError(e, f"singular {what} block")
    return lu, piv


def condense(blocks):
    """
    Eliminate fluxes and scalars element by element.

    Returns
    -------
    CondensedOperators
        Global sparse ``G1``-``G6``, offsets ``H1``-``H3`` and the cached
        element factorizations.
    """
    loc = blocks.local
    spaces = blocks.spaces
    E = spaces.n_elements
    nv, nw = loc.A1.shape[1], loc.A6.shape[1]
    nt = loc.A3.shape[2]

    a1_f, schur_f = [], []
    X2 = np.empty((E, nv, nw))
    X3 = np.empty((E, nv, nt))
    Xb = np.empty((E, nv))
    G3l = np.empty((E, nw, nt))
    G4l = np.empty((E, nw, nw))
    H2l = np.empty((E, nw))
    for e in range(E):
        f1 = _lu(loc.A1[e], e, "A1")
        a1_f.append(f1)
        rhs = np.column_stack([loc.A2[e], loc.A3[e], loc.b2[e]])
        X = sla.lu_solve(f1, rhs)
        X2[e], X3[e], Xb[e] = X[:, :nw], X[:, nw:nw + nt], X[:, -1]
        S = loc.A4[e] + loc.A2[e].T @ X2[e]
        fs = _lu(S, e, "Schur")
        schur_f.append(fs)
        rhs = np.column_stack([-(loc.A5[e] - loc.A2[e].T @ X3[e]), loc.A6[e],
                               loc.b3[e] - loc.b4[e] + loc.A2[e].T @ Xb[e]])
        Y = sla.lu_solve(fs, rhs)
        G3l[e], G4l[e], H2l[e] = Y[:, :nt], Y[:, nt:nt + nw], Y[:, -1]

    G1l = np.einsum("eij,ejk->eik", X2, G3l) - X3
    G2l = np.einsum("eij,ejk->eik", X2, G4l)
    H1l = np.einsum("eij,ej->ei", X2, H2l) - Xb
    return _globalize(blocks, G1l, G2l, G3l, G4l, H1l, H2l,
                      ElementFactors(a1_f, schur_f))


def _free_columns(spaces):
    E = spaces.n_elements
    return spaces.free_index[spaces.element_trace_dofs.reshape(E, -1)]


def _scatter_free(local, rows, tcols, n_rows, n_free):
    # drop constrained trace columns (index -1) before scattering
    E, I, J = local.shape
    r = np.broadcast_to(rows[:, :, None], (E, I, J))
    c = np.broadcast_to(tcols[:, None, :], (E, I, J))
    keep = c >= 0
    return sp.coo_matrix((local[keep], (r[keep], c[keep])), shape=(n_rows, n_free)).tocsr()


def _globalize(blocks, G1l, G2l, G3l, G4l, H1l, H2l, factors):
    spaces = blocks.spaces
    loc = blocks.local
    N1, N2, Nf = spaces.n_flux, spaces.n_scalar, spaces.n_free
    fd, sd = spaces.flux_dofs(), spaces.scalar_dofs()
    tf = _free_columns(spaces)

    G1 = _scatter_free(G1l, fd, tf, N1, Nf)
    G3 = _scatter_free(G3l, sd, tf, N2, Nf)
    G2 = scatter(G2l, fd, sd, (N1, N2))
    G4 = scatter(G4l, sd, sd, (N2, N2))
    H1 = H1l.ravel().copy()
    H2 = H2l.ravel().copy()

    # trace-row products, element by element: A3_K^T G_K + A7_K G_K
    g5l = np.einsum("eam,eal->eml", loc.A3, G1l) + np.einsum("emi,eil->eml", loc.A7, G3l)
    g6l = np.einsum("eam,eaj->emj", loc.A3, G2l) + np.einsum("emi,eij->emj", loc.A7, G4l)
    h3l = -(np.einsum("eam,ea->em", loc.A3, H1l) + np.einsum("emi,ei->em", loc.A7, H2l))

    rows_t = tf
    keep = (rows_t[:, :, None] >= 0) & (tf[:, None, :] >= 0)
    r = np.broadcast_to(rows_t[:, :, None], keep.shape)[keep]
    c = np.broadcast_to(tf[:, None, :], keep.shape)[keep]
    G5 = sp.coo_matrix((g5l[keep], (r, c)), shape=(Nf, Nf)).tocsr() - blocks.A8

    keep6 = np.broadcast_to((rows_t >= 0)[:, :, None], g6l.shape)
    r6 = np.broadcast_to(rows_t[:, :, None], g6l.shape)[keep6]
    c6 = np.broadcast_to(sd[:, None, :], g6l.shape)[keep6]
    G6 = sp.coo_matrix((g6l[keep6], (r6, c6)), shape=(Nf, N2)).tocsr()

    mask = rows_t >= 0
    H3 = blocks.b_trace.copy()
    np.add.at(H3, rows_t[mask], h3l[mask])

    local = dict(G1=G1l, G2=G2l, G3=G3l, G4=G4l, H1=H1l, H2=H2l)
    return CondensedOperators(G1=G1, G2=G2, G3=G3, G4=G4, G5=G5, G6=G6,
                              H1=H1, H2=H2, H3=H3, local=local, factors=factors,
                              blocks=blocks)


def reconstruct(ops, trace, control):
    """
    Flux and scalar coefficients from free trace and control coefficients.

    Uses element-local back-substitution with the cached factorizations.
    """
    spaces = ops.spaces
    loc = ops.blocks.local
    E = spaces.n_elements
    nw = loc.A6.shape[1]
    full = spaces.expand_trace(trace)
    tl = full[spaces.element_trace_dofs.reshape(E, -1)]
    # constrained values are already inside H1/H2
    tl[_free_columns(spaces) < 0] = 0.0
    zl = np.asarray(control, dtype=float).reshape(E, nw)

    alpha = np.empty((E, loc.A1.shape[1]))
    scal = np.empty((E, nw))
    fac = ops.factors
    for e in range(E):
        a3g = loc.A3[e] @ tl[e]
        rhs_y = loc.b3[e] - loc.b4[e] - loc.A5[e] @ tl[e] + loc.A6[e] @ zl[e]
        # row 1: A1 a = A2 y - A3 g - b2
        w = fac.solve_a1(e, np.column_stack([loc.A2[e], -a3g - loc.b2[e]]))
        X2, xr = w[:, :-1], w[:, -1]
        y = fac.solve_schur(e, rhs_y - loc.A2[e].T @ xr)
        scal[e] = y
        alpha[e] = X2 @ y + xr
    return alpha.ravel(), scal.ravel()


def reconstruct_global(ops, trace, control):
    """Same as :func:`reconstruct` using the assembled global maps."""
    return (ops.G1 @ trace + ops.G2 @ control + ops.H1,
            ops.G3 @ trace + ops.G4 @ control + ops.H2)
