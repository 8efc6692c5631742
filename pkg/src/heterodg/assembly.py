"""Assembly of the mass, diffusion, reaction and forcing operators.

Diffusion uses the symmetric interior penalty form: the broken-gradient
volume term, consistency and symmetry face terms over internal and
Dirichlet faces, and a jump penalty whose face coefficient combines the
local diffusion/reaction magnitudes through harmonic averages and scales
like p^2/h.  All face contributions are evaluated as stacked block
einsums and scattered through one COO pass, which keeps assembly fast on
fine grids.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .kinetics import diffusion_field, penalty_reaction_scale
from .mesh import DIRICHLET, harmonic_average


@dataclass
class PenaltyField:
    """Face penalty coefficients and the element magnitudes they combine.

    ``gamma`` is zero on Neumann faces, where no face terms are assembled.
    """

    gamma: np.ndarray      # (n_faces,)
    d_elem: np.ndarray     # (n_elements,) spectral magnitude of D
    k_elem: np.ndarray     # (n_elements,) reaction magnitude
    gamma0: float


def penalty_field(space, d_field, gamma0, reaction_scale=0.0):
    """Face penalty: gamma0 * max(diffusion, reaction magnitude) * p^2 / h.

    Internal faces combine the two neighbor values with harmonic averages;
    Dirichlet faces use the one-sided values.
    """
    if gamma0 <= 0:
        raise ValueError("penalty constant gamma0 must be positive")
    mesh = space.mesh
    d_elem = np.linalg.eigvalsh(np.asarray(d_field)).max(axis=1)
    if np.any(d_elem <= 0):
        raise ValueError("diffusion tensors must be positive definite")
    k_elem = np.broadcast_to(
        np.asarray(reaction_scale, dtype=float), (mesh.n_elements,)
    )
    h_elem = mesh.elem_diameters
    plus = mesh.face_elems[:, 0]
    minus = mesh.face_elems[:, 1]
    internal = minus >= 0
    minus_safe = np.where(internal, minus, 0)

    gamma = np.zeros(mesh.n_faces)
    p_sq = float(space.p ** 2)
    d_avg = harmonic_average(d_elem[plus[internal]], d_elem[minus_safe[internal]])
    h_avg = harmonic_average(h_elem[plus[internal]], h_elem[minus_safe[internal]])
    k_pi, k_mi = k_elem[plus[internal]], k_elem[minus_safe[internal]]
    k_avg = np.where(k_pi + k_mi > 0,
                     2.0 * k_pi * k_mi / np.maximum(k_pi + k_mi, 1e-300), 0.0)
    gamma[internal] = gamma0 * np.maximum(d_avg, k_avg) * p_sq / h_avg

    dirichlet = space.mesh.face_tags == DIRICHLET
    gamma[dirichlet] = (
        gamma0
        * np.maximum(d_elem[plus[dirichlet]], k_elem[plus[dirichlet]])
        * p_sq / h_elem[plus[dirichlet]]
    )
    return PenaltyField(gamma, d_elem, np.array(k_elem), gamma0)


def _block_coo(blocks, row_elems, col_elems, n_loc, n_dofs):
    """COO triplets for (n, n_loc, n_loc) blocks at element positions."""
    n = blocks.shape[0]
    loc = np.arange(n_loc)
    rows = (row_elems[:, None, None] * n_loc + loc[None, :, None])
    cols = (col_elems[:, None, None] * n_loc + loc[None, None, :])
    rows = np.broadcast_to(rows, (n, n_loc, n_loc)).ravel()
    cols = np.broadcast_to(cols, (n, n_loc, n_loc)).ravel()
    return rows, cols, blocks.ravel()


def _blockdiag_csr(blocks, n_dofs):
    n_el, n_loc, _ = blocks.shape
    elems = np.arange(n_el)
    r, c, v = _block_coo(np.ascontiguousarray(blocks), elems, elems, n_loc,
                         n_dofs)
    return sp.coo_matrix((v, (r, c)), shape=(n_dofs, n_dofs)).tocsr()


def assemble_mass(space, order=None):
    """Mass matrix; block diagonal, and the identity for orthonormal bases."""
    vt = space.volume_tables(order or 2 * space.p + 1)
    blocks = np.einsum("eq,eqi,eqj->eij", vt.w, vt.phi, vt.phi)
    return _blockdiag_csr(blocks, space.n_dofs)


def assemble_reaction(space, coefficient, order=None):
    """Reaction matrix for a nonnegative element-wise constant coefficient."""
    coef = np.broadcast_to(np.asarray(coefficient, dtype=float),
                           (space.mesh.n_elements,))
    if np.any(coef < 0):
        raise ValueError("reaction coefficients must be nonnegative")
    vt = space.volume_tables(order or 2 * space.p + 1)
    blocks = np.einsum("e,eq,eqi,eqj->eij", coef, vt.w, vt.phi, vt.phi)
    return _blockdiag_csr(blocks, space.n_dofs)


def assemble_diffusion(space, d_field, gamma0, reaction_scale=0.0,
                       order=None, parts=False):
    """Interior-penalty diffusion matrix and its penalty field.

    ``d_field`` holds one symmetric positive definite tensor per element.
    With ``parts=True`` the volume, consistency (both symmetrized halves,
    sign included) and penalty matrices are returned separately; the
    operator is their sum.
    """
    d_field = np.asarray(d_field, dtype=float)
    penalty = penalty_field(space, d_field, gamma0, reaction_scale)
    order = order or 2 * space.p + 1
    mesh = space.mesh
    n_loc, n_dofs = space.n_loc, space.n_dofs

    vt = space.volume_tables(order)
    vol_blocks = np.einsum("eq,eqid,edf,eqjf->eij", vt.w, vt.grad, d_field,
                           vt.grad)
    elems = np.arange(mesh.n_elements)
    r, c, v = _block_coo(np.ascontiguousarray(vol_blocks), elems, elems,
                         n_loc, n_dofs)
    vol = sp.coo_matrix((v, (r, c)), shape=(n_dofs, n_dofs)).tocsr()

    ft = space.face_tables(order)
    flux_p, flux_m = ft.flux(d_field)
    active = ft.internal | ft.dirichlet
    internal = ft.internal

    def faces(mask, *arrays):
        return [a[mask] for a in arrays]

    def gather(mask, sign_s, sign_t, phi_s, phi_t, flux_s, flux_t,
               elems_s, elems_t, pen_rows, pen_cols, pen_vals,
               con_rows, con_cols, con_vals):
        w, gam, avg = ft.w[mask], penalty.gamma[mask], ft.avg[mask]
        ps, pt, fs, ftr = phi_s[mask], phi_t[mask], flux_s[mask], flux_t[mask]
        es, et = elems_s[mask], elems_t[mask]
        pen = sign_s * sign_t * np.einsum("fq,f,fqi,fqj->fij", w, gam, ps, pt)
        con = (-sign_t * np.einsum("fq,f,fqi,fqj->fij", w, avg, fs, pt)
               - sign_s * np.einsum("fq,f,fqi,fqj->fij", w, avg, ps, ftr))
        r1, c1, v1 = _block_coo(pen, es, et, n_loc, n_dofs)
        r2, c2, v2 = _block_coo(con, es, et, n_loc, n_dofs)
        pen_rows.append(r1); pen_cols.append(c1); pen_vals.append(v1)
        con_rows.append(r2); con_cols.append(c2); con_vals.append(v2)

    pr, pc, pv = [], [], []
    cr, cc, cv = [], [], []
    ep, em = ft.elem_plus, ft.elem_minus_safe
    gather(active, +1, +1, ft.phi_plus, ft.phi_plus, flux_p, flux_p,
           ep, ep, pr, pc, pv, cr, cc, cv)
    gather(internal, +1, -1, ft.phi_plus, ft.phi_minus, flux_p, flux_m,
           ep, em, pr, pc, pv, cr, cc, cv)
    gather(internal, -1, +1, ft.phi_minus, ft.phi_plus, flux_m, flux_p,
           em, ep, pr, pc, pv, cr, cc, cv)
    gather(internal, -1, -1, ft.phi_minus, ft.phi_minus, flux_m, flux_m,
           em, em, pr, pc, pv, cr, cc, cv)

    pen_mat = sp.coo_matrix(
        (np.concatenate(pv), (np.concatenate(pr), np.concatenate(pc))),
        shape=(n_dofs, n_dofs)).tocsr()
    con_mat = sp.coo_matrix(
        (np.concatenate(cv), (np.concatenate(cr), np.concatenate(cc))),
        shape=(n_dofs, n_dofs)).tocsr()

    a_mat = vol + con_mat + pen_mat
    if parts:
        return a_mat, penalty, vol, con_mat, pen_mat
    return a_mat, penalty


class NonlinearForm:
    """Conversion-term matrices R(psi)_ij = integral k12 psi phi_i phi_j.

    Linear in the weight field psi; block diagonal.  Quadrature of order 3p
    integrates the triple products exactly.
    """

    def __init__(self, space, k12, order=None):
        self.space = space
        self.k12 = float(k12)
        self.order = order or 3 * space.p
        self._vt = space.volume_tables(self.order)

    def blocks(self, psi):
        psi = np.asarray(psi)
        if psi.shape != (self.space.n_dofs,):
            raise ValueError(
                f"weight vector must have length {self.space.n_dofs}"
            )
        vt = self._vt
        vals = np.einsum("eqi,ei->eq", vt.phi, self.space.blocks(psi))
        return self.k12 * np.einsum("eq,eq,eqi,eqj->eij", vt.w, vals,
                                    vt.phi, vt.phi)

    def matrix(self, psi):
        return _blockdiag_csr(self.blocks(psi), self.space.n_dofs)


def assemble_nonlinear(space, psi, k12=1.0, order=None):
    """One-off conversion matrix for the weight field ``psi``."""
    return NonlinearForm(space, k12, order).matrix(psi)


def assemble_forcing(space, f, t=0.0, order=None):
    """Load vector of a space-time source: F_i = integral f(.,t) phi_i."""
    vt = space.volume_tables(order or 2 * space.p + 1)
    flat = vt.pts.reshape(-1, space.mesh.dim)
    vals = np.asarray(f(flat, t), dtype=float).reshape(vt.w.shape)
    return np.einsum("eq,eqi->ei", vt.w * vals, vt.phi).ravel()


def assemble_boundary_data(space, g, t, d_field, penalty, order=None):
    """Weak Dirichlet contribution: gamma-weighted data minus its flux pairing.

    Adds ``integral_F gamma g phi_i - integral_F g n.(D grad phi_i)`` over
    Dirichlet faces; zero when no face is tagged Dirichlet.
    """
    order = order or 2 * space.p + 1
    ft = space.face_tables(order)
    out = np.zeros((space.mesh.n_elements, space.n_loc))
    mask = ft.dirichlet
    if not np.any(mask):
        return out.ravel()
    flux_p, _ = ft.flux(np.asarray(d_field, dtype=float))
    pts = ft.pts[mask]
    gvals = np.asarray(
        g(pts.reshape(-1, space.mesh.dim), t), dtype=float
    ).reshape(pts.shape[:2])
    w, gam = ft.w[mask], penalty.gamma[mask]
    contrib = (np.einsum("fq,f,fq,fqi->fi", w, gam, gvals, ft.phi_plus[mask])
               - np.einsum("fq,fq,fqi->fi", w, gvals, flux_p[mask]))
    np.add.at(out, ft.elem_plus[mask], contrib)
    return out.ravel()


@dataclass
class SystemOperators:
    """Assembled time-independent operators of the semi-discrete system."""

    space: object
    mass: sp.csr_matrix
    diff_c: sp.csr_matrix
    diff_q: sp.csr_matrix
    react_c: sp.csr_matrix          # k1-weighted mass
    react_q: sp.csr_matrix          # k1_tilde-weighted mass
    penalty_c: PenaltyField
    penalty_q: PenaltyField
    d_field_c: np.ndarray
    d_field_q: np.ndarray
    nonlinear: NonlinearForm
    gamma0: float


def assemble_system(space, params, gamma0):
    """Assemble every state-independent operator for the given kinetics."""
    d_c = diffusion_field(space.mesh, params, "c")
    scale = penalty_reaction_scale(params)
    a_c, pen_c = assemble_diffusion(space, d_c, gamma0, scale)
    if params.d_ext_c == params.d_ext_q:
        d_q, a_q, pen_q = d_c, a_c, pen_c
    else:
        d_q = diffusion_field(space.mesh, params, "q")
        a_q, pen_q = assemble_diffusion(space, d_q, gamma0, scale)
    return SystemOperators(
        space=space,
        mass=assemble_mass(space),
        diff_c=a_c,
        diff_q=a_q,
        react_c=assemble_reaction(space, params.k1),
        react_q=assemble_reaction(space, params.k1_tilde),
        penalty_c=pen_c,
        penalty_q=pen_q,
        d_field_c=d_c,
        d_field_q=d_q,
        nonlinear=NonlinearForm(space, params.k12),
        gamma0=gamma0,
    )


def export_matrix(matrix, path):
    """Write a sparse matrix as 0-based ``row col value`` text lines."""
    coo = sp.coo_matrix(matrix)
    with open(path, "w") as out:
        for r, c, v in zip(coo.row, coo.col, coo.data):
            out.write(f"{r} {c} {v:.17g}\n")
