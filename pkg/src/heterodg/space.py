"""Discontinuous finite element space over a polytopal mesh.

The space holds one orthonormal polynomial basis per element (see
:mod:`heterodg.basis`) and caches stacked quadrature/trace tables that the
assembly, projection and norm routines share.  On meshes whose elements are
identically sized boxes the per-element value/gradient tables are stored
once and broadcast, so memory stays flat under mesh refinement.
"""

from __future__ import annotations

import numpy as np

from .basis import BoxBasis, dofs_per_element
from .mesh import DIRICHLET, INTERNAL, NEUMANN
from .quadrature import element_rule, face_rule


class DGSpace:
    """Element-wise polynomial space of total degree p over a mesh.

    Degrees of freedom are blocked per element: the coefficients of element
    ``e`` live at ``[e * n_loc, (e + 1) * n_loc)``.
    """

    def __init__(self, mesh, p):
        if p < 1:
            raise ValueError("polynomial degree must be at least 1")
        self.mesh = mesh
        self.p = int(p)
        self.n_loc = dofs_per_element(mesh.dim, self.p)
        self.n_dofs = self.n_loc * mesh.n_elements
        self._bases = [
            BoxBasis(mesh.elem_bbox[e, 0], mesh.elem_bbox[e, 1], self.p)
            for e in range(mesh.n_elements)
        ]
        # Cholesky orthonormalization for elements that are not boxes
        self._transforms = [None] * mesh.n_elements
        for e in range(mesh.n_elements):
            if not mesh.elem_is_box[e]:
                self._transforms[e] = self._orthonormalize(e)
        sizes = mesh.elem_bbox[:, 1] - mesh.elem_bbox[:, 0]
        self.uniform = bool(
            mesh.elem_is_box.all()
            and np.allclose(sizes, sizes[0], rtol=1e-12, atol=0.0)
        )
        self._volume_cache = {}
        self._face_cache = {}
        self._phi_integrals = None

    def _orthonormalize(self, e):
        pts, w = element_rule(self.mesh, e, 2 * self.p + 1)
        m = self._bases[e].eval(pts)
        gram = m.T @ (w[:, None] * m)
        lower = np.linalg.cholesky(gram)
        return np.linalg.inv(lower)

    # -- basis evaluation ------------------------------------------------

    def eval_basis(self, e, pts):
        vals = self._bases[e].eval(pts)
        c = self._transforms[e]
        return vals if c is None else vals @ c.T

    def eval_basis_grad(self, e, pts):
        grads = self._bases[e].eval_grad(pts)
        c = self._transforms[e]
        if c is None:
            return grads
        return np.einsum("li,qid->qld", c, grads)

    def eval_at(self, coeffs, e, pts):
        """Evaluate the discrete function at points inside element ``e``."""
        block = np.asarray(coeffs).reshape(-1, self.n_loc)[e]
        return self.eval_basis(e, pts) @ block

    def blocks(self, coeffs):
        return np.asarray(coeffs).reshape(self.mesh.n_elements, self.n_loc)

    # -- cached quadrature tables ----------------------------------------

    def volume_tables(self, order):
        if order not in self._volume_cache:
            self._volume_cache[order] = _build_volume_tables(self, order)
        return self._volume_cache[order]

    def face_tables(self, order):
        if order not in self._face_cache:
            self._face_cache[order] = _build_face_tables(self, order)
        return self._face_cache[order]

    def phi_integrals(self):
        """Per-element integrals of each basis function, shape (n_el, n_loc)."""
        if self._phi_integrals is None:
            vt = self.volume_tables(2 * self.p + 1)
            self._phi_integrals = np.einsum("eq,eqi->ei", vt.w, vt.phi)
        return self._phi_integrals

    # -- projection -------------------------------------------------------

    def project(self, g, order=None):
        """L2 projection of ``g(points) -> values`` onto the space."""
        order = order or 2 * self.p + 2
        vt = self.volume_tables(order)
        gvals = _eval_pointfun(g, vt.pts)
        rhs = np.einsum("eq,eqi->ei", vt.w * gvals, vt.phi)
        gram = np.einsum("eq,eqi,eqj->eij", vt.w, vt.phi, vt.phi)
        return np.linalg.solve(gram, rhs[..., None])[..., 0].ravel()

    def element_averages(self, coeffs):
        ints = np.einsum("ei,ei->e", self.phi_integrals(), self.blocks(coeffs))
        return ints / self.mesh.elem_measures


def _eval_pointfun(g, pts):
    """Evaluate ``g`` on stacked points of shape (n_el, nq, dim)."""
    flat = pts.reshape(-1, pts.shape[-1])
    return np.asarray(g(flat), dtype=float).reshape(pts.shape[:-1])


class VolumeTables:
    """Stacked element quadrature: points, weights, basis values/gradients."""

    def __init__(self, pts, w, phi, grad):
        self.pts = pts        # (n_el, nq, dim)
        self.w = w            # (n_el, nq)
        self.phi = phi        # (n_el, nq, n_loc)
        self.grad = grad      # (n_el, nq, n_loc, dim)


def _build_volume_tables(space, order):
    mesh = space.mesh
    n_el = mesh.n_elements
    if space.uniform:
        from .quadrature import box_rule

        size = mesh.elem_bbox[0, 1] - mesh.elem_bbox[0, 0]
        ref_pts, w = box_rule(np.zeros(mesh.dim), size, order)
        origins = mesh.elem_bbox[:, 0]
        pts = origins[:, None, :] + ref_pts[None, :, :]
        phi0 = space.eval_basis(0, pts[0])
        grad0 = space.eval_basis_grad(0, pts[0])
        nq = ref_pts.shape[0]
        return VolumeTables(
            pts,
            np.broadcast_to(w, (n_el, nq)),
            np.broadcast_to(phi0, (n_el, nq, space.n_loc)),
            np.broadcast_to(grad0, (n_el, nq, space.n_loc, mesh.dim)),
        )

    rules = [element_rule(mesh, e, order) for e in range(n_el)]
    nq = max(r[0].shape[0] for r in rules)
    pts = np.zeros((n_el, nq, mesh.dim))
    w = np.zeros((n_el, nq))
    phi = np.zeros((n_el, nq, space.n_loc))
    grad = np.zeros((n_el, nq, space.n_loc, mesh.dim))
    for e, (p, wq) in enumerate(rules):
        k = p.shape[0]
        pts[e, :k] = p
        pts[e, k:] = p[0]          # padding points carry zero weight
        w[e, :k] = wq
        phi[e] = space.eval_basis(e, pts[e])
        grad[e] = space.eval_basis_grad(e, pts[e])
    return VolumeTables(pts, w, phi, grad)


class FaceTables:
    """Stacked face quadrature and basis traces from both neighbors.

    ``phi_minus`` rows are zero on boundary faces, so expressions of the
    form ``einsum(phi_minus, blocks[elem_minus_safe])`` vanish there
    without special-casing.
    """

    def __init__(self, space, order):
        self.order = order
        self.space = space
        mesh = space.mesh
        n_f = mesh.n_faces
        rules = [face_rule(mesh, f, order) for f in range(n_f)]
        nq = rules[0][0].shape[0]
        self.nq = nq
        self.pts = np.zeros((n_f, nq, mesh.dim))
        self.w = np.zeros((n_f, nq))
        self.phi_plus = np.zeros((n_f, nq, space.n_loc))
        self.phi_minus = np.zeros((n_f, nq, space.n_loc))
        self.elem_plus = mesh.face_elems[:, 0].copy()
        self.elem_minus = mesh.face_elems[:, 1].copy()
        self.elem_minus_safe = np.where(self.elem_minus < 0, 0, self.elem_minus)
        for f, (p, wq) in enumerate(rules):
            self.pts[f] = p
            self.w[f] = wq
            self.phi_plus[f] = space.eval_basis(self.elem_plus[f], p)
            if self.elem_minus[f] >= 0:
                self.phi_minus[f] = space.eval_basis(self.elem_minus[f], p)
        self.internal = mesh.face_tags == INTERNAL
        self.dirichlet = mesh.face_tags == DIRICHLET
        self.neumann = mesh.face_tags == NEUMANN
        # average weight: 1/2 where two traces meet, 1 one-sided
        self.avg = np.where(self.internal, 0.5, 1.0)

    def flux(self, d_field):
        """Normal diffusive flux traces n . (D grad phi) from both sides.

        ``d_field`` is a per-element (n_el, dim, dim) tensor array.  Returns
        two (n_faces, nq, n_loc) arrays; the minus side is zero on boundary
        faces.
        """
        mesh = self.space.mesh
        normals = mesh.face_normals
        dn_plus = np.einsum("fde,fe->fd", d_field[self.elem_plus], normals)
        dn_minus = np.einsum(
            "fde,fe->fd", d_field[self.elem_minus_safe], normals
        )
        flux_plus = np.empty_like(self.phi_plus)
        flux_minus = np.zeros_like(self.phi_minus)
        for f in range(mesh.n_faces):
            grad = self.space.eval_basis_grad(self.elem_plus[f], self.pts[f])
            flux_plus[f] = grad @ dn_plus[f]
            if self.elem_minus[f] >= 0:
                grad = self.space.eval_basis_grad(
                    self.elem_minus[f], self.pts[f]
                )
                flux_minus[f] = grad @ dn_minus[f]
        return flux_plus, flux_minus

    def trace_values(self, coeffs):
        """Traces of a discrete function from both sides, (n_faces, nq) each."""
        blocks = self.space.blocks(coeffs)
        vp = np.einsum("fqi,fi->fq", self.phi_plus, blocks[self.elem_plus])
        vm = np.einsum(
            "fqi,fi->fq", self.phi_minus, blocks[self.elem_minus_safe]
        )
        return vp, vm


def _build_face_tables(space, order):
    return FaceTables(space, order)


def build_space(mesh, p):
    """Construct the degree-p discontinuous space over ``mesh``."""
    return DGSpace(mesh, p)


# -- norms ---------------------------------------------------------------


def l2_norm(space, coeffs, order=None):
    vt = space.volume_tables(order or 2 * space.p + 1)
    vals = np.einsum("eqi,ei->eq", vt.phi, space.blocks(coeffs))
    return float(np.sqrt(np.einsum("eq,eq->", vt.w, vals ** 2)))


def dg_norm_parts(space, coeffs, d_field, penalty, order=None, with_flux=False):
    """Squared pieces of the broken norms of a discrete function.

    Returns ``(grad_sq, jump_sq)`` or ``(grad_sq, jump_sq, flux_sq)``:
    the D-weighted broken gradient, the penalty-weighted inter-element and
    Dirichlet jumps, and optionally the penalty-inverse-weighted average
    normal flux.
    """
    order = order or 2 * space.p + 1
    vt = space.volume_tables(order)
    blocks = space.blocks(coeffs)
    gu = np.einsum("eqid,ei->eqd", vt.grad, blocks)
    grad_sq = float(np.einsum("eq,eqd,edf,eqf->", vt.w, gu, d_field, gu))

    ft = space.face_tables(order)
    active = ft.internal | ft.dirichlet
    vp, vm = ft.trace_values(coeffs)
    jump = vp - vm
    gamma = penalty.gamma
    jump_sq = float(np.einsum(
        "f,fq,fq->", gamma[active], ft.w[active], jump[active] ** 2
    ))
    if not with_flux:
        return grad_sq, jump_sq

    fp, fm = ft.flux(d_field)
    avg_flux = ft.avg[:, None] * (
        np.einsum("fqi,fi->fq", fp, blocks[ft.elem_plus])
        + np.einsum("fqi,fi->fq", fm, blocks[ft.elem_minus_safe])
    )
    flux_sq = float(np.einsum(
        "f,fq,fq->", 1.0 / gamma[active], ft.w[active], avg_flux[active] ** 2
    ))
    return grad_sq, jump_sq, flux_sq


def dg_norm(space, coeffs, d_field, penalty, order=None):
    """Broken DG norm: D-weighted gradient plus penalized jumps."""
    g, j = dg_norm_parts(space, coeffs, d_field, penalty, order)
    return float(np.sqrt(g + j))


def dg3_norm(space, coeffs, d_field, penalty, order=None):
    """DG norm augmented with the penalty-inverse average-flux term."""
    g, j, fl = dg_norm_parts(space, coeffs, d_field, penalty, order,
                             with_flux=True)
    return float(np.sqrt(g + j + fl))


def energy_norm(space, times, history, d_field, penalty, triple=True,
                order=None):
    """L2 norm at the final time plus the time-integrated broken norm.

    ``history`` is a sequence of coefficient vectors at the (uniformly
    spaced) ``times``; the time integral uses the trapezoidal rule.
    """
    if len(history) < 2:
        raise ValueError("energy norm needs at least two snapshots")
    norm_fn = dg3_norm if triple else dg_norm
    dg_sq = [norm_fn(space, c, d_field, penalty, order) ** 2 for c in history]
    l2_final = l2_norm(space, history[-1], order)
    return float(np.sqrt(l2_final ** 2 + np.trapz(dg_sq, times)))
