"""Manufactured-solution convergence harness.

A closed-form solution pair drives the solver through its induced forcing
and Dirichlet boundary data; errors against the exact fields are measured
in the L2, broken DG and time-integrated energy norms, and tabulated
against mesh size or polynomial degree with fitted decay rates.
"""

from __future__ import annotations

import concurrent.futures
import math
from dataclasses import dataclass, field

import numpy as np

from .assembly import assemble_boundary_data, assemble_forcing, assemble_system
from .mesh import DIRICHLET, build_cartesian_grid, tag_boundary
from .space import DGSpace, l2_norm
from .timestepping import SchemeConfig, run


@dataclass(frozen=True)
class ManufacturedCase:
    """Trigonometric exact solution pair on the unit box.

    The healthy field is a slowly oscillating sum of cosines with a cos(t)
    envelope; the misfolded field is a product of three-times faster
    cosines (offset to stay positive) decaying like exp(-t).  The misfolded
    field is deliberately harder to resolve.
    """

    dim: int

    def exact_c(self, pts, t):
        pts = np.atleast_2d(pts)
        return math.cos(t) * np.cos(2 * np.pi * pts).sum(axis=1)

    def exact_q(self, pts, t):
        pts = np.atleast_2d(pts)
        return (np.cos(6 * np.pi * pts).prod(axis=1) + 2.0) * math.exp(-t)

    def grad_c(self, pts, t):
        pts = np.atleast_2d(pts)
        return -2 * np.pi * math.cos(t) * np.sin(2 * np.pi * pts)

    def grad_q(self, pts, t):
        pts = np.atleast_2d(pts)
        cosv = np.cos(6 * np.pi * pts)
        grad = np.empty_like(pts)
        for d in range(self.dim):
            others = np.prod(np.delete(cosv, d, axis=1), axis=1)
            grad[:, d] = -6 * np.pi * np.sin(6 * np.pi * pts[:, d]) * others
        return grad * math.exp(-t)

    def dt_c(self, pts, t):
        pts = np.atleast_2d(pts)
        return -math.sin(t) * np.cos(2 * np.pi * pts).sum(axis=1)

    def dt_q(self, pts, t):
        return -self.exact_q(pts, t)

    def laplacian_c(self, pts, t):
        return -4 * np.pi ** 2 * self.exact_c(pts, t)

    def laplacian_q(self, pts, t):
        pts = np.atleast_2d(pts)
        prod = np.cos(6 * np.pi * pts).prod(axis=1)
        return -36 * np.pi ** 2 * self.dim * prod * math.exp(-t)

    def forcing_c(self, pts, t, params):
        """Source completing the healthy-species equation for this solution.

        Valid for isotropic diffusion (d_axn = 0), as in the convergence
        studies.
        """
        if params.d_axn != 0:
            raise ValueError("manufactured forcing assumes isotropic diffusion")
        c = self.exact_c(pts, t)
        q = self.exact_q(pts, t)
        return (self.dt_c(pts, t) - params.d_ext_c * self.laplacian_c(pts, t)
                + params.k1 * c + params.k12 * c * q - params.k0)

    def forcing_q(self, pts, t, params):
        if params.d_axn != 0:
            raise ValueError("manufactured forcing assumes isotropic diffusion")
        c = self.exact_c(pts, t)
        q = self.exact_q(pts, t)
        return (self.dt_q(pts, t) - params.d_ext_q * self.laplacian_q(pts, t)
                + params.k1_tilde * q - params.k12 * c * q)


def exact_eval(case, x, t):
    """Exact (c, q) values at a single point."""
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    return float(case.exact_c(pts, t)[0]), float(case.exact_q(pts, t)[0])


def forcing_eval(case, params, x, t):
    """Induced (f_c, f_q) forcing values at a single point."""
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    return (float(case.forcing_c(pts, t, params)[0]),
            float(case.forcing_q(pts, t, params)[0]))


# -- error norms ---------------------------------------------------------


class _ErrorContext:
    """Cached tables for repeated error evaluation along a trajectory."""

    def __init__(self, space, penalty, d_field, order):
        self.space = space
        self.penalty = penalty
        self.d_field = np.asarray(d_field, dtype=float)
        self.vt = space.volume_tables(order)
        self.ft = space.face_tables(order)
        self.flux = self.ft.flux(self.d_field)
        self.active = self.ft.internal | self.ft.dirichlet
        self.vol_pts = self.vt.pts.reshape(-1, space.mesh.dim)
        act = self.active
        self.face_pts = self.ft.pts[act].reshape(-1, space.mesh.dim)
        self.normals = space.mesh.face_normals

    def norms(self, coeffs, exact, exact_grad, t):
        """(l2, dg, dg3) of the error of one species at time t."""
        sp_, vt, ft = self.space, self.vt, self.ft
        blocks = sp_.blocks(coeffs)
        shape = vt.w.shape

        vals = np.einsum("eqi,ei->eq", vt.phi, blocks)
        err = vals - exact(self.vol_pts, t).reshape(shape)
        l2_sq = float(np.einsum("eq,eq->", vt.w, err ** 2))

        gvals = np.einsum("eqid,ei->eqd", vt.grad, blocks)
        gerr = gvals - exact_grad(self.vol_pts, t).reshape(*shape, -1)
        grad_sq = float(np.einsum("eq,eqd,edf,eqf->", vt.w, gerr,
                                  self.d_field, gerr))

        act = self.active
        gamma = self.penalty.gamma[act]
        w = ft.w[act]
        vp, vm = ft.trace_values(coeffs)
        g_face = exact(self.face_pts, t).reshape(w.shape)
        # one-sided traces miss the exact value only on Dirichlet faces;
        # on internal faces the exact solution cancels in the jump
        jump = np.where(
            ft.internal[act, None], (vp - vm)[act], vp[act] - g_face
        )
        jump_sq = float(np.einsum("f,fq,fq->", gamma, w, jump ** 2))

        fp, fm = self.flux
        blocks_p = blocks[ft.elem_plus]
        blocks_m = blocks[ft.elem_minus_safe]
        flux_h = ft.avg[:, None] * (
            np.einsum("fqi,fi->fq", fp, blocks_p)
            + np.einsum("fqi,fi->fq", fm, blocks_m)
        )
        dn_p = np.einsum("fde,fe->fd", self.d_field[ft.elem_plus[act]],
                         self.normals[act])
        dn_m = np.einsum("fde,fe->fd", self.d_field[ft.elem_minus_safe[act]],
                         self.normals[act])
        dn_m[~ft.internal[act]] = 0.0
        eg_face = exact_grad(self.face_pts, t).reshape(*w.shape, -1)
        flux_exact = ft.avg[act, None] * (
            np.einsum("fqd,fd->fq", eg_face, dn_p)
            + np.einsum("fqd,fd->fq", eg_face, dn_m)
        )
        flux_err = flux_h[act] - flux_exact
        flux_sq = float(np.einsum("f,fq,fq->", 1.0 / gamma, w, flux_err ** 2))

        return (np.sqrt(l2_sq), np.sqrt(grad_sq + jump_sq),
                np.sqrt(grad_sq + jump_sq + flux_sq))


def error_norms(space, times, states, case, params, operators, order=None):
    """Errors of a trajectory against the exact solution.

    Returns ``{"c": {...}, "q": {...}}`` with the final-time L2 and DG
    errors and the energy error (final L2 plus the trapezoidal time
    integral of the squared augmented DG norm).
    """
    order = order or 2 * space.p + 2
    ctx_c = _ErrorContext(space, operators.penalty_c, operators.d_field_c,
                          order)
    if operators.penalty_q is operators.penalty_c:
        ctx_q = ctx_c
    else:
        ctx_q = _ErrorContext(space, operators.penalty_q,
                              operators.d_field_q, order)
    out = {}
    for species, ctx, exact, egrad in (
        ("c", ctx_c, case.exact_c, case.grad_c),
        ("q", ctx_q, case.exact_q, case.grad_q),
    ):
        dg3_sq = np.empty(len(times))
        last = None
        for k, t in enumerate(times):
            coeffs = states[k][0] if species == "c" else states[k][1]
            last = ctx.norms(coeffs, exact, egrad, t)
            dg3_sq[k] = last[2] ** 2
        energy = float(np.sqrt(last[0] ** 2 + np.trapz(dg3_sq, times)))
        out[species] = {"l2": last[0], "dg": last[1], "energy": energy}
    return out


# -- convergence studies ---------------------------------------------------


@dataclass
class LevelResult:
    label: float              # mesh size h or degree p
    cells: int
    p: int
    errors: dict              # errors["c"]["l2"], ...


@dataclass
class RateTable:
    """Per-level errors of a refinement study plus fitted decay rates.

    For mesh refinement the slope between consecutive levels is
    ``log2(e_coarse / e_fine)`` (grids are nested with ratio two); for
    degree refinement it is the log error decrement per unit degree.
    """

    mode: str                 # "h" or "p"
    levels: list = field(default_factory=list)

    def errors(self, species, norm):
        return np.array([lv.errors[species][norm] for lv in self.levels])

    def slopes(self, species, norm="energy"):
        err = self.errors(species, norm)
        if self.mode == "h":
            h = np.array([lv.label for lv in self.levels])
            return np.log2(err[:-1] / err[1:]) / np.log2(h[:-1] / h[1:])
        return np.log(err[:-1] / err[1:])

    def overall_slope(self, species, norm="energy"):
        return float(self.slopes(species, norm).mean())

    def monotone_decreasing(self, species, norm="energy"):
        err = self.errors(species, norm)
        return bool(np.all(np.diff(err) < 0))

    def log_linear_r2(self, species, norm="energy"):
        """Goodness of a straight-line fit to log(error) vs degree."""
        x = np.array([lv.label for lv in self.levels], dtype=float)
        y = np.log(self.errors(species, norm))
        coef = np.polyfit(x, y, 1)
        resid = y - np.polyval(coef, x)
        total = ((y - y.mean()) ** 2).sum()
        return float(1.0 - (resid ** 2).sum() / total) if total > 0 else 1.0

    def to_csv(self, path):
        header = ("level,h_or_p,err_c_L2,err_q_L2,err_c_DG,err_q_DG,"
                  "err_c_energy,err_q_energy,slope_c,slope_q")
        slopes_c = self.slopes("c")
        slopes_q = self.slopes("q")
        with open(path, "w") as out:
            out.write(header + "\n")
            for i, lv in enumerate(self.levels):
                sc = f"{slopes_c[i - 1]:.17g}" if i > 0 else ""
                sq = f"{slopes_q[i - 1]:.17g}" if i > 0 else ""
                e = lv.errors
                out.write(
                    f"{i},{lv.label:.17g},"
                    f"{e['c']['l2']:.17g},{e['q']['l2']:.17g},"
                    f"{e['c']['dg']:.17g},{e['q']['dg']:.17g},"
                    f"{e['c']['energy']:.17g},{e['q']['energy']:.17g},"
                    f"{sc},{sq}\n"
                )


def run_manufactured(dim, cells, p, params, scheme_cfg, gamma0):
    """Solve one manufactured-solution problem on the unit box.

    All boundary faces carry Dirichlet data from the exact solution.
    Returns the space, operators, the recorded trajectory and the case.
    """
    case = ManufacturedCase(dim)
    mesh = build_cartesian_grid(dim, [cells] * dim,
                                (np.zeros(dim), np.ones(dim)))
    mesh = tag_boundary(mesh, lambda x: DIRICHLET)
    space = DGSpace(mesh, p)
    ops = assemble_system(space, params, gamma0)

    def forcing(t):
        f_c = assemble_forcing(
            space, lambda x, s: case.forcing_c(x, s, params), t
        ) + assemble_boundary_data(space, case.exact_c, t, ops.d_field_c,
                                   ops.penalty_c)
        f_q = assemble_forcing(
            space, lambda x, s: case.forcing_q(x, s, params), t
        ) + assemble_boundary_data(space, case.exact_q, t, ops.d_field_q,
                                   ops.penalty_q)
        return f_c, f_q

    c0 = space.project(lambda x: case.exact_c(x, 0.0))
    q0 = space.project(lambda x: case.exact_q(x, 0.0))
    traj = run(c0, q0, scheme_cfg, ops, forcing, record_stride=1)
    return space, ops, traj, case


def _one_level(mode, level, dim, cells, p, params, scheme_cfg, gamma0):
    if mode == "h":
        cells_i, p_i = int(level), p
        label = 1.0 / cells_i
    else:
        cells_i, p_i = cells, int(level)
        label = float(p_i)
    space, ops, traj, case = run_manufactured(
        dim, cells_i, p_i, params, scheme_cfg, gamma0
    )
    errs = error_norms(space, traj.times, traj.states, case, params, ops)
    return LevelResult(label, cells_i, p_i, errs)


def convergence_study(mode, levels, *, dim, params, scheme_cfg, gamma0,
                      p=None, cells=None, workers=1):
    """Refinement study over mesh sizes (``mode="h"``) or degrees ("p").

    ``levels`` lists cells-per-axis values (h-mode, fixed ``p``) or degrees
    (p-mode, fixed ``cells``).  Levels are independent and may run on a
    small thread pool.
    """
    if mode not in ("h", "p"):
        raise ValueError("mode must be 'h' or 'p'")
    if mode == "h" and p is None:
        raise ValueError("h-refinement needs a fixed degree p")
    if mode == "p" and cells is None:
        raise ValueError("p-refinement needs a fixed grid")
    table = RateTable(mode)
    args = [(mode, lv, dim, cells, p, params, scheme_cfg, gamma0)
            for lv in levels]
    if workers > 1:
        with concurrent.futures.ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(lambda a: _one_level(*a), args))
    else:
        results = [_one_level(*a) for a in args]
    table.levels = results
    return table
