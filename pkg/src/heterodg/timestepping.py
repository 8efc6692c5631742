"""Semi-implicit theta-method integration of the coupled algebraic system.

Each step solves one coupled block system for both species: the diagonal
blocks hold mass/diffusion/linear-reaction terms, the off-diagonal blocks
the conversion matrices evaluated at known states (previous step for
implicit Euler, the (3 x^{k-1} - x^{k-2})/4 extrapolation for
Crank-Nicolson).  Crank-Nicolson starts with one implicit Euler step, which
supplies the history the extrapolation needs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SolverError(RuntimeError):
    """Linear solve failed (singular system or no convergence)."""


@dataclass
class SchemeConfig:
    """Time discretization: theta in {1, 1/2}, uniform step, final time."""

    theta: float
    dt: float
    t_final: float
    solver: str = "direct"
    tol: float = 1e-10

    def __post_init__(self):
        if self.theta not in (1.0, 0.5):
            raise ValueError("theta must be 1 (implicit Euler) or 0.5")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.t_final < 0:
            raise ValueError("t_final must be nonnegative")
        if self.t_final > 0 and self.t_final < self.dt:
            raise ValueError("t_final must be at least one step")
        if self.solver not in ("direct", "iterative"):
            raise ValueError(f"unknown solver {self.solver!r}")
        if not (0.0 < self.tol <= 1e-4):
            raise ValueError("solver tolerance must lie in (0, 1e-4]")

    @property
    def n_steps(self):
        if self.t_final == 0:
            return 0
        ratio = self.t_final / self.dt
        n = round(ratio)
        if n < 1 or abs(ratio - n) > 1e-9 * max(1.0, n):
            raise ValueError(
                "t_final/dt must be an integer number of steps "
                f"(got {ratio!r}); partial final steps are rejected"
            )
        return n


@dataclass
class State:
    """Coefficient vectors of both species at one time, plus one level of
    history for the Crank-Nicolson extrapolation."""

    c: np.ndarray
    q: np.ndarray
    t: float
    c_prev: np.ndarray = None
    q_prev: np.ndarray = None
    step: int = 0


@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)      # (c, q) coefficient pairs
    diagnostics: dict = field(default_factory=dict)

    def append(self, state):
        self.times.append(state.t)
        self.states.append((state.c.copy(), state.q.copy()))

    @property
    def final(self):
        c, q = self.states[-1]
        return State(c, q, self.times[-1])


class ThetaStepper:
    """Prepared per-run operators for the theta scheme."""

    def __init__(self, ops, cfg):
        self.ops = ops
        self.cfg = cfg
        dt = cfg.dt
        self.m_dt = (ops.mass / dt).tocsr()
        lin_c = (ops.diff_c + ops.react_c).tocsr()
        lin_q = (ops.diff_q + ops.react_q).tocsr()
        self.lin_c, self.lin_q = lin_c, lin_q
        self.k_ie_c = (self.m_dt + lin_c).tocsr()
        self.k_ie_q = (self.m_dt + lin_q).tocsr()
        if cfg.theta == 0.5:
            self.k_cn_c = (self.m_dt + 0.5 * lin_c).tocsr()
            self.k_cn_q = (self.m_dt + 0.5 * lin_q).tocsr()
        self._prec = None

    # -- linear algebra -------------------------------------------------

    def _preconditioner(self, k_c, k_q):
        lu_c = spla.splu(k_c.tocsc())
        lu_q = spla.splu(k_q.tocsc())
        n = k_c.shape[0]

        def apply(v):
            return np.concatenate([lu_c.solve(v[:n]), lu_q.solve(v[n:])])

        return spla.LinearOperator((2 * n, 2 * n), matvec=apply)

    def _solve(self, k_c, k_q, r_c, r_q, rhs_c, rhs_q, step):
        a = sp.bmat([[k_c, r_c], [-r_q, k_q]], format="csc")
        b = np.concatenate([rhs_c, rhs_q])
        if self.cfg.solver == "direct":
            try:
                x = spla.splu(a).solve(b)
            except RuntimeError as exc:
                raise SolverError(
                    f"step {step}: direct solve failed ({exc}); "
                    f"1-norm of system {spla.onenormest(a):.3e}"
                ) from exc
        else:
            if self._prec is None:
                self._prec = self._preconditioner(k_c, k_q)
            x, info = spla.gmres(a, b, rtol=self.cfg.tol, atol=0.0,
                                 M=self._prec, maxiter=500)
            if info != 0:
                raise SolverError(
                    f"step {step}: iterative solver did not converge "
                    f"(info={info})"
                )
        resid = np.linalg.norm(a @ x - b)
        scale = max(np.linalg.norm(b), 1e-300)
        if resid / scale > max(self.cfg.tol * 100, 1e-7):
            raise SolverError(
                f"step {step}: solution residual {resid / scale:.3e} exceeds "
                "tolerance; system may be near-singular"
            )
        n = k_c.shape[0]
        return x[:n], x[n:], resid / scale

    # -- schemes ----------------------------------------------------------

    def step_implicit_euler(self, state, forcing_k):
        f_c, f_q = forcing_k
        nl = self.ops.nonlinear
        r_c = nl.matrix(state.c)
        r_q = nl.matrix(state.q)
        rhs_c = f_c + self.m_dt @ state.c
        rhs_q = f_q + self.m_dt @ state.q
        c, q, resid = self._solve(self.k_ie_c, self.k_ie_q, r_c, r_q,
                                  rhs_c, rhs_q, state.step + 1)
        return State(c, q, state.t + self.cfg.dt, state.c, state.q,
                     state.step + 1), resid

    def step_crank_nicolson(self, state, forcing_k, forcing_km1):
        if state.c_prev is None or state.q_prev is None:
            raise ValueError(
                "Crank-Nicolson needs two past states; take one implicit "
                "Euler step first"
            )
        f_c, f_q = forcing_k
        f_c0, f_q0 = forcing_km1
        nl = self.ops.nonlinear
        x_c = (3.0 * state.c - state.c_prev) / 4.0
        x_q = (3.0 * state.q - state.q_prev) / 4.0
        r_c = nl.matrix(x_c)
        r_q = nl.matrix(x_q)
        rhs_c = (0.5 * (f_c + f_c0) - r_c @ state.q
                 + self.m_dt @ state.c - 0.5 * (self.lin_c @ state.c))
        rhs_q = (0.5 * (f_q + f_q0) + r_q @ state.c
                 + self.m_dt @ state.q - 0.5 * (self.lin_q @ state.q))
        c, q, resid = self._solve(self.k_cn_c, self.k_cn_q, r_c, r_q,
                                  rhs_c, rhs_q, state.step + 1)
        return State(c, q, state.t + self.cfg.dt, state.c, state.q,
                     state.step + 1), resid


def step_implicit_euler(state, ops, cfg, forcing_k):
    """One implicit Euler step (theta = 1) from ``state``."""
    new, _ = ThetaStepper(ops, cfg).step_implicit_euler(state, forcing_k)
    return new


def step_crank_nicolson(state, ops, cfg, forcing_k, forcing_km1):
    """One Crank-Nicolson step (theta = 1/2); requires one level of history."""
    if cfg.theta != 0.5:
        cfg = SchemeConfig(0.5, cfg.dt, cfg.t_final, cfg.solver, cfg.tol)
    new, _ = ThetaStepper(ops, cfg).step_crank_nicolson(
        state, forcing_k, forcing_km1
    )
    return new


def run(c0, q0, cfg, ops, forcing, callbacks=(), record_stride=1):
    """Integrate from (c0, q0) to t_final, recording every ``record_stride``
    steps (plus the initial and final states).

    ``forcing(t) -> (F_c, F_q)`` supplies the load vectors; callbacks
    receive every State in time order.  The run is deterministic for a
    fixed configuration.
    """
    n_steps = cfg.n_steps
    state = State(np.asarray(c0, dtype=float).copy(),
                  np.asarray(q0, dtype=float).copy(), 0.0)
    traj = Trajectory()
    traj.append(state)
    diag = {"min_c": np.inf, "min_q": np.inf, "negative_steps": 0,
            "max_residual": 0.0}
    space = ops.space
    for cb in callbacks:
        cb(state)
    if n_steps == 0:
        traj.diagnostics = diag
        return traj

    stepper = ThetaStepper(ops, cfg)
    f_prev = forcing(0.0)
    for k in range(1, n_steps + 1):
        t_k = k * cfg.dt
        f_k = forcing(t_k)
        try:
            if cfg.theta == 1.0 or state.c_prev is None:
                state, resid = stepper.step_implicit_euler(state, f_k)
            else:
                state, resid = stepper.step_crank_nicolson(state, f_k, f_prev)
        except SolverError:
            raise
        except Exception as exc:
            raise SolverError(f"step {k}: {exc}") from exc
        f_prev = f_k
        avg_c = space.element_averages(state.c)
        avg_q = space.element_averages(state.q)
        lo_c, lo_q = float(avg_c.min()), float(avg_q.min())
        diag["min_c"] = min(diag["min_c"], lo_c)
        diag["min_q"] = min(diag["min_q"], lo_q)
        if lo_c < 0 or lo_q < 0:
            diag["negative_steps"] += 1
        diag["max_residual"] = max(diag["max_residual"], resid)
        for cb in callbacks:
            cb(state)
        if k % record_stride == 0 or k == n_steps:
            traj.append(state)
    traj.diagnostics = diag
    return traj
