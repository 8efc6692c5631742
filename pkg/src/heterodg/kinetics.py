"""Reaction kinetics of the two-species heterodimer model.

The model couples a healthy concentration c and a misfolded concentration q
through production (k0), clearances (k1, k1_tilde), and conversion (k12):

    dc/dt = div(D grad c) - k1 c - k12 c q + k0
    dq/dt = div(D grad q) - k1_tilde q + k12 c q

This module holds the parameter set, admissibility and equilibrium
analysis, the closed-form minimum traveling-front speed, and the
anisotropic diffusion tensor built from an axonal direction field.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class AdmissibilityError(ValueError):
    """Raised when the kinetic coefficients violate the bistability condition."""


@dataclass(frozen=True)
class ModelParams:
    """Kinetic and diffusion coefficients.

    Units: concentrations in ug/mm^3, lengths in mm, times in years.
    ``d_ext_c``/``d_ext_q`` are the isotropic extracellular diffusivities of
    the two species (equal by default); ``d_axn`` adds anisotropic transport
    along the unit direction field ``axon`` (a constant vector here; meshes
    may carry a per-element field instead).
    """

    k0: float
    k1: float
    k1_tilde: float
    k12: float
    d_ext_c: float
    d_ext_q: float
    d_axn: float = 0.0
    axon: tuple = None

    def __post_init__(self):
        for name in ("k0", "k1", "k1_tilde", "k12", "d_axn"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.d_ext_c <= 0 or self.d_ext_q <= 0:
            raise ValueError("extracellular diffusivities must be positive")
        if self.axon is not None:
            a = np.asarray(self.axon, dtype=float)
            if self.d_axn > 0 and not np.isclose(np.linalg.norm(a), 1.0,
                                                 atol=1e-12):
                raise ValueError("axonal direction must be a unit vector")
            object.__setattr__(self, "axon", tuple(float(x) for x in a))

    @classmethod
    def isotropic(cls, k0, k1, k1_tilde, k12, d_ext):
        return cls(k0=k0, k1=k1, k1_tilde=k1_tilde, k12=k12,
                   d_ext_c=d_ext, d_ext_q=d_ext)

    def d_ext(self, species):
        if species == "c":
            return self.d_ext_c
        if species == "q":
            return self.d_ext_q
        raise ValueError(f"unknown species {species!r}")


@dataclass(frozen=True)
class Equilibria:
    """The two rest states of the reaction kinetics with stability labels."""

    pathological: tuple
    healthy: tuple
    pathological_stable: bool
    healthy_saddle: bool


def check_admissibility(params):
    """Bistability check: k0*k12 must exceed k1*k1_tilde, both positive.

    Returns ``(ok, report)`` where the report carries both products.
    """
    production = params.k0 * params.k12
    clearance = params.k1 * params.k1_tilde
    ok = production > clearance > 0.0
    report = {
        "k0_k12": production,
        "k1_k1_tilde": clearance,
        "admissible": ok,
    }
    return ok, report


def reaction_rhs(params, c, q):
    """Reaction vector field (dc/dt, dq/dt) without diffusion."""
    return (
        params.k0 - params.k1 * c - params.k12 * c * q,
        -params.k1_tilde * q + params.k12 * c * q,
    )


def reaction_jacobian(params, c, q):
    """Jacobian of the reaction vector field at (c, q)."""
    return np.array([
        [-params.k1 - params.k12 * q, -params.k12 * c],
        [params.k12 * q, -params.k1_tilde + params.k12 * c],
    ])


def equilibria(params):
    """Both rest states, classified numerically from the Jacobian spectrum."""
    ok, report = check_admissibility(params)
    if not ok:
        raise AdmissibilityError(
            "inadmissible parameters: need k0*k12 > k1*k1_tilde > 0, got "
            f"{report['k0_k12']:g} vs {report['k1_k1_tilde']:g}"
        )
    path = (params.k1_tilde / params.k12,
            params.k0 / params.k1_tilde - params.k1 / params.k12)
    healthy = (params.k0 / params.k1, 0.0)

    eig_path = np.linalg.eigvals(reaction_jacobian(params, *path))
    eig_heal = np.linalg.eigvals(reaction_jacobian(params, *healthy))
    stable = bool(np.all(eig_path.real < 0))
    saddle = bool(
        np.all(np.abs(eig_heal.imag) < 1e-14)
        and eig_heal.real.min() < 0 < eig_heal.real.max()
    )
    return Equilibria(path, healthy, stable, saddle)


def min_wave_speed(params):
    """Minimum front speed selected by compactly supported seeds (mm/year).

    Uses the misfolded species' extracellular diffusivity.
    """
    ok, report = check_admissibility(params)
    if not ok:
        raise AdmissibilityError(
            "front speed undefined for inadmissible parameters: "
            f"{report['k0_k12']:g} <= {report['k1_k1_tilde']:g}"
        )
    ratio = params.k0 * params.k12 / (params.k1 * params.k1_tilde)
    return 2.0 * np.sqrt(params.d_ext_q * params.k1_tilde * (ratio - 1.0))


def fk_alpha(params):
    """Logistic growth rate of the single-species reduction (1/years).

    Freezing the healthy concentration at its rest value k0/k1 collapses the
    two-species kinetics to a Fisher-Kolmogorov equation for q whose
    reaction coefficient is k12*k0/k1 - k1_tilde.
    """
    if params.k1 == 0:
        raise ValueError("the reduction requires k1 > 0")
    return params.k12 * params.k0 / params.k1 - params.k1_tilde


def diffusion_tensor(params, species, axon=None):
    """Diffusion tensor d_ext*I + d_axn*(a x a) for one species.

    ``axon`` overrides the parameter-level direction; it must be a unit
    vector whenever d_axn > 0.
    """
    a = axon if axon is not None else params.axon
    d_ext = params.d_ext(species)
    if params.d_axn == 0.0:
        dim = 3 if a is None else np.asarray(a).size
        return d_ext * np.eye(dim)
    if a is None:
        raise ValueError("d_axn > 0 requires an axonal direction")
    a = np.asarray(a, dtype=float)
    if not np.isclose(np.linalg.norm(a), 1.0, atol=1e-12):
        raise ValueError("axonal direction must be a unit vector")
    return d_ext * np.eye(a.size) + params.d_axn * np.outer(a, a)


def diffusion_field(mesh, params, species):
    """Per-element diffusion tensors, shape (n_elements, dim, dim).

    Uses the mesh's per-element axonal directions when present, else the
    constant direction from ``params``.
    """
    n_el, dim = mesh.n_elements, mesh.dim
    d_ext = params.d_ext(species)
    field_ = np.broadcast_to(d_ext * np.eye(dim), (n_el, dim, dim)).copy()
    if params.d_axn > 0:
        if mesh.axon is not None:
            a = mesh.axon
            norms = np.linalg.norm(a, axis=1)
            if not np.allclose(norms, 1.0, atol=1e-12):
                raise ValueError("per-element axonal directions must be unit")
        elif params.axon is not None:
            a = np.broadcast_to(np.asarray(params.axon), (n_el, dim))
        else:
            raise ValueError("d_axn > 0 requires an axonal direction")
        field_ += params.d_axn * np.einsum("ed,ef->edf", a, a)
    return field_


def penalty_reaction_scale(params):
    """Reaction magnitude entering the face penalty: (1+k12)(k1+k1_tilde)."""
    return (1.0 + params.k12) * (params.k1 + params.k1_tilde)
