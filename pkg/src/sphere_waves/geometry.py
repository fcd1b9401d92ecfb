"""Unit sphere M of L2(0,1), its tangent projection and the monitored functionals."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from sphere_waves.errors import DegenerateStateError, InvalidArgumentError
from sphere_waves.spectral import (
    FloatArray,
    SpectralField,
    StateZ,
    inner,
    require_unit,
    sobolev_norm,
)


@dataclass(frozen=True)
class ManifoldTolerances:
    """Tolerances used when deciding membership of M and of its tangent bundle."""

    tol_constraint: float = 1e-10
    tol_tangency: float = 1e-10

    def __post_init__(self) -> None:
        if self.tol_constraint <= 0 or self.tol_tangency <= 0:
            raise InvalidArgumentError("manifold tolerances must be strictly positive")


DEFAULT_TOLERANCES = ManifoldTolerances()


def project_coeffs(a: FloatArray, x: FloatArray) -> FloatArray:
    """Array form of tangent_project (no sphere check)."""
    return x - np.dot(x, a) * a


def tangent_project(
    a: SpectralField, x: SpectralField, tol: ManifoldTolerances = DEFAULT_TOLERANCES
) -> SpectralField:
    """Orthogonal projection of x onto T_aM: x - <x, a>_H a.

    Raises:
        InvalidArgumentError: If a is off the sphere or the bases differ
    """
    a._check(x)
    require_unit(a, tol.tol_constraint, what="projection base point")
    return SpectralField(project_coeffs(a.coeffs, x.coeffs), a.basis)


def renormalize_coeffs(u: FloatArray, v: FloatArray | None = None) -> tuple[FloatArray, FloatArray | None]:
    """Array form of renormalize_state; v may be None for first-order dynamics."""
    norm = float(np.linalg.norm(u))
    if norm == 0.0 or not np.isfinite(norm):
        raise DegenerateStateError(f"cannot renormalize a position with |u|_H = {norm}")
    u_new = u / norm
    if v is None:
        return u_new, None
    return u_new, project_coeffs(u_new, v)


def renormalize_state(z: StateZ) -> StateZ:
    """Pull a state back onto the tangent bundle: u/|u|_H and the tangential part of v.

    Raises:
        DegenerateStateError: If u = 0
    """
    u_new, v_new = renormalize_coeffs(z.u.coeffs, z.v.coeffs)
    basis = z.basis
    return StateZ(SpectralField(u_new, basis), SpectralField(v_new, basis))


def energy_psi(z: StateZ) -> float:
    """Psi(u, v) = (|u|^2_{H^1} + |v|^2_H) / 2."""
    return 0.5 * (inner(z.u, z.u, 1.0) + inner(z.v, z.v, 0.0))


def phi_functional(u: SpectralField, tol: ManifoldTolerances = DEFAULT_TOLERANCES) -> float:
    """Phi(u) = |u|^2_{H^2} - |u|^4_{H^1} / 2 for u on the sphere.

    On M this lies in [|u|^2_{H^2}/2, |u|^2_{H^2}].

    Raises:
        InvalidArgumentError: If u is off the sphere
    """
    require_unit(u, tol.tol_constraint, what="phi_functional input")
    return phi_raw(u.coeffs, u.basis.eigenvalues)


def phi_raw(u: FloatArray, alpha: FloatArray) -> float:
    h1_sq = float(np.dot(alpha * u, u))
    h2_sq = float(np.dot(alpha**2 * u, u))
    return h2_sq - 0.5 * h1_sq**2


def crucial_identity_residual(
    u: SpectralField, tol: ManifoldTolerances = DEFAULT_TOLERANCES
) -> float:
    """| (|u|^2_{H^2} - |u|^4_{H^1}) - |Delta u + |u|^2_{H^1} u|^2_H | for u on the sphere."""
    require_unit(u, tol.tol_constraint, what="crucial_identity_residual input")
    alpha = u.basis.eigenvalues
    c = u.coeffs
    h1_sq = float(np.dot(alpha * c, c))
    h2_sq = float(np.dot(alpha**2 * c, c))
    # Delta acts as -alpha_j per mode
    restored = -alpha * c + h1_sq * c
    return abs((h2_sq - h1_sq**2) - float(np.dot(restored, restored)))


def gradient_flow_bounds(u: SpectralField) -> tuple[float, float, float]:
    """(|u|^2_{H^2}/2, Phi(u), |u|^2_{H^2}) for checking the lower/upper bound on Phi."""
    h2_sq = sobolev_norm(u, 2.0) ** 2
    return 0.5 * h2_sq, phi_functional(u), h2_sq
