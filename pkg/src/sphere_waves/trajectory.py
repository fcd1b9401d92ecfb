"""Trajectory records shared by the wave and limit integrators, and time-series diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from sphere_waves.errors import InvalidArgumentError
from sphere_waves.forcing import DiffusionModel, hs_norm_sq_rows
from sphere_waves.spectral import FloatArray, SpectralBasis, SpectralField, StateZ

DIAGNOSTIC_COLUMNS = ("norm_h", "psi", "phi", "h2norm", "hs_norm_sq")


@dataclass(frozen=True)
class Trajectory:
    """A sampled path on a uniform grid.

    Attributes:
        kind: "wave" (u and v) or "limit" (u only, v is None)
        basis: Galerkin basis of the coefficient arrays
        times: n_steps + 1 grid points, initial time included
        u: (n_steps + 1, N) position coefficients
        v: (n_steps + 1, N) velocity coefficients, or None for first-order paths
        increments: (n_steps, K) noise increments consumed by the run
        noise_ref: (seed, replica) the increments were drawn from
        diagnostics: per-step scalars keyed by DIAGNOSTIC_COLUMNS
        scheme: integrator identifier echoed into run metadata
    """

    kind: Literal["wave", "limit"]
    basis: SpectralBasis
    times: FloatArray
    u: FloatArray
    v: FloatArray | None
    increments: FloatArray
    noise_ref: tuple[int, int]
    diagnostics: dict[str, FloatArray] = field(default_factory=dict)
    scheme: str = ""

    def __post_init__(self) -> None:
        steps = np.diff(self.times)
        if steps.size and (np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-9)):
            raise InvalidArgumentError("trajectory times must be strictly increasing and uniform")
        if self.u.shape != (self.times.size, self.basis.n_modes):
            raise InvalidArgumentError(f"u has shape {self.u.shape}, expected "
                                       f"{(self.times.size, self.basis.n_modes)}")

    @property
    def n_steps(self) -> int:
        return int(self.times.size - 1)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if self.n_steps else 0.0

    def position(self, i: int) -> SpectralField:
        return SpectralField(self.u[i], self.basis)

    def state(self, i: int) -> StateZ:
        if self.v is None:
            raise InvalidArgumentError("first-order trajectory has no velocity")
        return StateZ(SpectralField(self.u[i], self.basis), SpectralField(self.v[i], self.basis))


def compute_diagnostics(
    basis: SpectralBasis,
    u: FloatArray,
    v: FloatArray | None,
    dm: DiffusionModel,
    hs_weights: FloatArray | None = None,
) -> dict[str, FloatArray]:
    """Per-row |u|_H, Psi, Phi, |u|_{H^2} and ||sigma(u)||^2_{T_2(K,H)}."""
    alpha = basis.eigenvalues
    h1_sq = (u**2) @ alpha
    h2_sq = (u**2) @ alpha**2
    v_sq = np.zeros_like(h1_sq) if v is None else np.sum(v**2, axis=1)
    hs = np.array([hs_norm_sq_rows(dm.sigma_rows(row), alpha, 0.0, hs_weights) for row in u])
    return {
        "norm_h": np.linalg.norm(u, axis=1),
        "psi": 0.5 * (h1_sq + v_sq),
        "phi": h2_sq - 0.5 * h1_sq**2,
        "h2norm": np.sqrt(h2_sq),
        "hs_norm_sq": hs,
    }


def constraint_drift(tr: Trajectory) -> float:
    """max_t | 1 - |u(t)|_H |."""
    return float(np.max(np.abs(1.0 - np.linalg.norm(tr.u, axis=1))))


def tangency_drift(tr: Trajectory) -> float:
    """max_t |<u(t), v(t)>_H| (zero for first-order paths)."""
    if tr.v is None:
        return 0.0
    return float(np.max(np.abs(np.sum(tr.u * tr.v, axis=1))))


def time_regularity_seminorm(times: FloatArray, series: FloatArray, theta: float) -> float:
    """Discrete W^{theta,2}(0,T;H) seminorm of a coefficient series.

    (sum_{i != j} dt^2 |f_i - f_j|_H^2 / |t_i - t_j|^{1 + 2 theta})^{1/2}
    """
    if not 0.0 < theta < 1.0:
        raise InvalidArgumentError(f"theta must lie in (0, 1), got {theta}")
    if series.shape[0] != times.size:
        raise InvalidArgumentError("series and times have different lengths")
    if times.size < 2:
        return 0.0
    dt = float(times[1] - times[0])
    sq = np.sum(series**2, axis=1)
    dist_sq = np.maximum(sq[:, None] + sq[None, :] - 2.0 * series @ series.T, 0.0)
    gaps = np.abs(times[:, None] - times[None, :])
    np.fill_diagonal(gaps, 1.0)
    kernel = dist_sq / gaps ** (1.0 + 2.0 * theta)
    np.fill_diagonal(kernel, 0.0)
    return float(np.sqrt(dt * dt * kernel.sum()))


def resample_trajectory(tr: Trajectory, times: FloatArray) -> FloatArray:
    """Linear interpolation of the position coefficients onto another grid."""
    if times[0] < tr.times[0] - 1e-12 or times[-1] > tr.times[-1] + 1e-12:
        raise InvalidArgumentError("resampling grid leaves the trajectory's time span")
    return np.column_stack([np.interp(times, tr.times, tr.u[:, j]) for j in range(tr.u.shape[1])])
