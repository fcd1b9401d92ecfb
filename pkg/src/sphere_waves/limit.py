"""First-order limits of the wave system and the drift discriminator.

Two equations on the sphere share every code path except one drift term:

    noise_induced:  gamma du = [Delta u + |u|^2_{H^1} u - (1/(2 gamma)) ||sigma(u)||^2 u] dt + sigma(u) dW
    stratonovich:   gamma du = [Delta u + |u|^2_{H^1} u + (1/(2 gamma)) sigma'(u)sigma(u)] dt + sigma(u) dW

The second is the Ito form of gamma du = ... + sigma(u) o dW. With gamma = 1 these are the Ito
limit and the Stratonovich comparison equation; their one-step difference is
(dt / (2 gamma^2)) Lambda(u).
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Literal

import numpy as np
import numpy.typing as npt

from sphere_waves.errors import BlowUpError, InvalidArgumentError
from sphere_waves.forcing import (
    DiffusionModel,
    NoiseModel,
    RankOneDiffusion,
    hs_norm_sq_rows,
    lambda_discriminator,
    sigma_prime_coeffs,
    wiener_increments,
)
from sphere_waves.geometry import renormalize_coeffs
from sphere_waves.parallel import fan_out
from sphere_waves.spectral import SPHERE_TOL, FloatArray, SpectralField, require_unit
from sphere_waves.trajectory import Trajectory, compute_diagnostics
from sphere_waves.wave import BLOW_UP_NORM, ProjectMode, n_steps_for

logger = logging.getLogger(__name__)

DriftKind = Literal["noise_induced", "stratonovich"]
DRIFT_KINDS: tuple[str, ...] = ("noise_induced", "stratonovich")
SCHEME = "exponential Euler-Maruyama (limit)"

# A discriminator gap counts as resolved when it exceeds this many standard errors.
DISTINGUISH_SIGMAS = 5.0


@dataclass(frozen=True)
class LimitParams:
    """Damping, discretization and drift choice of a first-order run."""

    gamma: float = 1.0
    dt: float = 1e-3
    t_end: float = 0.5
    project: ProjectMode = "each-step"
    drift_kind: DriftKind = "noise_induced"
    nonlinear: bool = True

    def __post_init__(self) -> None:
        for name in ("gamma", "dt", "t_end"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"{name} must be positive, got {getattr(self, name)}")
        if self.dt > self.t_end:
            raise InvalidArgumentError(f"dt={self.dt} exceeds t_end={self.t_end}")
        if self.project not in ("each-step", "never"):
            raise InvalidArgumentError(f"project must be 'each-step' or 'never', got {self.project!r}")
        if self.drift_kind not in DRIFT_KINDS:
            raise InvalidArgumentError(f"unknown drift kind {self.drift_kind!r}")

    @property
    def n_steps(self) -> int:
        return n_steps_for(self.dt, self.t_end)

    def with_drift(self, drift_kind: DriftKind) -> "LimitParams":
        return LimitParams(
            self.gamma, self.dt, self.t_end, self.project, drift_kind, self.nonlinear
        )


def _require_rank_one(dm: DiffusionModel, p: LimitParams) -> None:
    if p.drift_kind == "stratonovich" and not isinstance(dm, RankOneDiffusion):
        raise InvalidArgumentError(
            f"stratonovich drift needs the rank_one closed form, diffusion is {dm.kind}"
        )


def limit_drift(
    u: FloatArray,
    p: LimitParams,
    dm: DiffusionModel,
    hs_weights: FloatArray | None = None,
) -> FloatArray:
    """The drift term that distinguishes the two equations, before division by gamma.

    The stratonovich term is the closed form for one Brownian motion, so hs_weights must then
    hold the single weight q_0^2.
    """
    if p.drift_kind == "stratonovich":
        if hs_weights is not None and np.size(hs_weights) != 1:
            raise InvalidArgumentError(
                f"stratonovich drift needs scalar noise, got {np.size(hs_weights)} weights"
            )
        q0_sq = 1.0 if hs_weights is None else float(np.ravel(hs_weights)[0])
        return (q0_sq / (2.0 * p.gamma)) * sigma_prime_coeffs(dm, u)  # type: ignore[arg-type]
    hs = hs_norm_sq_rows(dm.sigma_rows(u), dm.basis.eigenvalues, 0.0, hs_weights)
    return -(hs / (2.0 * p.gamma)) * u


def step_array(
    u: FloatArray,
    p: LimitParams,
    dm: DiffusionModel,
    d_w: FloatArray,
    alpha: FloatArray,
    hs_weights: FloatArray | None = None,
) -> FloatArray:
    """One scheme step on coefficient arrays (no checks).

    The multiplier r = |u|^2_{H^1} / |u|^2_H equals |u|^2_{H^1} on the sphere; off it the division
    keeps the deterministic flow from changing |u|_H, so unprojected runs drift by O(dt).
    """
    r = float(np.dot(alpha * u, u)) / float(np.dot(u, u)) if p.nonlinear else 0.0
    decay = np.exp(-(alpha - r) * p.dt / p.gamma)
    explicit = u + (p.dt / p.gamma) * limit_drift(u, p, dm, hs_weights)
    explicit = explicit + (dm.sigma_rows(u).T @ d_w) / p.gamma
    u_next = decay * explicit
    if p.project == "each-step":
        u_next, _ = renormalize_coeffs(u_next)
    return u_next


def _check_finite(u: FloatArray, step: int, time: float) -> None:
    if not np.all(np.isfinite(u)):
        raise BlowUpError(step, time, "non-finite coefficients")
    size = float(np.max(np.abs(u)))
    if size > BLOW_UP_NORM:
        raise BlowUpError(step, time, f"coefficient magnitude {size:.3g}")


def limit_step(
    u: SpectralField,
    p: LimitParams,
    dm: DiffusionModel,
    d_w: FloatArray,
    hs_weights: FloatArray | None = None,
) -> SpectralField:
    """Advance an on-sphere position by one step.

    Args:
        u: Position at the start of the step
        p: Limit parameters
        dm: Diffusion model (rank one for the stratonovich drift)
        d_w: Noise increments of this step
        hs_weights: q_k^2 of the noise covariance, ones if None

    Raises:
        InvalidArgumentError: If u is off the sphere, d_w has the wrong size, or the drift kind
            needs a rank-one diffusion
        BlowUpError: If the step produces a non-finite state
    """
    require_unit(u, SPHERE_TOL, what="limit_step input")
    _require_rank_one(dm, p)
    increments = np.asarray(d_w, dtype=np.float64).ravel()
    if increments.size != dm.n_noise_modes:
        raise InvalidArgumentError(
            f"increments have {increments.size} coordinates, diffusion expects {dm.n_noise_modes}"
        )
    u_next = step_array(u.coeffs, p, dm, increments, u.basis.eigenvalues, hs_weights)
    _check_finite(u_next, 1, p.dt)
    return SpectralField(u_next, u.basis)


def simulate_limit(
    u0: SpectralField,
    p: LimitParams,
    dm: DiffusionModel,
    nm: NoiseModel,
    replica: int,
    increments: FloatArray | None = None,
) -> Trajectory:
    """Integrate the first-order equation over [0, t_end].

    The increment table is keyed by (seed, replica) exactly as in simulate_wave, so a wave and a
    limit run with the same keys and dt see the same Brownian path.

    Raises:
        InvalidArgumentError: If u0 is off the sphere or the noise does not fit dm
        BlowUpError: If the integration blows up
    """
    require_unit(u0, SPHERE_TOL, what="initial position")
    _require_rank_one(dm, p)
    if dm.n_noise_modes != nm.n_noise_modes:
        raise InvalidArgumentError(
            f"diffusion has {dm.n_noise_modes} noise coordinates, noise model {nm.n_noise_modes}"
        )
    n_steps = p.n_steps
    table = wiener_increments(nm, p.dt, n_steps, replica) if increments is None else increments
    if table.shape != (n_steps, nm.n_noise_modes):
        raise InvalidArgumentError(
            f"increment table has shape {table.shape}, expected {(n_steps, nm.n_noise_modes)}"
        )
    basis = u0.basis
    alpha = basis.eigenvalues
    weights = nm.hs_weights
    u = np.empty((n_steps + 1, basis.n_modes))
    u[0] = u0.coeffs
    for n in range(n_steps):
        u[n + 1] = step_array(u[n], p, dm, table[n], alpha, weights)
        _check_finite(u[n + 1], n + 1, (n + 1) * p.dt)
    logger.debug(
        "limit run (%s) replica=%d finished after %d steps", p.drift_kind, replica, n_steps
    )
    return Trajectory(
        kind="limit",
        basis=basis,
        times=np.arange(n_steps + 1) * p.dt,
        u=u,
        v=None,
        increments=table,
        noise_ref=(nm.seed, replica),
        diagnostics=compute_diagnostics(basis, u, None, dm, weights),
        scheme=f"{SCHEME} [{p.drift_kind}]",
    )


def one_step_gap(
    u0: SpectralField,
    p: LimitParams,
    dm: DiffusionModel,
    hs_weights: FloatArray | None = None,
) -> SpectralField:
    """Stratonovich step minus noise-induced step from u0, same increments, no projection.

    The increments enter both steps identically, so they are set to zero. The result tends to
    (dt / (2 gamma^2)) Lambda(u0) as dt -> 0.
    """
    unprojected = LimitParams(p.gamma, p.dt, p.t_end, "never", "noise_induced", p.nonlinear)
    zero = np.zeros(dm.n_noise_modes)
    a = limit_step(u0, unprojected.with_drift("stratonovich"), dm, zero, hs_weights)
    b = limit_step(u0, unprojected, dm, zero, hs_weights)
    return a - b


def checkpoint_indices(n_steps: int, n_checkpoints: int) -> npt.NDArray[np.int64]:
    """Evenly spaced step indices 1..n_steps, last one included."""
    count = max(1, min(n_checkpoints, n_steps))
    return np.unique(np.round(np.linspace(0, n_steps, count + 1)[1:]).astype(int))


@dataclass
class DiscriminatorReport:
    """Outcome of running both drift kinds on identical noise.

    Attributes:
        t: checkpoint times
        mean_gap: replica mean of |u(t) - u~(t)|_H at each checkpoint
        stderr: standard error of mean_gap (NaN with a single replica)
        predicted_first_order_gap: (dt / (2 gamma^2)) |Lambda(u0)|_H, q-weighted
        measured_one_step_gap: |one_step_gap(u0)|_H
        distinguished: final mean gap exceeds DISTINGUISH_SIGMAS standard errors
    """

    t: list[float]
    mean_gap: list[float]
    stderr: list[float]
    predicted_first_order_gap: float
    measured_one_step_gap: float
    distinguished: bool
    replicas: int
    gamma: float
    dt: float
    lambda_norm: float
    metadata: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def save_json(self, filepath: str | Path) -> None:
        with open(filepath, "w") as f:
            json.dump(self.to_dict(), f, indent=2)

    @classmethod
    def load_json(cls, filepath: str | Path) -> "DiscriminatorReport":
        with open(filepath) as f:
            return cls(**json.load(f))


@dataclass(frozen=True)
class _PairTask:
    u0: SpectralField
    p: LimitParams
    dm: DiffusionModel
    nm: NoiseModel
    replica: int
    checkpoints: tuple[int, ...]


def _pair_gap(task: _PairTask) -> list[float]:
    table = wiener_increments(task.nm, task.p.dt, task.p.n_steps, task.replica)
    ito = simulate_limit(task.u0, task.p.with_drift("noise_induced"), task.dm, task.nm,
                         task.replica, table)
    strat = simulate_limit(task.u0, task.p.with_drift("stratonovich"), task.dm, task.nm,
                           task.replica, table)
    idx = list(task.checkpoints)
    return np.linalg.norm(ito.u[idx] - strat.u[idx], axis=1).tolist()


def discriminator_experiment(
    u0: SpectralField,
    p: LimitParams,
    dm: DiffusionModel,
    nm: NoiseModel,
    replicas: int,
    n_checkpoints: int = 5,
    jobs: int | None = 1,
    zero_tol: float = 1e-12,
) -> DiscriminatorReport:
    """Compare the noise-induced and Stratonovich limits pathwise.

    Args:
        u0: Unit initial position outside the zero set of Lambda
        p: Limit parameters; drift_kind is ignored, both kinds are run
        dm: Rank-one diffusion
        nm: Scalar noise model
        replicas: Number of coupled replica pairs
        n_checkpoints: Number of evenly spaced checkpoint times
        jobs: Worker processes for the replica fan-out
        zero_tol: |Lambda(u0)|_H at or below which u0 counts as being in the zero set

    Returns:
        DiscriminatorReport with checkpoints in increasing time

    Raises:
        InvalidArgumentError: If dm is not rank one, u0 is off the sphere or Lambda(u0) = 0
    """
    if not isinstance(dm, RankOneDiffusion):
        raise InvalidArgumentError(f"discriminator needs a rank_one diffusion, got {dm.kind}")
    if replicas < 1:
        raise InvalidArgumentError(f"replicas must be >= 1, got {replicas}")
    lam = lambda_discriminator(dm, u0)
    lam_norm = float(np.linalg.norm(lam.coeffs))
    if lam_norm <= zero_tol:
        raise InvalidArgumentError(
            "Lambda(u0) = 0: both drifts agree to first order at u0, the comparison is vacuous"
        )

    weights = nm.hs_weights
    q0_sq = float(weights[0])
    predicted = q0_sq * p.dt / (2.0 * p.gamma**2) * lam_norm
    measured = float(np.linalg.norm(one_step_gap(u0, p, dm, weights).coeffs))

    idx = checkpoint_indices(p.n_steps, n_checkpoints)
    tasks = [
        _PairTask(u0, p, dm, nm, replica, tuple(int(i) for i in idx)) for replica in range(replicas)
    ]
    gaps = np.asarray(fan_out(_pair_gap, tasks, jobs))
    mean = gaps.mean(axis=0)
    if replicas > 1:
        stderr = gaps.std(axis=0, ddof=1) / np.sqrt(replicas)
        distinguished = bool(mean[-1] > DISTINGUISH_SIGMAS * stderr[-1])
    else:
        stderr = np.full_like(mean, np.nan)
        distinguished = False
    logger.info(
        "discriminator: final mean gap %.3e +- %.3e over %d replicas (distinguished=%s)",
        mean[-1], stderr[-1], replicas, distinguished,
    )
    return DiscriminatorReport(
        t=(idx * p.dt).tolist(),
        mean_gap=mean.tolist(),
        stderr=stderr.tolist(),
        predicted_first_order_gap=predicted,
        measured_one_step_gap=measured,
        distinguished=distinguished,
        replicas=replicas,
        gamma=p.gamma,
        dt=p.dt,
        lambda_norm=lam_norm,
    )
