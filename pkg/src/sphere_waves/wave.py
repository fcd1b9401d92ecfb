"""Constrained small-mass wave system and its pathwise diagnostics.

    du = v dt
    mu dv = [Delta u + |u|^2_{H^1} u - mu |v|^2_H u - gamma v] dt + sigma(u) dW

The Ito noise kick sigma(u_n) dW_n / mu is added to v_n first. The step then freezes the
constraint multiplier lam = (r - mu s) / m with r = |u_n|^2_{H^1}, s = |v|^2_H of the kicked
velocity and m = |u_n|^2_H, so every mode j follows the linear damped oscillator
u' = v, mu v' = -(alpha_j - lam) u - gamma v, which is propagated exactly.

On the sphere m = 1 and lam is the multiplier of the equation above. Off the sphere the division
by m gives d^2/dt^2 |u|^2_H = -(gamma/mu) d/dt |u|^2_H, so an unprojected run drifts by O(dt)
instead of being pushed away from |u|_H = 1.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Literal

import numpy as np

from sphere_waves.errors import BlowUpError, InvalidArgumentError, StabilityWarning
from sphere_waves.forcing import (
    DiffusionModel,
    NoiseModel,
    hs_norm_sq_rows,
    wiener_increments,
)
from sphere_waves.geometry import DEFAULT_TOLERANCES, ManifoldTolerances, renormalize_coeffs
from sphere_waves.spectral import FloatArray, SpectralField, StateZ
from sphere_waves.trajectory import Trajectory, compute_diagnostics

logger = logging.getLogger(__name__)

ProjectMode = Literal["each-step", "never"]
SCHEME = "frozen-coefficient exponential Euler-Maruyama (wave)"

# States larger than this are treated as a blow-up before they overflow.
BLOW_UP_NORM = 1e8


def n_steps_for(dt: float, t_end: float) -> int:
    return max(1, int(round(t_end / dt)))


@dataclass(frozen=True)
class WaveParams:
    """Mass, damping and discretization of a wave run."""

    mu: float
    gamma: float = 1.0
    dt: float = 1e-3
    t_end: float = 0.5
    project: ProjectMode = "each-step"
    nonlinear: bool = True

    def __post_init__(self) -> None:
        for name in ("mu", "gamma", "dt", "t_end"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"{name} must be positive, got {getattr(self, name)}")
        if self.dt > self.t_end:
            raise InvalidArgumentError(f"dt={self.dt} exceeds t_end={self.t_end}")
        if self.project not in ("each-step", "never"):
            raise InvalidArgumentError(f"project must be 'each-step' or 'never', got {self.project!r}")

    @property
    def n_steps(self) -> int:
        return n_steps_for(self.dt, self.t_end)

    @property
    def stable_dt(self) -> float:
        return self.mu / (2.0 * self.gamma)


def damped_wave_propagator(
    kappa: FloatArray, mu: float, gamma: float, dt: float
) -> tuple[FloatArray, FloatArray, FloatArray, FloatArray]:
    """Entries (p_uu, p_uv, p_vu, p_vv) of exp(A dt), A = [[0, 1], [-kappa/mu, -gamma/mu]].

    exp(A t) = e^{s t} [cosh(w t) I + sinh(w t)/w (A - s I)] with s = -gamma/(2 mu) and
    w^2 = s^2 - kappa/mu, evaluated through the eigenvalues s +- w to stay finite when mu is small.
    """
    s = -gamma / (2.0 * mu)
    omega = np.sqrt(s * s - kappa / mu + 0j)
    wt = omega * dt
    e_plus = np.exp((s + omega) * dt)
    e_minus = np.exp((s - omega) * dt)
    even = (0.5 * (e_plus + e_minus)).real
    small = np.abs(wt) < 1e-6
    safe_omega = np.where(small, 1.0, omega)
    odd = np.where(
        small,
        (np.exp(s * dt) * dt * (1.0 + wt * wt / 6.0)).real,
        ((e_plus - e_minus) / (2.0 * safe_omega)).real,
    )
    p_uu = even - s * odd
    p_uv = odd
    p_vu = -(kappa / mu) * odd
    p_vv = even + s * odd
    return p_uu, p_uv, p_vu, p_vv


def constraint_multiplier(u: FloatArray, v: FloatArray, mu: float, alpha: FloatArray) -> float:
    """(|u|^2_{H^1} - mu |v|^2_H) / |u|^2_H."""
    return (float(np.dot(alpha * u, u)) - mu * float(np.dot(v, v))) / float(np.dot(u, u))


def step_arrays(
    u: FloatArray,
    v: FloatArray,
    p: WaveParams,
    dm: DiffusionModel,
    d_w: FloatArray,
    alpha: FloatArray,
) -> tuple[FloatArray, FloatArray]:
    """One scheme step on coefficient arrays (no checks)."""
    kicked = v + (dm.sigma_rows(u).T @ d_w) / p.mu
    kappa = alpha - constraint_multiplier(u, kicked, p.mu, alpha) if p.nonlinear else alpha
    p_uu, p_uv, p_vu, p_vv = damped_wave_propagator(kappa, p.mu, p.gamma, p.dt)
    u_next = p_uu * u + p_uv * kicked
    v_next = p_vu * u + p_vv * kicked
    if p.project == "each-step":
        u_next, v_proj = renormalize_coeffs(u_next, v_next)
        assert v_proj is not None
        v_next = v_proj
    return u_next, v_next


def _check_finite(u: FloatArray, v: FloatArray, step: int, time: float) -> None:
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise BlowUpError(step, time, "non-finite coefficients")
    size = max(float(np.max(np.abs(u))), float(np.max(np.abs(v))))
    if size > BLOW_UP_NORM:
        raise BlowUpError(step, time, f"coefficient magnitude {size:.3g}")


def _warn_if_stiff(p: WaveParams) -> None:
    if p.dt > p.stable_dt:
        warnings.warn(
            f"dt={p.dt:g} exceeds mu/(2 gamma)={p.stable_dt:g}; the explicit nonlinearity "
            "may destabilize the run",
            StabilityWarning,
            stacklevel=3,
        )


def _check_noise(dm: DiffusionModel, d_w: FloatArray) -> None:
    if d_w.shape[-1] != dm.n_noise_modes:
        raise InvalidArgumentError(
            f"increments have {d_w.shape[-1]} coordinates, diffusion expects {dm.n_noise_modes}"
        )


def wave_step(
    z: StateZ,
    p: WaveParams,
    dm: DiffusionModel,
    d_w: FloatArray,
    tol: ManifoldTolerances = DEFAULT_TOLERANCES,
) -> StateZ:
    """Advance an on-manifold state by one step.

    Args:
        z: State at the start of the step
        p: Wave parameters
        dm: Diffusion model
        d_w: Noise increments of this step, one per noise coordinate
        tol: Tolerances of the on-manifold precondition

    Raises:
        InvalidArgumentError: If z is off the tangent bundle or d_w has the wrong size
        BlowUpError: If the step produces a non-finite state
    """
    norm_defect, tangency_defect = z.constraint_defects()
    if norm_defect > tol.tol_constraint or tangency_defect > tol.tol_tangency:
        raise InvalidArgumentError(
            f"state is off the tangent bundle (norm defect {norm_defect:.3g}, "
            f"tangency defect {tangency_defect:.3g})"
        )
    increments = np.asarray(d_w, dtype=np.float64).ravel()
    _check_noise(dm, increments)
    _warn_if_stiff(p)
    u, v = step_arrays(z.u.coeffs, z.v.coeffs, p, dm, increments, z.basis.eigenvalues)
    _check_finite(u, v, 1, p.dt)
    return StateZ(SpectralField(u, z.basis), SpectralField(v, z.basis))


def simulate_wave(
    z0: StateZ,
    p: WaveParams,
    dm: DiffusionModel,
    nm: NoiseModel,
    replica: int,
    increments: FloatArray | None = None,
    tol: ManifoldTolerances = DEFAULT_TOLERANCES,
) -> Trajectory:
    """Integrate the wave system over [0, t_end].

    Args:
        z0: Initial state on the tangent bundle
        p: Wave parameters
        dm: Diffusion model
        nm: Noise model (seed and covariance weights)
        replica: Replica index keying the noise stream
        increments: Optional pre-drawn table (n_steps, K); drawn from (seed, replica) if None
        tol: Tolerances of the on-manifold precondition

    Returns:
        Trajectory with n_steps + 1 states and the per-step diagnostics

    Raises:
        InvalidArgumentError: If z0 is off the tangent bundle or the noise does not fit dm
        BlowUpError: If the integration blows up
    """
    if not z0.on_manifold(tol.tol_constraint):
        raise InvalidArgumentError("initial state must lie on the tangent bundle")
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
    _warn_if_stiff(p)

    basis = z0.basis
    alpha = basis.eigenvalues
    u = np.empty((n_steps + 1, basis.n_modes))
    v = np.empty_like(u)
    u[0], v[0] = z0.u.coeffs, z0.v.coeffs
    for n in range(n_steps):
        u[n + 1], v[n + 1] = step_arrays(u[n], v[n], p, dm, table[n], alpha)
        _check_finite(u[n + 1], v[n + 1], n + 1, (n + 1) * p.dt)

    times = np.arange(n_steps + 1) * p.dt
    logger.debug("wave run mu=%g replica=%d finished after %d steps", p.mu, replica, n_steps)
    return Trajectory(
        kind="wave",
        basis=basis,
        times=times,
        u=u,
        v=v,
        increments=table,
        noise_ref=(nm.seed, replica),
        diagnostics=compute_diagnostics(basis, u, v, dm, nm.hs_weights),
        scheme=SCHEME,
    )


def _hs_series(tr: Trajectory, dm: DiffusionModel, nm: NoiseModel) -> FloatArray:
    alpha = tr.basis.eigenvalues
    return np.array(
        [hs_norm_sq_rows(dm.sigma_rows(row), alpha, 0.0, nm.hs_weights) for row in tr.u[:-1]]
    )


def energy_equality_series(
    tr: Trajectory, p: WaveParams, dm: DiffusionModel, nm: NoiseModel
) -> FloatArray:
    """Per-step |LHS - RHS| of the energy equality, left-point quadrature throughout.

    LHS(t) = |u(t)|^2_{H^1}/2 + mu |v(t)|^2_H / 2
    RHS(t) = LHS(0) - gamma int |v|^2 + int <v, sigma(u) dW> + (1/(2 mu)) int ||sigma(u)||^2
    """
    if tr.v is None:
        raise InvalidArgumentError("energy equality needs a wave trajectory")
    alpha = tr.basis.eigenvalues
    lhs = 0.5 * ((tr.u**2) @ alpha) + 0.5 * p.mu * np.sum(tr.v**2, axis=1)
    v_left = tr.v[:-1]
    damping = p.gamma * np.sum(v_left**2, axis=1) * tr.dt
    stochastic = np.array(
        [
            float(np.dot(v_left[n], dm.sigma_rows(tr.u[n]).T @ tr.increments[n]))
            for n in range(tr.n_steps)
        ]
    )
    correction = _hs_series(tr, dm, nm) * tr.dt / (2.0 * p.mu)
    rhs = lhs[0] + np.concatenate([[0.0], np.cumsum(-damping + stochastic + correction)])
    return np.abs(lhs - rhs)


def energy_equality_residual(
    tr: Trajectory, p: WaveParams, dm: DiffusionModel, nm: NoiseModel
) -> float:
    """sup over the grid of the energy-equality residual (zero at t = 0)."""
    return float(np.max(energy_equality_series(tr, p, dm, nm)))


def remainder_R_mu(tr: Trajectory, p: WaveParams, dm: DiffusionModel, nm: NoiseModel) -> FloatArray:
    """t -> |R_mu(t)|_H with R_mu = mu int |v|^2 u ds - (1/(2 gamma)) int ||sigma(u)||^2 u ds."""
    if tr.v is None:
        raise InvalidArgumentError("remainder needs a wave trajectory")
    u_left = tr.u[:-1]
    kinetic = p.mu * np.sum(tr.v[:-1] ** 2, axis=1)
    induced = _hs_series(tr, dm, nm) / (2.0 * p.gamma)
    increments = ((kinetic - induced) * tr.dt)[:, None] * u_left
    remainder = np.vstack([np.zeros(tr.basis.n_modes), np.cumsum(increments, axis=0)])
    return np.linalg.norm(remainder, axis=1)


def phi_mu_process(tr: Trajectory, p: WaveParams) -> FloatArray:
    """Coefficient rows of Phi_mu(t) = gamma u(t) + mu v(t), one row per grid point."""
    if tr.v is None:
        raise InvalidArgumentError("Phi_mu needs a wave trajectory")
    return p.gamma * tr.u + p.mu * tr.v
