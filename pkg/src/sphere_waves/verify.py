"""Invariant suites run by `sphere-waves verify`.

Each suite evaluates a set of named checks and returns a SuiteResult; the CLI turns any failed
check into exit code 4. Sample sizes and step ladders live in SuiteSettings so that the test
suite can run every check at desk scale.
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import asdict, dataclass, field, replace
from typing import Any

import numpy as np
from scipy.linalg import expm

from sphere_waves.config import (
    SimConfig,
    build_basis,
    build_initial_state,
    build_limit_params,
    build_sweep_config,
)
from sphere_waves.errors import InvalidArgumentError
from sphere_waves.forcing import (
    DiagonalDiffusion,
    DiffusionModel,
    NoiseModel,
    NullDiffusion,
    RankOneDiffusion,
    coarsen_increments,
    fd_sigma_prime_sigma,
    lambda_discriminator,
    sigma_hs_norm_sq,
    sigma_prime_sigma,
    wiener_increments,
)
from sphere_waves.geometry import (
    crucial_identity_residual,
    gradient_flow_bounds,
    project_coeffs,
)
from sphere_waves.harness import ConvergenceReport, estimate_order, small_mass_sweep
from sphere_waves.limit import discriminator_experiment, one_step_gap
from sphere_waves.profiling import measure_operation
from sphere_waves.spectral import (
    SpectralBasis,
    StateZ,
    interpolation_slack,
    random_unit_field,
    sobolev_norm,
)
from sphere_waves.trajectory import constraint_drift
from sphere_waves.wave import (
    WaveParams,
    energy_equality_residual,
    simulate_wave,
)

logger = logging.getLogger(__name__)


SUITES = (
    "geometry",
    "identity",
    "inequality",
    "scheme",
    "energy",
    "small-mass",
    "discriminator",
    "monitors",
)

# (theta, rho) pairs checked on every sample, next to one random pair.
INTERPOLATION_PAIRS: tuple[tuple[float, float], ...] = ((1.0, 2.0), (1.0, 3.0), (2.0, 3.0))


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""


@dataclass
class SuiteResult:
    """Checks of one suite and its wall-clock time."""

    name: str
    checks: list[CheckResult] = field(default_factory=list)
    duration_seconds: float = 0.0
    data: dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def check(self, name: str, value: float, threshold: float, passed: bool, detail: str = "") -> None:
        self.checks.append(CheckResult(name, bool(passed), float(value), float(threshold), detail))

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "passed": self.passed,
            "duration_seconds": self.duration_seconds,
            "checks": [asdict(c) for c in self.checks],
            "data": self.data,
        }


@dataclass(frozen=True)
class SuiteSettings:
    """Sample sizes and refinement ladders of the suites.

    The defaults are the acceptance scale; tests shrink them.
    """

    samples: int = 1000
    rng_seed: int = 20240917
    scheme_mu: float = 0.5
    scheme_dt: float = 1e-3
    halvings: int = 4
    linear_steps: int = 1000
    energy_replicas: int = 100
    energy_mu: float = 0.1
    energy_dt: float = 2e-3
    energy_levels: int = 4
    gap_dt: float = 1e-3
    sweep_replicas: int | None = None
    discriminator_replicas: int | None = None
    jobs: int | None = 1


@dataclass
class VerifyContext:
    config: SimConfig
    settings: SuiteSettings = field(default_factory=SuiteSettings)
    sweep_report: ConvergenceReport | None = None

    @property
    def basis(self) -> SpectralBasis:
        return build_basis(self.config)

    def rng(self, offset: int) -> np.random.Generator:
        return np.random.default_rng([self.settings.rng_seed, offset])

    def rank_one(self) -> RankOneDiffusion:
        return RankOneDiffusion(self.basis, np.asarray(self.config.diffusion.h))

    def sweep(self) -> ConvergenceReport:
        if self.sweep_report is None:
            sc = build_sweep_config(self.config)
            if self.settings.sweep_replicas is not None:
                sc = replace(sc, replicas=self.settings.sweep_replicas)
            self.sweep_report = small_mass_sweep(sc, self.settings.jobs)
        return self.sweep_report


def geometry_suite(ctx: VerifyContext, result: SuiteResult) -> None:
    basis = ctx.basis
    rng = ctx.rng(1)
    models: list[DiffusionModel] = [ctx.rank_one(), DiagonalDiffusion.default(basis)]
    worst = dict.fromkeys(
        ("idempotence", "self_adjointness", "contraction", "tangency", "decomposition", "domination"),
        0.0,
    )
    for _ in range(ctx.settings.samples):
        a = random_unit_field(basis, rng).coeffs
        x = rng.standard_normal(basis.n_modes)
        y = rng.standard_normal(basis.n_modes)
        px = project_coeffs(a, x)
        scale = 1.0 + np.linalg.norm(x) * (1.0 + np.linalg.norm(y))
        worst["idempotence"] = max(worst["idempotence"], np.max(np.abs(project_coeffs(a, px) - px)) / scale)
        asym = abs(np.dot(px, y) - np.dot(x, project_coeffs(a, y)))
        worst["self_adjointness"] = max(worst["self_adjointness"], asym / scale)
        worst["contraction"] = max(worst["contraction"], np.linalg.norm(px) - np.linalg.norm(x))
        for dm in models:
            s0 = dm.sigma0_rows(a)
            s = dm.sigma_rows(a)
            s1 = dm.sigma1_rows(a)
            worst["tangency"] = max(worst["tangency"], float(np.max(np.abs(s @ a))))
            worst["decomposition"] = max(worst["decomposition"], float(np.max(np.abs(s0 - s - s1))))
            excess = np.linalg.norm(s, axis=1) - np.linalg.norm(s0, axis=1)
            worst["domination"] = max(worst["domination"], float(np.max(excess)))
    result.check("projection idempotence", worst["idempotence"], 1e-12, worst["idempotence"] <= 1e-12)
    result.check(
        "projection self-adjointness", worst["self_adjointness"], 1e-12, worst["self_adjointness"] <= 1e-12
    )
    result.check("projection contraction", worst["contraction"], 1e-12, worst["contraction"] <= 1e-12)
    result.check("diffusion tangency", worst["tangency"], 1e-12, worst["tangency"] <= 1e-12)
    result.check("sigma0 = sigma + sigma1", worst["decomposition"], 1e-14, worst["decomposition"] <= 1e-14)
    result.check("|sigma e| <= |sigma0 e|", worst["domination"], 1e-14, worst["domination"] <= 1e-14)


def identity_suite(ctx: VerifyContext, result: SuiteResult) -> None:
    basis = ctx.basis
    dm = ctx.rank_one()
    rng = ctx.rng(2)
    worst_identity = 0.0
    worst_fd = 0.0
    for _ in range(ctx.settings.samples):
        u = random_unit_field(basis, rng)
        lam = lambda_discriminator(dm, u)
        sps = sigma_prime_sigma(dm, u)
        lhs = sps + u * sigma_hs_norm_sq(dm, u)
        lam_norm = sobolev_norm(lam, 0.0)
        worst_identity = max(worst_identity, sobolev_norm(lhs - lam, 0.0) / (1.0 + lam_norm))
        fd = fd_sigma_prime_sigma(dm, u, eps=1e-5)
        scale = max(sobolev_norm(sps, 0.0), 1e-300)
        worst_fd = max(worst_fd, sobolev_norm(fd - sps, 0.0) / scale)
    result.check("sigma'sigma + ||sigma||^2 u = Lambda", worst_identity, 1e-8, worst_identity <= 1e-8)
    result.check("sigma'sigma against finite differences", worst_fd, 1e-6, worst_fd <= 1e-6)


def inequality_suite(ctx: VerifyContext, result: SuiteResult) -> None:
    basis = ctx.basis
    rng = ctx.rng(3)
    worst_interp = 0.0
    worst_bounds = 0.0
    worst_identity = 0.0
    for _ in range(ctx.settings.samples):
        u = random_unit_field(basis, rng, decay=float(rng.uniform(1.0, 3.0)))
        random_rho = float(rng.uniform(0.5, 3.0))
        random_pair = (float(rng.uniform(0.0, random_rho)), random_rho)
        for theta, rho in (*INTERPOLATION_PAIRS, random_pair):
            slack = interpolation_slack(u, theta, rho)
            scale = max(1.0, sobolev_norm(u, rho) ** (theta / rho))
            worst_interp = max(worst_interp, -slack / scale)
        lower, phi, upper = gradient_flow_bounds(u)
        violation = max(lower - phi, phi - upper) / max(1.0, upper)
        worst_bounds = max(worst_bounds, violation)
        worst_identity = max(worst_identity, crucial_identity_residual(u) / max(1.0, upper))
    result.data["interpolation_pairs"] = [list(pair) for pair in INTERPOLATION_PAIRS]
    result.check("|u|_{H^theta} <= |u|_{H^rho}^{theta/rho}", worst_interp, 1e-12, worst_interp <= 1e-12)
    result.check("|u|^2_{H^2}/2 <= Phi(u) <= |u|^2_{H^2}", worst_bounds, 1e-12, worst_bounds <= 1e-12)
    result.check("crucial identity", worst_identity, 1e-10, worst_identity <= 1e-10)


def _ladder(base: float, halvings: int) -> list[float]:
    return [base / 2**k for k in range(halvings + 1)]


def linear_exactness_error(
    basis: SpectralBasis, mu: float, gamma: float, dt: float, n_steps: int, rng: np.random.Generator
) -> float:
    """Relative gap between n composed scheme steps (no noise, no nonlinearity) and exp(A n dt)."""
    z0 = StateZ(random_unit_field(basis, rng), basis.zero())
    u0 = z0.u.coeffs
    p = WaveParams(mu=mu, gamma=gamma, dt=dt, t_end=n_steps * dt, nonlinear=False)
    nm = NoiseModel.scalar(0)
    dm = NullDiffusion(basis)
    tr = simulate_wave(z0, p, dm, nm, 0, np.zeros((p.n_steps, 1)))
    worst = 0.0
    for j, alpha in enumerate(basis.eigenvalues):
        a = np.array([[0.0, 1.0], [-alpha / mu, -gamma / mu]])
        exact = expm(a * p.n_steps * dt) @ np.array([u0[j], 0.0])
        got = np.array([tr.u[-1, j], tr.v[-1, j]])  # type: ignore[index]
        worst = max(worst, float(np.max(np.abs(got - exact))) / max(1.0, abs(u0[j])))
    return worst


def scheme_suite(ctx: VerifyContext, result: SuiteResult) -> None:
    s = ctx.settings
    basis = ctx.basis
    z0 = build_initial_state(ctx.config, basis)
    gamma = ctx.config.wave.gamma
    t_end = ctx.config.wave.t_end
    nm = NoiseModel.scalar(ctx.config.noise.seed)
    dm = NullDiffusion(basis)
    steps = _ladder(s.scheme_dt, s.halvings)
    drifts, residuals = [], []
    for dt in steps:
        p = WaveParams(mu=s.scheme_mu, gamma=gamma, dt=dt, t_end=t_end, project="never")
        tr = simulate_wave(z0, p, dm, nm, 0)
        drifts.append(constraint_drift(tr))
        residuals.append(energy_equality_residual(tr, p, dm, nm))
    drift_order, _ = estimate_order(steps, drifts)
    energy_order, _ = estimate_order(steps, residuals)
    result.data.update(dt=steps, constraint_drift=drifts, energy_residual=residuals)
    result.check("constraint drift order", drift_order, 1.0, abs(drift_order - 1.0) <= 0.3)
    result.check("deterministic energy identity order", energy_order, 1.0, abs(energy_order - 1.0) <= 0.3)

    p_proj = WaveParams(mu=s.scheme_mu, gamma=gamma, dt=s.scheme_dt, t_end=t_end, project="each-step")
    projected = simulate_wave(z0, p_proj, dm, nm, 0)
    proj_drift = constraint_drift(projected)
    result.check("projected constraint drift", proj_drift, 1e-12, proj_drift <= 1e-12)

    linear = linear_exactness_error(basis, s.scheme_mu, gamma, s.scheme_dt, s.linear_steps, ctx.rng(4))
    result.check("linear part exactness", linear, 1e-10, linear <= 1e-10)


def energy_suite(ctx: VerifyContext, result: SuiteResult) -> None:
    s = ctx.settings
    basis = ctx.basis
    z0 = build_initial_state(ctx.config, basis)
    gamma = ctx.config.wave.gamma
    t_end = ctx.config.wave.t_end
    dm = ctx.rank_one()
    nm = NoiseModel.scalar(ctx.config.noise.seed, ctx.config.noise.amplitude)
    levels = s.energy_levels
    finest = 2 ** (levels - 1)
    steps = [s.energy_dt / 2**k for k in range(levels)]
    means = np.zeros(levels)
    for replica in range(s.energy_replicas):
        base_steps = WaveParams(mu=s.energy_mu, gamma=gamma, dt=s.energy_dt, t_end=t_end).n_steps
        fine = wiener_increments(nm, steps[-1], base_steps * finest, replica)
        for k, dt in enumerate(steps):
            p = WaveParams(mu=s.energy_mu, gamma=gamma, dt=dt, t_end=t_end)
            table = coarsen_increments(fine, finest // 2**k)
            tr = simulate_wave(z0, p, dm, nm, replica, table)
            means[k] += energy_equality_residual(tr, p, dm, nm)
    means /= s.energy_replicas
    order, _ = estimate_order(steps, means)
    result.data.update(dt=steps, mean_residual=means.tolist())
    result.check("stochastic energy equality order", order, 0.5, order >= 0.5)


def small_mass_suite(ctx: VerifyContext, result: SuiteResult) -> None:
    report = ctx.sweep()
    result.data["summaries"] = [
        {"mu": m.mu, "mean_error": m.mean_error, "stderr": m.stderr_error} for m in report.summaries
    ]
    result.check(
        "L4(H1) error decreasing within stderr", float(report.error_decreasing), 1.0,
        report.error_decreasing,
    )
    result.check(
        "sup R_mu decreasing within stderr", float(report.remainder_decreasing), 1.0,
        report.remainder_decreasing,
    )


def monitors_suite(ctx: VerifyContext, result: SuiteResult) -> None:
    report = ctx.sweep()
    result.data["monitor_flags"] = report.monitor_flags
    for name, flags in report.monitor_flags.items():
        result.check(f"{name} within 2x band", float(sum(flags)), 0.0, not any(flags))


def discriminator_suite(ctx: VerifyContext, result: SuiteResult) -> None:
    s = ctx.settings
    basis = ctx.basis
    dm = ctx.rank_one()
    nm = NoiseModel.scalar(ctx.config.noise.seed, ctx.config.noise.amplitude)
    u0 = build_initial_state(ctx.config, basis).u
    p = build_limit_params(ctx.config)
    lam = lambda_discriminator(dm, u0)
    q0_sq = float(nm.hs_weights[0])
    predicted = q0_sq * sobolev_norm(lam, 0.0) / (2.0 * p.gamma**2)
    ratios = []
    for dt in _ladder(s.gap_dt, s.halvings):
        lp = replace(p, dt=dt)
        gap = one_step_gap(u0, lp, dm, nm.hs_weights)
        ratios.append(sobolev_norm(gap, 0.0) / dt)
    rel = abs(ratios[-1] - predicted) / predicted
    result.data.update(gap_over_dt=ratios, predicted=predicted)
    result.check("one-step drift gap / dt -> |Lambda|/(2 gamma^2)", rel, 0.01, rel <= 0.01)

    replicas = s.discriminator_replicas or ctx.config.limit.replicas
    report = discriminator_experiment(
        u0, p, dm, nm, replicas, ctx.config.limit.checkpoints, jobs=s.jobs
    )
    result.data["report"] = report.to_dict()
    final_se = report.stderr[-1]
    result.check(
        "pathwise gap exceeds 5 standard errors",
        report.mean_gap[-1] / final_se if final_se and final_se > 0 else 0.0,
        5.0,
        report.distinguished,
    )


SUITE_FUNCTIONS: dict[str, Callable[[VerifyContext, SuiteResult], None]] = {
    "geometry": geometry_suite,
    "identity": identity_suite,
    "inequality": inequality_suite,
    "scheme": scheme_suite,
    "energy": energy_suite,
    "small-mass": small_mass_suite,
    "discriminator": discriminator_suite,
    "monitors": monitors_suite,
}


def run_suite(name: str, ctx: VerifyContext) -> SuiteResult:
    """Run one named suite, timing it.

    Raises:
        InvalidArgumentError: If the suite name is unknown
    """
    if name not in SUITE_FUNCTIONS:
        raise InvalidArgumentError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    result = SuiteResult(name)
    with measure_operation(f"verify:{name}") as timer:
        SUITE_FUNCTIONS[name](ctx, result)
    result.duration_seconds = timer.duration
    level = logging.INFO if result.passed else logging.ERROR
    logger.log(level, "suite %s: %s in %.2fs", name, "passed" if result.passed else "FAILED", timer.duration)
    for check in result.checks:
        if not check.passed:
            logger.error("  %s: value %.6g vs threshold %.6g", check.name, check.value, check.threshold)
    return result


def run_suites(
    names: list[str], config: SimConfig, settings: SuiteSettings | None = None
) -> list[SuiteResult]:
    ctx = VerifyContext(config, settings or SuiteSettings())
    return [run_suite(name, ctx) for name in names]

