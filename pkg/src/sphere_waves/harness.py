"""Small-mass convergence sweep, norm estimators and a-priori bound monitors.

For every replica the limit path is computed once and every mass in the sweep is run on the same
Brownian path, so the wave/limit distance is a pathwise quantity. Replica results are reduced in
sorted (mu, replica) order, which makes reports independent of the worker count.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from scipy import stats

from sphere_waves.errors import BlowUpError, ExclusionBudgetError, InvalidArgumentError
from sphere_waves.forcing import (
    DiffusionModel,
    NoiseModel,
    coarsen_increments,
    wiener_increments,
)
from sphere_waves.limit import DriftKind, LimitParams, simulate_limit
from sphere_waves.parallel import fan_out
from sphere_waves.profiling import measure_operation
from sphere_waves.spectral import FloatArray, StateZ
from sphere_waves.trajectory import Trajectory, resample_trajectory
from sphere_waves.wave import ProjectMode, WaveParams, remainder_R_mu, simulate_wave

logger = logging.getLogger(__name__)

# Fraction of excluded replicas per mass above which a sweep is rejected.
EXCLUSION_BUDGET = 0.05
# A monitor is flagged when it grows by more than this factor as mu halves.
MONITOR_GROWTH_BAND = 2.0
QUANTILES = (0.25, 0.5, 0.75, 0.9)
MONITOR_NAMES = ("sup_h1_sq", "sup_h2_sq", "scaled_sup_v_sq", "scaled_int_v_h1")


def _grid_distance(times: FloatArray, u_a: FloatArray, u_b: FloatArray, alpha: FloatArray) -> float:
    dt = float(times[1] - times[0]) if times.size > 1 else 0.0
    gap_h1_sq = ((u_a - u_b) ** 2) @ alpha
    return float(np.sum(dt * gap_h1_sq[:-1] ** 2) ** 0.25)


def l4_h1_distance(tr_a: Trajectory, tr_b: Trajectory) -> float:
    """Discrete L^4(0,T;H^1) distance (sum_{k<n} dt |u_a(t_k) - u_b(t_k)|^4_{H^1})^{1/4}.

    Raises:
        InvalidArgumentError: If the trajectories live on different grids or bases
    """
    if tr_a.basis != tr_b.basis:
        raise InvalidArgumentError("trajectories use different bases")
    if tr_a.times.shape != tr_b.times.shape or not np.allclose(
        tr_a.times, tr_b.times, rtol=0.0, atol=1e-12
    ):
        raise InvalidArgumentError("trajectories are sampled on different time grids")
    return _grid_distance(tr_a.times, tr_a.u, tr_b.u, tr_a.basis.eigenvalues)


@dataclass
class MonitorRecord:
    """Scaled a-priori statistics of one wave path.

    sup_h1_sq = sup_t |u|^2_{H^1}, sup_h2_sq = sup_t |u|^2_{H^2},
    scaled_sup_v_sq = mu^{3/2} sup_t |v|^2_H, scaled_int_v_h1 = mu int |v|^2_{H^1} dt.
    """

    mu: float
    sup_h1_sq: float
    sup_h2_sq: float
    scaled_sup_v_sq: float
    scaled_int_v_h1: float


def apriori_monitors(tr: Trajectory, mu: float) -> MonitorRecord:
    """Monitor statistics of one wave trajectory (ensemble means are taken upstream)."""
    if tr.v is None:
        raise InvalidArgumentError("a-priori monitors need a wave trajectory")
    if mu <= 0:
        raise InvalidArgumentError(f"mu must be positive, got {mu}")
    alpha = tr.basis.eigenvalues
    h1_sq = (tr.u**2) @ alpha
    h2_sq = (tr.u**2) @ alpha**2
    v_sq = np.sum(tr.v**2, axis=1)
    v_h1_sq = (tr.v**2) @ alpha
    return MonitorRecord(
        mu=mu,
        sup_h1_sq=float(h1_sq.max()),
        sup_h2_sq=float(h2_sq.max()),
        scaled_sup_v_sq=float(mu**1.5 * v_sq.max()),
        scaled_int_v_h1=float(mu * np.sum(v_h1_sq[:-1]) * tr.dt),
    )


def estimate_order(steps: FloatArray | list[float], errors: FloatArray | list[float]) -> tuple[float, float]:
    """Least-squares slope of log(error) against log(step), with its standard error.

    Raises:
        InvalidArgumentError: With fewer than two points or non-positive values
    """
    x = np.asarray(steps, dtype=np.float64)
    y = np.asarray(errors, dtype=np.float64)
    if x.size < 2 or x.size != y.size:
        raise InvalidArgumentError("need at least two (step, error) pairs of equal length")
    if np.any(x <= 0) or np.any(y <= 0):
        raise InvalidArgumentError("steps and errors must be positive for a log-log fit")
    fit = stats.linregress(np.log(x), np.log(y))
    return float(fit.slope), float(fit.stderr)


def decreasing_within_stderr(means: list[float], stderrs: list[float | None]) -> bool:
    """m_{i+1} < m_i + sqrt(se_i^2 + se_{i+1}^2) for every consecutive pair.

    Undefined standard errors count as zero, which reduces to a strict comparison.
    """
    for i in range(len(means) - 1):
        se_a = stderrs[i] or 0.0
        se_b = stderrs[i + 1] or 0.0
        if not means[i + 1] < means[i] + math.hypot(se_a, se_b):
            return False
    return True


@dataclass(frozen=True)
class SweepConfig:
    """Masses, replicas and the shared model of a small-mass sweep.

    Attributes:
        mu_list: strictly decreasing masses
        replicas: replicas per mass
        z0: initial state (u0 on the sphere, v0 tangent)
        dm: diffusion model
        nm: noise model
        gamma: damping, shared by wave and limit runs
        dt: base step; also the common comparison grid
        t_end: horizon
        project: projection mode of both runs
        drift_kind: limit equation the wave runs are compared to
        mu_scaled_dt: refine the wave step to dt / 2^k <= mu / (2 gamma) for each mass
        nonlinear: keep the |u|^2_{H^1} u and mu |v|^2 u terms
        exclusion_budget: tolerated fraction of blown-up replicas per mass
    """

    mu_list: tuple[float, ...]
    replicas: int
    z0: StateZ
    dm: DiffusionModel
    nm: NoiseModel
    gamma: float = 1.0
    dt: float = 1e-3
    t_end: float = 0.5
    project: ProjectMode = "each-step"
    drift_kind: DriftKind = "noise_induced"
    mu_scaled_dt: bool = False
    nonlinear: bool = True
    exclusion_budget: float = EXCLUSION_BUDGET

    def __post_init__(self) -> None:
        if not self.mu_list:
            raise InvalidArgumentError("mu_list must not be empty")
        if any(mu <= 0 for mu in self.mu_list):
            raise InvalidArgumentError(f"masses must be positive, got {self.mu_list}")
        if any(b >= a for a, b in zip(self.mu_list, self.mu_list[1:])):
            raise InvalidArgumentError(f"mu_list must be strictly decreasing, got {self.mu_list}")
        if self.replicas < 1:
            raise InvalidArgumentError(f"replicas must be >= 1, got {self.replicas}")
        if not 0.0 <= self.exclusion_budget < 1.0:
            raise InvalidArgumentError("exclusion_budget must lie in [0, 1)")

    def limit_params(self) -> LimitParams:
        return LimitParams(
            self.gamma, self.dt, self.t_end, self.project, self.drift_kind, self.nonlinear
        )

    def refinement(self, mu: float) -> int:
        """Power-of-two factor k with dt / k <= mu / (2 gamma) (1 unless mu_scaled_dt)."""
        if not self.mu_scaled_dt:
            return 1
        factor = 1
        while self.dt / factor > mu / (2.0 * self.gamma):
            factor *= 2
        return factor

    def wave_params(self, mu: float) -> WaveParams:
        return WaveParams(
            mu=mu,
            gamma=self.gamma,
            dt=self.dt / self.refinement(mu),
            t_end=self.t_end,
            project=self.project,
            nonlinear=self.nonlinear,
        )


@dataclass
class SweepRow:
    """Per-(mu, replica) result; NaN statistics when excluded."""

    mu: float
    replica: int
    l4h1_error: float
    sup_R_mu: float
    sup_h1_sq: float
    sup_h2_sq: float
    scaled_sup_v_sq: float
    scaled_int_v_h1: float
    excluded: bool = False
    reason: str = ""

    @classmethod
    def blown_up(cls, mu: float, replica: int, reason: str) -> "SweepRow":
        nan = float("nan")
        return cls(mu, replica, nan, nan, nan, nan, nan, nan, True, reason)


@dataclass(frozen=True)
class _ReplicaTask:
    sc: SweepConfig
    replica: int


def _run_replica(task: _ReplicaTask) -> list[SweepRow]:
    sc, replica = task.sc, task.replica
    lp = sc.limit_params()
    n_base = lp.n_steps
    finest = max(sc.refinement(mu) for mu in sc.mu_list)
    if finest == 1:
        base_table = wiener_increments(sc.nm, sc.dt, n_base, replica)
        fine_table = base_table
    else:
        fine_table = wiener_increments(sc.nm, sc.dt / finest, n_base * finest, replica)
        base_table = coarsen_increments(fine_table, finest)

    try:
        limit = simulate_limit(sc.z0.u, lp, sc.dm, sc.nm, replica, base_table)
    except BlowUpError as exc:
        return [SweepRow.blown_up(mu, replica, f"limit: {exc}") for mu in sc.mu_list]

    alpha = sc.z0.basis.eigenvalues
    rows = []
    for mu in sc.mu_list:
        wp = sc.wave_params(mu)
        factor = sc.refinement(mu)
        table = coarsen_increments(fine_table, finest // factor) if finest != factor else fine_table
        try:
            wave = simulate_wave(sc.z0, wp, sc.dm, sc.nm, replica, table)
        except BlowUpError as exc:
            logger.debug("replica %d excluded at mu=%g: %s", replica, mu, exc)
            rows.append(SweepRow.blown_up(mu, replica, str(exc)))
            continue
        if factor == 1:
            error = l4_h1_distance(wave, limit)
        else:
            error = _grid_distance(limit.times, resample_trajectory(wave, limit.times), limit.u, alpha)
        monitors = apriori_monitors(wave, mu)
        rows.append(
            SweepRow(
                mu=mu,
                replica=replica,
                l4h1_error=error,
                sup_R_mu=float(np.max(remainder_R_mu(wave, wp, sc.dm, sc.nm))),
                sup_h1_sq=monitors.sup_h1_sq,
                sup_h2_sq=monitors.sup_h2_sq,
                scaled_sup_v_sq=monitors.scaled_sup_v_sq,
                scaled_int_v_h1=monitors.scaled_int_v_h1,
            )
        )
    return rows


def _mean_stderr(values: FloatArray) -> tuple[float, float | None]:
    if values.size == 0:
        return float("nan"), None
    mean = float(values.mean())
    if values.size < 2:
        return mean, None
    return mean, float(values.std(ddof=1) / np.sqrt(values.size))


@dataclass
class MuSummary:
    """Statistics of one mass; stderr is None when fewer than two replicas survive."""

    mu: float
    dt: float
    n_included: int
    n_excluded: int
    mean_error: float
    stderr_error: float | None
    error_quantiles: dict[str, float]
    mean_sup_R_mu: float
    stderr_sup_R_mu: float | None
    monitors: dict[str, float]

    @property
    def stderr_flagged(self) -> bool:
        return self.stderr_error is None


def summarize(mu: float, dt: float, rows: list[SweepRow]) -> MuSummary:
    kept = [r for r in rows if not r.excluded]
    errors = np.array([r.l4h1_error for r in kept])
    remainders = np.array([r.sup_R_mu for r in kept])
    mean_error, se_error = _mean_stderr(errors)
    mean_r, se_r = _mean_stderr(remainders)
    quantiles = (
        {f"q{int(q * 100)}": float(np.quantile(errors, q)) for q in QUANTILES} if kept else {}
    )
    monitors = {
        name: float(np.mean([getattr(r, name) for r in kept])) if kept else float("nan")
        for name in MONITOR_NAMES
    }
    return MuSummary(
        mu=mu,
        dt=dt,
        n_included=len(kept),
        n_excluded=len(rows) - len(kept),
        mean_error=mean_error,
        stderr_error=se_error,
        error_quantiles=quantiles,
        mean_sup_R_mu=mean_r,
        stderr_sup_R_mu=se_r,
        monitors=monitors,
    )


def monitor_flags(summaries: list[MuSummary]) -> dict[str, list[bool]]:
    """Per monitor, one flag per consecutive pair of masses: growth beyond the 2x band."""
    flags: dict[str, list[bool]] = {}
    for name in MONITOR_NAMES:
        values = [s.monitors[name] for s in summaries]
        flags[name] = [
            bool(b > MONITOR_GROWTH_BAND * a) if a > 0 else bool(b > 0)
            for a, b in zip(values, values[1:])
        ]
    return flags


@dataclass
class ConvergenceReport:
    """Result of a small-mass sweep."""

    summaries: list[MuSummary]
    rows: list[SweepRow] = field(default_factory=list)
    error_decreasing: bool = False
    remainder_decreasing: bool = False
    means_strictly_decreasing: bool = False
    monitor_flags: dict[str, list[bool]] = field(default_factory=dict)
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def monitors_bounded(self) -> bool:
        return not any(any(flags) for flags in self.monitor_flags.values())

    @property
    def stderr_flagged(self) -> bool:
        return any(s.stderr_flagged for s in self.summaries)

    def to_dict(self) -> dict[str, Any]:
        return {
            "summaries": [asdict(s) for s in self.summaries],
            "rows": [asdict(r) for r in self.rows],
            "error_decreasing": self.error_decreasing,
            "remainder_decreasing": self.remainder_decreasing,
            "means_strictly_decreasing": self.means_strictly_decreasing,
            "monitor_flags": self.monitor_flags,
            "monitors_bounded": self.monitors_bounded,
            "stderr_flagged": self.stderr_flagged,
            "metadata": self.metadata,
        }

    def save_json(self, filepath: Path) -> None:
        filepath.parent.mkdir(parents=True, exist_ok=True)
        with open(filepath, "w") as f:
            json.dump(self.to_dict(), f, indent=2)

    @classmethod
    def load_json(cls, filepath: Path) -> "ConvergenceReport":
        with open(filepath) as f:
            data = json.load(f)
        # computed properties
        data.pop("monitors_bounded", None)
        data.pop("stderr_flagged", None)
        summaries = [MuSummary(**s) for s in data.pop("summaries")]
        rows = [SweepRow(**r) for r in data.pop("rows", [])]
        return cls(summaries=summaries, rows=rows, **data)


def small_mass_sweep(sc: SweepConfig, jobs: int | None = 1) -> ConvergenceReport:
    """Run wave and limit on coupled noise for every (mu, replica) and reduce the statistics.

    Args:
        sc: Sweep configuration
        jobs: Worker processes for the replica fan-out (None = all cores)

    Returns:
        ConvergenceReport ordered as sc.mu_list

    Raises:
        ExclusionBudgetError: If more than sc.exclusion_budget of the replicas of a mass blew up
    """
    logger.info(
        "small-mass sweep: mu=%s, %d replicas, dt=%g, T=%g",
        list(sc.mu_list), sc.replicas, sc.dt, sc.t_end,
    )
    with measure_operation("small_mass_sweep") as timer:
        tasks = [_ReplicaTask(sc, replica) for replica in range(sc.replicas)]
        per_replica = fan_out(_run_replica, tasks, jobs)
    rows = sorted(
        (row for batch in per_replica for row in batch),
        key=lambda r: (sc.mu_list.index(r.mu), r.replica),
    )

    summaries = []
    for mu in sc.mu_list:
        mu_rows = [r for r in rows if r.mu == mu]
        summary = summarize(mu, sc.wave_params(mu).dt, mu_rows)
        if summary.n_excluded:
            logger.warning("mu=%g: %d of %d replicas excluded", mu, summary.n_excluded, len(mu_rows))
        if summary.n_excluded > sc.exclusion_budget * len(mu_rows):
            raise ExclusionBudgetError(
                f"mu={mu}: {summary.n_excluded} of {len(mu_rows)} replicas blew up "
                f"(budget {sc.exclusion_budget:.0%})"
            )
        logger.info(
            "mu=%g: L4(H1) error %.4e +- %s, sup R_mu %.4e",
            mu, summary.mean_error,
            "n/a" if summary.stderr_error is None else f"{summary.stderr_error:.2e}",
            summary.mean_sup_R_mu,
        )
        summaries.append(summary)

    means = [s.mean_error for s in summaries]
    report = ConvergenceReport(
        summaries=summaries,
        rows=rows,
        error_decreasing=decreasing_within_stderr(means, [s.stderr_error for s in summaries]),
        remainder_decreasing=decreasing_within_stderr(
            [s.mean_sup_R_mu for s in summaries], [s.stderr_sup_R_mu for s in summaries]
        ),
        means_strictly_decreasing=all(b < a for a, b in zip(means, means[1:])),
        monitor_flags=monitor_flags(summaries),
        metadata={
            "replicas": sc.replicas,
            "dt": sc.dt,
            "t_end": sc.t_end,
            "gamma": sc.gamma,
            "project": sc.project,
            "drift_kind": sc.drift_kind,
            "mu_scaled_dt": sc.mu_scaled_dt,
            "seed": sc.nm.seed,
            "duration_seconds": timer.duration,
        },
    )
    return report
