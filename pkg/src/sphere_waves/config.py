"""Run configuration: INI files validated by pydantic models, with environment overrides.

A config file has the sections [basis] [noise] [diffusion] [initial] [wave] [limit] [sweep]
[output]. Only basis.n_modes and noise.seed are required. Lists are comma-separated.
Any key can be overridden from the environment as SPHERE_WAVES_<SECTION>__<KEY>.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import logging
import os
import warnings
from collections.abc import Mapping
from pathlib import Path
from typing import Annotated, Any, Literal

import numpy as np
from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    ValidationError,
    field_validator,
    model_validator,
)

from sphere_waves.errors import ConfigError, InvalidArgumentError, TraceClassWarning
from sphere_waves.forcing import (
    TRACE_TAIL_SHARE,
    DiagonalDiffusion,
    DiffusionModel,
    NoiseModel,
    NullDiffusion,
    RankOneDiffusion,
    trace_tail_share,
)
from sphere_waves.geometry import renormalize_coeffs
from sphere_waves.harness import SweepConfig
from sphere_waves.limit import LimitParams
from sphere_waves.spectral import SpectralBasis, SpectralField, StateZ, make_basis
from sphere_waves.wave import WaveParams

logger = logging.getLogger(__name__)

ENV_PREFIX = "SPHERE_WAVES_"
SECTIONS = ("basis", "noise", "diffusion", "initial", "wave", "limit", "sweep", "output")
# Flat variables that mirror CLI flags or a single config key.
ENV_SHORTCUTS = {"SEED": ("noise", "seed")}

ProjectMode = Literal["each-step", "never"]


def _split_list(value: Any) -> Any:
    if isinstance(value, str):
        items = [item.strip() for item in value.split(",")]
        return tuple(item for item in items if item)
    return value


FloatList = Annotated[tuple[float, ...], BeforeValidator(_split_list)]


class _Section(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class BasisSection(_Section):
    n_modes: int = Field(ge=1)


class NoiseSection(_Section):
    kind: Literal["scalar", "diagonal"] = "scalar"
    seed: int = Field(ge=0, lt=2**64)
    amplitude: float = Field(1.0, gt=0)
    n_noise_modes: int | None = Field(None, ge=1)
    q: FloatList | None = None

    @field_validator("q")
    @classmethod
    def _positive_q(cls, q: tuple[float, ...] | None) -> tuple[float, ...] | None:
        if q is not None and any(not value > 0 for value in q):
            raise ValueError("q weights must be strictly positive")
        return q


class DiffusionSection(_Section):
    kind: Literal["rank_one", "diagonal", "null"] = "rank_one"
    h: FloatList = (1.0, 1.0)
    amplitudes: FloatList | None = None
    profile: Literal["decaying", "constant"] = "decaying"


class InitialSection(_Section):
    u0: FloatList = (1.0, -1.0)
    v0: FloatList = ()


class WaveSection(_Section):
    mu: float = Field(0.1, gt=0)
    gamma: float = Field(1.0, gt=0)
    dt: float = Field(1e-3, gt=0)
    t_end: float = Field(0.5, gt=0)
    project: ProjectMode = "each-step"
    nonlinear: bool = True

    @model_validator(mode="after")
    def _dt_within_horizon(self) -> "WaveSection":
        if self.dt > self.t_end:
            raise ValueError(f"dt={self.dt} exceeds t_end={self.t_end}")
        return self


class LimitSection(_Section):
    gamma: float = Field(1.0, gt=0)
    project: ProjectMode = "each-step"
    drift_kind: Literal["noise_induced", "stratonovich"] = "noise_induced"
    replicas: int = Field(400, ge=1)
    checkpoints: int = Field(5, ge=1)


class SweepSection(_Section):
    mu_list: FloatList = (0.2, 0.1, 0.05, 0.025)
    replicas: int = Field(200, ge=1)
    mu_scaled_dt: bool = False
    exclusion_budget: float = Field(0.05, ge=0, lt=1)

    @field_validator("mu_list")
    @classmethod
    def _strictly_decreasing(cls, mu_list: tuple[float, ...]) -> tuple[float, ...]:
        if not mu_list:
            raise ValueError("mu_list must not be empty")
        if any(mu <= 0 for mu in mu_list):
            raise ValueError("masses must be positive")
        if any(b >= a for a, b in zip(mu_list, mu_list[1:])):
            raise ValueError("mu_list must be strictly decreasing")
        return mu_list


class OutputSection(_Section):
    directory: str = "runs"
    formats: Annotated[tuple[Literal["csv", "json"], ...], BeforeValidator(_split_list)] = (
        "csv",
        "json",
    )


class SimConfig(BaseModel):
    """Validated configuration of every experiment."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    basis: BasisSection
    noise: NoiseSection
    diffusion: DiffusionSection = DiffusionSection()
    initial: InitialSection = InitialSection()
    wave: WaveSection = WaveSection()
    limit: LimitSection = LimitSection()
    sweep: SweepSection = SweepSection()
    output: OutputSection = OutputSection()

    @model_validator(mode="before")
    @classmethod
    def _limit_inherits_wave(cls, data: Any) -> Any:
        """Unset limit gamma/project take the wave values."""
        if not isinstance(data, dict):
            return data
        wave = data.get("wave") or {}
        limit = data.get("limit") or {}
        wave_d = wave.model_dump() if isinstance(wave, BaseModel) else dict(wave)
        limit_d = limit.model_dump() if isinstance(limit, BaseModel) else dict(limit)
        limit_d.setdefault("gamma", wave_d.get("gamma", 1.0))
        limit_d.setdefault("project", wave_d.get("project", "each-step"))
        return {**data, "limit": limit_d}

    @model_validator(mode="after")
    def _cross_field(self) -> "SimConfig":
        if self.diffusion.kind == "rank_one" and self.noise.kind != "scalar":
            raise ValueError("rank_one diffusion requires scalar noise")
        if self.diffusion.kind == "diagonal" and self.noise.kind != "diagonal":
            raise ValueError("diagonal diffusion requires diagonal noise")
        if self.limit.gamma != self.wave.gamma:
            raise ValueError("limit.gamma must equal wave.gamma for coupled runs")
        if self.limit.project != self.wave.project:
            raise ValueError("limit.project must equal wave.project for coupled runs")
        if len(self.initial.u0) > self.basis.n_modes or len(self.initial.v0) > self.basis.n_modes:
            raise ValueError("initial data has more coefficients than the basis has modes")
        if not any(self.initial.u0):
            raise ValueError("u0 must be nonzero")
        if self.noise.kind == "diagonal" and self.noise.q is not None:
            expected = self.noise.n_noise_modes or self.basis.n_modes
            if len(self.noise.q) != expected:
                raise ValueError(f"{len(self.noise.q)} q weights given for {expected} noise modes")
            share = trace_tail_share(self.noise.q)
            if share > TRACE_TAIL_SHARE:
                warnings.warn(
                    f"q puts {share:.0%} of sum(q_k^2) on the last quarter of the noise modes; "
                    "the truncation is kept but the covariance does not look trace class",
                    TraceClassWarning,
                    stacklevel=2,
                )
        return self


def env_overrides(environ: Mapping[str, str]) -> dict[str, dict[str, str]]:
    overrides: dict[str, dict[str, str]] = {}
    for name, value in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        rest = name[len(ENV_PREFIX) :]
        if rest in ENV_SHORTCUTS:
            section, key = ENV_SHORTCUTS[rest]
        elif "__" in rest:
            section, key = (part.lower() for part in rest.split("__", 1))
        else:
            continue
        if section not in SECTIONS:
            raise ConfigError(f"{name}: unknown config section {section!r}")
        overrides.setdefault(section, {})[key] = value
    return overrides


def parse_config(data: Mapping[str, Mapping[str, Any]]) -> SimConfig:
    """Validate nested section data.

    Raises:
        ConfigError: If a section is unknown, a required key is missing or a value is invalid
    """
    unknown = set(data) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    try:
        return SimConfig.model_validate({name: dict(values) for name, values in data.items()})
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path, environ: Mapping[str, str] | None = None) -> SimConfig:
    """Load, override from the environment, and validate an INI config file.

    Args:
        path: Config file
        environ: Environment to read SPHERE_WAVES_* overrides from (os.environ if None)

    Returns:
        SimConfig with every default materialized

    Raises:
        ConfigError: If the file cannot be read or parsed, or does not validate
    """
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as f:
            parser.read_file(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc

    data: dict[str, dict[str, Any]] = {name: dict(parser[name]) for name in parser.sections()}
    for section, values in env_overrides(os.environ if environ is None else environ).items():
        data.setdefault(section, {}).update(values)
    config = parse_config(data)
    logger.debug("loaded config %s (hash %s)", path, config_hash(config)[:12])
    return config


def with_overrides(config: SimConfig, updates: Mapping[str, Mapping[str, Any]]) -> SimConfig:
    """Re-validate config with some keys replaced (used for CLI flags)."""
    data = config.model_dump()
    for section, values in updates.items():
        data.setdefault(section, {}).update(values)
    return parse_config(data)


def _ini_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(_ini_value(item) for item in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_config(config: SimConfig, path: str | Path) -> Path:
    """Write every field of config so that load_config reads back an equal SimConfig."""
    parser = configparser.ConfigParser(interpolation=None)
    for section, values in config.model_dump().items():
        parser[section] = {key: _ini_value(value) for key, value in values.items() if value is not None}
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with open(target, "w") as f:
        parser.write(f)
    return target


def config_hash(config: SimConfig) -> str:
    """SHA-256 of the canonical JSON dump."""
    canonical = json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def build_basis(config: SimConfig) -> SpectralBasis:
    return make_basis(config.basis.n_modes)


def build_noise(config: SimConfig) -> NoiseModel:
    noise = config.noise
    if noise.kind == "scalar":
        return NoiseModel.scalar(noise.seed, noise.amplitude)
    with warnings.catch_warnings():
        # already reported by the config validator
        warnings.simplefilter("ignore", TraceClassWarning)
        return NoiseModel.diagonal(
            noise.seed, noise.n_noise_modes or config.basis.n_modes, noise.q
        )


def build_diffusion(config: SimConfig, basis: SpectralBasis, nm: NoiseModel) -> DiffusionModel:
    diffusion = config.diffusion
    try:
        if diffusion.kind == "rank_one":
            return RankOneDiffusion(basis, np.asarray(diffusion.h))
        if diffusion.kind == "null":
            return NullDiffusion(basis, nm.n_noise_modes)
        if diffusion.amplitudes is None:
            default = DiagonalDiffusion.default(basis, nm.n_noise_modes)
            return DiagonalDiffusion(basis, default.amplitudes, diffusion.profile)
        if len(diffusion.amplitudes) != nm.n_noise_modes:
            raise ConfigError(
                f"{len(diffusion.amplitudes)} diagonal amplitudes for {nm.n_noise_modes} noise modes"
            )
        return DiagonalDiffusion(basis, np.asarray(diffusion.amplitudes), diffusion.profile)
    except InvalidArgumentError as exc:
        raise ConfigError(f"[diffusion]: {exc}") from exc


def build_initial_state(config: SimConfig, basis: SpectralBasis) -> StateZ:
    """u0 normalized in H and v0 projected onto the tangent space at u0."""
    u = basis.field(config.initial.u0).coeffs
    v = basis.field(config.initial.v0).coeffs
    u_unit, v_tangent = renormalize_coeffs(u, v)
    assert v_tangent is not None
    return StateZ(SpectralField(u_unit, basis), SpectralField(v_tangent, basis))


def build_wave_params(config: SimConfig, mu: float | None = None) -> WaveParams:
    wave = config.wave
    return WaveParams(
        mu=wave.mu if mu is None else mu,
        gamma=wave.gamma,
        dt=wave.dt,
        t_end=wave.t_end,
        project=wave.project,
        nonlinear=wave.nonlinear,
    )


def build_limit_params(config: SimConfig) -> LimitParams:
    return LimitParams(
        gamma=config.limit.gamma,
        dt=config.wave.dt,
        t_end=config.wave.t_end,
        project=config.limit.project,
        drift_kind=config.limit.drift_kind,
        nonlinear=config.wave.nonlinear,
    )


def build_sweep_config(config: SimConfig) -> SweepConfig:
    basis = build_basis(config)
    nm = build_noise(config)
    return SweepConfig(
        mu_list=config.sweep.mu_list,
        replicas=config.sweep.replicas,
        z0=build_initial_state(config, basis),
        dm=build_diffusion(config, basis, nm),
        nm=nm,
        gamma=config.wave.gamma,
        dt=config.wave.dt,
        t_end=config.wave.t_end,
        project=config.wave.project,
        drift_kind=config.limit.drift_kind,
        mu_scaled_dt=config.sweep.mu_scaled_dt,
        nonlinear=config.wave.nonlinear,
        exclusion_budget=config.sweep.exclusion_budget,
    )
