"""Sphere Waves - constrained stochastic damped waves on the L2 sphere and their small-mass limit."""

from sphere_waves.config import SimConfig, load_config, parse_config
from sphere_waves.errors import (
    BlowUpError,
    ConfigError,
    DegenerateStateError,
    ExclusionBudgetError,
    InvalidArgumentError,
    InvariantError,
    SphereWavesError,
)
from sphere_waves.forcing import DiagonalDiffusion, NoiseModel, NullDiffusion, RankOneDiffusion
from sphere_waves.harness import ConvergenceReport, SweepConfig, small_mass_sweep
from sphere_waves.limit import LimitParams, discriminator_experiment, simulate_limit
from sphere_waves.spectral import SpectralBasis, SpectralField, StateZ
from sphere_waves.trajectory import Trajectory
from sphere_waves.wave import WaveParams, simulate_wave

__version__ = "0.1.0"

__all__ = [
    "BlowUpError",
    "ConfigError",
    "ConvergenceReport",
    "DegenerateStateError",
    "DiagonalDiffusion",
    "ExclusionBudgetError",
    "InvalidArgumentError",
    "InvariantError",
    "LimitParams",
    "NoiseModel",
    "NullDiffusion",
    "RankOneDiffusion",
    "SimConfig",
    "SpectralBasis",
    "SpectralField",
    "SphereWavesError",
    "StateZ",
    "SweepConfig",
    "Trajectory",
    "WaveParams",
    "discriminator_experiment",
    "load_config",
    "parse_config",
    "simulate_limit",
    "simulate_wave",
    "small_mass_sweep",
]
