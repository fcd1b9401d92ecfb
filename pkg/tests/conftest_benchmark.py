"""Benchmark-specific fixtures and run profiles."""

from dataclasses import dataclass

import numpy as np
import pytest

from sphere_waves.forcing import NoiseModel, RankOneDiffusion
from sphere_waves.spectral import StateZ, make_basis


@dataclass
class RunProfile:
    """Problem size of a benchmark scenario."""

    name: str
    n_modes: int
    n_steps: int
    replicas: int = 1

    @property
    def mode_steps(self) -> int:
        """Total (mode, step) updates of one replica."""
        return self.n_modes * self.n_steps


# Predefined run profiles for common benchmark scenarios
RUN_PROFILES = {
    "tiny": RunProfile("tiny", n_modes=8, n_steps=200),
    "small": RunProfile("small", n_modes=16, n_steps=1_000),
    "medium": RunProfile("medium", n_modes=64, n_steps=10_000),
    "large": RunProfile("large", n_modes=256, n_steps=50_000),
}


@dataclass
class BenchmarkModel:
    """Default rank-one model on the profile's basis."""

    z0: StateZ
    dm: RankOneDiffusion
    nm: NoiseModel


def build_benchmark_model(profile: RunProfile, seed: int = 1) -> BenchmarkModel:
    basis = make_basis(profile.n_modes)
    u0 = basis.field([np.sqrt(0.5), -np.sqrt(0.5)])
    return BenchmarkModel(
        z0=StateZ(u0, basis.zero()),
        dm=RankOneDiffusion(basis, np.array([1.0, 1.0])),
        nm=NoiseModel.scalar(seed),
    )


@pytest.fixture(
    params=[
        pytest.param("tiny", marks=pytest.mark.quick),
        pytest.param("small", marks=pytest.mark.quick),
        pytest.param("medium", marks=[pytest.mark.full]),
        pytest.param("large", marks=[pytest.mark.full]),
    ]
)
def benchmark_profile(request) -> RunProfile:
    """Run profiles with quick/full marks for filtering.

    Use -m quick for tiny/small problems (~10s)
    Use -m full for medium/large problems (~10min)
    """
    return RUN_PROFILES[request.param]


@pytest.fixture
def benchmark_model(benchmark_profile: RunProfile) -> BenchmarkModel:
    return build_benchmark_model(benchmark_profile)
