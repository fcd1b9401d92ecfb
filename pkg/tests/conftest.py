"""Shared fixtures: small bases, unit fields and ready-made models."""

from pathlib import Path
from typing import Iterator

import numpy as np
import pytest

from sphere_waves.config import SimConfig, parse_config
from sphere_waves.forcing import DiagonalDiffusion, NoiseModel, NullDiffusion, RankOneDiffusion
from sphere_waves.spectral import SpectralBasis, SpectralField, StateZ, make_basis
from sphere_waves.store import RunStore

pytest_plugins = ["tests.conftest_benchmark"]

SQRT_HALF = np.sqrt(0.5)


@pytest.fixture
def basis() -> SpectralBasis:
    """Eight-mode sine basis."""
    return make_basis(8)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240917)


@pytest.fixture
def u_minus(basis: SpectralBasis) -> SpectralField:
    """(e1 - e2)/sqrt(2), the default initial position."""
    return basis.field([SQRT_HALF, -SQRT_HALF])


@pytest.fixture
def h_plus(basis: SpectralBasis) -> SpectralField:
    """(e1 + e2)/sqrt(2), the default rank-one direction."""
    return basis.field([SQRT_HALF, SQRT_HALF])


@pytest.fixture
def rank_one(basis: SpectralBasis) -> RankOneDiffusion:
    return RankOneDiffusion(basis, np.array([1.0, 1.0]))


@pytest.fixture
def diagonal(basis: SpectralBasis) -> DiagonalDiffusion:
    return DiagonalDiffusion.default(basis)


@pytest.fixture
def null_diffusion(basis: SpectralBasis) -> NullDiffusion:
    return NullDiffusion(basis)


@pytest.fixture
def scalar_noise() -> NoiseModel:
    return NoiseModel.scalar(seed=7)


@pytest.fixture
def diagonal_noise(basis: SpectralBasis) -> NoiseModel:
    return NoiseModel.diagonal(seed=7, n_noise_modes=basis.n_modes)


@pytest.fixture
def z0(u_minus: SpectralField, basis: SpectralBasis) -> StateZ:
    """Default initial state at rest."""
    return StateZ(u_minus, basis.zero())


@pytest.fixture
def small_config(tmp_path: Path) -> SimConfig:
    """Desk-scale configuration: 8 modes, short horizon, few replicas."""
    return parse_config(
        {
            "basis": {"n_modes": 8},
            "noise": {"seed": 11},
            "wave": {"mu": 0.1, "dt": 2e-3, "t_end": 0.05},
            "limit": {"replicas": 4, "checkpoints": 3},
            "sweep": {"mu_list": "0.2, 0.1", "replicas": 3},
            "output": {"directory": str(tmp_path / "runs")},
        }
    )


@pytest.fixture
def config_file(tmp_path: Path) -> Path:
    """INI file equivalent to small_config."""
    path = tmp_path / "small.cfg"
    path.write_text(
        "[basis]\n"
        "n_modes = 8\n"
        "\n"
        "[noise]\n"
        "seed = 11\n"
        "\n"
        "[wave]\n"
        "mu = 0.1\n"
        "dt = 0.002\n"
        "t_end = 0.05\n"
        "\n"
        "[limit]\n"
        "replicas = 4\n"
        "checkpoints = 3\n"
        "\n"
        "[sweep]\n"
        "mu_list = 0.2, 0.1\n"
        "replicas = 3\n"
        "\n"
        "[output]\n"
        f"directory = {tmp_path / 'runs'}\n"
    )
    return path


@pytest.fixture
def run_store() -> Iterator[RunStore]:
    """In-memory DuckDB run store."""
    with RunStore() as store:
        yield store
