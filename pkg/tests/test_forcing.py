"""Test noise streams, diffusion families and the rank-one closed forms."""

import warnings

import numpy as np
import pytest

from sphere_waves.errors import InvalidArgumentError, TraceClassWarning
from sphere_waves.forcing import (
    DiagonalDiffusion,
    NoiseModel,
    NullDiffusion,
    RankOneDiffusion,
    coarsen_increments,
    fd_sigma_prime_sigma,
    in_zero_set,
    lambda_discriminator,
    sigma0_apply,
    sigma1_apply,
    sigma_apply,
    sigma_hs_norm_sq,
    sigma_prime_sigma,
    wiener_increments,
)
from sphere_waves.spectral import (
    SpectralBasis,
    SpectralField,
    inner,
    make_basis,
    random_unit_field,
    sobolev_norm,
)


def g(r: float) -> float:
    return 1.0 / (1.0 + r)


class TestNoiseModel:
    """Test noise model validation."""

    def test_scalar(self) -> None:
        """Test the scalar model has one coordinate."""
        nm = NoiseModel.scalar(seed=3, amplitude=0.5)

        assert nm.n_noise_modes == 1
        assert nm.trace == pytest.approx(0.25)

    def test_diagonal_default_weights(self) -> None:
        """Test q_k defaults to 1/k."""
        nm = NoiseModel.diagonal(seed=3, n_noise_modes=4)

        assert np.allclose(nm.q_array, [1.0, 0.5, 1 / 3, 0.25])
        assert np.allclose(nm.hs_weights, nm.q_array**2)

    @pytest.mark.parametrize("seed", [-1, 2**64])
    def test_seed_range(self, seed: int) -> None:
        """Test seeds outside the unsigned 64-bit range are rejected."""
        with pytest.raises(InvalidArgumentError, match="seed"):
            NoiseModel.scalar(seed)

    def test_non_positive_weight(self) -> None:
        """Test covariance weights must be positive."""
        with pytest.raises(InvalidArgumentError):
            NoiseModel.diagonal(seed=1, n_noise_modes=2, q=[1.0, 0.0])

    def test_flat_covariance_warns(self) -> None:
        """Test a non-decaying q is flagged as not trace class."""
        with pytest.warns(TraceClassWarning):
            NoiseModel.diagonal(seed=1, n_noise_modes=8, q=np.ones(8))

    def test_decaying_covariance_is_quiet(self) -> None:
        """Test q_k = 1/k raises no warning."""
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            NoiseModel.diagonal(seed=1, n_noise_modes=8)


class TestWienerIncrements:
    """Test the keyed increment tables."""

    def test_reproducible(self) -> None:
        """Test the same (seed, replica) gives bit-identical tables."""
        nm = NoiseModel.diagonal(seed=42, n_noise_modes=3)

        a = wiener_increments(nm, 1e-3, 50, replica=5)
        b = wiener_increments(nm, 1e-3, 50, replica=5)

        assert a.shape == (50, 3)
        assert np.array_equal(a, b)

    def test_replicas_differ(self) -> None:
        """Test different replicas get independent streams."""
        nm = NoiseModel.scalar(seed=42)

        assert not np.array_equal(
            wiener_increments(nm, 1e-3, 20, 0), wiener_increments(nm, 1e-3, 20, 1)
        )

    def test_longer_table_extends_shorter(self) -> None:
        """Test the first rows do not depend on the table length."""
        nm = NoiseModel.diagonal(seed=9, n_noise_modes=2)

        short = wiener_increments(nm, 1e-2, 10, 0)
        long = wiener_increments(nm, 1e-2, 30, 0)

        assert np.array_equal(short, long[:10])

    def test_variance(self) -> None:
        """Test the increments have variance q_k^2 dt."""
        nm = NoiseModel.diagonal(seed=1, n_noise_modes=2)

        table = wiener_increments(nm, 0.01, 20_000, 0)

        assert np.allclose(table.var(axis=0), nm.hs_weights * 0.01, rtol=0.05)

    def test_invalid_dt(self) -> None:
        """Test dt must be positive."""
        with pytest.raises(InvalidArgumentError):
            wiener_increments(NoiseModel.scalar(1), 0.0, 10, 0)

    def test_coarsen(self) -> None:
        """Test coarsening sums consecutive increments."""
        table = np.arange(8, dtype=float).reshape(4, 2)

        coarse = coarsen_increments(table, 2)

        assert coarse.tolist() == [[2.0, 4.0], [10.0, 12.0]]

    def test_coarsen_requires_divisor(self) -> None:
        """Test the factor must divide the number of steps."""
        with pytest.raises(InvalidArgumentError, match="divisible"):
            coarsen_increments(np.zeros((5, 1)), 2)


class TestDiffusionModels:
    """Test the sigma_0 families and the tangential diffusion."""

    def test_rank_one_normalizes_h(self, basis: SpectralBasis) -> None:
        """Test h is scaled to unit norm."""
        dm = RankOneDiffusion(basis, np.array([3.0, 4.0]))

        assert np.linalg.norm(dm.h) == pytest.approx(1.0)

    def test_rank_one_zero_h(self, basis: SpectralBasis) -> None:
        """Test h = 0 is rejected."""
        with pytest.raises(InvalidArgumentError):
            RankOneDiffusion(basis, np.zeros(2))

    def test_rank_one_sigma0(
        self, rank_one: RankOneDiffusion, u_minus: SpectralField, h_plus: SpectralField
    ) -> None:
        """Test sigma_0(u) = g(|u|^2_{H^1}) h."""
        r = 2.5 * np.pi**2

        assert sigma0_apply(rank_one, u_minus).allclose(h_plus * g(r), atol=1e-15)

    def test_decomposition_and_tangency(
        self, basis: SpectralBasis, rank_one: RankOneDiffusion, rng: np.random.Generator
    ) -> None:
        """Test sigma_0 = sigma + sigma_1 and sigma(u) is tangent at u."""
        diagonal = DiagonalDiffusion.default(basis)
        for _ in range(50):
            u = random_unit_field(basis, rng)
            for dm, k in ((rank_one, 1), (diagonal, 3)):
                s0 = sigma0_apply(dm, u, k)
                s = sigma_apply(dm, u, k)
                s1 = sigma1_apply(dm, u, k)
                assert (s + s1).allclose(s0, atol=1e-14)
                assert abs(inner(s, u, 0.0)) <= 1e-14
                assert sobolev_norm(s, 0.0) <= sobolev_norm(s0, 0.0) + 1e-14

    def test_diagonal_profile(self, basis: SpectralBasis, u_minus: SpectralField) -> None:
        """Test lambda_k(r) = a_k / (1 + r^2) with r = |u|_{H^1}."""
        dm = DiagonalDiffusion(basis, np.array([1.0, 2.0]), "decaying")
        r_sq = 2.5 * np.pi**2

        row = sigma0_apply(dm, u_minus, 2)

        assert row.coeffs[1] == pytest.approx(2.0 / (1.0 + r_sq))

    def test_diagonal_beyond_truncation(self) -> None:
        """Test noise coordinates above N act on discarded modes."""
        basis = make_basis(2)
        dm = DiagonalDiffusion(basis, np.ones(3), "constant")

        assert np.all(dm.sigma0_rows(basis.unit(1).coeffs)[2] == 0.0)

    def test_diagonal_summability(self, basis: SpectralBasis) -> None:
        """Test the decaying default family has finite constants."""
        sums = DiagonalDiffusion.default(basis).summability()

        assert all(np.isfinite(value) for value in sums.values())
        assert sums["lambda_3"] > 0

    def test_diagonal_lipschitz_bound(self, basis: SpectralBasis, rng: np.random.Generator) -> None:
        """Test the Lipschitz sum bounds the H^1 Hilbert-Schmidt gap of sigma_0."""
        dm = DiagonalDiffusion.default(basis)
        bound = dm.summability()["lipschitz"]
        alpha = basis.eigenvalues

        for _ in range(50):
            u1 = random_unit_field(basis, rng).coeffs
            u2 = random_unit_field(basis, rng).coeffs
            gap = float(np.sum((dm.sigma0_rows(u1) - dm.sigma0_rows(u2)) ** 2 * alpha))
            dr = np.sqrt(np.dot(alpha * u1, u1)) - np.sqrt(np.dot(alpha * u2, u2))
            assert gap <= bound * dr**2 * (1.0 + 1e-12)

    def test_constant_profile_is_not_state_dependent(self, basis: SpectralBasis) -> None:
        """Test the constant profile has zero Lipschitz constants."""
        dm = DiagonalDiffusion(basis, np.ones(3), "constant")

        assert np.all(dm.lipschitz_constants == 0.0)
        assert dm.summability()["lipschitz"] == 0.0

    def test_noise_coordinate_range(self, diagonal: DiagonalDiffusion, u_minus: SpectralField) -> None:
        """Test a coordinate index outside 1..K is rejected."""
        with pytest.raises(InvalidArgumentError, match="noise coordinate"):
            sigma_apply(diagonal, u_minus, diagonal.n_noise_modes + 1)

    def test_null(self, basis: SpectralBasis, u_minus: SpectralField) -> None:
        """Test the null diffusion vanishes."""
        assert sigma_hs_norm_sq(NullDiffusion(basis, 2), u_minus) == 0.0

    def test_hs_norm_rank_one(
        self, rank_one: RankOneDiffusion, rng: np.random.Generator, basis: SpectralBasis
    ) -> None:
        """Test ||sigma(u)||^2 = g^2 (1 - <u,h>^2) for the rank-one family."""
        u = random_unit_field(basis, rng)
        a = float(np.dot(u.coeffs, rank_one.h))
        r = sobolev_norm(u, 1.0) ** 2

        assert sigma_hs_norm_sq(rank_one, u) == pytest.approx(g(r) ** 2 * (1.0 - a * a))

    def test_hs_norm_weights(self, diagonal: DiagonalDiffusion, u_minus: SpectralField) -> None:
        """Test unit weights reproduce the unweighted norm."""
        plain = sigma_hs_norm_sq(diagonal, u_minus)
        weighted = sigma_hs_norm_sq(diagonal, u_minus, weights=np.ones(diagonal.n_noise_modes))

        assert weighted == pytest.approx(plain)


class TestRankOneClosedForms:
    """Test sigma'sigma and Lambda against hand-computed values and finite differences."""

    def test_doubly_orthogonal_sigma_prime_sigma(
        self, rank_one: RankOneDiffusion, basis: SpectralBasis
    ) -> None:
        """Test sigma'(u)sigma(u) = -g^2 u when u is orthogonal to h in H and H^1."""
        u = basis.unit(3)
        r = 9.0 * np.pi**2

        assert sigma_prime_sigma(rank_one, u).allclose(u * (-g(r) ** 2), atol=1e-15)

    def test_doubly_orthogonal_in_zero_set(self, rank_one: RankOneDiffusion, basis: SpectralBasis) -> None:
        """Test Lambda vanishes when u is orthogonal to h in H and H^1."""
        assert in_zero_set(rank_one, basis.unit(3))

    def test_lambda_example(
        self, rank_one: RankOneDiffusion, u_minus: SpectralField, h_plus: SpectralField
    ) -> None:
        """Test Lambda((e1-e2)/sqrt2) = 3 pi^2 g(5 pi^2/2)^3 h."""
        r = 2.5 * np.pi**2
        expected = h_plus * (3.0 * np.pi**2 * g(r) ** 3)

        lam = lambda_discriminator(rank_one, u_minus)

        assert lam.allclose(expected, atol=1e-14)
        assert not in_zero_set(rank_one, u_minus)

    def test_lambda_identity(
        self, rank_one: RankOneDiffusion, basis: SpectralBasis, rng: np.random.Generator
    ) -> None:
        """Test sigma'sigma + ||sigma||^2 u = Lambda."""
        for _ in range(100):
            u = random_unit_field(basis, rng)
            lhs = sigma_prime_sigma(rank_one, u) + u * sigma_hs_norm_sq(rank_one, u)
            assert lhs.allclose(lambda_discriminator(rank_one, u), atol=1e-12)

    def test_matches_finite_differences(
        self, rank_one: RankOneDiffusion, basis: SpectralBasis, rng: np.random.Generator
    ) -> None:
        """Test the closed form against the central-difference oracle."""
        for _ in range(50):
            u = random_unit_field(basis, rng)
            exact = sigma_prime_sigma(rank_one, u)
            fd = fd_sigma_prime_sigma(rank_one, u, eps=1e-5)
            assert sobolev_norm(fd - exact, 0.0) <= 1e-6 * sobolev_norm(exact, 0.0)

    def test_requires_rank_one(self, diagonal: DiagonalDiffusion, u_minus: SpectralField) -> None:
        """Test the closed forms reject other families."""
        with pytest.raises(InvalidArgumentError, match="rank_one"):
            lambda_discriminator(diagonal, u_minus)

    def test_requires_unit_input(self, rank_one: RankOneDiffusion, basis: SpectralBasis) -> None:
        """Test the closed forms are only evaluated on the sphere."""
        with pytest.raises(InvalidArgumentError):
            sigma_prime_sigma(rank_one, basis.field([2.0]))
