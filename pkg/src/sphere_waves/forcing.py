"""Q-Wiener noise, diffusion families and the tangential diffusion.

Noise increments are drawn from counter-based Philox streams keyed by (seed, replica), so every
run that asks for the same (seed, replica, dt, n_steps) gets a bit-identical table. The wave and
limit integrators, and every mass in a sweep, consume the same table: that is the pathwise
coupling the small-mass experiments rely on.

Diffusions map a noise coordinate k to a field. Internally a diffusion is evaluated as a (K, N)
array whose row k holds the coefficients of sigma_0(u) applied to the k-th basis vector of K.
"""

from __future__ import annotations

import logging
import warnings
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import numpy.typing as npt

from sphere_waves.errors import InvalidArgumentError, TraceClassWarning
from sphere_waves.spectral import (
    FloatArray,
    SPHERE_TOL,
    SpectralBasis,
    SpectralField,
    require_unit,
)

logger = logging.getLogger(__name__)

NoiseKind = Literal["scalar", "diagonal"]
Profile = Literal["decaying", "constant"]

# Share of sum(q^2) carried by the last quarter of modes above which the truncation is flagged.
TRACE_TAIL_SHARE = 0.10


def trace_tail_share(q: npt.ArrayLike) -> float:
    """Fraction of sum(q_k^2) carried by the last quarter of the modes."""
    q2 = np.asarray(q, dtype=np.float64) ** 2
    total = float(q2.sum())
    if q2.size < 4 or total == 0.0:
        return 0.0
    tail = q2[-max(1, q2.size // 4) :]
    return float(tail.sum()) / total


@dataclass(frozen=True)
class NoiseModel:
    """Truncated Q-Wiener process W = sum_k q_k beta_k e_k on K.

    Attributes:
        kind: "scalar" (K = R, one Brownian motion) or "diagonal"
        q: covariance weights, one per noise coordinate
        seed: 64-bit seed of the Philox streams
    """

    kind: NoiseKind
    q: tuple[float, ...]
    seed: int

    def __post_init__(self) -> None:
        if self.kind not in ("scalar", "diagonal"):
            raise InvalidArgumentError(f"unknown noise kind {self.kind!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidArgumentError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if len(self.q) == 0:
            raise InvalidArgumentError("noise needs at least one coordinate")
        if self.kind == "scalar" and len(self.q) != 1:
            raise InvalidArgumentError("scalar noise has exactly one coordinate")
        if any(not q_k > 0 for q_k in self.q):
            raise InvalidArgumentError("covariance weights q_k must be strictly positive")
        share = trace_tail_share(self.q)
        if share > TRACE_TAIL_SHARE:
            warnings.warn(
                f"last quarter of the noise modes carries {share:.0%} of sum(q_k^2); "
                "the truncated covariance does not look trace class",
                TraceClassWarning,
                stacklevel=2,
            )

    @classmethod
    def scalar(cls, seed: int, amplitude: float = 1.0) -> "NoiseModel":
        return cls("scalar", (float(amplitude),), int(seed))

    @classmethod
    def diagonal(
        cls, seed: int, n_noise_modes: int, q: npt.ArrayLike | None = None
    ) -> "NoiseModel":
        """Diagonal noise; q defaults to q_k = 1/k."""
        if n_noise_modes < 1:
            raise InvalidArgumentError("n_noise_modes must be positive")
        if q is None:
            weights = 1.0 / np.arange(1, n_noise_modes + 1, dtype=np.float64)
        else:
            weights = np.asarray(q, dtype=np.float64).ravel()
            if weights.size != n_noise_modes:
                raise InvalidArgumentError(
                    f"{weights.size} weights given for {n_noise_modes} noise modes"
                )
        return cls("diagonal", tuple(float(w) for w in weights), int(seed))

    @property
    def n_noise_modes(self) -> int:
        return len(self.q)

    @property
    def q_array(self) -> FloatArray:
        return np.asarray(self.q, dtype=np.float64)

    @property
    def hs_weights(self) -> FloatArray:
        """q_k^2, the weights of the covariance-weighted Hilbert-Schmidt norm."""
        return self.q_array**2

    @property
    def trace(self) -> float:
        return float(self.hs_weights.sum())


def replica_generator(seed: int, replica: int) -> np.random.Generator:
    """Philox stream keyed by (seed, replica); the counter then walks (step, mode)."""
    if replica < 0:
        raise InvalidArgumentError(f"replica must be nonnegative, got {replica}")
    key = np.random.SeedSequence([int(seed), int(replica)]).generate_state(2, dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def wiener_increments(nm: NoiseModel, dt: float, n_steps: int, replica: int) -> FloatArray:
    """Increment table of shape (n_steps, K) with entries q_k * N(0, dt).

    Draws are row-major, so a longer table extends a shorter one with the same key.

    Raises:
        InvalidArgumentError: If dt <= 0 or n_steps < 0
    """
    if not dt > 0:
        raise InvalidArgumentError(f"dt must be positive, got {dt}")
    if n_steps < 0:
        raise InvalidArgumentError(f"n_steps must be nonnegative, got {n_steps}")
    rng = replica_generator(nm.seed, replica)
    draws = rng.standard_normal((n_steps, nm.n_noise_modes))
    return draws * (np.sqrt(dt) * nm.q_array)


def coarsen_increments(table: FloatArray, factor: int) -> FloatArray:
    """Sum consecutive groups of `factor` increments (same Brownian path, coarser grid)."""
    if factor < 1:
        raise InvalidArgumentError(f"coarsening factor must be >= 1, got {factor}")
    n_steps, n_noise = table.shape
    if n_steps % factor:
        raise InvalidArgumentError(f"{n_steps} steps are not divisible by {factor}")
    return table.reshape(n_steps // factor, factor, n_noise).sum(axis=1)


def _g(r: float) -> float:
    return 1.0 / (1.0 + r)


class DiffusionModel(ABC):
    """A sigma_0 family; subclasses return sigma_0(u) as a (K, N) coefficient array."""

    kind: str
    basis: SpectralBasis

    @property
    @abstractmethod
    def n_noise_modes(self) -> int: ...

    @abstractmethod
    def sigma0_rows(self, u: FloatArray) -> FloatArray: ...

    def sigma_rows(self, u: FloatArray) -> FloatArray:
        """Tangential diffusion: each row of sigma_0(u) minus its component along u."""
        rows = self.sigma0_rows(u)
        return rows - np.outer(rows @ u, u)

    def sigma1_rows(self, u: FloatArray) -> FloatArray:
        rows = self.sigma0_rows(u)
        return np.outer(rows @ u, u)

    def check_coordinate(self, k: int) -> None:
        if not 1 <= k <= self.n_noise_modes:
            raise InvalidArgumentError(f"noise coordinate {k} outside 1..{self.n_noise_modes}")


@dataclass(frozen=True, eq=False)
class RankOneDiffusion(DiffusionModel):
    """sigma_0(u) = g(|u|^2_{H^1}) h with g(t) = 1/(1+t) and K = R.

    h is renormalized to |h|_H = 1 at construction.
    """

    basis: SpectralBasis
    h: FloatArray
    kind: str = field(default="rank_one", init=False)

    def __post_init__(self) -> None:
        values = np.zeros(self.basis.n_modes)
        given = np.asarray(self.h, dtype=np.float64).ravel()
        if given.size > self.basis.n_modes:
            raise InvalidArgumentError("h has more coefficients than the basis has modes")
        values[: given.size] = given
        norm = float(np.linalg.norm(values))
        if norm == 0.0:
            raise InvalidArgumentError("h must be nonzero")
        values = values / norm
        values.setflags(write=False)
        object.__setattr__(self, "h", values)

    @property
    def n_noise_modes(self) -> int:
        return 1

    @property
    def h_field(self) -> SpectralField:
        return SpectralField(self.h, self.basis)

    def sigma0_rows(self, u: FloatArray) -> FloatArray:
        r = float(np.dot(self.basis.eigenvalues * u, u))
        return (_g(r) * self.h)[np.newaxis, :]


@dataclass(frozen=True, eq=False)
class DiagonalDiffusion(DiffusionModel):
    """sigma_0(u) e~_k = lambda_k(|u|_{H^1}) e_k.

    Profiles: "decaying" lambda_k(r) = a_k / (1 + r^2), "constant" lambda_k(r) = a_k.
    Noise coordinates beyond the Galerkin truncation act on discarded modes and give zero rows.
    """

    basis: SpectralBasis
    amplitudes: FloatArray
    profile: Profile = "decaying"
    kind: str = field(default="diagonal", init=False)

    def __post_init__(self) -> None:
        values = np.array(self.amplitudes, dtype=np.float64).ravel()
        if values.size == 0:
            raise InvalidArgumentError("diagonal diffusion needs at least one amplitude")
        if self.profile not in ("decaying", "constant"):
            raise InvalidArgumentError(f"unknown diagonal profile {self.profile!r}")
        values.setflags(write=False)
        object.__setattr__(self, "amplitudes", values)

    @classmethod
    def default(cls, basis: SpectralBasis, n_noise_modes: int | None = None) -> "DiagonalDiffusion":
        """a_k = alpha_k^-1 with the decaying profile."""
        k = np.arange(1, (n_noise_modes or basis.n_modes) + 1, dtype=np.float64)
        return cls(basis, 1.0 / (k * np.pi) ** 2, "decaying")

    @property
    def n_noise_modes(self) -> int:
        return int(self.amplitudes.size)

    @property
    def lipschitz_constants(self) -> FloatArray:
        """Lipschitz constants of r -> lambda_k(r); max |d/dr 1/(1+r^2)| = 3 sqrt(3)/8."""
        if self.profile == "constant":
            return np.zeros_like(self.amplitudes)
        return np.abs(self.amplitudes) * 3.0 * np.sqrt(3.0) / 8.0

    def lambdas(self, r: float) -> FloatArray:
        if self.profile == "constant":
            return np.array(self.amplitudes)
        return self.amplitudes / (1.0 + r * r)

    def sigma0_rows(self, u: FloatArray) -> FloatArray:
        n_modes = self.basis.n_modes
        h1 = float(np.sqrt(np.dot(self.basis.eigenvalues * u, u)))
        lam = self.lambdas(h1)
        rows = np.zeros((self.n_noise_modes, n_modes))
        n_active = min(self.n_noise_modes, n_modes)
        rows[np.arange(n_active), np.arange(n_active)] = lam[:n_active]
        return rows

    def summability(self) -> dict[str, float]:
        """Truncated Lambda_1, Lambda_2, Lambda_3 (sup over r >= 0) and the Lipschitz sum.

        "lipschitz" is sum_k L_k^2 alpha_k: ||sigma_0(u_1) - sigma_0(u_2)||^2_{T_2(K, H^1)} is at most
        that times (|u_1|_{H^1} - |u_2|_{H^1})^2.
        """
        k = np.arange(1, self.n_noise_modes + 1, dtype=np.float64)
        alpha = (k * np.pi) ** 2
        a = np.abs(self.amplitudes)
        lipschitz = float(np.sum(self.lipschitz_constants**2 * alpha))
        if self.profile == "constant":
            return {
                "lambda_1": float(np.sum(a * alpha)),
                "lambda_2": float(np.sum(a**2 * alpha**2)),
                "lambda_3": float("inf") if np.any(a > 0) else 0.0,
                "lipschitz": lipschitz,
            }
        # sup_r (1+r^4)/(1+r^2)^2 = 1, attained at r = 0 and r -> inf
        return {
            "lambda_1": float(np.sum(a * alpha)),
            "lambda_2": float(np.sum(a**2 * alpha**2)),
            "lambda_3": float(np.sum(a**2)),
            "lipschitz": lipschitz,
        }


@dataclass(frozen=True, eq=False)
class NullDiffusion(DiffusionModel):
    """sigma_0 = 0: deterministic runs through the stochastic code paths."""

    basis: SpectralBasis
    noise_modes: int = 1
    kind: str = field(default="null", init=False)

    @property
    def n_noise_modes(self) -> int:
        return self.noise_modes

    def sigma0_rows(self, u: FloatArray) -> FloatArray:
        return np.zeros((self.noise_modes, self.basis.n_modes))


def hs_norm_sq_rows(
    rows: FloatArray, alpha: FloatArray, beta: float = 0.0, weights: FloatArray | None = None
) -> float:
    """sum_k w_k |row_k|^2_{H^beta}."""
    per_row = (rows**2) @ (alpha ** float(beta))
    if weights is not None:
        per_row = per_row * weights
    return float(per_row.sum())


def _row(rows: FloatArray, dm: DiffusionModel, u: SpectralField, k: int) -> SpectralField:
    if dm.kind == "rank_one":
        return SpectralField(rows[0], u.basis)
    dm.check_coordinate(k)
    return SpectralField(rows[k - 1], u.basis)


def _check_basis(dm: DiffusionModel, u: SpectralField) -> None:
    if dm.basis != u.basis:
        raise InvalidArgumentError(
            f"diffusion basis has {dm.basis.n_modes} modes, field has {u.basis.n_modes}"
        )


def sigma0_apply(dm: DiffusionModel, u: SpectralField, k: int = 1) -> SpectralField:
    """sigma_0(u) applied to the k-th noise coordinate (1-based; ignored for rank one)."""
    _check_basis(dm, u)
    return _row(dm.sigma0_rows(u.coeffs), dm, u, k)


def sigma_apply(dm: DiffusionModel, u: SpectralField, k: int = 1) -> SpectralField:
    """sigma(u)k = sigma_0(u)k - <sigma_0(u)k, u>_H u; tangent to M when |u|_H = 1."""
    _check_basis(dm, u)
    return _row(dm.sigma_rows(u.coeffs), dm, u, k)


def sigma1_apply(dm: DiffusionModel, u: SpectralField, k: int = 1) -> SpectralField:
    """sigma_1(u)k = <sigma_0(u)k, u>_H u, so that sigma_0 = sigma + sigma_1."""
    _check_basis(dm, u)
    return _row(dm.sigma1_rows(u.coeffs), dm, u, k)


def sigma_hs_norm_sq(
    dm: DiffusionModel,
    u: SpectralField,
    target_beta: float = 0.0,
    weights: npt.ArrayLike | None = None,
) -> float:
    """||sigma(u)||^2 in the Hilbert-Schmidt space T_2(K, H^beta).

    Args:
        dm: Diffusion model
        u: Position field
        target_beta: Sobolev index of the target space
        weights: Optional per-coordinate weights (q_k^2 of the noise covariance)

    Returns:
        sum_k w_k |sigma(u) e~_k|^2_{H^beta}
    """
    _check_basis(dm, u)
    w = None if weights is None else np.asarray(weights, dtype=np.float64)
    return hs_norm_sq_rows(dm.sigma_rows(u.coeffs), u.basis.eigenvalues, target_beta, w)


def _rank_one_scalars(dm: DiffusionModel, u: SpectralField) -> tuple[float, float, float, float]:
    if not isinstance(dm, RankOneDiffusion):
        raise InvalidArgumentError(f"closed form needs a rank_one diffusion, got {dm.kind}")
    _check_basis(dm, u)
    require_unit(u, SPHERE_TOL, what="rank-one closed form input")
    alpha = u.basis.eigenvalues
    c = u.coeffs
    a = float(np.dot(c, dm.h))
    b = float(np.dot(alpha * c, dm.h))
    r = float(np.dot(alpha * c, c))
    return a, b, r, _g(r)


def sigma_prime_coeffs(dm: RankOneDiffusion, u: FloatArray) -> FloatArray:
    """Array form of sigma_prime_sigma without the sphere check."""
    alpha = dm.basis.eigenvalues
    a = float(np.dot(u, dm.h))
    b = float(np.dot(alpha * u, dm.h))
    r = float(np.dot(alpha * u, u))
    g3 = _g(r) ** 3
    return g3 * ((a * r - 2.0 * b - a) * dm.h + (2.0 * a * a + 2.0 * a * b - 1.0 - r) * u)


def sigma_prime_sigma(dm: DiffusionModel, u: SpectralField) -> SpectralField:
    """Closed-form sigma'(u)sigma(u) for the rank-one family.

    With a = <u,h>_H, b = <u,h>_{H^1}, r = |u|^2_{H^1} and g = g(r):
    g^3 (a r - 2b - a) h + g^3 (2a^2 + 2ab - 1 - r) u.

    Raises:
        InvalidArgumentError: If dm is not rank one or u is off the sphere
    """
    _rank_one_scalars(dm, u)
    return SpectralField(sigma_prime_coeffs(dm, u.coeffs), u.basis)  # type: ignore[arg-type]


def lambda_discriminator(dm: DiffusionModel, u: SpectralField) -> SpectralField:
    """Lambda(u) = sigma'(u)sigma(u) + ||sigma(u)||^2 u in closed form.

    g^3 [(a r - 2b - a) h + a (a + 2b - a r) u], with a, b, r as in sigma_prime_sigma.
    For <u,h>_H = 0 this reduces to -2 g^3 <u,h>_{H^1} h.
    """
    a, b, r, g = _rank_one_scalars(dm, u)
    h = dm.h  # type: ignore[attr-defined]
    coeffs = g**3 * ((a * r - 2.0 * b - a) * h + a * (a + 2.0 * b - a * r) * u.coeffs)
    return SpectralField(coeffs, u.basis)


def in_zero_set(dm: DiffusionModel, u: SpectralField, tol: float = 1e-12) -> bool:
    """Whether Lambda(u) vanishes, i.e. the two limit drifts agree at u."""
    lam = lambda_discriminator(dm, u)
    return float(np.linalg.norm(lam.coeffs)) <= tol


def fd_sigma_prime_sigma(
    dm: DiffusionModel,
    u: SpectralField,
    eps: float = 1e-5,
    weights: npt.ArrayLike | None = None,
) -> SpectralField:
    """Central-difference oracle for sum_k w_k sigma'(u)[sigma(u)e~_k] sigma(u)e~_k.

    sigma is differentiated as a map on the flat space H^1 (no projection onto M).
    """
    _check_basis(dm, u)
    c = u.coeffs
    rows = dm.sigma_rows(c)
    w = np.ones(rows.shape[0]) if weights is None else np.asarray(weights, dtype=np.float64)
    total = np.zeros_like(c)
    for k, direction in enumerate(rows):
        plus = dm.sigma_rows(c + eps * direction)[k]
        minus = dm.sigma_rows(c - eps * direction)[k]
        total += w[k] * (plus - minus) / (2.0 * eps)
    return SpectralField(total, u.basis)
