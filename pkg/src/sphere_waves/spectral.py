"""Dirichlet sine basis on D=(0,1) and coefficient-space field arithmetic.

Every field is stored by its coefficients on e_j(xi) = sqrt(2) sin(j pi xi), the L2-orthonormal
eigenfunctions of -d^2/dxi^2 with eigenvalues alpha_j = (j pi)^2. Sobolev norms are weighted sums
of squared coefficients, so no collocation grid is needed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import numpy.typing as npt

from sphere_waves.errors import InvalidArgumentError

FloatArray = npt.NDArray[np.float64]

# Slack allowed when deciding whether an input lies on the unit sphere.
SPHERE_TOL = 1e-10


@dataclass(frozen=True)
class SpectralBasis:
    """Galerkin truncation of the Dirichlet sine basis.

    Two bases are interchangeable iff they have the same number of modes.
    """

    n_modes: int

    def __post_init__(self) -> None:
        if not isinstance(self.n_modes, (int, np.integer)) or self.n_modes < 1:
            raise InvalidArgumentError(f"n_modes must be a positive integer, got {self.n_modes!r}")

    @cached_property
    def eigenvalues(self) -> FloatArray:
        """alpha_j = (j pi)^2 for j = 1..N (read-only)."""
        j = np.arange(1, self.n_modes + 1, dtype=np.float64)
        alpha = (j * np.pi) ** 2
        alpha.setflags(write=False)
        return alpha

    def weights(self, beta: float) -> FloatArray:
        """alpha_j^beta, the weights of the H^beta inner product."""
        return self.eigenvalues ** float(beta)

    def unit(self, j: int) -> "SpectralField":
        """The eigenfunction e_j (1-based index)."""
        if not 1 <= j <= self.n_modes:
            raise InvalidArgumentError(f"mode index {j} outside 1..{self.n_modes}")
        coeffs = np.zeros(self.n_modes)
        coeffs[j - 1] = 1.0
        return SpectralField(coeffs, self)

    def zero(self) -> "SpectralField":
        return SpectralField(np.zeros(self.n_modes), self)

    def field(self, coeffs: npt.ArrayLike) -> "SpectralField":
        """Build a field from (possibly shorter) coefficients, zero-padding the tail."""
        values = np.asarray(coeffs, dtype=np.float64).ravel()
        if values.size > self.n_modes:
            raise InvalidArgumentError(
                f"{values.size} coefficients given for a basis of {self.n_modes} modes"
            )
        padded = np.zeros(self.n_modes)
        padded[: values.size] = values
        return SpectralField(padded, self)

    def evaluate(self, x: "SpectralField", xi: npt.ArrayLike) -> FloatArray:
        """Point values sum_j c_j sqrt(2) sin(j pi xi) (plotting/diagnostics only)."""
        points = np.atleast_1d(np.asarray(xi, dtype=np.float64))
        j = np.arange(1, self.n_modes + 1)
        modes = np.sqrt(2.0) * np.sin(np.pi * np.outer(points, j))
        return modes @ x.coeffs


def make_basis(n_modes: int) -> SpectralBasis:
    """Create the N-mode Dirichlet basis on (0,1).

    Raises:
        InvalidArgumentError: If n_modes < 1
    """
    return SpectralBasis(n_modes)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """A function in H^beta represented by its sine coefficients.

    The coefficient array is copied and frozen at construction.
    """

    coeffs: FloatArray
    basis: SpectralBasis = field(repr=False)

    def __post_init__(self) -> None:
        values = np.array(self.coeffs, dtype=np.float64, copy=True).ravel()
        if values.size != self.basis.n_modes:
            raise InvalidArgumentError(
                f"field has {values.size} coefficients, basis has {self.basis.n_modes} modes"
            )
        values.setflags(write=False)
        object.__setattr__(self, "coeffs", values)

    def _check(self, other: "SpectralField") -> None:
        if other.basis != self.basis:
            raise InvalidArgumentError(
                f"basis mismatch: {self.basis.n_modes} vs {other.basis.n_modes} modes"
            )

    def __add__(self, other: "SpectralField") -> "SpectralField":
        self._check(other)
        return SpectralField(self.coeffs + other.coeffs, self.basis)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        self._check(other)
        return SpectralField(self.coeffs - other.coeffs, self.basis)

    def __mul__(self, scalar: float) -> "SpectralField":
        return SpectralField(self.coeffs * float(scalar), self.basis)

    __rmul__ = __mul__

    def __truediv__(self, scalar: float) -> "SpectralField":
        return SpectralField(self.coeffs / float(scalar), self.basis)

    def __neg__(self) -> "SpectralField":
        return SpectralField(-self.coeffs, self.basis)

    def allclose(self, other: "SpectralField", atol: float = 1e-12) -> bool:
        self._check(other)
        return bool(np.allclose(self.coeffs, other.coeffs, rtol=0.0, atol=atol))

    def truncate(self, n_keep: int) -> "SpectralField":
        """Zero every mode above n_keep."""
        values = np.array(self.coeffs)
        values[n_keep:] = 0.0
        return SpectralField(values, self.basis)

    def to_json(self) -> dict[str, object]:
        return {"n_modes": self.basis.n_modes, "coeffs": [float(c) for c in self.coeffs]}

    @classmethod
    def from_json(cls, data: dict[str, object]) -> "SpectralField":
        basis = make_basis(int(data["n_modes"]))  # type: ignore[arg-type]
        return basis.field(data["coeffs"])  # type: ignore[arg-type]


@dataclass(frozen=True)
class StateZ:
    """A point (u, v) of the tangent bundle: position and velocity."""

    u: SpectralField
    v: SpectralField

    def __post_init__(self) -> None:
        self.u._check(self.v)

    @property
    def basis(self) -> SpectralBasis:
        return self.u.basis

    def constraint_defects(self) -> tuple[float, float]:
        """(| |u|_H - 1 |, |<u, v>_H|)."""
        return abs(sobolev_norm(self.u, 0.0) - 1.0), abs(inner(self.u, self.v, 0.0))

    def on_manifold(self, tol_constraint: float = SPHERE_TOL) -> bool:
        norm_defect, tangency_defect = self.constraint_defects()
        return norm_defect <= tol_constraint and tangency_defect <= tol_constraint


def weighted_inner(x: FloatArray, y: FloatArray, weights: FloatArray) -> float:
    """Array form of inner(): sum_j w_j x_j y_j."""
    return float(np.dot(weights * x, y))


def inner(x: SpectralField, y: SpectralField, beta: float) -> float:
    """<x, y>_{H^beta} = sum_j alpha_j^beta x_j y_j.

    beta=0 is the L2 product, beta=1 the H^1_0 product.

    Raises:
        InvalidArgumentError: If the fields live on different bases
    """
    x._check(y)
    return weighted_inner(x.coeffs, y.coeffs, x.basis.weights(beta))


def sobolev_norm(x: SpectralField, beta: float) -> float:
    """|x|_{H^beta}; zero iff x = 0."""
    return float(np.sqrt(inner(x, x, beta)))


def require_unit(x: SpectralField, tol: float = SPHERE_TOL, what: str = "field") -> float:
    """Return |x|_H, raising if it is not 1 within tol."""
    norm = sobolev_norm(x, 0.0)
    if abs(norm - 1.0) > tol:
        raise InvalidArgumentError(f"{what} must lie on the unit sphere, |x|_H = {norm:.12g}")
    return norm


def interpolation_slack(x: SpectralField, theta: float, rho: float) -> float:
    """|x|_{H^rho}^{theta/rho} - |x|_{H^theta}; nonnegative for unit x."""
    if not 0.0 <= theta < rho:
        raise InvalidArgumentError(f"need 0 <= theta < rho, got theta={theta}, rho={rho}")
    require_unit(x, what="interpolation input")
    lhs = sobolev_norm(x, theta)
    rhs = sobolev_norm(x, rho) ** (theta / rho)
    return rhs - lhs


def interpolation_check(x: SpectralField, theta: float, rho: float) -> bool:
    """Whether |x|_{H^theta} <= |x|_{H^rho}^{theta/rho} holds for a unit field.

    Raises:
        InvalidArgumentError: If |x|_H != 1 or theta, rho are out of order
    """
    slack = interpolation_slack(x, theta, rho)
    scale = max(1.0, sobolev_norm(x, rho) ** (theta / rho))
    return slack >= -1e-12 * scale


def random_unit_field(
    basis: SpectralBasis, rng: np.random.Generator, decay: float = 2.0
) -> SpectralField:
    """Random field with coefficients ~ N(0, j^-2decay), normalized in H."""
    j = np.arange(1, basis.n_modes + 1, dtype=np.float64)
    coeffs = rng.standard_normal(basis.n_modes) * j ** (-decay)
    norm = np.linalg.norm(coeffs)
    if norm == 0.0:
        coeffs[0], norm = 1.0, 1.0
    return SpectralField(coeffs / norm, basis)
