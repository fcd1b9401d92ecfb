"""Test the tangent projection, renormalization and the monitored functionals."""

import numpy as np
import pytest

from sphere_waves.errors import DegenerateStateError, InvalidArgumentError
from sphere_waves.geometry import (
    ManifoldTolerances,
    crucial_identity_residual,
    energy_psi,
    gradient_flow_bounds,
    phi_functional,
    renormalize_state,
    tangent_project,
)
from sphere_waves.spectral import (
    SpectralBasis,
    SpectralField,
    StateZ,
    inner,
    make_basis,
    random_unit_field,
    sobolev_norm,
)


class TestTangentProjection:
    """Test the projection onto T_aM."""

    def test_removes_normal_component(self, u_minus: SpectralField) -> None:
        """Test the projection of a itself is zero."""
        assert sobolev_norm(tangent_project(u_minus, u_minus), 0.0) == pytest.approx(0.0, abs=1e-15)

    def test_projection_properties(self, basis: SpectralBasis, rng: np.random.Generator) -> None:
        """Test idempotence, self-adjointness, contraction and tangency."""
        for _ in range(100):
            a = random_unit_field(basis, rng)
            x = basis.field(rng.standard_normal(basis.n_modes))
            y = basis.field(rng.standard_normal(basis.n_modes))
            px = tangent_project(a, x)
            py = tangent_project(a, y)

            assert tangent_project(a, px).allclose(px, atol=1e-12)
            assert inner(px, y, 0.0) == pytest.approx(inner(x, py, 0.0), abs=1e-12)
            assert sobolev_norm(px, 0.0) <= sobolev_norm(x, 0.0) + 1e-12
            assert abs(inner(px, a, 0.0)) <= 1e-12

    def test_requires_unit_base_point(self, basis: SpectralBasis) -> None:
        """Test projecting at a non-unit point is an error."""
        with pytest.raises(InvalidArgumentError):
            tangent_project(basis.field([2.0]), basis.unit(2))

    def test_tolerances_positive(self) -> None:
        """Test manifold tolerances must be positive."""
        with pytest.raises(InvalidArgumentError):
            ManifoldTolerances(tol_constraint=0.0)


class TestRenormalize:
    """Test pulling states back onto the tangent bundle."""

    def test_renormalize_state(self, basis: SpectralBasis) -> None:
        """Test u is rescaled and v loses its normal part."""
        z = StateZ(basis.field([3.0, 4.0]), basis.field([1.0, 1.0, 1.0]))

        out = renormalize_state(z)

        assert out.on_manifold(1e-14)
        assert np.allclose(out.u.coeffs[:2], [0.6, 0.8])

    def test_zero_position(self, basis: SpectralBasis) -> None:
        """Test u = 0 cannot be renormalized."""
        with pytest.raises(DegenerateStateError):
            renormalize_state(StateZ(basis.zero(), basis.unit(1)))


class TestFunctionals:
    """Test Psi, Phi and the crucial identity."""

    def test_energy_psi(self, basis: SpectralBasis) -> None:
        """Test Psi = (|u|^2_{H^1} + |v|^2_H) / 2."""
        z = StateZ(basis.unit(1), 2.0 * basis.unit(2))

        assert energy_psi(z) == pytest.approx(0.5 * (np.pi**2 + 4.0))

    def test_phi_single_mode(self, basis: SpectralBasis) -> None:
        """Test Phi(e_j) = alpha_j^2 / 2."""
        alpha = 9.0 * np.pi**2

        assert phi_functional(basis.unit(3)) == pytest.approx(0.5 * alpha**2)

    def test_phi_bounds(self, rng: np.random.Generator) -> None:
        """Test |u|^2_{H^2}/2 <= Phi(u) <= |u|^2_{H^2} on the sphere."""
        basis = make_basis(16)

        for _ in range(200):
            lower, phi, upper = gradient_flow_bounds(random_unit_field(basis, rng, decay=1.2))
            assert lower <= phi * (1 + 1e-12)
            assert phi <= upper * (1 + 1e-12)

    def test_crucial_identity(self, rng: np.random.Generator) -> None:
        """Test |u|^2_{H^2} - |u|^4_{H^1} = |Delta u + |u|^2_{H^1} u|^2_H for unit u."""
        basis = make_basis(16)

        for _ in range(200):
            u = random_unit_field(basis, rng)
            scale = max(1.0, sobolev_norm(u, 2.0) ** 2)
            assert crucial_identity_residual(u) <= 1e-10 * scale

    def test_phi_rejects_off_sphere(self, basis: SpectralBasis) -> None:
        """Test Phi is only defined on the sphere."""
        with pytest.raises(InvalidArgumentError):
            phi_functional(basis.field([0.5]))
