import math

import numpy as np
import pytest
import torch

from physics.lattice import LatticeGeometry, apply_symmetry_to_field, enumerate_group
from physics.phi4 import (
    FieldConfiguration,
    Phi4Couplings,
    action,
    action_grad,
    free_theory_chi2,
    free_theory_covariance,
    free_theory_log_z,
    laplacian,
    laplacian_matrix,
    log_unnormalized_density,
    sample_free_theory,
)
from utils.errors import EvaluationError, ValidationError
from utils.rng import Stream

L6_COUPLINGS = Phi4Couplings(m_sq=-4.0, lam=6.975)


class TestCouplings:
    def test_negative_quartic_rejected(self):
        with pytest.raises(ValidationError):
            Phi4Couplings(1.0, -0.1)

    def test_free_theory_needs_positive_mass(self):
        with pytest.raises(ValidationError):
            Phi4Couplings(0.0, 0.0)
        Phi4Couplings(0.5, 0.0)


class TestAction:
    def test_zero_field(self, geo6):
        assert float(action(torch.zeros(6, 6), L6_COUPLINGS)) == 0.0

    def test_constant_field_has_no_kinetic_term(self, geo4):
        c = 0.7
        expected = 16 * (L6_COUPLINGS.m_sq * c**2 + L6_COUPLINGS.lam * c**4)
        assert float(action(torch.full((4, 4), c), L6_COUPLINGS)) == pytest.approx(expected, rel=1e-12)

    def test_single_site(self):
        phi = torch.tensor([[[1.5]], [[-2.0]]])
        torch.testing.assert_close(action(phi, Phi4Couplings(1.0, 0.0)), torch.tensor([2.25, 4.0]))

    def test_batched_shape(self, geo4):
        assert action(torch.randn(5, 4, 4), L6_COUPLINGS).shape == (5,)

    def test_kinetic_term_is_laplacian_quadratic_form(self, geo4):
        rng = np.random.default_rng(0)
        phi = rng.normal(size=(4, 4))
        free = Phi4Couplings(1.0, 0.0)
        flat = phi.reshape(-1)
        expected = flat @ laplacian_matrix(geo4) @ flat + np.sum(flat**2)
        assert float(action(torch.from_numpy(phi), free)) == pytest.approx(expected, rel=1e-12)

    def test_two_site_side_counts_each_pair_twice(self):
        geo = LatticeGeometry(2)
        phi = torch.tensor([[1.0, 2.0], [0.0, -1.0]])
        # pairs (a,c) (b,d) (a,b) (c,d): 1 + 9 + 1 + 1, each seen from both ends
        kinetic = 2.0 * 12.0
        free = Phi4Couplings(1.0, 0.0)
        assert float(action(phi, free)) == pytest.approx(kinetic + 6.0, abs=1e-12)

        delta = laplacian_matrix(geo)
        assert np.array_equal(np.diag(delta), np.full(4, 4.0))
        assert delta[0, 1] == delta[0, 2] == -2.0
        flat = phi.reshape(-1).numpy()
        assert flat @ delta @ flat == pytest.approx(kinetic, abs=1e-12)

    def test_laplacian_matches_matrix(self, geo4):
        phi = torch.randn(4, 4)
        dense = torch.from_numpy(laplacian_matrix(geo4)) @ phi.reshape(-1)
        torch.testing.assert_close(laplacian(phi).reshape(-1), dense)

    def test_invariant_under_lattice_symmetries(self, geo6):
        phi = torch.randn(6, 6)
        s0 = action(phi, L6_COUPLINGS)
        for g in enumerate_group(geo6):
            assert abs(float(action(apply_symmetry_to_field(g, phi, geo6), L6_COUPLINGS) - s0)) <= 1e-12 * abs(float(s0)) + 1e-12

    def test_invariant_under_sign_flip(self, geo6):
        phi = torch.randn(3, 6, 6)
        torch.testing.assert_close(action(-phi, L6_COUPLINGS), action(phi, L6_COUPLINGS), rtol=1e-13, atol=0)

    def test_gradient_matches_autograd(self, geo4):
        phi = torch.randn(2, 4, 4, requires_grad=True)
        action(phi, L6_COUPLINGS).sum().backward()
        torch.testing.assert_close(action_grad(phi.detach(), L6_COUPLINGS), phi.grad)

    def test_non_finite_field(self):
        with pytest.raises(EvaluationError):
            action(torch.tensor([[float("nan"), 0.0], [0.0, 0.0]]), L6_COUPLINGS)

    def test_log_density_is_negative_action(self, geo4):
        phi = torch.randn(4, 4)
        assert float(log_unnormalized_density(phi, L6_COUPLINGS)) == -float(action(phi, L6_COUPLINGS))


class TestFieldConfiguration:
    def test_wrong_shape(self, geo4):
        with pytest.raises(ValidationError):
            FieldConfiguration(geo4, torch.zeros(3, 3))

    def test_non_finite_values(self, geo4):
        values = torch.zeros(4, 4)
        values[0, 0] = float("inf")
        with pytest.raises(ValidationError):
            FieldConfiguration(geo4, values)

    def test_batched(self, geo4):
        assert FieldConfiguration(geo4, torch.zeros(2, 4, 4)).batched


class TestFreeTheory:
    def test_susceptibility(self, geo6):
        cov = free_theory_covariance(1.0, geo6)
        assert cov.sum() / geo6.D == pytest.approx(free_theory_chi2(1.0, geo6), rel=1e-10)
        assert free_theory_chi2(1.0, geo6) == 0.5

    def test_single_site_normalization(self):
        # ∫ exp(−m² φ²) dφ = sqrt(π / m²)
        geo = LatticeGeometry(1)
        assert free_theory_log_z(2.0, geo) == pytest.approx(0.5 * math.log(math.pi / 2.0), rel=1e-12)

    def test_exact_samples_have_the_covariance(self):
        geo = LatticeGeometry(2)
        samples = sample_free_theory(1.0, geo, 40_000, Stream(0, 9)).reshape(-1, 4)
        np.testing.assert_allclose(np.cov(samples.T), free_theory_covariance(1.0, geo), atol=0.01)

    def test_rejects_nonpositive_mass(self, geo4):
        with pytest.raises(ValidationError):
            free_theory_covariance(0.0, geo4)
