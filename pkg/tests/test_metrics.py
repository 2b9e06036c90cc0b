import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rtdswipt.distributions import DiscreteDistribution, ExpQuadraticX, PowerLawX, TruncatedGaussianS, UniformX
from rtdswipt.metrics import (ClosedFormDomainError, NoiseModel, _mixture_density, achievable_rate, entropy,
                              mutual_information, output_pdf, output_pdf_expquad, output_pdf_uniform,
                              rate_powerlaw, rate_result)
from rtdswipt.specfun import QuadratureSpec, gaussian_q, integrate


class TestNoiseModel:
    def test_dbm(self):
        np.testing.assert_allclose(NoiseModel.from_dbm(-50).sigma2, 1e-8, rtol=1e-12)

    def test_positive(self):
        with pytest.raises(ValueError):
            NoiseModel(0.0)


class TestOutputPdf:
    def test_dirac_at_zero_is_noise(self):
        n = NoiseModel(0.04)
        y = np.linspace(-1, 1, 21)
        expected = np.exp(-y**2 / 0.08) / math.sqrt(2 * math.pi * 0.04)
        np.testing.assert_allclose(output_pdf(DiscreteDistribution.dirac(0.0), n, y), expected, rtol=1e-14)

    def test_uniform_matches_convolution(self):
        n = NoiseModel(1e-2)
        y = np.linspace(-0.4, 1.4, 100)
        np.testing.assert_allclose(output_pdf(UniformX(1.0), n, y), output_pdf_uniform(1.0, n, y), atol=1e-8)

    def test_uniform_midpoint(self):
        n = NoiseModel(0.01)
        expected = gaussian_q(-5.0) - gaussian_q(5.0)
        np.testing.assert_allclose(output_pdf_uniform(1.0, n, 0.5), expected, rtol=1e-14)

    def test_uniform_vanishing_noise(self):
        np.testing.assert_allclose(output_pdf_uniform(4.0, NoiseModel(1e-12), 0.7), 0.5, rtol=1e-12)

    def test_uniform_at_origin(self):
        np.testing.assert_allclose(output_pdf_uniform(1.0, NoiseModel(0.01), 0.0), 0.5, rtol=1e-12)

    def test_uniform_far_tails_are_positive(self):
        v = output_pdf_uniform(1.0, NoiseModel(1e-4), np.array([-0.3, 1.3]))
        assert np.all(v > 0) and np.all(v < 1e-100)

    def test_expquad_matches_convolution(self):
        n = NoiseModel(1e-3)
        fx = ExpQuadraticX(1.0, 1.5)
        y = np.linspace(-0.2, 1.2, 200)
        np.testing.assert_allclose(output_pdf_expquad(fx, n, y), output_pdf(fx, n, y), atol=1e-8)

    def test_expquad_normalised(self):
        n = NoiseModel(1e-3)
        fx = ExpQuadraticX(1.0, 1.5)
        total = integrate(lambda y: output_pdf_expquad(fx, n, y), QuadratureSpec(-0.3, 1.3, rel_tol=1e-12))
        assert abs(total - 1.0) <= 1e-8

    def test_expquad_small_mu_reduces_to_uniform(self):
        n = NoiseModel(1e-3)
        y = np.linspace(-0.1, 1.1, 50)
        np.testing.assert_allclose(output_pdf_expquad(ExpQuadraticX(1.0, 1e-7), n, y), output_pdf_uniform(1.0, n, y),
                                   rtol=1e-12)

    def test_expquad_guard(self):
        fx = ExpQuadraticX(1.0, 10.0)
        with pytest.raises(ClosedFormDomainError):
            output_pdf_expquad(fx, NoiseModel(0.01), 0.5)
        # the general path still works in that regime
        assert mutual_information(fx, NoiseModel(0.01)) > 0

    def test_mixture_order_invariance(self, rng):
        x = rng.random(12)
        w = rng.dirichlet(np.ones(12))
        y = np.linspace(-0.5, 1.5, 333)
        perm = rng.permutation(12)
        np.testing.assert_allclose(_mixture_density(y, x, w, 0.05), _mixture_density(y, x[perm], w[perm], 0.05),
                                   rtol=1e-13)


class TestMutualInformation:
    def test_dirac_is_zero(self):
        assert mutual_information(DiscreteDistribution.dirac(0.37), NoiseModel(1e-3)) == 0.0

    def test_noise_dominated(self):
        assert mutual_information(UniformX(1.0), NoiseModel(100.0**2)) <= 1e-3

    def test_binary_high_snr(self):
        d = DiscreteDistribution(np.array([0.0, 1.0]), np.array([0.5, 0.5]))
        assert abs(mutual_information(d, NoiseModel((1 / 20) ** 2)) - math.log(2)) <= 1e-3

    def test_relabelling_invariance(self, rng):
        x = np.sort(rng.random(8))
        w = rng.dirichlet(np.ones(8))
        perm = rng.permutation(8)
        a = mutual_information(DiscreteDistribution(x, w), NoiseModel(1e-3))
        b = mutual_information(DiscreteDistribution.from_pairs(x[perm], w[perm]), NoiseModel(1e-3))
        assert a == b

    def test_increases_as_noise_decreases(self):
        d = DiscreteDistribution(np.linspace(0, 1, 8), np.full(8, 1 / 8))
        vals = [mutual_information(d, NoiseModel(s**2)) for s in np.geomspace(1.0, 0.01, 12)]
        assert np.all(np.diff(vals) > 0)

    def test_baseline_family(self):
        assert 0 < mutual_information(TruncatedGaussianS(1.0, 0.3), NoiseModel(1e-3)) < math.log(1 / 0.0316)


class TestEntropyAndRates:
    def test_uniform_entropy(self):
        assert entropy(UniformX(1.0)) == 0.0

    def test_power_law_entropy(self):
        assert entropy(PowerLawX(1.0, 1.0)) == 0.0
        np.testing.assert_allclose(entropy(PowerLawX(1.0, 2.0)), 0.5 - math.log(2), rtol=1e-15)
        np.testing.assert_allclose(PowerLawX(1.0, 2.0).entropy_quadrature(), 0.5 - math.log(2), atol=1e-10)

    def test_discrete_entropy(self):
        assert entropy(DiscreteDistribution.dirac(1.0)) == -math.inf

    def test_rate_equal_exponents(self):
        n = NoiseModel(1e-4)
        np.testing.assert_allclose(achievable_rate(n.entropy, n), 0.5 * math.log(2), rtol=1e-15)

    def test_rate_uniform(self):
        n = NoiseModel(1e-8)
        p = 7.16e-5
        val = achievable_rate(entropy(UniformX(p)), n)
        np.testing.assert_allclose(val, 0.5 * math.log(1 + p / (2 * math.pi * math.e * 1e-8)), rtol=1e-14)
        np.testing.assert_allclose(val, 3.02, atol=5e-3)

    def test_powerlaw_rate_alpha_one(self):
        n = NoiseModel(1e-3)
        np.testing.assert_allclose(rate_powerlaw(1.0, 1.0, n), achievable_rate(entropy(UniformX(1.0)), n),
                                   rtol=1e-14)

    def test_powerlaw_rate_alpha_two(self):
        n = NoiseModel(1e-3)
        direct = 0.5 * math.log(1 + math.e / (2 * math.pi * math.e * 1e-3 * 4))
        np.testing.assert_allclose(rate_powerlaw(1.0, 2.0, n), direct, rtol=1e-14)
        np.testing.assert_allclose(achievable_rate(entropy(PowerLawX(1.0, 2.0)), n), direct, rtol=1e-14)

    def test_powerlaw_rate_decreasing(self):
        n = NoiseModel(1e-3)
        vals = [rate_powerlaw(1.0, a, n) for a in np.linspace(1.0, 200.0, 400)]
        assert np.all(np.diff(vals) < 0)

    def test_rate_of_discrete_is_zero(self):
        assert achievable_rate(-math.inf, NoiseModel(1.0)) == 0.0

    @settings(max_examples=10, deadline=None)
    @given(st.floats(1e-5, 1.0), st.floats(0.05, 6.0), st.floats(1.0, 20.0))
    def test_closed_form_entropies(self, p, mu1, alpha):
        for d in (UniformX(p), ExpQuadraticX(p, mu1), PowerLawX(p, alpha)):
            assert abs(d.entropy() - d.entropy_quadrature()) <= 1e-8

    @settings(max_examples=15, deadline=None)
    @given(st.sampled_from(["u", "e", "p"]), st.floats(1e-5, 1.0), st.floats(1e-4, 1e-1), st.floats(0.1, 4.0))
    def test_sandwich(self, fam, p, snr_inv, shape):
        n = NoiseModel(p * snr_inv)
        d = {"u": UniformX(p), "e": ExpQuadraticX(p, shape), "p": PowerLawX(p, 1.0 + 3 * shape)}[fam]
        r = rate_result(d, n)
        assert r.mutual_information >= r.achievable_rate - 1e-4
        assert r.mutual_information >= 0 and r.achievable_rate >= 0
