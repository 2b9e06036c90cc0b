import math

import numpy as np
import pytest

from rtdswipt.channel import ChannelConfig, large_scale_gain, peak_amplitude, sample_small_scale


class TestLargeScaleGain:
    def test_unity(self):
        cfg = ChannelConfig(g_tx=1.0, g_rx=1.0, f_c=1.0, d=1.0 / (4 * math.pi), c_l=1.0)
        np.testing.assert_allclose(large_scale_gain(cfg), 1.0, rtol=1e-15)

    def test_defaults(self):
        np.testing.assert_allclose(large_scale_gain(ChannelConfig()), 0.0795, rtol=2e-3)

    def test_inverse_distance_and_frequency(self):
        base = large_scale_gain(ChannelConfig())
        np.testing.assert_allclose(large_scale_gain(ChannelConfig(d=0.2)), base / 2, rtol=1e-15)
        np.testing.assert_allclose(large_scale_gain(ChannelConfig(d=0.3, f_c=600e9)), base / 6, rtol=1e-15)

    @pytest.mark.parametrize("kw", [dict(d=0.0), dict(g_tx=-1.0), dict(rician_k=-0.1)])
    def test_validation(self, kw):
        with pytest.raises(ValueError):
            ChannelConfig(**kw)


class TestSmallScale:
    def test_los_limit(self, rng):
        out = sample_small_scale(ChannelConfig(rician_k=math.inf), rng, 10)
        np.testing.assert_array_equal(out, np.ones(10))
        near = sample_small_scale(ChannelConfig(rician_k=1e8), rng, 1000)
        np.testing.assert_allclose(near, 1.0, atol=1e-3)

    def test_unit_mean_square(self, rng):
        h = sample_small_scale(ChannelConfig(rician_k=1.0), rng, 1_000_000)
        assert abs(np.mean(h**2) - 1.0) <= 3e-3

    def test_rayleigh_median(self, rng):
        h = sample_small_scale(ChannelConfig(rician_k=0.0), rng, 1_000_000)
        np.testing.assert_allclose(np.median(h), math.sqrt(math.log(4)) / math.sqrt(2), rtol=3e-3)

    def test_reproducible(self):
        cfg = ChannelConfig()
        a = sample_small_scale(cfg, np.random.default_rng(7), 5)
        b = sample_small_scale(cfg, np.random.default_rng(7), 5)
        np.testing.assert_array_equal(a, b)

    def test_scalar(self, rng):
        assert isinstance(sample_small_scale(ChannelConfig(), rng), float)


class TestPeakAmplitude:
    def test_small_a(self):
        assert peak_amplitude(0.1, 0.0795, 2.4e-3) == 0.1

    def test_large_a(self):
        assert peak_amplitude(1e6, 0.0795, 2.4e-3) == math.sqrt(2.4e-3) / 0.0795

    def test_example(self):
        np.testing.assert_allclose(peak_amplitude(2.0, 0.0795, 2.4e-3), 0.616, atol=1e-3)

    def test_never_exceeds_breakdown(self, rng):
        a = rng.uniform(0.01, 5.0, 10_000)
        h = rng.uniform(0.001, 0.5, 10_000)
        rho = rng.uniform(1e-4, 1e-2, 10_000)
        abar = np.array([peak_amplitude(*t) for t in zip(a, h, rho)])
        assert np.all((h * abar) ** 2 <= rho * (1 + 1e-15))
