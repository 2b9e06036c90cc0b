import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rtdswipt.eh_model import (BUNDLED_MODELS, DomainError, EHSampleSet, FitError, LogisticSegment,
                               PiecewiseEHModel, bundled_model, detect_breakpoints, evaluate, fit, format_model,
                               invert, load_model, load_samples, max_harvested_power, parse_model, save_model,
                               save_samples, to_monotone)


def logistic(rho, B, phi0, theta, alpha, beta, rho0):
    return B + (phi0 - B) * (1.0 + theta * (rho - rho0) ** alpha) ** (-beta)


class TestEvaluate:
    def test_origin(self, reference):
        assert evaluate(reference, 0.0) == 0.0

    def test_golden_reference_at_one_milliwatt(self, reference):
        # single-expression evaluation with parameters given per mW
        independent = 71.6e-6 * (1.0 - (1.0 + 2174.9 * 1.0**1.432) ** -0.778)
        np.testing.assert_allclose(independent, 7.141877006567361e-05, rtol=1e-15)
        np.testing.assert_allclose(evaluate(reference, 1e-3), independent, rtol=1e-13)

    @pytest.mark.parametrize("name", BUNDLED_MODELS)
    def test_junction_continuity(self, name):
        m = bundled_model(name)
        for seg, nxt in zip(m.segments, m.segments[1:]):
            left = seg(seg.rho_end)
            right = nxt(nxt.rho_start)
            assert abs(left - right) <= 1e-12 * abs(left)

    @pytest.mark.parametrize("name", BUNDLED_MODELS)
    def test_parity_monotonicity(self, name):
        m = bundled_model(name)
        step = 1e-3 * m.rho_max
        for n, seg in enumerate(m.segments, start=1):
            grid = np.arange(seg.rho_start, seg.rho_end, step)
            d = np.diff(m.evaluate(grid))
            assert np.all(d >= 0) if n % 2 else np.all(d <= 0)

    def test_domain_error(self, reference):
        with pytest.raises(DomainError):
            evaluate(reference, reference.rho_max * 1.01)
        with pytest.raises(DomainError):
            evaluate(reference, -1e-6)

    def test_vectorised(self, improved_ubr):
        rho = np.linspace(0, improved_ubr.rho_max, 77)
        out = improved_ubr(rho)
        assert out.shape == rho.shape and np.all(out >= 0)

    def test_segment_derivative(self):
        seg = LogisticSegment(1e-3, 0.0, 2e4, 1.5, 0.7, 0.0, 1e-3)
        r = np.linspace(1e-5, 9e-4, 9)
        h = 1e-9
        np.testing.assert_allclose(seg.derivative(r), (seg(r + h) - seg(r - h)) / (2 * h), rtol=1e-5)


class TestConstruction:
    def test_rejects_discontinuity(self):
        a = LogisticSegment(1.0, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0)
        b = LogisticSegment(0.1, 0.4, 1.0, 1.0, 1.0, 1.0, 2.0)
        with pytest.raises(ValueError):
            PiecewiseEHModel([a, b])

    def test_rejects_wrong_parity(self):
        a = LogisticSegment(1.0, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0)
        b = LogisticSegment(2.0, a.phi_end, 1.0, 1.0, 1.0, 1.0, 2.0)
        with pytest.raises(ValueError):
            PiecewiseEHModel([a, b])

    def test_rejects_nonpositive_shape(self):
        with pytest.raises(ValueError):
            LogisticSegment(1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0)

    def test_warns_when_later_peak_is_lower(self):
        text = format_model(bundled_model("improved_ubr"))
        with pytest.warns(UserWarning):
            parse_model(text)

    def test_file_round_trip(self, tmp_path, improved_ubr):
        path = tmp_path / "m.eh"
        save_model(improved_ubr, path)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            again = load_model(path)
        rho = np.linspace(0, improved_ubr.rho_max, 501)
        np.testing.assert_allclose(again(rho), improved_ubr(rho), rtol=1e-14)

    def test_unit_scaling(self):
        mw = parse_model("power_unit = mW\nn_segments = 1\nrho_breakpoints = 2\nB = 1\nalpha = 1.5\n"
                         "beta = 0.5\ntheta = 1000\n")
        np.testing.assert_allclose(mw(1e-3), 1e-3 * logistic(1.0, 1.0, 0.0, 1000.0, 1.5, 0.5, 0.0), rtol=1e-14)


class TestMonotone:
    def test_single_segment_identity(self):
        m = PiecewiseEHModel([LogisticSegment(1e-3, 0.0, 1e4, 1.5, 0.5, 0.0, 2e-3)])
        mono = to_monotone(m)
        assert mono.n_hat == 1 and mono.domain == [(0.0, 2e-3)] and mono.excluded == []

    @pytest.mark.parametrize("name", ["reference", "improved_irev"])
    def test_two_segment_keeps_first_branch(self, name):
        m = bundled_model(name)
        mono = to_monotone(m)
        assert mono.domain == [(0.0, m.breakpoints[0])]
        assert mono.excluded == [(m.breakpoints[0], m.rho_max)]

    def test_ubr_second_rise_never_recovers(self, improved_ubr):
        # the third branch tops out below the first peak, so it is dropped
        assert improved_ubr.phis[3] < improved_ubr.phis[1]
        mono = to_monotone(improved_ubr)
        assert mono.n_hat == 1
        np.testing.assert_allclose(mono.max_value, improved_ubr.phis[1])

    def test_rho_hat_by_independent_bisection(self, synthetic3, synthetic3_monotone):
        s1, s3 = synthetic3.segments[0], synthetic3.segments[2]
        level = logistic(s1.rho_end, s1.B, 0.0, s1.theta, s1.alpha, s1.beta, 0.0)
        lo, hi = s3.rho_start, s3.rho_end
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if logistic(mid, s3.B, s3.phi_start, s3.theta, s3.alpha, s3.beta, s3.rho_start) >= level:
                hi = mid
            else:
                lo = mid
        assert synthetic3_monotone.n_hat == 3
        (a0, a1), (b0, b1) = synthetic3_monotone.domain
        assert a1 == s1.rho_end and b1 == s3.rho_end
        assert abs(b0 - hi) <= 1e-15

    def test_agrees_with_psi_on_domain(self, synthetic3, synthetic3_monotone):
        for lo, hi in synthetic3_monotone.domain:
            grid = np.linspace(lo, hi, 400)
            np.testing.assert_array_equal(synthetic3_monotone(grid), synthetic3(grid))

    def test_strictly_increasing_across_pieces(self, synthetic3_monotone):
        grid = np.concatenate([np.linspace(lo, hi, 300) for lo, hi in synthetic3_monotone.domain])
        assert np.all(np.diff(synthetic3_monotone(grid)) > 0)

    def test_evaluate_outside_domain(self, synthetic3_monotone):
        (gap_lo, gap_hi), = synthetic3_monotone.excluded
        with pytest.raises(DomainError):
            synthetic3_monotone(0.5 * (gap_lo + gap_hi))


class TestInvert:
    def test_zero(self, reference):
        assert invert(to_monotone(reference), 0.0) == 0.0

    def test_round_trip(self, synthetic3, synthetic3_monotone, rng):
        pieces = synthetic3_monotone.domain
        widths = np.array([hi - lo for lo, hi in pieces])
        which = rng.choice(len(pieces), size=1000, p=widths / widths.sum())
        u = rng.random(1000)
        rho = np.array([pieces[k][0] + u_ * widths[k] for k, u_ in zip(which, u)])
        rho = rho[rho > 0]
        back = invert(synthetic3_monotone, synthetic3(rho))
        np.testing.assert_allclose(back, rho, rtol=1e-9)

    def test_jumps_over_excluded_interval(self, synthetic3, synthetic3_monotone):
        phi1 = synthetic3.phis[1]
        p = phi1 * (1 + 1e-3)
        rho = invert(synthetic3_monotone, p)
        # dense forward grid: first preimage beyond the first peak
        grid = np.linspace(0, synthetic3.rho_max, 2_000_001)
        vals = synthetic3(grid)
        first = grid[np.argmax((grid > synthetic3.breakpoints[0]) & (vals >= p))]
        (gap_lo, gap_hi), = synthetic3_monotone.excluded
        assert gap_hi <= rho <= synthetic3.rho_max
        assert abs(rho - first) <= grid[1]

    def test_above_maximum(self, reference):
        mono = to_monotone(reference)
        with pytest.raises(DomainError):
            invert(mono, mono.max_value * 1.001)


class TestMaxHarvestedPower:
    @pytest.mark.parametrize("name", BUNDLED_MODELS)
    @pytest.mark.parametrize("frac", [0.2, 0.7, 0.95, 1.0])
    def test_grid_search(self, name, frac):
        m = bundled_model(name)
        ub = frac * m.rho_max
        grid = np.linspace(0, ub, 100_001)
        np.testing.assert_allclose(max_harvested_power(m, ub), m(grid).max(), rtol=1e-6)

    def test_inside_first_segment(self, reference):
        ub = 0.5 * reference.breakpoints[0]
        assert max_harvested_power(reference, ub) == reference(ub)

    def test_n2_peak(self, reference):
        np.testing.assert_allclose(max_harvested_power(reference, reference.rho_max), reference.phis[1], rtol=1e-15)

    def test_ubr_full_range(self, improved_ubr):
        expected = max(improved_ubr.phis[1], improved_ubr(improved_ubr.rho_max))
        np.testing.assert_allclose(max_harvested_power(improved_ubr, improved_ubr.rho_max), expected, rtol=1e-15)


class TestFit:
    @pytest.mark.parametrize("name", BUNDLED_MODELS)
    def test_round_trip_with_known_breakpoints(self, name):
        m = bundled_model(name)
        rho = np.linspace(0, m.rho_max, 401)
        res = fit(EHSampleSet(rho, m(rho)), breakpoints=m.breakpoints)
        dense = np.linspace(0, m.rho_max, 5001)
        rms = np.sqrt(np.mean((res.model(dense) - m(dense)) ** 2))
        assert rms <= 5e-3 * m.phis[1]
        assert res.model.n_segments == m.n_segments

    def test_continuity_after_fit(self, improved_ubr):
        rho = np.linspace(0, improved_ubr.rho_max, 401)
        res = fit(EHSampleSet(rho, improved_ubr(rho)), breakpoints=improved_ubr.breakpoints)
        for seg, nxt in zip(res.model.segments, res.model.segments[1:]):
            assert abs(seg(seg.rho_end) - nxt.phi_start) <= 1e-12 * abs(nxt.phi_start)

    def test_single_segment(self):
        rho = np.linspace(0, 3e-3, 200)
        y = logistic(rho / 1e-3, 1.0, 0.0, 1000.0, 1.5, 0.5, 0.0) * 1e-3
        res = fit(EHSampleSet(rho, y), n_segments=1)
        assert res.model.n_segments == 1
        assert np.sqrt(np.mean(res.residuals**2)) <= 1e-3 * 1e-3

    @pytest.mark.parametrize("name", ["reference", "improved_irev"])
    def test_detected_breakpoints(self, name):
        m = bundled_model(name)
        rho = np.linspace(0, m.rho_max, 401)
        found = detect_breakpoints(EHSampleSet(rho, m(rho)))
        assert len(found) == 1
        assert abs(found[0] - m.breakpoints[0]) <= 2 * (rho[1] - rho[0])

    def test_auto_fit(self, reference):
        rho = np.linspace(0, reference.rho_max, 401)
        res = fit(EHSampleSet(rho, reference(rho)))
        assert res.model.n_segments == 2 and res.rel_rms <= 5e-3

    def test_auto_fit_narrow_segment(self, improved_ubr):
        # the middle segment spans only a few samples and ends on a plateau
        rho = np.linspace(0, improved_ubr.rho_max, 1001)
        found = detect_breakpoints(EHSampleSet(rho, improved_ubr(rho)))
        np.testing.assert_allclose(found, improved_ubr.breakpoints[:2], atol=2 * (rho[1] - rho[0]))
        res = fit(EHSampleSet(rho, improved_ubr(rho)))
        assert res.model.n_segments == 3 and res.rel_rms <= 5e-3

    def test_zero_samples_rejected(self):
        rho = np.linspace(0, 1e-3, 50)
        with pytest.raises(FitError):
            fit(EHSampleSet(rho, np.zeros_like(rho)))

    def test_inconsistent_segment_count(self, reference):
        rho = np.linspace(0, reference.rho_max, 101)
        with pytest.raises(FitError):
            fit(EHSampleSet(rho, reference(rho)), n_segments=3, breakpoints=[reference.breakpoints[0]])

    def test_rms_ceiling(self, reference, rng):
        rho = np.linspace(0, reference.rho_max, 201)
        noisy = reference(rho) * (1 + 0.5 * rng.standard_normal(rho.size))
        with pytest.raises(FitError) as info:
            fit(EHSampleSet(rho, noisy), breakpoints=reference.breakpoints, rms_ceiling=1e-3)
        assert info.value.residuals is not None

    @settings(max_examples=5, deadline=None)
    @given(st.floats(0.5e-3, 2e-3), st.floats(1.1, 2.5), st.floats(0.3, 1.0))
    def test_random_single_segments(self, B, alpha, beta):
        rho = np.linspace(0, 3e-3, 150)
        y = B * (1 - (1 + 500.0 * (rho / 1e-3) ** alpha) ** -beta)
        res = fit(EHSampleSet(rho, y), breakpoints=[])
        assert res.rel_rms <= 1e-3


class TestSampleFiles:
    def test_round_trip(self, tmp_path, reference):
        rho = np.linspace(0, reference.rho_max, 31)
        path = tmp_path / "s.csv"
        save_samples(EHSampleSet(rho, reference(rho)), path)
        again = load_samples(path)
        np.testing.assert_array_equal(again.rho, rho)

    def test_empty(self, tmp_path):
        path = tmp_path / "e.csv"
        path.write_text("# nothing\n")
        with pytest.raises(ValueError):
            load_samples(path)

    def test_bad_columns(self, tmp_path):
        path = tmp_path / "b.csv"
        path.write_text("rho_W,harvested_W\n0,0,1\n")
        with pytest.raises(ValueError):
            load_samples(path)

    def test_rejects_unsorted(self):
        with pytest.raises(ValueError):
            EHSampleSet([0.0, 2.0, 1.0], [0.0, 1.0, 2.0])
