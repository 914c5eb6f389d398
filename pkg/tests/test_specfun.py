"""Bessel / vMF-normalizer kernel tests against independent oracles."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vmfseq import specfun
from vmfseq.specfun import CmEvalMode

from oracles import (bessel_ratio_mp, grad_log_cm_fd_mp, log_bessel_series_mp,
                     log_cm_mp)

# Frozen with the mpmath series oracle (50 digits); half-integer orders have
# closed forms: I_{1/2}(z) = sqrt(2/(pi z)) sinh z,
# I_{3/2}(z) = sqrt(2/(pi z)) (cosh z - sinh(z)/z).
LOG_I_HALF_1 = -0.064351991073531799
RATIO_3HALPH_1 = 0.3130352854993313
LOG_CM_3_1 = -2.6924636085404864
LOG_CM_3_0 = -2.5310242469692908
BOUND_150_150 = 0.41454750473955673
BOUND_2_1 = 0.24025307335204215


class TestLogBesselI:
    def test_identity_at_origin(self):
        assert specfun.log_bessel_i(0, 0.0) == 0.0

    def test_minus_inf_at_zero_for_positive_order(self):
        assert specfun.log_bessel_i(1.0, 0.0) == -np.inf
        assert specfun.log_bessel_i(0.5, 0.0) == -np.inf

    def test_half_order_closed_form(self):
        assert specfun.log_bessel_i(0.5, 1.0) == pytest.approx(LOG_I_HALF_1, rel=1e-12)

    def test_high_order_vs_series_oracle(self):
        mine = specfun.log_bessel_i(149, 100.0)
        assert mine == pytest.approx(log_bessel_series_mp(149, 100.0), rel=1e-10)

    @pytest.mark.parametrize("v,z", [(0, 0.5), (4, 1e-3), (149, 1.0), (499, 1e4),
                                     (1023, 5.0), (0.5, 30.0), (150, 3000.0), (0, 1e6)])
    def test_wide_range_vs_oracle(self, v, z):
        assert specfun.log_bessel_i(v, z) == pytest.approx(log_bessel_series_mp(v, z), rel=1e-10)

    def test_vectorized_matches_scalar(self):
        # the vectorized path shares one truncation point across elements,
        # so agreement is to roundoff, not bitwise
        z = np.array([0.0, 0.5, 3.0, 40.0])
        vec = specfun.log_bessel_i(2.0, z)
        assert vec.shape == z.shape
        assert vec[0] == -np.inf
        for zi, r in zip(z[1:], vec[1:]):
            assert r == pytest.approx(specfun.log_bessel_i(2.0, float(zi)), rel=1e-13)

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            specfun.log_bessel_i(-1.0, 1.0)
        with pytest.raises(ValueError):
            specfun.log_bessel_i(1.0, -0.5)
        with pytest.raises(ValueError):
            specfun.log_bessel_i(1.0, np.nan)


class TestBesselRatio:
    def test_zero_argument(self):
        assert specfun.bessel_ratio(1.5, 0.0) == 0.0

    def test_half_order_closed_form(self):
        assert specfun.bessel_ratio(1.5, 1.0) == pytest.approx(RATIO_3HALPH_1, rel=1e-12)

    def test_large_argument_asymptote(self):
        assert specfun.bessel_ratio(150, 1e8) == pytest.approx(1.0, abs=1e-5)
        assert specfun.bessel_ratio(150, 1e8) == pytest.approx(bessel_ratio_mp(150, 1e8), rel=1e-12)

    @pytest.mark.parametrize("v,z", [(0.5, 2.0), (2, 1e-3), (10, 7.0), (150, 150.0),
                                     (150, 2e4), (10, 1e5), (512, 100.0)])
    def test_vs_oracle(self, v, z):
        assert specfun.bessel_ratio(v, z) == pytest.approx(bessel_ratio_mp(v, z), rel=1e-11)

    def test_bounds_and_monotonicity_on_grid(self):
        for v in (0.5, 1.5, 5.0, 50.0, 150.0):
            zs = np.geomspace(1e-3, 1e3, 40)
            r = specfun.bessel_ratio(v, zs)
            assert np.all(r > 0.0) and np.all(r < 1.0)
            # strict increase is testable only below float64 saturation at 1
            live = r < 1.0 - 1e-9
            assert np.all(np.diff(r[live]) > 0.0)
            # spot-check the grid against the oracle
            for z in (zs[0], zs[20], zs[-1]):
                assert specfun.bessel_ratio(v, float(z)) == pytest.approx(
                    bessel_ratio_mp(v, float(z)), rel=1e-10)

    @settings(max_examples=40, deadline=None)
    @given(v=st.floats(0.5, 300.0), z=st.floats(1e-6, 1e4))
    def test_ratio_in_unit_interval(self, v, z):
        r = specfun.bessel_ratio(v, z)
        assert 0.0 < r < 1.0

    def test_domain_error_below_half(self):
        with pytest.raises(ValueError):
            specfun.bessel_ratio(0.25, 1.0)


class TestRatioLowerBound:
    def test_zero_numerator(self):
        assert specfun.ratio_lower_bound(150, 0.0) == 0.0

    def test_closed_form_values(self):
        # The formula z/(v-1+sqrt((v+1)^2+z^2)) at (150, 150); the true
        # ratio is 0.4144992..., and the surrogate sits just above it.
        assert specfun.ratio_lower_bound(150, 150.0) == pytest.approx(BOUND_150_150, rel=1e-15)
        assert specfun.ratio_lower_bound(2, 1.0) == pytest.approx(BOUND_2_1, rel=1e-15)

    def test_is_upper_bound_of_ratio(self):
        # i.e. -bound is a lower bound of the gradient -ratio, matching the
        # direction the approximation is used in.
        for v in (50.0, 150.0, 512.0):
            for z in np.geomspace(0.1 * v, 10 * v, 25):
                exact = specfun.bessel_ratio(v, float(z))
                bound = specfun.ratio_lower_bound(v, float(z))
                assert bound >= exact
                assert (bound - exact) / exact < 5e-3  # tight for large v

    def test_domain_error(self):
        with pytest.raises(ValueError):
            specfun.ratio_lower_bound(1.0, 5.0)


class TestLogCm:
    def test_closed_form_3d(self):
        assert specfun.log_cm(3, 1.0) == pytest.approx(LOG_CM_3_1, rel=1e-12)

    def test_uniform_limit(self):
        assert specfun.log_cm(3, 0.0) == pytest.approx(LOG_CM_3_0, rel=1e-12)

    def test_closed_form_3d_over_range(self):
        for kappa in np.geomspace(1e-4, 50, 60):
            expect = math.log(kappa / (4 * math.pi * math.sinh(kappa)))
            assert specfun.log_cm(3, float(kappa)) == pytest.approx(expect, rel=1e-10)

    def test_strictly_decreasing_in_kappa(self):
        assert specfun.log_cm(300, 10.0) > specfun.log_cm(300, 20.0)
        for m in (3, 10, 100, 300):
            ks = np.geomspace(1e-4, 1e4, 60)
            vals = specfun.log_cm(m, ks)
            assert np.all(np.diff(vals) < 0.0)

    @pytest.mark.parametrize("m", [10, 100, 300, 1000])
    def test_vs_series_oracle(self, m):
        for kappa in np.geomspace(1e-3, 1e4, 8):
            assert specfun.log_cm(m, float(kappa)) == pytest.approx(
                log_cm_mp(m, float(kappa)), rel=1e-9)

    def test_monte_carlo_normalization_3d(self):
        # integral over the 2-sphere of C_3(k) exp(k mu.x) must be 1
        r = np.random.Generator(np.random.PCG64(99))
        x = r.standard_normal((1_000_000, 3))
        x /= np.linalg.norm(x, axis=1, keepdims=True)
        mu = np.array([0.0, 0.0, 1.0])
        for kappa in (0.5, 2.0, 8.0):
            log_c = specfun.log_cm(3, kappa)
            dens = np.exp(log_c + kappa * (x @ mu))
            integral = dens.mean() * 4 * np.pi
            assert integral == pytest.approx(1.0, rel=0.01)

    def test_bound_mode_tracks_negated_log_cm(self):
        # The integrated surrogate has slope +ratio, so it follows
        # -log C_m up to an additive constant; bound-mode values are only
        # comparable to other bound-mode values.
        ks = np.array([10.0, 50.0, 100.0])
        f = specfun.log_cm(300, ks, CmEvalMode.BOUND)
        exact = specfun.log_cm(300, ks, CmEvalMode.EXACT)
        offsets = f + exact
        assert np.all(np.diff(f) > 0.0)      # increasing in kappa
        assert np.all(np.diff(exact) < 0.0)  # while log C_m decreases
        assert np.max(offsets) - np.min(offsets) < 1e-3 * np.abs(offsets).mean()

    def test_domain_error(self):
        with pytest.raises(ValueError):
            specfun.log_cm(1, 1.0)


class TestGradLogCm:
    def test_3d_value(self):
        assert specfun.grad_log_cm(3, 1.0) == pytest.approx(-RATIO_3HALPH_1, rel=1e-12)

    def test_zero_kappa(self):
        assert specfun.grad_log_cm(3, 0.0) == 0.0
        assert specfun.grad_log_cm(300, 0.0) == 0.0

    def test_range(self):
        for m in (3, 10, 300):
            for kappa in np.geomspace(1e-3, 1e3, 20):
                g = specfun.grad_log_cm(m, float(kappa))
                assert -1.0 < g <= 0.0

    @pytest.mark.parametrize("m", [3, 10, 300])
    def test_matches_finite_difference(self, m):
        # The FD oracle runs entirely in arbitrary precision: for m=300 at
        # small kappa, |log C_m| ~ 430 while the slope is ~1e-5, so any
        # float64 difference quotient is noise above the 1e-5 target.
        for kappa in np.geomspace(0.01, 1e3, 12):
            h = 1e-5 * max(1.0, kappa)
            fd = grad_log_cm_fd_mp(m, float(kappa), h)
            assert specfun.grad_log_cm(m, float(kappa)) == pytest.approx(fd, rel=1e-5)

    def test_bound_mode(self):
        assert specfun.grad_log_cm(300, 50.0, CmEvalMode.BOUND) == pytest.approx(
            -specfun.ratio_lower_bound(150, 50.0), rel=1e-15)


class TestVmfParams:
    def test_decomposition(self):
        p = specfun.VmfParams.from_output_vector(np.array([3.0, 0.0, 4.0]))
        assert p.kappa == pytest.approx(5.0)
        np.testing.assert_allclose(p.mu, [0.6, 0.0, 0.8])

    def test_invariants(self):
        with pytest.raises(ValueError):
            specfun.VmfParams(mu=np.array([1.0, 1.0]), kappa=1.0)
        with pytest.raises(ValueError):
            specfun.VmfParams(mu=np.array([1.0, 0.0]), kappa=-1.0)
        with pytest.raises(ValueError):
            specfun.VmfParams(mu=np.array([np.nan, 0.0]), kappa=1.0)
        with pytest.raises(ValueError):
            specfun.VmfParams.from_output_vector(np.zeros(3))


class TestAutoFallback:
    def test_switches_only_in_underflow_regime(self):
        # ln I_149(kappa) crosses -700 near kappa ~ 1 for m=300
        values, grads, used = specfun.log_cm_and_grad(300, np.array([0.5, 1.0, 5.0, 50.0]))
        log_i = np.array([specfun.log_bessel_i(149, k) for k in (0.5, 1.0, 5.0, 50.0)])
        assert np.array_equal(used, log_i < specfun.UNDERFLOW_LOG_THRESHOLD)
        assert used[0] and used[1] and not used[2] and not used[3]

    def test_exact_elements_match_exact_mode(self):
        ks = np.array([5.0, 50.0])
        values, grads, used = specfun.log_cm_and_grad(300, ks)
        assert not used.any()
        np.testing.assert_allclose(values, specfun.log_cm(300, ks), rtol=1e-14)
        np.testing.assert_allclose(grads, [specfun.grad_log_cm(300, float(k)) for k in ks], rtol=1e-12)

    def test_bound_elements_use_surrogate_consistently(self):
        values, grads, used = specfun.log_cm_and_grad(300, np.array([0.5]))
        assert used[0]
        assert values[0] == pytest.approx(specfun.log_cm(300, 0.5, CmEvalMode.BOUND), rel=1e-14)
        assert grads[0] == pytest.approx(specfun.grad_log_cm(300, 0.5, CmEvalMode.BOUND), rel=1e-14)

    def test_small_dims_never_fall_back(self):
        _, _, used = specfun.log_cm_and_grad(32, np.geomspace(1e-2, 1e2, 30))
        assert not used.any()
