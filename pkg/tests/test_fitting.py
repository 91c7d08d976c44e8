"""Tests for the shared elicited-data fitting pipeline."""

from __future__ import annotations

import math

import numpy as np
import pytest

from recovr.errors import InsufficientDataError, RangeError
from recovr.fitting import (
    LENGTH_SCALE_CAP_SPACINGS,
    NOISE_VAR_FLOOR,
    FitSettings,
    fit_elicited,
    mean_abs_secant_slope,
)
from recovr.gpr import ConstraintSet

# a plausible aggregated elicitation: interior taus, monotone levels
POINTS = np.array(
    [
        [0.05, 0.10],
        [0.18, 0.30],
        [0.42, 0.50],
        [0.66, 0.70],
        [0.95, 0.90],
    ]
)

FAST = FitSettings(knot_count=10, n_samples=80, grid_size=41)


def fast_settings(**overrides) -> FitSettings:
    base = dict(knot_count=10, n_samples=80, grid_size=41)
    base.update(overrides)
    return FitSettings(**base)


class TestSettings:
    def test_default_length_scale_bound_is_knot_spacing_rule(self):
        s = FitSettings(knot_count=30)
        assert s.length_scale_bound == pytest.approx(
            LENGTH_SCALE_CAP_SPACINGS / 29.0
        )

    def test_explicit_max_length_scale_wins(self):
        s = FitSettings(knot_count=30, max_length_scale=0.8)
        assert s.length_scale_bound == 0.8

    def test_rejects_unknown_noise_policy(self):
        with pytest.raises(RangeError):
            FitSettings(noise_policy="guesswork")

    def test_rejects_degenerate_sampling_settings(self):
        with pytest.raises(RangeError):
            FitSettings(n_samples=0)
        with pytest.raises(RangeError):
            FitSettings(grid_size=1)


class TestSlopeMapping:
    def test_mean_abs_secant_slope_even(self):
        pts = np.array([[0.0, 0.1], [0.5, 0.5], [1.0, 0.9]])
        # both secants rise 0.4 over 0.5
        assert mean_abs_secant_slope(pts) == pytest.approx(0.8)

    def test_mean_abs_secant_slope_uneven(self):
        pts = np.array([[0.0, 0.1], [0.2, 0.5], [1.0, 0.9]])
        # slopes 2.0 and 0.5, averaged
        assert mean_abs_secant_slope(pts) == pytest.approx(1.25)

    def test_all_coincident_taus_rejected(self):
        pts = np.array([[0.3, 0.1], [0.3, 0.5]])
        with pytest.raises(RangeError):
            mean_abs_secant_slope(pts)


class TestNoisePolicies:
    def test_pooled_pins_noise_via_slope_mapping(self):
        sigma_tau = 0.05
        out = fit_elicited(POINTS, sigma_tau=sigma_tau, settings=FAST, seed=3)
        expected_sigma_level = sigma_tau * mean_abs_secant_slope(POINTS)
        assert out.noise_source == "pooled"
        assert out.sigma_tau == pytest.approx(sigma_tau)
        assert out.sigma_level == pytest.approx(expected_sigma_level)
        assert out.params.noise_variance == pytest.approx(
            expected_sigma_level**2
        )

    def test_pooled_zero_spread_floors_noise(self):
        out = fit_elicited(POINTS, sigma_tau=0.0, settings=FAST, seed=3)
        assert out.sigma_level == 0.0
        assert out.params.noise_variance == NOISE_VAR_FLOOR

    def test_pooled_without_spread_is_an_error(self):
        with pytest.raises(InsufficientDataError) as exc_info:
            fit_elicited(POINTS, sigma_tau=None, settings=FAST)
        assert exc_info.value.code == "insufficient_experts"

    def test_ml_policy_fits_noise_from_data(self):
        settings = fast_settings(noise_policy="ml")
        out = fit_elicited(POINTS, settings=settings, seed=3)
        assert out.noise_source == "ml"
        assert out.sigma_tau is None and out.sigma_level is None
        assert math.isfinite(out.params.noise_variance)
        assert out.params.noise_variance >= 0.0


class TestAnchoring:
    def test_anchors_added_at_both_ends(self):
        out = fit_elicited(POINTS, sigma_tau=0.02, top_level=0.9,
                           settings=FAST, seed=0)
        assert len(out.train) == len(POINTS) + 2
        assert out.train[0] == (0.0, 0.10)
        assert out.train[-1] == (1.0, 0.9)
        # interior rows are the original points, in order
        assert np.allclose(np.asarray(out.train[1:-1]), POINTS)

    def test_no_duplicate_anchor_when_ends_present(self):
        pts = np.vstack([[0.0, 0.10], POINTS[1:-1], [1.0, 0.90]])
        out = fit_elicited(pts, sigma_tau=0.02, settings=FAST, seed=0)
        assert len(out.train) == len(pts)

    def test_anchor_flag_off_keeps_points_verbatim(self):
        settings = fast_settings(anchor=False)
        out = fit_elicited(POINTS, sigma_tau=0.02, settings=settings, seed=0)
        assert np.allclose(np.asarray(out.train), POINTS)


class TestValidation:
    def test_too_few_points(self):
        with pytest.raises(RangeError):
            fit_elicited([[0.5, 0.5]], sigma_tau=0.01, settings=FAST)

    def test_decreasing_taus(self):
        with pytest.raises(RangeError):
            fit_elicited([[0.5, 0.3], [0.4, 0.5]], sigma_tau=0.01,
                         settings=FAST)

    def test_decreasing_levels(self):
        with pytest.raises(RangeError):
            fit_elicited([[0.2, 0.5], [0.6, 0.3]], sigma_tau=0.01,
                         settings=FAST)

    def test_tau_out_of_range(self):
        with pytest.raises(RangeError):
            fit_elicited([[0.2, 0.3], [1.4, 0.5]], sigma_tau=0.01,
                         settings=FAST)

    def test_level_out_of_range(self):
        with pytest.raises(RangeError):
            fit_elicited([[0.2, 0.3], [0.6, 1.2]], sigma_tau=0.01,
                         settings=FAST)

    def test_last_level_above_top_level(self):
        with pytest.raises(RangeError):
            fit_elicited([[0.2, 0.3], [0.6, 0.95]], sigma_tau=0.01,
                         top_level=0.9, settings=FAST)

    def test_bad_top_level(self):
        with pytest.raises(RangeError):
            fit_elicited(POINTS, sigma_tau=0.01, top_level=0.0,
                         settings=FAST)


class TestFitBehavior:
    def test_length_scale_cap_respected(self):
        settings = fast_settings(knot_count=20)
        out = fit_elicited(POINTS, sigma_tau=0.02, settings=settings, seed=1)
        assert out.params.length_scale <= settings.length_scale_bound + 1e-9

    def test_uncapped_search_allowed(self):
        settings = fast_settings(max_length_scale=math.inf)
        out = fit_elicited(POINTS, sigma_tau=0.02, settings=settings, seed=1)
        assert math.isfinite(out.params.length_scale)
        assert out.params.length_scale > 0.0

    def test_same_seed_reproduces_bitwise(self):
        a = fit_elicited(POINTS, sigma_tau=0.02, settings=FAST, seed=11)
        b = fit_elicited(POINTS, sigma_tau=0.02, settings=FAST, seed=11)
        assert a.params == b.params
        assert np.array_equal(a.summary.mean, b.summary.mean)
        assert np.array_equal(a.summary.samples, b.summary.samples)

    def test_different_seeds_differ(self):
        a = fit_elicited(POINTS, sigma_tau=0.02, settings=FAST, seed=11)
        b = fit_elicited(POINTS, sigma_tau=0.02, settings=FAST, seed=12)
        assert not np.array_equal(a.summary.samples, b.summary.samples)

    def test_grid_override(self):
        grid = np.linspace(0.0, 1.0, 17)
        out = fit_elicited(POINTS, sigma_tau=0.02, settings=FAST, seed=0,
                           grid=grid)
        assert out.summary.grid.shape == (17,)
        assert np.allclose(out.summary.grid, grid)

    def test_default_constraints_hold_on_samples(self):
        out = fit_elicited(POINTS, sigma_tau=0.02, settings=FAST, seed=5)
        samples = out.summary.samples
        assert samples is not None
        assert np.all(np.diff(samples, axis=1) >= -1e-10)
        assert samples.min() >= -1e-10 and samples.max() <= 1.0 + 1e-10

    def test_constraints_off_supported(self):
        settings = fast_settings(
            constraints=ConstraintSet(monotone=False, bounded=False)
        )
        out = fit_elicited(POINTS, sigma_tau=0.02, settings=settings, seed=5)
        assert out.model.constraints.monotone is False
        assert out.summary.mean.shape == out.summary.grid.shape

    def test_outcome_carries_model_and_settings_links(self):
        settings = FAST
        out = fit_elicited(POINTS, sigma_tau=0.02, settings=settings, seed=2)
        assert out.model.params == out.params
        assert out.model.basis.size == settings.knot_count
        assert all(len(row) == 2 for row in out.train)
