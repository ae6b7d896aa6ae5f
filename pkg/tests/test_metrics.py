"""Metric identities and hand-computed values."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from interpdn.metrics import (
    CRPS_LEVELS,
    crps_approx,
    mae,
    mase,
    mse,
    quantile_from_distribution,
    quantile_loss,
    wql,
)
from interpdn.probhead import MergedDistribution


class TestPointMetrics:
    def test_perfect(self):
        x = np.random.default_rng(0).normal(size=(3, 4))
        assert mse(x, x.copy()) == 0.0
        assert mae(x, x.copy()) == 0.0

    def test_unit_error(self):
        assert mse([0.0, 0.0], [1.0, 1.0]) == 1.0
        assert mae([0.0, 0.0], [1.0, 1.0]) == 1.0

    def test_hand_values(self):
        assert mse([0.0, 2.0], [1.0, 0.0]) == 2.5
        assert mae([0.0, 2.0], [1.0, 0.0]) == 1.5

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            mse(np.zeros(3), np.zeros(4))


class TestQuantileLoss:
    def test_zero_at_truth(self):
        assert quantile_loss(2.0, 2.0, 0.3) == 0.0

    def test_median_is_half_abs(self):
        for q, y in [(0.0, 1.0), (3.0, -2.0), (1.5, 1.0)]:
            assert quantile_loss(q, y, 0.5) == 0.5 * abs(y - q)

    def test_asymmetric(self):
        assert quantile_loss(0.0, 1.0, 0.9) == 0.9

    def test_level_bounds(self):
        with pytest.raises(ValueError):
            quantile_loss(0.0, 1.0, 0.0)
        with pytest.raises(ValueError):
            quantile_loss(0.0, 1.0, 1.0)


class TestQuantileFromDistribution:
    def test_point_mass(self):
        merged = MergedDistribution(
            np.array([-1.0, 0.5, 2.0]), np.array([[0.0, 1.0, 0.0]]))
        for alpha in CRPS_LEVELS:
            np.testing.assert_allclose(
                quantile_from_distribution(merged, alpha), [0.5])

    def test_two_point_uniform_median(self):
        merged = MergedDistribution(np.array([-2.0, 2.0]),
                                    np.array([[0.5, 0.5]]))
        np.testing.assert_allclose(
            quantile_from_distribution(merged, 0.5), [0.0])

    def test_clamps_below_first_anchor(self):
        merged = MergedDistribution(np.array([-2.0, 2.0]),
                                    np.array([[0.5, 0.5]]))
        np.testing.assert_allclose(
            quantile_from_distribution(merged, 0.2), [-2.0])
        np.testing.assert_allclose(
            quantile_from_distribution(merged, 0.8), [2.0])

    @given(st.integers(0, 2000))
    @settings(max_examples=50, deadline=None)
    def test_monotone_across_levels(self, seed):
        rng = np.random.default_rng(seed)
        points = np.sort(rng.normal(size=8))
        while np.any(np.diff(points) == 0):
            points = np.sort(rng.normal(size=8))
        raw = rng.uniform(size=(3, 8))
        probs = raw / raw.sum(-1, keepdims=True)
        merged = MergedDistribution(points, probs)
        qs = np.stack([quantile_from_distribution(merged, a)
                       for a in CRPS_LEVELS])
        assert np.all(np.diff(qs, axis=0) >= -1e-12)

    def test_bounds_within_support(self):
        rng = np.random.default_rng(7)
        points = np.sort(rng.normal(size=6))
        raw = rng.uniform(size=(10, 6))
        merged = MergedDistribution(points, raw / raw.sum(-1, keepdims=True))
        for alpha in (0.1, 0.5, 0.9):
            q = quantile_from_distribution(merged, alpha)
            assert np.all(q >= points[0]) and np.all(q <= points[-1])


class TestWql:
    def test_perfect_quantiles(self):
        y = np.array([1.0, -2.0, 3.0])
        assert wql(y, y.copy(), 0.3) == 0.0

    def test_median_identity(self):
        rng = np.random.default_rng(1)
        q = rng.normal(size=(2, 6))
        y = rng.normal(size=(2, 6))
        expected = np.mean(np.abs(y - q).sum(-1) / np.abs(y).sum(-1))
        np.testing.assert_allclose(wql(q, y, 0.5), expected, atol=1e-9)

    def test_hand_value(self):
        np.testing.assert_allclose(
            wql(np.array([0.0, 0.0]), np.array([1.0, 1.0]), 0.9),
            2 * (0.9 + 0.9) / 2)

    def test_zero_truth_guarded(self):
        out = wql(np.array([1.0, 1.0]), np.zeros(2), 0.5)
        assert np.isfinite(out)


class TestCrps:
    def test_point_mass_at_truth_is_zero(self):
        merged = MergedDistribution(
            np.array([-1.0, 0.25, 3.0]),
            np.tile(np.array([[0.0, 1.0, 0.0]]), (4, 1)))
        truth = np.full(4, 0.25)
        assert crps_approx(merged, truth) == 0.0

    def test_uses_nine_levels(self):
        assert len(CRPS_LEVELS) == 9
        np.testing.assert_allclose(CRPS_LEVELS, np.arange(1, 10) / 10)

    def test_two_point_toy_matches_nine_term_sum(self):
        # closed-form quantiles of {-2: 0.25, 2: 0.75} under midpoint anchors
        merged = MergedDistribution(np.array([-2.0, 2.0]),
                                    np.tile([[0.25, 0.75]], (3, 1)))
        truth = np.array([0.5, -1.0, 2.0])

        def closed_form_quantile(alpha):
            a0, a1 = 0.125, 0.625
            if alpha <= a0:
                return -2.0
            if alpha >= a1:
                return 2.0
            return -2.0 + (alpha - a0) / (a1 - a0) * 4.0

        total = 0.0
        for alpha in CRPS_LEVELS:
            q = closed_form_quantile(alpha)
            pinball = np.maximum(alpha * (truth - q), (1 - alpha) * (q - truth))
            total += 2 * pinball.sum() / np.abs(truth).sum()
        expected = total / 9.0
        np.testing.assert_allclose(crps_approx(merged, truth), expected,
                                   atol=1e-12)


class TestMase:
    def test_perfect_prediction(self):
        lookback = np.array([0.0, 1.0, 0.0, 1.0])
        assert mase([0.0, 1.0], [0.0, 1.0], lookback, 1) == 0.0

    def test_constant_lookback_finite(self):
        value = mase([0.0, 1.0], [1.0, 0.0], np.zeros(8), 1)
        assert np.isfinite(value) and value > 1e6

    def test_hand_example_exact(self):
        lookback = np.array([0.0, 1.0, 0.0, 1.0])
        truth = np.array([0.0, 1.0])
        pred = np.array([1.0, 0.0])
        assert mase(truth, pred, lookback, 1) == 1.0

    def test_scale_invariance(self):
        rng = np.random.default_rng(2)
        lookback = rng.normal(size=(2, 30))
        truth = rng.normal(size=(2, 5))
        pred = rng.normal(size=(2, 5))
        base = mase(truth, pred, lookback, 3)
        scaled = mase(truth * 100, pred * 100, lookback * 100, 3)
        np.testing.assert_allclose(base, scaled, rtol=1e-6)

    def test_requires_lookback_longer_than_season(self):
        with pytest.raises(ValueError):
            mase([0.0], [1.0], np.zeros(4), 4)
