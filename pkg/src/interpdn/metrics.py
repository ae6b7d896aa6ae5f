"""Point and probabilistic forecast evaluation.

Point metrics are plain MSE/MAE.  Probabilistic metrics extract quantiles
from the merged two-branch discrete distribution and score them with the
quantile loss: wQL normalizes the summed quantile loss by the summed
absolute truth, and the CRPS approximation averages wQL over nine
quantile levels.  MASE scales point error by the lookback window's
seasonal-naive error.

Array convention: time on the last axis, channels on the second-to-last
axis; 1-D inputs are treated as a single channel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .probhead import MergedDistribution

CRPS_LEVELS = tuple(np.round(np.arange(1, 10) * 0.1, 1))
MASE_EPS = 1e-8
WQL_EPS = 1e-12


@dataclass
class MetricReport:
    """Aggregate evaluation of one model on one split."""

    dataset: str
    horizon: int
    mode: str
    mse: float
    mae: float
    mase: float
    crps: float | None = None
    per_channel: list = field(default_factory=list)
    num_windows: int = 0

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "horizon": self.horizon,
            "mode": self.mode,
            "mse": self.mse,
            "mae": self.mae,
            "crps": self.crps,
            "mase": self.mase,
            "num_windows": self.num_windows,
            "per_channel": self.per_channel,
        }


def _check_shapes(truth, pred):
    t = np.asarray(truth, dtype=np.float64)
    p = np.asarray(pred, dtype=np.float64)
    if t.shape != p.shape:
        raise ValueError(f"shape mismatch: truth {t.shape}, pred {p.shape}")
    return t, p


def mse(truth, pred) -> float:
    t, p = _check_shapes(truth, pred)
    return float(np.mean((t - p) ** 2))


def mae(truth, pred) -> float:
    t, p = _check_shapes(truth, pred)
    return float(np.mean(np.abs(t - p)))


def quantile_loss(q, y, alpha: float):
    """Pinball loss max(alpha * (y - q), (1 - alpha) * (q - y)); elementwise."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"quantile level must be in (0, 1), got {alpha}")
    q = np.asarray(q, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    out = np.maximum(alpha * (y - q), (1.0 - alpha) * (q - y))
    return float(out) if out.ndim == 0 else out


def quantile_from_distribution(merged: MergedDistribution, alpha: float):
    """Per-step quantiles of a discrete distribution by linear interpolation.

    Each support point anchors the CDF at the midpoint of its own mass
    step (cumulative mass before the point plus half its mass); the
    quantile interpolates linearly between adjacent anchors and clamps to
    the outermost points.  A point mass therefore returns its location at
    every level, and a uniform two-point distribution returns the grid
    midpoint at alpha = 0.5.  Zero-mass points are ignored.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"quantile level must be in (0, 1), got {alpha}")
    points = merged.points
    probs = np.asarray(merged.probs, dtype=np.float64)
    flat = probs.reshape(-1, probs.shape[-1])
    if np.any(flat <= 0.0):
        out = np.empty(flat.shape[0])
        for i, row in enumerate(flat):
            keep = row > 0.0
            out[i] = _quantile_row(points[keep], row[keep], alpha)
        return out.reshape(probs.shape[:-1])
    return _quantile_rows(points, flat, alpha).reshape(probs.shape[:-1])


def _quantile_row(points: np.ndarray, masses: np.ndarray, alpha: float) -> float:
    cum = np.cumsum(masses)
    anchors = cum - 0.5 * masses
    if alpha <= anchors[0]:
        return float(points[0])
    if alpha >= anchors[-1]:
        return float(points[-1])
    hi = int(np.searchsorted(anchors, alpha))
    lo = hi - 1
    t = (alpha - anchors[lo]) / (anchors[hi] - anchors[lo])
    return float(points[lo] + t * (points[hi] - points[lo]))


def _quantile_rows(points: np.ndarray, flat: np.ndarray, alpha: float) -> np.ndarray:
    cum = np.cumsum(flat, axis=-1)
    anchors = cum - 0.5 * flat
    hi = np.sum(anchors < alpha, axis=-1)
    hi = np.clip(hi, 1, points.size - 1)
    lo = hi - 1
    rows = np.arange(flat.shape[0])
    a_lo = anchors[rows, lo]
    a_hi = anchors[rows, hi]
    t = np.clip((alpha - a_lo) / np.maximum(a_hi - a_lo, 1e-300), 0.0, 1.0)
    return points[lo] + t * (points[hi] - points[lo])


def wql(predicted_quantiles, truth, alpha: float) -> float:
    """Weighted quantile loss: 2 * sum_t pinball / sum_t |truth| per channel.

    Sums run over the last (time) axis; the resulting per-channel (and
    per-window) ratios are averaged.  A vanishing denominator is guarded
    by a small epsilon with a warning-free clamp.
    """
    q = np.asarray(predicted_quantiles, dtype=np.float64)
    y = np.asarray(truth, dtype=np.float64)
    if q.shape != y.shape:
        raise ValueError(f"shape mismatch: quantiles {q.shape}, truth {y.shape}")
    losses = quantile_loss(q, y, alpha)
    num = 2.0 * np.sum(losses, axis=-1)
    den = np.sum(np.abs(y), axis=-1)
    ratios = num / np.maximum(den, WQL_EPS)
    return float(np.mean(ratios))


def crps_approx(merged: MergedDistribution, truth,
                levels=CRPS_LEVELS) -> float:
    """Discrete CRPS approximation: the mean of wQL over the given levels."""
    y = np.asarray(truth, dtype=np.float64)
    total = 0.0
    for alpha in levels:
        q = quantile_from_distribution(merged, alpha)
        total += wql(q, y, alpha)
    return total / len(levels)


def mase(truth, pred, lookback, seasonality: int) -> float:
    """Mean absolute scaled error against the in-window seasonal-naive error.

    Per channel: ((L - S) / T) * sum|pred - truth| over the horizon divided
    by sum|x[t + S] - x[t]| over the lookback, epsilon-guarded; channels
    (and any leading axes) are averaged.
    """
    t = np.atleast_2d(np.asarray(truth, dtype=np.float64))
    p = np.atleast_2d(np.asarray(pred, dtype=np.float64))
    lb = np.atleast_2d(np.asarray(lookback, dtype=np.float64))
    if t.shape != p.shape:
        raise ValueError(f"shape mismatch: truth {t.shape}, pred {p.shape}")
    L = lb.shape[-1]
    T = t.shape[-1]
    if L <= seasonality:
        raise ValueError(
            f"lookback length {L} must exceed seasonality {seasonality}"
        )
    num = np.sum(np.abs(p - t), axis=-1)
    den = np.sum(np.abs(lb[..., seasonality:] - lb[..., :L - seasonality]), axis=-1)
    # epsilon clamp (not addition) so healthy denominators are untouched
    scaled = ((L - seasonality) / T) * num / np.maximum(den, MASE_EPS)
    return float(np.mean(scaled))
