"""The composite training objective.

Four terms: a horizon-decay-weighted L1 prediction loss, two intra-scale
consistency losses tying sibling branch expectations together (fine and
coarse), and a cross-scale consistency loss tying the pooled fine output
to the coarse output.  The weighted sum is what training backpropagates.

Array convention: per-window arrays are (C, T) with time on the last
axis; any leading batch axes are averaged over.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .transform import avgpool_downsample, pool_to_coarse


@dataclass(frozen=True)
class DecaySchedule:
    """Per-step weights for the prediction loss.

    theta[0] = 1 and theta decreases with the step index, so errors close
    to the lookback window cost more than distant ones.
    """

    theta: np.ndarray
    shape: float

    def __post_init__(self):
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=np.float64))


@dataclass
class LossBreakdown:
    """The four loss terms, their weights, and the weighted total."""

    prediction: object
    fine_consistency: object
    coarse_consistency: object
    cross_scale: object
    total: object
    alpha: float
    beta: float
    gamma: float

    def as_floats(self) -> "LossBreakdown":
        def value(x):
            return float(x.item()) if isinstance(x, Tensor) else float(x)

        return LossBreakdown(
            value(self.prediction), value(self.fine_consistency),
            value(self.coarse_consistency), value(self.cross_scale),
            value(self.total), self.alpha, self.beta, self.gamma,
        )


def theta_decay(horizon: int, shape: float = 1.0) -> DecaySchedule:
    """Arctangent decay: theta[i] = 1 - (2/pi) * atan(shape * i / horizon)."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if shape <= 0:
        raise ValueError("shape must be positive")
    i = np.arange(horizon, dtype=np.float64)
    theta = 1.0 - (2.0 / np.pi) * np.arctan(shape * i / horizon)
    return DecaySchedule(theta, shape)


def _wrap(x):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def _scalar(result: Tensor, *inputs):
    if any(isinstance(v, Tensor) for v in inputs):
        return result
    return float(result.item())


def prediction_loss(truth, pred, schedule: DecaySchedule):
    """Decay-weighted mean absolute error.

    (1 / (T * C)) * sum_t theta[t] * sum_c |truth - pred|, averaged over
    any leading batch axes.
    """
    t = _wrap(truth)
    p = _wrap(pred)
    if t.shape != p.shape:
        raise ValueError(f"shape mismatch: truth {t.shape}, pred {p.shape}")
    channels, horizon = t.shape[-2], t.shape[-1]
    if schedule.theta.shape[0] != horizon:
        raise ValueError("decay schedule length does not match horizon")
    theta = schedule.theta.astype(t.dtype, copy=False)
    weighted = (t - p).abs() * theta
    per_window = weighted.sum(axis=(-2, -1)) * (1.0 / (horizon * channels))
    return _scalar(per_window.mean(), truth, pred)


def consistency_loss(a, b, scale_factor: float):
    """Scaled squared L2 distance between sibling branch outputs.

    `scale_factor` is 1/(T*C) at the fine scale and k/(T*C) at the coarse
    scale; the sum runs over all steps and channels of one window, then
    leading batch axes are averaged.
    """
    if scale_factor <= 0:
        raise ValueError("scale_factor must be positive")
    x = _wrap(a)
    y = _wrap(b)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    diff = x - y
    per_window = (diff * diff).sum(axis=(-2, -1)) * scale_factor
    return _scalar(per_window.mean(), a, b)


def cross_scale_loss(coarse, fine_fused, k: int):
    """Consistency between the coarse output and the pooled fine output.

    The fine output is average-pooled by k (edge-padded first if k does
    not divide T) and compared to the coarse output under the same
    k/(T*C) scaling as the coarse consistency term.
    """
    c = _wrap(coarse)
    f = _wrap(fine_fused)
    horizon = f.shape[-1]
    channels = f.shape[-2]
    downsampled = pool_to_coarse(f, k)
    if downsampled.shape != c.shape:
        raise ValueError(
            f"coarse shape {c.shape} does not match pooled fine shape "
            f"{downsampled.shape}"
        )
    diff = c - downsampled
    per_window = (diff * diff).sum(axis=(-2, -1)) * (k / (horizon * channels))
    return _scalar(per_window.mean(), coarse, fine_fused)


def total_loss(prediction, fine_consistency, coarse_consistency, cross_scale,
               alpha: float, beta: float, gamma: float) -> LossBreakdown:
    """Weighted sum of the four terms.

    With all weights zero the total is exactly the prediction loss (the
    zero-weighted terms contribute exact float zeros).
    """
    if min(alpha, beta, gamma) < 0:
        raise ValueError("loss weights must be nonnegative")
    total = (prediction + alpha * _wrap(fine_consistency)
             + beta * _wrap(coarse_consistency) + gamma * _wrap(cross_scale))
    if not isinstance(prediction, Tensor):
        total = float(total.item())
    return LossBreakdown(prediction, fine_consistency, coarse_consistency,
                         cross_scale, total, alpha, beta, gamma)
