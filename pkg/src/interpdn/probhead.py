"""Support sets and per-step discrete probability distributions.

A forecast step is represented as a categorical distribution over a fixed,
sorted grid of real values (the support set).  The point prediction is the
expectation of that distribution.  Two branches carry distributions over
interleaved grids; their expectations are fused by per-step confidence
weights, and the two distributions can be merged onto the union grid for
probabilistic evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .autodiff import Tensor

EQUAL_PROBABILITY = "equal_probability"
UNIFORM = "uniform"
INTERLEAVED = "interleaved"

_BISECT_TOL = 1e-12


@dataclass(frozen=True)
class SupportSet:
    """Sorted grid of support values on [-boundary, boundary].

    ``partition`` holds the cell breakpoints the points were derived from
    (length ``len(points) + 1``); it is None for interleaved sets, which
    are built from another set's points rather than from cells.
    """

    points: np.ndarray
    boundary: float
    flavor: str
    partition: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        object.__setattr__(self, "points", pts)
        if pts.size < 2:
            raise ValueError("a support set needs at least 2 points")
        if np.any(np.diff(pts) <= 0):
            raise ValueError("support points must be strictly increasing")
        if self.boundary <= 0:
            raise ValueError("boundary must be positive")
        if np.any(np.abs(pts) > self.boundary + 1e-12):
            raise ValueError("support points must lie within [-B, B]")

    @property
    def size(self) -> int:
        return int(self.points.size)

    def cell_masses(self) -> np.ndarray | None:
        """Truncated-standard-normal probability of each partition cell."""
        if self.partition is None:
            return None
        cdf = ndtr(self.partition)
        total = cdf[-1] - cdf[0]
        return np.diff(cdf) / total


def _invert_normal_cdf(target: float, lo: float, hi: float) -> float:
    """Solve ndtr(x) == target on [lo, hi] by bisection."""
    while hi - lo > _BISECT_TOL:
        mid = 0.5 * (lo + hi)
        if ndtr(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def build_support_set(size: int, boundary: float) -> SupportSet:
    """Equal-probability support set.

    [-B, B] is partitioned into `size` cells of equal standard-normal mass
    (mass measured by the normal CDF restricted to [-B, B]); the support
    points are the midpoints of adjacent breakpoints.  Normalized data
    clusters near 0, so cells are narrow there and wide near the boundary.
    """
    if size < 2:
        raise ValueError("support size must be >= 2")
    if boundary <= 0:
        raise ValueError("boundary must be positive")
    lo_cdf = ndtr(-boundary)
    hi_cdf = ndtr(boundary)
    breakpoints = np.empty(size + 1)
    breakpoints[0] = -boundary
    breakpoints[-1] = boundary
    for j in range(1, size):
        target = lo_cdf + (j / size) * (hi_cdf - lo_cdf)
        breakpoints[j] = _invert_normal_cdf(target, -boundary, boundary)
    points = 0.5 * (breakpoints[:-1] + breakpoints[1:])
    return SupportSet(points, boundary, EQUAL_PROBABILITY, breakpoints)


def build_uniform_support_set(size: int, boundary: float) -> SupportSet:
    """Support points at the midpoints of `size` equal-width cells."""
    if size < 2:
        raise ValueError("support size must be >= 2")
    if boundary <= 0:
        raise ValueError("boundary must be positive")
    breakpoints = np.linspace(-boundary, boundary, size + 1)
    points = 0.5 * (breakpoints[:-1] + breakpoints[1:])
    return SupportSet(points, boundary, UNIFORM, breakpoints)


def build_interleaved_set(sp1: SupportSet, boundary: float,
                          boundary_side: str = "high") -> SupportSet:
    """Second grid sitting between the first grid's points.

    Takes the midpoints of adjacent points of `sp1` and appends one
    boundary point (+B by default, -B with ``boundary_side="low"``), so the
    result has the same cardinality as `sp1`.
    """
    mids = 0.5 * (sp1.points[:-1] + sp1.points[1:])
    if boundary_side == "high":
        extra = boundary
    elif boundary_side == "low":
        extra = -boundary
    else:
        raise ValueError("boundary_side must be 'high' or 'low'")
    points = np.sort(np.append(mids, extra))
    return SupportSet(points, boundary, INTERLEAVED, None)


@dataclass
class FusionResult:
    """Confidence-weighted combination of two branch expectations.

    ``fused[t] = w[t] * expectation1[t] + (1 - w[t]) * expectation2[t]``
    with ``w = conf1 / (conf1 + conf2)`` and each confidence the maximum
    probability of the branch's per-step distribution.
    """

    fused: object
    weights: object
    expectation1: object
    expectation2: object
    confidence1: object
    confidence2: object


@dataclass
class MergedDistribution:
    """Two weighted branch distributions placed on the union grid.

    ``points`` is the sorted union of the two support grids (duplicates
    summed); ``probs`` has the distribution rows along the last axis.
    """

    points: np.ndarray
    probs: np.ndarray


def _wrap(value):
    return value if isinstance(value, Tensor) else Tensor(np.asarray(value))


def _unwrap_like(result: Tensor, *inputs):
    if any(isinstance(v, Tensor) for v in inputs):
        return result
    return result.data


def project_distribution(features, weight, bias, steps: int, size: int):
    """Linear head + reshape + per-step softmax.

    `features` has shape (..., F); the head maps F -> steps * size, the
    result is reshaped to (..., steps, size) and normalized along the last
    axis.  Accepts Tensors (gradients flow) or plain arrays.
    """
    f = _wrap(features)
    w = _wrap(weight)
    b = _wrap(bias)
    if w.shape != (f.shape[-1], steps * size):
        raise ValueError(
            f"head weight shape {w.shape} does not map "
            f"{f.shape[-1]} -> {steps * size}"
        )
    logits = f @ w + b
    probs = logits.reshape(logits.shape[:-1] + (steps, size)).softmax()
    return _unwrap_like(probs, features, weight, bias)


def expectation(probs, support: SupportSet):
    """Per-step expectation: dot product of each probability row with the grid."""
    p = _wrap(probs)
    if p.shape[-1] != support.size:
        raise ValueError(
            f"distribution has {p.shape[-1]} columns, support has {support.size}"
        )
    points = support.points.astype(p.dtype, copy=False)
    out = (p * points).sum(axis=-1)
    return _unwrap_like(out, probs)


def confidence_fusion(dist1, dist2, sp1: SupportSet, sp2: SupportSet) -> FusionResult:
    """Fuse two branch distributions by maximum per-step probability.

    The per-step weight is ``e1 / (e1 + e2)`` where ``e_b`` is branch b's
    highest probability at that step, so the more confident branch
    dominates the fused expectation.
    """
    d1 = _wrap(dist1)
    d2 = _wrap(dist2)
    if d1.shape[:-1] != d2.shape[:-1]:
        raise ValueError("branch distributions disagree on step dimensions")
    x1 = (d1 * sp1.points.astype(d1.dtype, copy=False)).sum(axis=-1)
    x2 = (d2 * sp2.points.astype(d2.dtype, copy=False)).sum(axis=-1)
    e1 = d1.max_last()
    e2 = d2.max_last()
    w = e1 / (e1 + e2)
    fused = w * x1 + (1.0 - w) * x2
    if isinstance(dist1, Tensor) or isinstance(dist2, Tensor):
        return FusionResult(fused, w, x1, x2, e1, e2)
    return FusionResult(fused.data, w.data, x1.data, x2.data, e1.data, e2.data)


def merge_distributions(dist1, dist2, weights, sp1: SupportSet, sp2: SupportSet,
                        use_softmax: bool = False) -> MergedDistribution:
    """Combine two branch distributions onto the union of their grids.

    Per step, branch 1's row is scaled by w and branch 2's by (1 - w); the
    scaled masses are placed at their own support points and sorted.  Rows
    are then renormalized to sum to one (their sum is already 1 up to
    rounding).  With ``use_softmax=True`` a literal softmax over the
    weighted masses replaces the renormalization.

    Evaluation-side only: operates on plain arrays, no gradients.
    """
    d1 = np.asarray(dist1.data if isinstance(dist1, Tensor) else dist1, dtype=np.float64)
    d2 = np.asarray(dist2.data if isinstance(dist2, Tensor) else dist2, dtype=np.float64)
    w = np.asarray(weights.data if isinstance(weights, Tensor) else weights, dtype=np.float64)
    scaled1 = w[..., None] * d1
    scaled2 = (1.0 - w)[..., None] * d2
    raw_points = np.concatenate([sp1.points, sp2.points])
    raw_probs = np.concatenate([scaled1, scaled2], axis=-1)
    uniq, inverse = np.unique(raw_points, return_inverse=True)
    probs = np.zeros(raw_probs.shape[:-1] + (uniq.size,))
    for col, target in enumerate(inverse):
        probs[..., target] += raw_probs[..., col]
    if use_softmax:
        shifted = probs - probs.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        probs = e / e.sum(axis=-1, keepdims=True)
    else:
        probs = probs / probs.sum(axis=-1, keepdims=True)
    return MergedDistribution(uniq, probs)


def validate_distribution(probs, atol: float = 1e-6) -> None:
    """Raise if any row is negative or does not sum to one."""
    p = np.asarray(probs.data if isinstance(probs, Tensor) else probs)
    if np.any(p < -atol):
        raise ValueError("distribution has negative entries")
    sums = p.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > atol):
        raise ValueError("distribution rows must sum to 1")
