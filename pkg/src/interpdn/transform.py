"""Deterministic tensor shaping between raw windows and the backbone.

Covers per-instance reversible normalization, exponential-moving-average
season/trend splitting, overlapping patch extraction, and average-pool
downsampling.  Everything here is pure; the only learnable quantities
(the per-channel normalization affine) live in the model parameters and
are passed in explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, pad_last_edge

REVIN_EPS = 1e-5


@dataclass
class RevinStats:
    """Per-instance normalization statistics, computed on the lookback only.

    mean/std broadcast against (..., length) arrays; std is the population
    standard deviation.  eps keeps constant windows finite.
    """

    mean: np.ndarray
    std: np.ndarray
    eps: float = REVIN_EPS


@dataclass
class PatchGrid:
    """Overlapping length-P windows of a sequence at stride S_t."""

    values: np.ndarray
    patch_len: int
    stride: int

    @property
    def count(self) -> int:
        return self.values.shape[-2]


@dataclass
class Decomposition:
    trend: np.ndarray
    seasonal: np.ndarray
    ema_alpha: float


def _data(x):
    return x.data if isinstance(x, Tensor) else np.asarray(x)


def revin_normalize(window, scale, shift, eps: float = REVIN_EPS):
    """Instance-normalize along the last axis with a learnable affine.

    Returns ``(scale * (x - mean) / (std + eps) + shift, stats)``.  The
    statistics are plain numbers derived from the input window, so
    gradients flow only through the affine (and the window if it is a
    gradient-tracked Tensor).
    """
    raw = _data(window)
    if raw.shape[-1] < 1:
        raise ValueError("empty window")
    mean = raw.mean(axis=-1, keepdims=True)
    std = raw.std(axis=-1, keepdims=True)
    stats = RevinStats(mean, std, eps)
    x = window if isinstance(window, Tensor) else Tensor(raw)
    out = (x - mean) * (1.0 / (std + eps)) * scale + shift
    keep_tensor = any(isinstance(v, Tensor) for v in (window, scale, shift))
    return (out if keep_tensor else out.data), stats


def revin_denormalize(series, stats: RevinStats, scale, shift):
    """Exact inverse of :func:`revin_normalize` for matching stats/affine."""
    y = series if isinstance(series, Tensor) else Tensor(np.asarray(series))
    restored = (y - shift) / scale * (stats.std + stats.eps) + stats.mean
    if isinstance(series, Tensor) or isinstance(scale, Tensor) or isinstance(shift, Tensor):
        return restored
    return restored.data


def ema_decompose(x, alpha: float) -> Decomposition:
    """Split a sequence into an EMA trend and the seasonal residual.

    trend[0] = x[0]; trend[t] = alpha * x[t] + (1 - alpha) * trend[t - 1];
    seasonal = x - trend, so the parts always sum back to the input.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"ema alpha must be in (0, 1], got {alpha}")
    if isinstance(x, Tensor):
        trend = x.ema_last(alpha)
        return Decomposition(trend, x - trend, alpha)
    arr = np.asarray(x, dtype=np.float64)
    trend = Tensor(arr).ema_last(alpha).data
    return Decomposition(trend, arr - trend, alpha)


def patch_count(length: int, patch_len: int, stride: int) -> int:
    """Number of patches: floor((L - P) / S_t) + 2 (end is pad-replicated)."""
    if patch_len > length:
        raise ValueError(f"patch length {patch_len} exceeds sequence length {length}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    return (length - patch_len) // stride + 2


def patch_index(length: int, patch_len: int, stride: int) -> np.ndarray:
    """(N, P) gather index into the sequence padded by `stride` end copies."""
    n = patch_count(length, patch_len, stride)
    starts = np.arange(n) * stride
    return starts[:, None] + np.arange(patch_len)[None, :]


def patch(x, patch_len: int, stride: int):
    """Slice a sequence into overlapping patches after end-replication padding.

    The final value is repeated `stride` times so the last patch lines up
    with the +2 in the patch-count formula.  Returns a PatchGrid for plain
    arrays, or a Tensor of shape (..., N, P) when given a Tensor.
    """
    length = _data(x).shape[-1]
    idx = patch_index(length, patch_len, stride)
    if isinstance(x, Tensor):
        return pad_last_edge(x, stride).take_last(idx)
    arr = np.asarray(x)
    padded = np.concatenate(
        [arr, np.repeat(arr[..., -1:], stride, axis=-1)], axis=-1
    )
    return PatchGrid(padded[..., idx], patch_len, stride)


def avgpool_downsample(x, k: int):
    """Mean over consecutive blocks of k along the last axis (k must divide it)."""
    if k < 1:
        raise ValueError("pool factor must be >= 1")
    if isinstance(x, Tensor):
        return x.avgpool_last(k)
    arr = np.asarray(x)
    n = arr.shape[-1]
    if n % k != 0:
        raise ValueError(f"pool factor {k} does not divide axis length {n}")
    return arr.reshape(arr.shape[:-1] + (n // k, k)).mean(axis=-1)


def coarse_len(horizon: int, k: int) -> int:
    """Length of the coarse sequence: ceil(T / k)."""
    return -(-horizon // k)


def pool_to_coarse(x, k: int):
    """Downsample to ceil(T / k) steps, edge-padding first when k does not divide T."""
    n = _data(x).shape[-1]
    remainder = (-n) % k
    if remainder:
        x = pad_last_edge(x, remainder) if isinstance(x, Tensor) else np.concatenate(
            [np.asarray(x), np.repeat(np.asarray(x)[..., -1:], remainder, axis=-1)],
            axis=-1,
        )
    return avgpool_downsample(x, k)
