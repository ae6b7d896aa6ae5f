"""One branch's forward pass: seasonal and trend streams.

The seasonal stream patches the seasonal component, mixes information
across the patch-count axis with a linear block and a width-3 convolution,
merges the three signals residually, and decodes the flattened grid with a
two-layer MLP.  The trend stream is two linear blocks, each followed by
average pooling (factor 2) and layer normalization, with no activations.
The two stream outputs are concatenated trend-first into a 2T feature
vector.

A lighter alternative backbone applies a single linear map per stream to
the decomposed components, matching a plain decomposition-linear
forecaster lifted into the same branch interface.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, concat
from .transform import ema_decompose, patch, patch_count

LAYERNORM_EPS = 1e-5


def _uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def _param(data) -> Tensor:
    return Tensor(data, requires_grad=True)


@dataclass
class BranchParams:
    """Weights of one conv/MLP branch (shared across channels)."""

    # seasonal stream
    w_patch: Tensor     # (N, N) linear over the patch-count axis
    b_patch: Tensor     # (N,)
    conv_kernel: Tensor  # (3,) shared tap weights along the patch-count axis
    conv_bias: Tensor    # scalar
    w_dec1: Tensor      # (N * P, H)
    b_dec1: Tensor      # (H,)
    w_dec2: Tensor      # (H, T)
    b_dec2: Tensor      # (T,)
    # trend stream
    w_tr1: Tensor       # (L, 2T)
    b_tr1: Tensor       # (2T,)
    ln1_gamma: Tensor   # (T,)
    ln1_beta: Tensor    # (T,)
    w_tr2: Tensor       # (T, 2T)
    b_tr2: Tensor       # (2T,)
    ln2_gamma: Tensor   # (T,)
    ln2_beta: Tensor    # (T,)
    patch_len: int = 0
    patch_stride: int = 0

    def parameters(self):
        return [
            self.w_patch, self.b_patch, self.conv_kernel, self.conv_bias,
            self.w_dec1, self.b_dec1, self.w_dec2, self.b_dec2,
            self.w_tr1, self.b_tr1, self.ln1_gamma, self.ln1_beta,
            self.w_tr2, self.b_tr2, self.ln2_gamma, self.ln2_beta,
        ]

    def named_parameters(self):
        names = ["w_patch", "b_patch", "conv_kernel", "conv_bias",
                 "w_dec1", "b_dec1", "w_dec2", "b_dec2",
                 "w_tr1", "b_tr1", "ln1_gamma", "ln1_beta",
                 "w_tr2", "b_tr2", "ln2_gamma", "ln2_beta"]
        return list(zip(names, self.parameters()))


@dataclass
class DLinearBranchParams:
    """Single linear map per stream (alternative lightweight backbone)."""

    w_seasonal: Tensor  # (L, T)
    b_seasonal: Tensor  # (T,)
    w_trend: Tensor     # (L, T)
    b_trend: Tensor     # (T,)

    def parameters(self):
        return [self.w_seasonal, self.b_seasonal, self.w_trend, self.b_trend]

    def named_parameters(self):
        names = ["w_seasonal", "b_seasonal", "w_trend", "b_trend"]
        return list(zip(names, self.parameters()))


def init_branch_params(lookback: int, horizon: int, patch_len: int,
                       patch_stride: int, rng: np.random.Generator,
                       dtype=np.float32) -> BranchParams:
    """Deterministic branch initialization: weights uniform in
    [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero, norm affines identity."""
    n = patch_count(lookback, patch_len, patch_stride)
    hidden = 2 * horizon
    two_t = 2 * horizon
    return BranchParams(
        w_patch=_param(_uniform(rng, (n, n), n, dtype)),
        b_patch=_param(np.zeros(n, dtype=dtype)),
        conv_kernel=_param(_uniform(rng, (3,), 3, dtype)),
        conv_bias=_param(np.zeros((), dtype=dtype)),
        w_dec1=_param(_uniform(rng, (n * patch_len, hidden), n * patch_len, dtype)),
        b_dec1=_param(np.zeros(hidden, dtype=dtype)),
        w_dec2=_param(_uniform(rng, (hidden, horizon), hidden, dtype)),
        b_dec2=_param(np.zeros(horizon, dtype=dtype)),
        w_tr1=_param(_uniform(rng, (lookback, two_t), lookback, dtype)),
        b_tr1=_param(np.zeros(two_t, dtype=dtype)),
        ln1_gamma=_param(np.ones(horizon, dtype=dtype)),
        ln1_beta=_param(np.zeros(horizon, dtype=dtype)),
        w_tr2=_param(_uniform(rng, (horizon, two_t), horizon, dtype)),
        b_tr2=_param(np.zeros(two_t, dtype=dtype)),
        ln2_gamma=_param(np.ones(horizon, dtype=dtype)),
        ln2_beta=_param(np.zeros(horizon, dtype=dtype)),
        patch_len=patch_len,
        patch_stride=patch_stride,
    )


def init_dlinear_params(lookback: int, horizon: int, rng: np.random.Generator,
                        dtype=np.float32) -> DLinearBranchParams:
    return DLinearBranchParams(
        w_seasonal=_param(_uniform(rng, (lookback, horizon), lookback, dtype)),
        b_seasonal=_param(np.zeros(horizon, dtype=dtype)),
        w_trend=_param(_uniform(rng, (lookback, horizon), lookback, dtype)),
        b_trend=_param(np.zeros(horizon, dtype=dtype)),
    )


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor,
               eps: float = LAYERNORM_EPS) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    return centered * ((var + eps) ** -0.5) * gamma + beta


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def seasonal_forward(patches, params: BranchParams) -> Tensor:
    """Seasonal stream: patch mixing, width-3 conv, residual merge, MLP decode.

    `patches` is (..., N, P).  The linear block acts along the patch-count
    axis N (one weight matrix shared by all P positions), the convolution
    slides along N, and the residual merge sums input, linear output, and
    conv output before the flattened grid is decoded to T values.
    """
    grid = _as_tensor(patches.values if hasattr(patches, "values") else patches)
    n = params.w_patch.shape[0]
    if grid.shape[-2] != n:
        raise ValueError(f"expected {n} patches, got {grid.shape[-2]}")
    transposed = grid.swapaxes(-1, -2)                      # (..., P, N)
    y_lin = (transposed @ params.w_patch + params.b_patch).gelu()
    y_conv = y_lin.conv3_same(params.conv_kernel, params.conv_bias)
    merged = transposed + y_lin + y_conv                     # (..., P, N)
    flat = merged.reshape(merged.shape[:-2] + (merged.shape[-2] * merged.shape[-1],))
    hidden = (flat @ params.w_dec1 + params.b_dec1).gelu()
    return hidden @ params.w_dec2 + params.b_dec2            # (..., T)


def trend_forward(trend, params: BranchParams) -> Tensor:
    """Trend stream: two (linear -> pool-by-2 -> layer norm) blocks, linear only."""
    x = _as_tensor(trend)
    if x.shape[-1] != params.w_tr1.shape[0]:
        raise ValueError(
            f"trend length {x.shape[-1]} does not match weights "
            f"({params.w_tr1.shape[0]})"
        )
    h = (x @ params.w_tr1 + params.b_tr1).avgpool_last(2)
    h = layer_norm(h, params.ln1_gamma, params.ln1_beta)
    h = (h @ params.w_tr2 + params.b_tr2).avgpool_last(2)
    return layer_norm(h, params.ln2_gamma, params.ln2_beta)


def branch_forward(lookback, params: BranchParams, ema_alpha: float) -> Tensor:
    """Full branch: decompose, run both streams, concatenate trend-first.

    Output is (..., 2T): the first T entries come from the trend stream,
    the last T from the seasonal stream.
    """
    x = _as_tensor(lookback)
    parts = ema_decompose(x, ema_alpha)
    patches = patch(parts.seasonal, params.patch_len, params.patch_stride)
    seasonal_out = seasonal_forward(patches, params)
    trend_out = trend_forward(parts.trend, params)
    return concat([trend_out, seasonal_out], axis=-1)


def dlinear_branch_forward(lookback, params: DLinearBranchParams,
                           ema_alpha: float) -> Tensor:
    """Alternative branch: one linear map per decomposed component."""
    x = _as_tensor(lookback)
    parts = ema_decompose(x, ema_alpha)
    trend_out = parts.trend @ params.w_trend + params.b_trend
    seasonal_out = parts.seasonal @ params.w_seasonal + params.b_seasonal
    return concat([trend_out, seasonal_out], axis=-1)
