"""Four-branch model assembly and the mode-dependent forward pass.

The full architecture runs two branches whose distribution heads live on
interleaved support grids (the fine pair, at the forecast resolution) and
a replicated pair whose heads emit coarse sequences of length ceil(T/k)
(the coarse pair).  The coarse fusion is an auxiliary training signal
only; the returned forecast always comes from the fine side.

Ablation modes rewire this structure:

==========  ========================================================
full        two fine + two coarse branches, distribution heads
sbsp        one branch, scalar head (2T -> T), no distributions
sbpdp       one branch, distribution head on the first grid
ibbpdp      two fine branches with interleaved grids, no coarse pair
bspdp       one fine + one coarse branch, both on the first grid
fourbsp     four branches with scalar heads, forecasts averaged
==========  ========================================================
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, no_grad
from .backbone import (
    BranchParams,
    DLinearBranchParams,
    branch_forward,
    dlinear_branch_forward,
    init_branch_params,
    init_dlinear_params,
)
from .losses import LossBreakdown, theta_decay, prediction_loss, consistency_loss, cross_scale_loss, total_loss
from .probhead import (
    FusionResult,
    SupportSet,
    build_interleaved_set,
    build_support_set,
    build_uniform_support_set,
    confidence_fusion,
    expectation,
    project_distribution,
)
from .transform import RevinStats, coarse_len, revin_denormalize, revin_normalize

MODES = ("full", "sbsp", "sbpdp", "ibbpdp", "bspdp", "fourbsp")

# (number of branches, head targets) per mode; heads are sized in init_params
_MODE_BRANCHES = {
    "full": 4, "sbsp": 1, "sbpdp": 1, "ibbpdp": 2, "bspdp": 2, "fourbsp": 4,
}


@dataclass
class HeadParams:
    weight: Tensor
    bias: Tensor

    def parameters(self):
        return [self.weight, self.bias]


@dataclass
class ModelParams:
    """Everything learnable: branch backbones, projection heads, norm affine."""

    mode: str
    branches: list
    heads: list
    revin_scale: Tensor   # (C, 1)
    revin_shift: Tensor   # (C, 1)

    def parameters(self):
        out = [self.revin_scale, self.revin_shift]
        for b in self.branches:
            out.extend(b.parameters())
        for h in self.heads:
            out.extend(h.parameters())
        return out

    def named_parameters(self):
        out = [("revin.scale", self.revin_scale), ("revin.shift", self.revin_shift)]
        for i, b in enumerate(self.branches):
            out.extend((f"branch{i}.{n}", p) for n, p in b.named_parameters())
        for i, h in enumerate(self.heads):
            out.append((f"head{i}.weight", h.weight))
            out.append((f"head{i}.bias", h.bias))
        return out

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None


def build_support_pair(config):
    """The primary grid per the configured flavor plus its interleaved twin."""
    if config.support_flavor == "uniform":
        sp1 = build_uniform_support_set(config.support_size, config.support_boundary)
    else:
        sp1 = build_support_set(config.support_size, config.support_boundary)
    sp2 = build_interleaved_set(sp1, config.support_boundary)
    return sp1, sp2


def _init_head(rng, fan_in, fan_out, dtype):
    bound = 1.0 / np.sqrt(fan_in)
    w = Tensor(rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype),
               requires_grad=True)
    b = Tensor(np.zeros(fan_out, dtype=dtype), requires_grad=True)
    return HeadParams(w, b)


def init_params(config, seed: int, dtype=None) -> ModelParams:
    """Deterministic initialization of all parameters from one seed.

    Weight matrices are uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)];
    biases start at zero; normalization affines start at identity.
    Branch and head creation order is fixed, so a given (config, seed)
    always produces bit-identical parameters.
    """
    dtype = np.dtype(dtype if dtype is not None else config.dtype)
    rng = np.random.default_rng(seed)
    L, T = config.lookback, config.horizon
    S = config.support_size
    tc = coarse_len(T, config.downsample_k)
    if config.mode not in _MODE_BRANCHES:
        raise ValueError(
            f"unknown mode {config.mode!r}; valid modes: {', '.join(MODES)}"
        )
    n_branches = _MODE_BRANCHES[config.mode]

    def make_branch():
        if config.backbone == "dlinear":
            return init_dlinear_params(L, T, rng, dtype)
        return init_branch_params(L, T, config.patch_len, config.patch_stride,
                                  rng, dtype)

    branches = [make_branch() for _ in range(n_branches)]
    two_t = 2 * T
    mode = config.mode
    if mode == "full":
        heads = [_init_head(rng, two_t, T * S, dtype),
                 _init_head(rng, two_t, T * S, dtype),
                 _init_head(rng, two_t, tc * S, dtype),
                 _init_head(rng, two_t, tc * S, dtype)]
    elif mode == "sbsp":
        heads = [_init_head(rng, two_t, T, dtype)]
    elif mode == "sbpdp":
        heads = [_init_head(rng, two_t, T * S, dtype)]
    elif mode == "ibbpdp":
        heads = [_init_head(rng, two_t, T * S, dtype),
                 _init_head(rng, two_t, T * S, dtype)]
    elif mode == "bspdp":
        heads = [_init_head(rng, two_t, T * S, dtype),
                 _init_head(rng, two_t, tc * S, dtype)]
    elif mode == "fourbsp":
        heads = [_init_head(rng, two_t, T, dtype) for _ in range(4)]
    else:
        raise ValueError(f"unknown mode {mode!r}; valid modes: {', '.join(MODES)}")
    C = config.num_channels
    return ModelParams(
        mode=mode,
        branches=branches,
        heads=heads,
        revin_scale=Tensor(np.ones((C, 1), dtype=dtype), requires_grad=True),
        revin_shift=Tensor(np.zeros((C, 1), dtype=dtype), requires_grad=True),
    )


@dataclass
class ForwardOutput:
    """Everything the loss and the evaluation suite need from one pass."""

    prediction: Tensor            # (B, C, T), denormalized
    fine: FusionResult | None     # fine-scale fusion (normalized domain)
    coarse: FusionResult | None   # coarse-scale fusion (normalized domain)
    stats: RevinStats
    dist_fine1: Tensor | None = None   # (B, C, T, S)
    dist_fine2: Tensor | None = None
    prediction_normalized: Tensor | None = None


def _run_branch(lookback, params, config):
    if isinstance(params, DLinearBranchParams):
        return dlinear_branch_forward(lookback, params, config.ema_alpha)
    return branch_forward(lookback, params, config.ema_alpha)


def forward_full(params: ModelParams, lookback, config) -> ForwardOutput:
    """Mode-dependent forward pass over a batch.

    `lookback` is (B, C, L) (leading axes optional).  The window is
    instance-normalized, each branch maps it to a 2T feature vector, and
    the mode's head arrangement turns features into the normalized
    forecast, which is denormalized for the returned prediction.
    """
    sp1, sp2 = config.support_pair()
    T = config.horizon
    S = config.support_size
    k = config.downsample_k
    tc = coarse_len(T, k)
    x_norm, stats = revin_normalize(lookback, params.revin_scale, params.revin_shift)

    feats = [_run_branch(x_norm, b, config) for b in params.branches]
    mode = params.mode
    fine = coarse = None
    dist1 = dist2 = None

    if mode in ("full", "ibbpdp"):
        dist1 = project_distribution(feats[0], params.heads[0].weight,
                                     params.heads[0].bias, T, S)
        dist2 = project_distribution(feats[1], params.heads[1].weight,
                                     params.heads[1].bias, T, S)
        fine = confidence_fusion(dist1, dist2, sp1, sp2)
        normalized = fine.fused
        if mode == "full":
            dist3 = project_distribution(feats[2], params.heads[2].weight,
                                         params.heads[2].bias, tc, S)
            dist4 = project_distribution(feats[3], params.heads[3].weight,
                                         params.heads[3].bias, tc, S)
            coarse = confidence_fusion(dist3, dist4, sp1, sp2)
    elif mode == "sbsp":
        normalized = feats[0] @ params.heads[0].weight + params.heads[0].bias
    elif mode == "sbpdp":
        dist1 = project_distribution(feats[0], params.heads[0].weight,
                                     params.heads[0].bias, T, S)
        normalized = expectation(dist1, sp1)
    elif mode == "bspdp":
        dist1 = project_distribution(feats[0], params.heads[0].weight,
                                     params.heads[0].bias, T, S)
        normalized = expectation(dist1, sp1)
        dist3 = project_distribution(feats[1], params.heads[1].weight,
                                     params.heads[1].bias, tc, S)
        coarse_exp = expectation(dist3, sp1)
        # single coarse branch: reuse the FusionResult container with itself
        coarse = FusionResult(coarse_exp, None, coarse_exp, coarse_exp, None, None)
    elif mode == "fourbsp":
        outs = [feats[i] @ params.heads[i].weight + params.heads[i].bias
                for i in range(4)]
        normalized = (outs[0] + outs[1] + outs[2] + outs[3]) * 0.25
    else:
        raise ValueError(f"unknown mode {mode!r}")

    prediction = revin_denormalize(normalized, stats, params.revin_scale,
                                   params.revin_shift)
    return ForwardOutput(prediction=prediction, fine=fine, coarse=coarse,
                         stats=stats, dist_fine1=dist1, dist_fine2=dist2,
                         prediction_normalized=normalized)


def compute_losses(out: ForwardOutput, target, config,
                   schedule=None) -> LossBreakdown:
    """Assemble the mode's loss terms from a forward pass.

    `target` is the raw-scale (B, C, T) truth.  The prediction loss is
    computed on the denormalized forecast; the consistency terms act on
    the normalized branch outputs.  Terms a mode does not produce enter
    as exact zeros.
    """
    if schedule is None:
        schedule = theta_decay(config.horizon, config.decay_shape)
    T = config.horizon
    C = config.num_channels
    k = config.downsample_k
    zero = 0.0
    l_p = prediction_loss(target, out.prediction, schedule)
    l_f = zero
    l_c = zero
    l_t = zero
    mode = config.mode
    if mode in ("full", "ibbpdp"):
        l_f = consistency_loss(out.fine.expectation1, out.fine.expectation2,
                               1.0 / (T * C))
    if mode == "full":
        l_c = consistency_loss(out.coarse.expectation1, out.coarse.expectation2,
                               k / (T * C))
        l_t = cross_scale_loss(out.coarse.fused, out.fine.fused, k)
    if mode == "bspdp":
        l_t = cross_scale_loss(out.coarse.fused, out.prediction_normalized, k)
    alpha, beta, gamma = config.effective_weights()
    return total_loss(l_p, l_f, l_c, l_t, alpha, beta, gamma)


def predict(params: ModelParams, lookback, config) -> ForwardOutput:
    """Inference-only forward pass (no gradient graph is built)."""
    with no_grad():
        return forward_full(params, lookback, config)
