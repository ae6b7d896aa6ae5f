"""Training loop, checkpoint persistence, gradient checking, evaluation.

Optimization is plain Adam over mini-batches of windows, with the
learning rate held for the first three epochs and decayed by 0.9 per
epoch afterwards.  Early stopping watches the validation total loss and
restores the best epoch's parameters.

Checkpoints are a small binary container: the magic bytes ``IPDN1``, a
length-prefixed JSON manifest (config, seed, best-epoch metadata, array
names/shapes), then the raw little-endian float32 arrays in manifest
order.  The same (config, seed) always produces a byte-identical file.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, replace

import numpy as np

from .autodiff import no_grad
from .config import TrainConfig, get_preset
from .dataio import DataSplits, window_arrays
from .losses import theta_decay
from .metrics import MetricReport, crps_approx, mase as mase_metric, wql, quantile_from_distribution, CRPS_LEVELS
from .model import ModelParams, compute_losses, forward_full, init_params, predict
from .probhead import merge_distributions

CHECKPOINT_MAGIC = b"IPDN1"
CHECKPOINT_VERSION = 1

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class TrainingError(RuntimeError):
    pass


class NonFiniteLossError(TrainingError):
    """A loss term left the reals; names the offending term."""

    def __init__(self, term: str, epoch: int, batch: int):
        super().__init__(
            f"non-finite loss term {term!r} at epoch {epoch}, batch {batch}"
        )
        self.term = term


class CheckpointError(RuntimeError):
    pass


class Adam:
    """Standard Adam with bias correction; state matches parameter dtype."""

    def __init__(self, params, lr: float,
                 beta1: float = ADAM_BETA1, beta2: float = ADAM_BETA2,
                 eps: float = ADAM_EPS):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if g is None:
                continue
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def lr_schedule(initial_lr: float, epoch: int) -> float:
    """Held for epochs 1-3, then initial_lr * 0.9 ** (epoch - 3)."""
    if epoch <= 3:
        return initial_lr
    return initial_lr * 0.9 ** (epoch - 3)


class EarlyStopper:
    """Stop after `patience` consecutive epochs without a new best value."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = np.inf
        self.best_epoch = 0
        self.stale = 0

    def update(self, epoch: int, value: float) -> bool:
        """Record an epoch's validation value; True means stop now."""
        if value < self.best:
            self.best = value
            self.best_epoch = epoch
            self.stale = 0
            return False
        self.stale += 1
        return self.stale >= self.patience


@dataclass
class Checkpoint:
    config: TrainConfig
    params: ModelParams
    seed: int
    best_epoch: int
    best_val_loss: float


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    curves: list            # rows: (epoch, L_p, L_f, L_c, L_t, total, split)
    stopped_epoch: int


def _snapshot(params: ModelParams):
    return [p.data.copy() for p in params.parameters()]


def _restore(params: ModelParams, snapshot):
    for p, data in zip(params.parameters(), snapshot):
        p.data = data.copy()


def _check_finite(breakdown, epoch, batch):
    floats = breakdown.as_floats()
    for term, value in (("L_p", floats.prediction),
                        ("L_f", floats.fine_consistency),
                        ("L_c", floats.coarse_consistency),
                        ("L_t", floats.cross_scale),
                        ("L_total", floats.total)):
        if not np.isfinite(value):
            raise NonFiniteLossError(term, epoch, batch)
    return floats


# Windows per forward/backward slice.  Optimizer batches larger than this
# are split and their gradients accumulated (scaled by slice weight), which
# is the same mean-loss gradient while bounding the live graph size.
MICRO_BATCH = 512


def _epoch_pass(params, look, tgt, config, schedule, dtype,
                order=None, optimizer=None, epoch=0):
    """One pass over the windows; trains when an optimizer is given.

    Returns the window-weighted mean loss breakdown as floats.
    """
    n = look.shape[0]
    batch = config.batch_size
    if order is None:
        order = np.arange(n)
    sums = np.zeros(5)

    def slice_losses(idx, batch_no, weight=None):
        xb = np.ascontiguousarray(look[idx].transpose(0, 2, 1), dtype=dtype)
        yb = np.ascontiguousarray(tgt[idx].transpose(0, 2, 1), dtype=dtype)
        if optimizer is None:
            out = predict(params, xb, config)
            breakdown = compute_losses(out, yb, config, schedule)
            floats = _check_finite(breakdown, epoch, batch_no)
        else:
            out = forward_full(params, xb, config)
            breakdown = compute_losses(out, yb, config, schedule)
            floats = _check_finite(breakdown, epoch, batch_no)
            (breakdown.total * weight).backward()
        return np.array([floats.prediction, floats.fine_consistency,
                         floats.coarse_consistency, floats.cross_scale,
                         floats.total])

    for start in range(0, n, batch):
        idx = order[start:start + batch]
        if optimizer is not None:
            params.zero_grad()
        batch_no = start // batch
        for sub_start in range(0, len(idx), MICRO_BATCH):
            sub = idx[sub_start:sub_start + MICRO_BATCH]
            vals = slice_losses(sub, batch_no, weight=len(sub) / len(idx))
            sums += len(sub) * vals
        if optimizer is not None:
            optimizer.step()
    return sums / n


def train(config: TrainConfig, splits: DataSplits) -> TrainResult:
    """Train on the prepared splits and return the best-validation model.

    Batches are drawn in a freshly shuffled order each epoch (seeded,
    last partial batch kept).  Training stops when the validation total
    loss has not improved for `patience` consecutive epochs or the epoch
    budget is exhausted; the returned checkpoint holds the best epoch.
    """
    config = replace(config, num_channels=splits.train.shape[1]).validate()
    dtype = config.np_dtype()
    L, T = config.lookback, config.horizon
    train_look, train_tgt = window_arrays(splits.train, L, T)
    val_look, val_tgt = window_arrays(splits.val_context, L, T)
    schedule = theta_decay(T, config.decay_shape)
    params = init_params(config, config.seed)
    shuffle_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    optimizer = Adam(params.parameters(), config.initial_lr)

    curves = []
    stopper = EarlyStopper(config.patience)
    best_state = _snapshot(params)
    stopped = config.max_epochs
    for epoch in range(1, config.max_epochs + 1):
        optimizer.lr = lr_schedule(config.initial_lr, epoch)
        order = shuffle_rng.permutation(train_look.shape[0])
        train_losses = _epoch_pass(params, train_look, train_tgt, config,
                                   schedule, dtype, order, optimizer, epoch)
        val_losses = _epoch_pass(params, val_look, val_tgt, config,
                                 schedule, dtype, epoch=epoch)
        curves.append((epoch, *train_losses, "train"))
        curves.append((epoch, *val_losses, "val"))
        stop = stopper.update(epoch, val_losses[4])
        if stopper.best_epoch == epoch:
            best_state = _snapshot(params)
        if stop:
            stopped = epoch
            break
    _restore(params, best_state)
    checkpoint = Checkpoint(config=config, params=params, seed=config.seed,
                            best_epoch=stopper.best_epoch,
                            best_val_loss=float(stopper.best))
    return TrainResult(checkpoint=checkpoint, curves=curves, stopped_epoch=stopped)


def write_curves_csv(curves, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,L_p,L_f,L_c,L_t,total,split\n")
        for epoch, lp, lf, lc, lt, total, split_name in curves:
            fh.write(f"{epoch},{float(lp)!r},{float(lf)!r},{float(lc)!r},"
                     f"{float(lt)!r},{float(total)!r},{split_name}\n")


# --- checkpoint persistence ---------------------------------------------------


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    named = ckpt.params.named_parameters()
    manifest = {
        "format_version": CHECKPOINT_VERSION,
        "config": asdict(ckpt.config),
        "seed": ckpt.seed,
        "best_epoch": ckpt.best_epoch,
        "best_val_loss": ckpt.best_val_loss,
        "arrays": [
            {"name": name, "shape": list(p.data.shape), "dtype": "float32"}
            for name, p in named
        ],
    }
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _name, p in named:
            fh.write(np.ascontiguousarray(p.data, dtype="<f4").tobytes())


def load_checkpoint(path) -> Checkpoint:
    try:
        fh = open(path, "rb")
    except FileNotFoundError:
        raise CheckpointError(f"checkpoint not found: {path}") from None
    with fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint (bad magic {magic!r})")
        (blob_len,) = struct.unpack("<I", fh.read(4))
        try:
            manifest = json.loads(fh.read(blob_len).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"{path}: corrupt manifest ({exc})") from None
        if manifest.get("format_version") != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"{path}: unsupported format version {manifest.get('format_version')}"
            )
        config = TrainConfig(**manifest["config"])
        config.validate()
        params = init_params(config, manifest["seed"])
        named = params.named_parameters()
        expected = [(e["name"], tuple(e["shape"])) for e in manifest["arrays"]]
        actual = [(name, p.data.shape) for name, p in named]
        if expected != actual:
            raise CheckpointError(
                f"{path}: array manifest does not match the configured model"
            )
        dtype = config.np_dtype()
        for _name, p in named:
            raw = fh.read(p.data.size * 4)
            if len(raw) != p.data.size * 4:
                raise CheckpointError(f"{path}: truncated array data")
            p.data = np.frombuffer(raw, dtype="<f4").reshape(p.data.shape).astype(dtype)
    return Checkpoint(config=config, params=params, seed=manifest["seed"],
                      best_epoch=manifest["best_epoch"],
                      best_val_loss=manifest["best_val_loss"])


# --- verification harness -----------------------------------------------------


def gradient_check(config: TrainConfig | None = None, seed: int = 0,
                   step: float = 1e-4, batch_size: int = 4) -> dict:
    """Compare analytic gradients of the total loss to central differences.

    Uses a float64 model on random data.  The relative error per element
    is |analytic - numeric| / max(|analytic|, |numeric|, 1e-6); the report
    carries the worst element of every parameter.  Failures are reported,
    never raised.
    """
    if config is None:
        config = get_preset("gradcheck_tiny")
    config = replace(config, dtype="float64")
    if config.num_channels <= 0:
        config = replace(config, num_channels=2)
    rng = np.random.default_rng(seed)
    C, L, T = config.num_channels, config.lookback, config.horizon
    lookback = rng.normal(size=(batch_size, C, L))
    target = rng.normal(size=(batch_size, C, T))
    schedule = theta_decay(T, config.decay_shape)
    params = init_params(config, seed)

    def total():
        out = forward_full(params, lookback, config)
        return compute_losses(out, target, config, schedule).total

    loss = total()
    loss.backward()
    analytic = {name: (np.zeros_like(p.data) if p.grad is None else p.grad.copy())
                for name, p in params.named_parameters()}

    per_parameter = {}
    worst = ("", 0.0)
    with no_grad():
        for name, p in params.named_parameters():
            grad = analytic[name]
            max_rel = 0.0
            flat = p.data.reshape(-1)
            gflat = grad.reshape(-1)
            for i in range(flat.size):
                original = flat[i]
                flat[i] = original + step
                up = total().item()
                flat[i] = original - step
                down = total().item()
                flat[i] = original
                numeric = (up - down) / (2.0 * step)
                rel = abs(gflat[i] - numeric) / max(abs(gflat[i]), abs(numeric), 1e-6)
                max_rel = max(max_rel, rel)
            per_parameter[name] = max_rel
            if max_rel > worst[1]:
                worst = (name, max_rel)
    return {
        "max_rel_error": worst[1],
        "worst_parameter": worst[0],
        "num_parameters": params.num_parameters(),
        "step": step,
        "per_parameter": per_parameter,
    }


# --- evaluation ---------------------------------------------------------------


def evaluate_split(params: ModelParams, config: TrainConfig,
                   context_values: np.ndarray, dataset: str = "",
                   eval_batch: int = 128, probabilistic: bool = True,
                   merge_softmax: bool = False,
                   prediction_writer=None) -> MetricReport:
    """Run the model over every window of a split and aggregate metrics.

    `context_values` is a standardized (rows, C) slice, already including
    any border-overlap context.  The probabilistic metrics require the
    two fine-scale distributions and are skipped for modes without them.
    `prediction_writer(window_offset, truth, pred, fine)` is called per
    batch with raw-scale (B, C, T) arrays for export.
    """
    dtype = config.np_dtype()
    L, T = config.lookback, config.horizon
    C = context_values.shape[1]
    look, tgt = window_arrays(context_values, L, T)
    n = look.shape[0]
    sp1, sp2 = config.support_pair()

    sq = np.zeros(C)
    ab = np.zeros(C)
    mase_sum = np.zeros(C)
    level_sums = {alpha: 0.0 for alpha in CRPS_LEVELS}
    produce_dists = probabilistic and config.mode in ("full", "ibbpdp")
    count = 0

    for start in range(0, n, eval_batch):
        stop = min(start + eval_batch, n)
        xb = np.ascontiguousarray(look[start:stop].transpose(0, 2, 1), dtype=dtype)
        yb = np.ascontiguousarray(tgt[start:stop].transpose(0, 2, 1), dtype=dtype)
        out = predict(params, xb, config)
        pred = np.asarray(out.prediction.data, dtype=np.float64)
        truth = np.asarray(yb, dtype=np.float64)
        err = pred - truth
        sq += np.sum(err * err, axis=(0, 2))
        ab += np.sum(np.abs(err), axis=(0, 2))
        for c in range(C):
            mase_sum[c] += truth.shape[0] * mase_metric(
                truth[:, c], pred[:, c], np.asarray(xb[:, c], dtype=np.float64),
                config.mase_seasonality)
        if produce_dists:
            merged = merge_distributions(out.dist_fine1, out.dist_fine2,
                                         out.fine.weights, sp1, sp2,
                                         use_softmax=merge_softmax)
            stats = out.stats
            scale = params.revin_scale.data.astype(np.float64)
            shift = params.revin_shift.data.astype(np.float64)
            for alpha in CRPS_LEVELS:
                q_norm = quantile_from_distribution(merged, alpha)
                q_raw = ((q_norm - shift) / scale) * (stats.std + stats.eps) + stats.mean
                level_sums[alpha] += wql(q_raw, truth, alpha) * truth.shape[0]
        if prediction_writer is not None:
            prediction_writer(start, truth, pred, out)
        count += stop - start

    denom = count * T
    per_channel = []
    for c in range(C):
        per_channel.append({
            "channel": c,
            "mse": float(sq[c] / denom),
            "mae": float(ab[c] / denom),
            "mase": float(mase_sum[c] / count),
        })
    crps = None
    if produce_dists:
        crps = float(np.mean([level_sums[a] / count for a in CRPS_LEVELS]))
    return MetricReport(
        dataset=dataset or config.dataset,
        horizon=T,
        mode=config.mode,
        mse=float(sq.sum() / (denom * C)),
        mae=float(ab.sum() / (denom * C)),
        mase=float(mase_sum.sum() / (count * C)),
        crps=crps,
        per_channel=per_channel,
        num_windows=count,
    )


def evaluate_loss(params: ModelParams, config: TrainConfig,
                  context_values: np.ndarray):
    """Window-weighted mean loss breakdown over a split (no training).

    Returns (L_p, L_f, L_c, L_t, total) as floats; the total of the best
    validation epoch recomputed this way matches the stored checkpoint
    metadata.
    """
    look, tgt = window_arrays(context_values, config.lookback, config.horizon)
    schedule = theta_decay(config.horizon, config.decay_shape)
    return _epoch_pass(params, look, tgt, config, schedule, config.np_dtype())


def run_ablation(mode: str, config: TrainConfig, splits: DataSplits):
    """Train and evaluate under one architecture ablation."""
    result = train(replace(config, mode=mode), splits)
    report = evaluate_split(result.checkpoint.params, result.checkpoint.config,
                            splits.test_context)
    return result, report
