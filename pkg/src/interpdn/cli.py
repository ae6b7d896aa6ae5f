"""Command-line front end.

Subcommands: ``train`` (fit a model, write checkpoint + loss curves +
resolved config), ``eval`` (score a checkpoint on a split, write metric
report and per-step predictions), ``ablate`` (train + eval under one
architecture ablation), and ``support-set`` (dump a support grid as CSV).

Exit codes: 0 success, 1 configuration/checkpoint error, 2 data error,
3 numeric failure during training.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


def _limit_threads():
    """Cap BLAS worker threads to INTERPDN_THREADS (default 1, deterministic)."""
    raw = os.environ.get("INTERPDN_THREADS", "1")
    try:
        n = max(1, int(raw))
    except ValueError:
        n = 1
    try:
        from threadpoolctl import threadpool_limits
        threadpool_limits(limits=n)
    except ImportError:
        pass
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="interpdn",
        description="Probabilistic time-series forecasting with interleaved "
                    "distribution heads.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML run configuration file")
    common.add_argument("--preset", help="named preset supplying defaults "
                                         "(see --list-presets)")
    common.add_argument("--data", help="dataset CSV path (overrides config)")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--seed", type=int, help="override the training seed")

    p_train = sub.add_parser("train", parents=[common],
                             help="fit a model and write a checkpoint")
    p_train.add_argument("--list-presets", action="store_true",
                         help="print available preset names and exit")

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--data", help="dataset CSV path (overrides config)")
    p_eval.add_argument("--split", choices=["val", "test"], default="test")
    p_eval.add_argument("--out", default=".")
    p_eval.add_argument("--merge-softmax", action="store_true",
                        help="merge branch distributions with a literal "
                             "softmax instead of renormalization")
    p_eval.add_argument("--no-probabilistic", action="store_true",
                        help="skip quantile/CRPS computation")

    p_ablate = sub.add_parser("ablate", parents=[common],
                              help="train + evaluate one ablation mode")
    p_ablate.add_argument("--mode", required=True,
                          help="full, sbsp, sbpdp, ibbpdp, bspdp, or fourbsp")

    p_sup = sub.add_parser("support-set", help="write a support grid as CSV")
    p_sup.add_argument("--s", type=int, required=True, help="number of points")
    p_sup.add_argument("--b", type=float, required=True, help="boundary B")
    p_sup.add_argument("--flavor", default="equal_probability",
                       choices=["equal_probability", "uniform", "interleaved"])
    p_sup.add_argument("--out", default="support_set.csv", help="output CSV path")
    return parser


def _resolve_config(args):
    from .config import ConfigError, TrainConfig, get_preset, load_config

    base = get_preset(args.preset) if args.preset else TrainConfig()
    cfg = load_config(args.config, base) if args.config else base.validate()
    if getattr(args, "data", None):
        cfg = replace(cfg, data_path=args.data)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "mode", None):
        from .model import MODES
        if args.mode not in MODES:
            raise ConfigError(
                f"unknown mode {args.mode!r}; valid modes: {', '.join(MODES)}"
            )
        cfg = replace(cfg, mode=args.mode)
    return cfg


def _load_dataset(cfg):
    """Load (or synthesize) the configured series and prepare splits."""
    from .dataio import DataError, SplitSpec, load_csv, prepare_splits, synthetic_series

    if cfg.data_path:
        series = load_csv(cfg.data_path)
    elif cfg.dataset == "synthetic":
        total = cfg.train_len + cfg.val_len + cfg.test_len
        series = synthetic_series(total if total else 4000)
    else:
        raise DataError(
            f"dataset {cfg.dataset!r} needs a CSV path (--data or dataset.path)"
        )
    n = len(series)
    if cfg.train_len and cfg.val_len and cfg.test_len:
        spec = SplitSpec(cfg.train_len, cfg.val_len, cfg.test_len)
    else:
        train_n = int(n * 0.7)
        val_n = int(n * 0.1)
        spec = SplitSpec(train_n, val_n, n - train_n - val_n)
    splits = prepare_splits(series, spec, cfg.lookback, cfg.border_overlap)
    return replace(cfg, train_len=spec.train_len, val_len=spec.val_len,
                   test_len=spec.test_len,
                   num_channels=series.num_channels), splits


def cmd_train(args) -> int:
    from .config import dump_config
    from .training import train, save_checkpoint, write_curves_csv

    if getattr(args, "list_presets", False):
        from .config import PRESETS
        for name in sorted(PRESETS):
            print(name)
        return EXIT_OK
    cfg = _resolve_config(args)
    cfg, splits = _load_dataset(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved_config.toml").write_text(dump_config(cfg), encoding="utf-8")
    result = train(cfg, splits)
    save_checkpoint(result.checkpoint, out / "checkpoint.ipdn")
    write_curves_csv(result.curves, out / "loss_curves.csv")
    print(f"trained {result.stopped_epoch} epochs; "
          f"best epoch {result.checkpoint.best_epoch} "
          f"(val total {result.checkpoint.best_val_loss:.6f})")
    print(f"wrote {out / 'checkpoint.ipdn'}")
    return EXIT_OK


def _write_metrics(report, out: Path):
    with open(out / "metrics.json", "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2)
        fh.write("\n")
    with open(out / "metrics.csv", "w", encoding="utf-8") as fh:
        fh.write("dataset,horizon,mode,scope,mse,mae,crps,mase\n")
        crps = "" if report.crps is None else repr(report.crps)
        fh.write(f"{report.dataset},{report.horizon},{report.mode},all,"
                 f"{report.mse!r},{report.mae!r},{crps},{report.mase!r}\n")
        for row in report.per_channel:
            fh.write(f"{report.dataset},{report.horizon},{report.mode},"
                     f"channel{row['channel']},{row['mse']!r},{row['mae']!r},"
                     f",{row['mase']!r}\n")


def _prediction_writer(handle):
    def write(window_offset, truth, pred, out):
        fine = out.fine
        b, c_count, horizon = truth.shape
        for b_i in range(b):
            for step in range(horizon):
                for ch in range(c_count):
                    if fine is not None:
                        w = repr(float(fine.weights.data[b_i, ch, step]))
                        x1 = repr(float(fine.expectation1.data[b_i, ch, step]))
                        x2 = repr(float(fine.expectation2.data[b_i, ch, step]))
                    else:
                        w = x1 = x2 = ""
                    handle.write(
                        f"{window_offset + b_i},{step},{ch},"
                        f"{float(truth[b_i, ch, step])!r},"
                        f"{float(pred[b_i, ch, step])!r},"
                        f"{w},{x1},{x2}\n"
                    )
    return write


def cmd_eval(args) -> int:
    from .training import evaluate_split, load_checkpoint

    ckpt = load_checkpoint(args.checkpoint)
    cfg = ckpt.config
    if args.data:
        cfg = replace(cfg, data_path=args.data)
    cfg, splits = _load_dataset(cfg)
    if cfg.num_channels != ckpt.config.num_channels:
        from .training import CheckpointError
        raise CheckpointError(
            f"checkpoint was trained on {ckpt.config.num_channels} channels "
            f"but the dataset has {cfg.num_channels}"
        )
    context = splits.val_context if args.split == "val" else splits.test_context
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "predictions.csv", "w", encoding="utf-8") as fh:
        fh.write("window,step,channel,truth,prediction,w,expectation1,expectation2\n")
        report = evaluate_split(
            ckpt.params, cfg, context, dataset=cfg.dataset,
            probabilistic=not args.no_probabilistic,
            merge_softmax=args.merge_softmax,
            prediction_writer=_prediction_writer(fh),
        )
    _write_metrics(report, out)
    print(json.dumps({k: v for k, v in report.to_dict().items()
                      if k != "per_channel"}))
    return EXIT_OK


def cmd_ablate(args) -> int:
    from .training import run_ablation

    cfg = _resolve_config(args)
    cfg, splits = _load_dataset(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result, report = run_ablation(cfg.mode, cfg, splits)
    from .config import dump_config
    from .training import save_checkpoint, write_curves_csv

    (out / "resolved_config.toml").write_text(dump_config(result.checkpoint.config),
                                              encoding="utf-8")
    save_checkpoint(result.checkpoint, out / "checkpoint.ipdn")
    write_curves_csv(result.curves, out / "loss_curves.csv")
    _write_metrics(report, out)
    print(json.dumps({k: v for k, v in report.to_dict().items()
                      if k != "per_channel"}))
    return EXIT_OK


def cmd_support_set(args) -> int:
    from .config import ConfigError
    from .probhead import (
        build_interleaved_set,
        build_support_set,
        build_uniform_support_set,
    )

    if args.s < 2:
        raise ConfigError("--s must be >= 2")
    if args.b <= 0:
        raise ConfigError("--b must be positive")
    if args.flavor == "uniform":
        sp = build_uniform_support_set(args.s, args.b)
    elif args.flavor == "interleaved":
        sp = build_interleaved_set(build_support_set(args.s, args.b), args.b)
    else:
        sp = build_support_set(args.s, args.b)
    masses = sp.cell_masses()
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("index,point,cell_mass\n")
        for i, point in enumerate(sp.points):
            mass = "" if masses is None else repr(float(masses[i]))
            fh.write(f"{i},{float(point)!r},{mass}\n")
    print(f"wrote {args.out} ({sp.size} points, flavor {sp.flavor})")
    return EXIT_OK


def main(argv=None) -> int:
    _limit_threads()
    parser = build_parser()
    args = parser.parse_args(argv)
    from .config import ConfigError
    from .dataio import DataError
    from .training import CheckpointError, NonFiniteLossError

    handlers = {
        "train": cmd_train,
        "eval": cmd_eval,
        "ablate": cmd_ablate,
        "support-set": cmd_support_set,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NonFiniteLossError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
