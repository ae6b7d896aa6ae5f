"""CSV loading, chronological splitting, standardization, and windowing.

Datasets are plain CSV tables: a header row, a leading ``date`` column,
and one numeric column per channel.  Splits are contiguous chronological
slices; the scaler is always fitted on the training slice and applied
globally before windowing.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

SCALER_EPS = 1e-8


class DataError(ValueError):
    """Malformed dataset file or inconsistent split/window request."""


@dataclass
class MultivariateSeries:
    """A timestamped table: rows are time steps, columns are channels."""

    values: np.ndarray
    channel_names: list
    timestamps: list | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DataError("series values must be a 2-D matrix")
        if self.values.shape[0] < 1:
            raise DataError("series must have at least one row")
        if self.values.shape[1] != len(self.channel_names):
            raise DataError("channel_names length does not match value columns")
        if self.timestamps is not None and len(self.timestamps) != len(self.values):
            raise DataError("timestamp count does not match row count")

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def num_channels(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class SplitSpec:
    """Row counts of the chronological train/validation/test slices."""

    train_len: int
    val_len: int
    test_len: int

    def __post_init__(self):
        if min(self.train_len, self.val_len, self.test_len) < 0:
            raise DataError("split lengths must be nonnegative")

    @property
    def total(self) -> int:
        return self.train_len + self.val_len + self.test_len


@dataclass
class Scaler:
    """Per-channel standardization fitted on the training slice."""

    mean: np.ndarray
    std: np.ndarray
    eps: float = SCALER_EPS


@dataclass
class WindowPair:
    """A lookback segment and the horizon segment that follows it."""

    lookback: np.ndarray
    target: np.ndarray


def load_csv(path) -> MultivariateSeries:
    """Parse an ETT-style CSV: ``date`` column first, numeric channels after.

    Raises DataError on a missing file, empty file, ragged rows, or any
    cell that does not parse as a number (the error names the offending
    row and column).
    """
    try:
        handle = open(path, "r", encoding="utf-8", newline="")
    except FileNotFoundError:
        raise DataError(f"dataset file not found: {path}") from None
    with handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"empty dataset file: {path}") from None
        if len(header) < 2:
            raise DataError("expected a date column plus at least one channel")
        channel_names = [name.strip() for name in header[1:]]
        timestamps = []
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(
                    f"row {line_no}: expected {len(header)} fields, got {len(row)}"
                )
            timestamps.append(row[0])
            try:
                rows.append([float(cell) for cell in row[1:]])
            except ValueError:
                bad = next(
                    i for i, cell in enumerate(row[1:], start=2)
                    if not _is_number(cell)
                )
                raise DataError(
                    f"row {line_no}, column {bad} ({header[bad - 1]!r}): "
                    f"non-numeric value {row[bad - 1]!r}"
                ) from None
        if not rows:
            raise DataError(f"dataset file has a header but no rows: {path}")
    values = np.asarray(rows, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        bad_row, bad_col = np.argwhere(~np.isfinite(values))[0]
        raise DataError(
            f"row {bad_row + 2}, column {bad_col + 2}: missing or non-finite value"
        )
    return MultivariateSeries(values, channel_names, timestamps)


def _is_number(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def split(series: MultivariateSeries, spec: SplitSpec):
    """Cut the series into contiguous train/validation/test slices."""
    if spec.total > len(series):
        raise DataError(
            f"split sizes {spec.train_len}+{spec.val_len}+{spec.test_len} exceed "
            f"series length {len(series)}"
        )
    bounds = [0, spec.train_len, spec.train_len + spec.val_len, spec.total]
    pieces = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        ts = series.timestamps[lo:hi] if series.timestamps is not None else None
        pieces.append(MultivariateSeries(series.values[lo:hi], series.channel_names, ts))
    return tuple(pieces)


def fit_scaler(train: MultivariateSeries) -> Scaler:
    """Per-channel mean/std of the training slice; constant channels clamp."""
    if len(train) < 1:
        raise DataError("cannot fit a scaler on an empty split")
    mean = train.values.mean(axis=0)
    std = train.values.std(axis=0)
    constant = std < SCALER_EPS
    if np.any(constant):
        names = [train.channel_names[i] for i in np.flatnonzero(constant)]
        warnings.warn(
            f"constant channel(s) {names}: std clamped to {SCALER_EPS}",
            stacklevel=2,
        )
        std = np.where(constant, SCALER_EPS, std)
    return Scaler(mean, std)


def apply_scaler(series: MultivariateSeries, scaler: Scaler) -> MultivariateSeries:
    values = (series.values - scaler.mean) / scaler.std
    return MultivariateSeries(values, series.channel_names, series.timestamps)


def invert_scaler(series: MultivariateSeries, scaler: Scaler) -> MultivariateSeries:
    values = series.values * scaler.std + scaler.mean
    return MultivariateSeries(values, series.channel_names, series.timestamps)


def make_windows(series: MultivariateSeries, lookback: int, horizon: int,
                 stride: int = 1):
    """All (lookback, target) pairs at the given stride.

    Window i covers rows [i*stride, i*stride + lookback + horizon); there
    are floor((len - lookback - horizon) / stride) + 1 of them.
    """
    if stride < 1:
        raise DataError("stride must be >= 1")
    n = len(series)
    if n < lookback + horizon:
        raise DataError(
            f"series length {n} is shorter than lookback+horizon "
            f"{lookback + horizon}"
        )
    count = (n - lookback - horizon) // stride + 1
    pairs = []
    for i in range(count):
        start = i * stride
        pairs.append(WindowPair(
            series.values[start:start + lookback],
            series.values[start + lookback:start + lookback + horizon],
        ))
    return pairs


def window_arrays(values: np.ndarray, lookback: int, horizon: int):
    """Vectorized windows at stride 1: (n, L, C) lookbacks and (n, T, C) targets."""
    n = values.shape[0]
    if n < lookback + horizon:
        raise DataError(
            f"split length {n} is shorter than lookback+horizon {lookback + horizon}"
        )
    sliding = np.lib.stride_tricks.sliding_window_view(
        values, lookback + horizon, axis=0
    )  # (n - L - T + 1, C, L + T)
    look = sliding[..., :lookback].swapaxes(1, 2)
    target = sliding[..., lookback:].swapaxes(1, 2)
    return look, target


@dataclass
class DataSplits:
    """Standardized splits ready for windowing.

    ``val_context``/``test_context`` include the trailing lookback rows of
    the preceding split when border overlap is enabled, matching the usual
    benchmark protocol.
    """

    train: np.ndarray
    val_context: np.ndarray
    test_context: np.ndarray
    scaler: Scaler
    channel_names: list = field(default_factory=list)


def synthetic_series(length: int = 4000, periods=(24, 96),
                     noise: float = 0.0, seed: int = 0) -> MultivariateSeries:
    """Sum-of-sinusoids demo signal (one channel), optionally with noise."""
    t = np.arange(length, dtype=np.float64)
    x = np.zeros(length)
    for period in periods:
        x += np.sin(2.0 * np.pi * t / period)
    if noise > 0:
        x += np.random.default_rng(seed).normal(scale=noise, size=length)
    return MultivariateSeries(x[:, None], ["signal"])


def prepare_splits(series: MultivariateSeries, spec: SplitSpec, lookback: int,
                   border_overlap: bool = True) -> DataSplits:
    """Split, standardize on train statistics, and attach border context."""
    train, val, test = split(series, spec)
    scaler = fit_scaler(train)
    values = apply_scaler(series, scaler).values
    t0, t1 = spec.train_len, spec.train_len + spec.val_len
    t2 = spec.total
    overlap = lookback if border_overlap else 0
    return DataSplits(
        train=values[:t0],
        val_context=values[max(0, t0 - overlap):t1],
        test_context=values[max(0, t1 - overlap):t2],
        scaler=scaler,
        channel_names=series.channel_names,
    )
