"""interPDN: per-step discrete probability distributions for forecasting.

A lookback window is mapped, per channel, through four lightweight
season/trend branches to per-step categorical distributions over
interleaved support grids; expectations give point forecasts, per-step
confidence weights fuse the branch pair, and coarse-resolution twins
provide self-supervised consistency targets during training.
"""

from .autodiff import Tensor, no_grad
from .config import PRESETS, ConfigError, TrainConfig, get_preset, load_config
from .dataio import (
    DataSplits,
    DataError,
    MultivariateSeries,
    Scaler,
    SplitSpec,
    WindowPair,
    apply_scaler,
    fit_scaler,
    invert_scaler,
    load_csv,
    make_windows,
    prepare_splits,
    split,
)
from .losses import (
    DecaySchedule,
    LossBreakdown,
    consistency_loss,
    cross_scale_loss,
    prediction_loss,
    theta_decay,
    total_loss,
)
from .metrics import (
    MetricReport,
    crps_approx,
    mae,
    mase,
    mse,
    quantile_from_distribution,
    quantile_loss,
    wql,
)
from .model import (
    ForwardOutput,
    ModelParams,
    build_support_pair,
    compute_losses,
    forward_full,
    init_params,
    predict,
)
from .probhead import (
    FusionResult,
    MergedDistribution,
    SupportSet,
    build_interleaved_set,
    build_support_set,
    build_uniform_support_set,
    confidence_fusion,
    expectation,
    merge_distributions,
    project_distribution,
)
from .training import (
    Checkpoint,
    gradient_check,
    evaluate_loss,
    evaluate_split,
    load_checkpoint,
    run_ablation,
    save_checkpoint,
    train,
)
from .transform import (
    Decomposition,
    PatchGrid,
    RevinStats,
    avgpool_downsample,
    ema_decompose,
    patch,
    revin_denormalize,
    revin_normalize,
)

__version__ = "0.1.0"
