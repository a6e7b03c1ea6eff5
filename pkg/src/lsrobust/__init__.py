"""lsrobust: label-smoothing robustness evaluation at desk scale.

Train small dense classifiers with and without label smoothing, attack them
with the full gradient-based family (FGSM, PGD variants, MultiTargeted, ODI,
auto-step-size APGD, original CW-L2, and a tanh-interval L-inf attack), and
measure how apparent robustness behaves under stronger attacks, restarts,
and transfer.
"""

from ._validation import ValidationError
from .attacks import (
    Attack,
    AttackConfig,
    AttackOutcome,
    CWConfig,
    apgd_ce,
    cw_l2,
    fgsm,
    make_attack,
    multitargeted,
    odi_init,
    our_linf_attack,
    pgd,
    pgd_cw,
    project_ball,
)
from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .classifier import DenseClassifier
from .data import (
    DataFormatError,
    Dataset,
    load_dataset,
    load_idx,
    save_dataset,
    subset,
    synth_blobs,
    synth_digits,
    write_idx,
)
from .evaluation import (
    EvalReport,
    FeasibilityError,
    OracleResult,
    TransferReport,
    alpha_sweep,
    exhaustive_oracle,
    robust_accuracy,
    step_ablation,
    toy_demo_1d,
    transfer_eval,
)
from .losses import (
    LabelVector,
    MarginStats,
    ce_loss_onehot,
    ce_loss_smoothed,
    margin_grad,
    margin_loss,
    margin_stats,
    optimal_margin,
    smooth_labels,
    smoothed_ce_from_margins,
    softmax,
)
from .network import DenseLayer, Model, backward, forward, init_model, predict
from .training import (
    EpochRecord,
    LogitRangeStats,
    TrainConfig,
    TrainingDivergedError,
    logit_range_stats,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "Attack", "AttackConfig", "AttackOutcome", "CWConfig", "Checkpoint",
    "CheckpointError", "DataFormatError", "Dataset", "DenseClassifier",
    "DenseLayer", "EpochRecord", "EvalReport", "FeasibilityError",
    "LabelVector", "LogitRangeStats", "MarginStats", "Model", "OracleResult",
    "TrainConfig", "TrainingDivergedError", "TransferReport",
    "ValidationError", "alpha_sweep", "apgd_ce", "backward", "ce_loss_onehot",
    "ce_loss_smoothed", "cw_l2", "exhaustive_oracle", "fgsm", "forward",
    "init_model", "load_checkpoint", "load_dataset", "load_idx",
    "logit_range_stats", "make_attack", "margin_grad", "margin_loss",
    "margin_stats", "multitargeted", "odi_init", "optimal_margin",
    "our_linf_attack", "pgd", "pgd_cw", "predict", "project_ball",
    "robust_accuracy", "save_checkpoint", "save_dataset", "smooth_labels",
    "smoothed_ce_from_margins", "softmax", "step_ablation", "subset",
    "synth_blobs", "synth_digits", "toy_demo_1d", "train", "transfer_eval",
    "write_idx",
]
