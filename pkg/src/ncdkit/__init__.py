"""Desk-scale novel-class discovery toolkit.

Trains a shared encoder with a labelled classification head and a
novel clustering head on mixed labelled/unlabelled data, using
symmetric KL constraints between and within classes together with
balanced pseudo-labels for the unlabelled side.
"""

from .autodiff import SGD, Tape, Tensor, backward
from .data import (
    AugmentConfig,
    DatasetSplit,
    HiddenLabels,
    LabelledSamples,
    MiniBatch,
    SyntheticSpec,
    UnlabelledSamples,
    augment,
    generate,
    load_dataset_csv,
    make_batches,
    save_dataset_csv,
)
from .estimator import UNLABELLED, NovelClassDiscoverer
from .exceptions import (
    CheckpointMismatchError,
    ConfigurationError,
    GenerationError,
    NCDKitError,
    ShapeMismatchError,
    UsageError,
)
from .losses import (
    LossBreakdown,
    cross_entropy_padded,
    inter_class_loss,
    intra_class_loss,
    kl_div,
    mse_consistency,
    skl_pair,
    total_objective,
)
from .metrics import (
    MetricsReport,
    ari,
    clustering_accuracy,
    evaluate_task_agnostic,
    evaluate_task_aware,
    hungarian,
    nmi,
)
from .model import (
    ModelOutput,
    ModelParams,
    forward,
    forward_batch,
    init_model,
    load_checkpoint,
    save_checkpoint,
)
from .sinkhorn import (
    SinkhornConfig,
    one_hot,
    sinkhorn_knopp,
    swapped_pseudo_labels,
    zero_pad_target,
    zero_pad_targets,
)
from .training import (
    CANONICAL_VARIANTS,
    AblationResult,
    AblationVariant,
    EpochRecord,
    TrainConfig,
    TrainLog,
    discover,
    pretrain,
    run_ablation,
)

__version__ = "0.1.0"

__all__ = [
    "NCDKitError",
    "ShapeMismatchError",
    "ConfigurationError",
    "UsageError",
    "GenerationError",
    "CheckpointMismatchError",
    "Tensor",
    "Tape",
    "backward",
    "SGD",
    "SyntheticSpec",
    "AugmentConfig",
    "HiddenLabels",
    "LabelledSamples",
    "UnlabelledSamples",
    "DatasetSplit",
    "MiniBatch",
    "generate",
    "augment",
    "make_batches",
    "save_dataset_csv",
    "load_dataset_csv",
    "ModelParams",
    "ModelOutput",
    "init_model",
    "forward",
    "forward_batch",
    "save_checkpoint",
    "load_checkpoint",
    "kl_div",
    "skl_pair",
    "inter_class_loss",
    "intra_class_loss",
    "cross_entropy_padded",
    "mse_consistency",
    "total_objective",
    "LossBreakdown",
    "SinkhornConfig",
    "sinkhorn_knopp",
    "swapped_pseudo_labels",
    "zero_pad_target",
    "zero_pad_targets",
    "one_hot",
    "hungarian",
    "clustering_accuracy",
    "nmi",
    "ari",
    "MetricsReport",
    "evaluate_task_aware",
    "evaluate_task_agnostic",
    "TrainConfig",
    "TrainLog",
    "EpochRecord",
    "pretrain",
    "discover",
    "run_ablation",
    "AblationVariant",
    "AblationResult",
    "CANONICAL_VARIANTS",
    "NovelClassDiscoverer",
    "UNLABELLED",
    "__version__",
]
