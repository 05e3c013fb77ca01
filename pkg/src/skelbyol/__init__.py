"""Self-supervised skeleton-sequence representation learning.

An online network learns to predict a momentum-averaged target network's
projection of a different augmented view of the same action. Positive pairs
come from two camera viewpoints of the same performance when available, and
the two branches see deliberately different augmentation distributions (an
aggressive pipeline and a conservative, resample-only one).
"""

__version__ = "0.1.0"

from .augment import (
    AugmentationSpec,
    ShearParams,
    aggressive_preset,
    apply_pipeline,
    conservative_preset,
    left_right_drop,
    lowpass_filter,
    resample,
    shear,
    temporal_shift,
)
from .byol import (
    BYOLPretrainer,
    byol_loss,
    embedding_std,
    encode_sequences,
    lambda_schedule,
    lr_schedule,
    symmetric_loss,
)
from .data import (
    ActionSample,
    Dataset,
    SkeletonSequence,
    load_dataset,
    save_dataset,
    split_dataset,
)
from .errors import ConfigError, DataError, NumericalError, SkelByolError
from .evaluate import (
    KnowledgeDistiller,
    LabeledSubset,
    LinearProbe,
    SemiSupervisedFineTuner,
    distillation_loss,
    export_embeddings,
    load_embeddings,
    sample_label_fraction,
    subset_dataset,
    top1_accuracy,
)
from .graphs import SkeletonGraph, graph_by_name, humanoid15, ntu25
from .nn import ArchDescriptor, BlockSpec, desk_arch, load_checkpoint, save_checkpoint
from .preprocess import (
    bone_features,
    canonical_rotate,
    center,
    concat_joint_bone,
    crop_or_repeat,
    preprocess_dataset,
    preprocess_sequence,
)
from .sampling import PairBatch, iter_pair_batches, multiview_pair
from .synthetic import generate_synthetic_dataset

__all__ = [
    "ActionSample",
    "ArchDescriptor",
    "AugmentationSpec",
    "BYOLPretrainer",
    "BlockSpec",
    "ConfigError",
    "DataError",
    "Dataset",
    "KnowledgeDistiller",
    "LabeledSubset",
    "LinearProbe",
    "NumericalError",
    "PairBatch",
    "SemiSupervisedFineTuner",
    "ShearParams",
    "SkelByolError",
    "SkeletonGraph",
    "SkeletonSequence",
    "aggressive_preset",
    "apply_pipeline",
    "bone_features",
    "byol_loss",
    "canonical_rotate",
    "center",
    "concat_joint_bone",
    "conservative_preset",
    "crop_or_repeat",
    "desk_arch",
    "distillation_loss",
    "embedding_std",
    "encode_sequences",
    "export_embeddings",
    "generate_synthetic_dataset",
    "graph_by_name",
    "humanoid15",
    "iter_pair_batches",
    "lambda_schedule",
    "left_right_drop",
    "load_checkpoint",
    "load_dataset",
    "load_embeddings",
    "lowpass_filter",
    "lr_schedule",
    "multiview_pair",
    "ntu25",
    "preprocess_dataset",
    "preprocess_sequence",
    "resample",
    "sample_label_fraction",
    "save_checkpoint",
    "save_dataset",
    "shear",
    "split_dataset",
    "subset_dataset",
    "symmetric_loss",
    "temporal_shift",
    "top1_accuracy",
]
