"""Supervised contrastive learning with hard and soft negatives for
skeleton-based rehabilitation exercise assessment."""

from .augmentation import AugmentationConfig, augment, build_two_view_batch
from .contrastive import LossConfig, contrastive_loss, cosine_sim, partition_batch
from .data import (
    CORRECT,
    INCORRECT,
    KINECT_V2_GRAPH,
    UIPRMD_KINECT_GRAPH,
    Dataset,
    LabeledSample,
    SkeletonGraph,
    SkeletonSequence,
    export_canonical,
    ingest,
    load_canonical,
    resample_temporal,
    split,
)
from .estimator import SupConAssessor, TransferRegressor
from .evaluation import EvalReport, accuracy, auc_pr, auc_roc, evaluate, run_protocol, spearman
from .inference import ReferenceSet, build_reference, build_reference_set, calibrate_thresholds, classify
from .model import (
    ContrastiveModel,
    EncoderConfig,
    ProjectionConfig,
    RegressionHeadConfig,
    RegressionModel,
    count_parameters,
    load_checkpoint,
    save_checkpoint,
)
from .training import RegressionTrainConfig, TrainConfig, train_contrastive, transfer_to_regression

__version__ = "0.1.0"
