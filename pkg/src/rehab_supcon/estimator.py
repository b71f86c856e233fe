"""scikit-learn compatible estimators.

``SupConAssessor`` wraps contrastive training, reference building and
threshold calibration behind ``fit`` / ``predict`` / ``decision_function`` /
``transform``. ``TransferRegressor`` fits the clinical-score head.

Skeleton input is always an ``n_samples x T x J x C`` array. Exercise types
are passed alongside it as the ``exercise_type`` keyword, since the
assessment label is only meaningful relative to the type.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .augmentation import AugmentationConfig
from .contrastive import LossConfig
from .data import CORRECT, INCORRECT, KINECT_V2_GRAPH, UIPRMD_KINECT_GRAPH, SkeletonGraph, normalize_assessment
from .inference import (
    HEAD_MODES,
    ReferenceSet,
    calibrate_from_scores,
    references_from_embeddings,
    similarity_scores,
)
from .model import (
    ContrastiveModel,
    EncoderConfig,
    ProjectionConfig,
    RegressionHeadConfig,
    embed,
    load_checkpoint,
)
from .training import RegressionTrainConfig, TrainConfig, fit_contrastive, predict_scores, transfer_to_regression


def check_skeleton_array(X, graph: SkeletonGraph | None = None) -> np.ndarray:
    """Validate an ``n x T x J x C`` array of finite coordinates."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 4:
        raise ValueError(f"expected a 4-d array (n_samples, T, J, C), got {X.ndim}-d")
    if X.shape[0] == 0:
        raise ValueError("empty input")
    if X.shape[1] < 2 or X.shape[3] < 2:
        raise ValueError("need T >= 2 frames and C >= 2 channels")
    if not np.isfinite(X).all():
        raise ValueError("input contains NaN or infinity")
    if graph is not None and X.shape[2] != graph.joint_count:
        raise ValueError(f"input has {X.shape[2]} joints, graph has {graph.joint_count}")
    return X


def check_exercise_type(exercise_type, n: int) -> np.ndarray:
    if exercise_type is None:
        raise ValueError("exercise_type is required")
    types = np.asarray(exercise_type, dtype=object).ravel()
    if len(types) != n:
        raise ValueError(f"exercise_type has {len(types)} entries for {n} samples")
    return types


def _default_graph(joints: int) -> SkeletonGraph:
    for g in (KINECT_V2_GRAPH, UIPRMD_KINECT_GRAPH):
        if g.joint_count == joints:
            return g
    raise ValueError(f"no built-in skeleton graph with {joints} joints; pass graph=")


class SupConAssessor(ClassifierMixin, BaseEstimator):
    """Single model for every exercise type; predicts ``'+'`` (correct) or ``'-'``.

    Parameters mirror the encoder, loss, training and inference settings.
    ``augmentation`` accepts an :class:`AugmentationConfig` or a dict.
    """

    def __init__(
        self,
        graph=None,
        layer_channels=(64, 64, 128, 128, 256, 256, 256, 256),
        temporal_strides=(1, 1, 2, 1, 2, 1, 1, 1),
        temporal_kernel=9,
        bottleneck_ratio=4.0,
        projection_dim=128,
        use_ri=False,
        epochs=2000,
        batch_tuples=128,
        learning_rate=1e-3,
        temperature=0.1,
        loss_mode="literal",
        augmentation=None,
        head_mode="with_projection",
        variance_epsilon=1e-8,
        calibrate=True,
        default_threshold=0.5,
        random_state=0,
    ):
        self.graph = graph
        self.layer_channels = layer_channels
        self.temporal_strides = temporal_strides
        self.temporal_kernel = temporal_kernel
        self.bottleneck_ratio = bottleneck_ratio
        self.projection_dim = projection_dim
        self.use_ri = use_ri
        self.epochs = epochs
        self.batch_tuples = batch_tuples
        self.learning_rate = learning_rate
        self.temperature = temperature
        self.loss_mode = loss_mode
        self.augmentation = augmentation
        self.head_mode = head_mode
        self.variance_epsilon = variance_epsilon
        self.calibrate = calibrate
        self.default_threshold = default_threshold
        self.random_state = random_state

    def _train_config(self) -> TrainConfig:
        aug = self.augmentation
        if aug is None:
            aug = AugmentationConfig(rng_seed=self.random_state or 0)
        elif isinstance(aug, dict):
            aug = AugmentationConfig(**aug)
        return TrainConfig(
            epochs=self.epochs,
            batch_tuples=self.batch_tuples,
            learning_rate=self.learning_rate,
            temperature=self.temperature,
            seed=self.random_state or 0,
            augmentation=aug,
            loss=LossConfig(self.temperature, self.loss_mode),
            use_ri=self.use_ri,
        )

    def fit(self, X, y, exercise_type=None):
        if self.head_mode not in HEAD_MODES:
            raise ValueError(f"head_mode must be one of {HEAD_MODES}")
        X = check_skeleton_array(X)
        types = check_exercise_type(exercise_type, len(X))
        z = np.array([normalize_assessment(v) for v in np.asarray(y, dtype=object).ravel()], dtype=object)
        if len(z) != len(X):
            raise ValueError("X and y differ in length")
        graph = self.graph if self.graph is not None else _default_graph(X.shape[2])
        if not isinstance(graph, SkeletonGraph):
            graph = SkeletonGraph(X.shape[2], tuple(map(tuple, graph)))
        check_skeleton_array(X, graph)
        encoder_config = EncoderConfig(
            in_channels=X.shape[3],
            layer_channels=tuple(self.layer_channels),
            temporal_strides=tuple(self.temporal_strides),
            temporal_kernel=self.temporal_kernel,
            bottleneck_ratio=self.bottleneck_ratio,
            use_ri=self.use_ri,
        )
        projection = ProjectionConfig(encoder_config.embedding_dim, self.projection_dim)
        self.model_, self.history_ = fit_contrastive(
            X, types, z, graph, self._train_config(), encoder_config, projection
        )
        self._build_references(X, types, z)
        self.graph_ = graph
        self.classes_ = np.array([INCORRECT, CORRECT], dtype=object)
        self.n_features_in_ = int(np.prod(X.shape[1:]))
        return self

    def _build_references(self, X, types, z):
        E = embed(self.model_, X, self.head_mode)
        correct = z == CORRECT
        refs = ReferenceSet(
            references_from_embeddings(E, types, correct, self.variance_epsilon),
            variance_epsilon=self.variance_epsilon,
            head_mode=self.head_mode,
        )
        if self.calibrate:
            known = np.isin(types, list(refs.references))
            refs = calibrate_from_scores(
                refs, similarity_scores(E[known], types[known], refs), types[known], correct[known],
                self.default_threshold,
            )
        else:
            refs.thresholds = {c: self.default_threshold for c in refs.references}
        self.references_ = refs

    @classmethod
    def from_checkpoint(cls, path, X, y, exercise_type, **params) -> "SupConAssessor":
        """Build an assessor around a saved model, deriving references from (X, y)."""
        est = cls(**params)
        est.model_ = load_checkpoint(path)
        est.graph_ = est.model_.graph
        est.history_ = []
        X = check_skeleton_array(X, est.graph_)
        types = check_exercise_type(exercise_type, len(X))
        z = np.array([normalize_assessment(v) for v in np.asarray(y, dtype=object).ravel()], dtype=object)
        est._build_references(X, types, z)
        est.classes_ = np.array([INCORRECT, CORRECT], dtype=object)
        est.n_features_in_ = int(np.prod(X.shape[1:]))
        return est

    def transform(self, X):
        """Learned representations under ``head_mode``."""
        check_is_fitted(self, "model_")
        X = check_skeleton_array(X, self.graph_)
        return embed(self.model_, X, self.head_mode)

    def decision_function(self, X, exercise_type=None):
        """Cosine similarity to the reference of each sample's exercise type."""
        check_is_fitted(self, "references_")
        E = self.transform(X)
        types = check_exercise_type(exercise_type, len(E))
        return similarity_scores(E, types, self.references_)

    def predict(self, X, exercise_type=None):
        scores = self.decision_function(X, exercise_type)
        types = check_exercise_type(exercise_type, len(scores))
        th = np.array([self.references_.thresholds[c] for c in types])
        return np.where(scores >= th, CORRECT, INCORRECT).astype(object)

    def score(self, X, y, exercise_type=None, sample_weight=None):
        from sklearn.metrics import accuracy_score

        truth = np.array([normalize_assessment(v) for v in np.asarray(y, dtype=object).ravel()], dtype=object)
        return accuracy_score(truth, self.predict(X, exercise_type), sample_weight=sample_weight)


class TransferRegressor(RegressorMixin, BaseEstimator):
    """Two-layer clinical-score head on an (optionally pre-trained) encoder.

    ``pretrained`` is a :class:`ContrastiveModel`, a checkpoint path, or
    ``None`` to train a fresh encoder from scratch.
    """

    def __init__(
        self,
        pretrained=None,
        graph=None,
        hidden_dim=128,
        freeze_encoder=True,
        epochs=200,
        batch_size=16,
        learning_rate=1e-3,
        encoder_config=None,
        random_state=0,
    ):
        self.pretrained = pretrained
        self.graph = graph
        self.hidden_dim = hidden_dim
        self.freeze_encoder = freeze_encoder
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.encoder_config = encoder_config
        self.random_state = random_state

    def fit(self, X, y):
        from .data import Dataset, LabeledSample, SkeletonSequence

        X = check_skeleton_array(X)
        y = np.asarray(y, dtype=np.float64).ravel()
        if len(y) != len(X):
            raise ValueError("X and y differ in length")
        pretrained = self.pretrained
        if pretrained is not None and not isinstance(pretrained, ContrastiveModel):
            pretrained = load_checkpoint(pretrained)
        graph = self.graph or (pretrained.graph if pretrained is not None else _default_graph(X.shape[2]))
        data = Dataset(
            graph,
            tuple(
                LabeledSample(SkeletonSequence(x), "target", clinical_score=float(s), sample_id=str(k))
                for k, (x, s) in enumerate(zip(X, y))
            ),
            "target",
        )
        self.model_, self.history_ = transfer_to_regression(
            pretrained,
            data,
            RegressionHeadConfig(self.hidden_dim, self.freeze_encoder),
            RegressionTrainConfig(self.epochs, self.batch_size, self.learning_rate, seed=self.random_state or 0),
            encoder_config=self.encoder_config,
        )
        self.n_features_in_ = int(np.prod(X.shape[1:]))
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        return predict_scores(self.model_, check_skeleton_array(X, self.model_.graph))
