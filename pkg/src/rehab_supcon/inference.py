"""Reference representations, similarity scoring and per-type thresholds."""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .contrastive import cosine_sim
from .data import CORRECT, INCORRECT, Dataset, LabeledSample
from .model import ContrastiveModel, embed

logger = logging.getLogger(__name__)

HEAD_MODES = ("with_projection", "encoder_only")
DEFAULT_THRESHOLD = 0.5


def build_reference(V, epsilon: float = 1e-8, ddof: int = 0) -> np.ndarray:
    """Inverse-variance weighted sum of the rows of ``V`` (M x d).

    ``w = 1 / (Var(V) + epsilon)`` per column, ``r = w / |w|_1 * sum(V)``.
    """
    V = np.asarray(V, dtype=np.float64)
    if V.ndim != 2 or V.shape[0] < 2:
        raise ValueError("insufficient correct samples for reference (need at least 2)")
    if not np.isfinite(V).all():
        raise ValueError("embedding matrix contains non-finite values")
    w = 1.0 / (V.var(axis=0, ddof=ddof) + epsilon)
    return w / w.sum() * V.sum(axis=0)


@dataclass
class ReferenceSet:
    references: dict
    thresholds: dict = field(default_factory=dict)
    variance_epsilon: float = 1e-8
    head_mode: str = "with_projection"
    checkpoint_id: str = ""

    def __post_init__(self):
        if self.head_mode not in HEAD_MODES:
            raise ValueError(f"head_mode must be one of {HEAD_MODES}")
        self.references = {c: np.asarray(r, dtype=np.float64) for c, r in self.references.items()}
        for c, r in self.references.items():
            if not np.linalg.norm(r) > 0:
                raise ValueError(f"reference for {c!r} has zero norm")
        for c in self.references:
            self.thresholds.setdefault(c, DEFAULT_THRESHOLD)
        for c, th in self.thresholds.items():
            if not -1.0 <= th <= 1.0:
                raise ValueError(f"threshold for {c!r} outside [-1, 1]")

    @property
    def exercise_types(self) -> list:
        return sorted(self.references)

    def reference(self, exercise_type) -> np.ndarray:
        try:
            return self.references[exercise_type]
        except KeyError:
            raise KeyError(f"no reference for exercise type {exercise_type!r}") from None

    def to_json(self) -> dict:
        return {
            "head_mode": self.head_mode,
            "variance_epsilon": self.variance_epsilon,
            "checkpoint_id": self.checkpoint_id,
            "types": {
                str(c): {"reference": self.references[c].tolist(), "threshold": float(self.thresholds[c])}
                for c in self.exercise_types
            },
        }

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_json(), indent=1))
        return path

    @classmethod
    def from_json(cls, d: dict) -> "ReferenceSet":
        return cls(
            references={c: v["reference"] for c, v in d["types"].items()},
            thresholds={c: v["threshold"] for c, v in d["types"].items()},
            variance_epsilon=d.get("variance_epsilon", 1e-8),
            head_mode=d.get("head_mode", "with_projection"),
            checkpoint_id=d.get("checkpoint_id", ""),
        )

    @classmethod
    def load(cls, path) -> "ReferenceSet":
        return cls.from_json(json.loads(Path(path).read_text()))


def references_from_embeddings(
    embeddings: np.ndarray,
    exercise_type,
    correct,
    epsilon: float = 1e-8,
    ddof: int = 0,
) -> dict:
    """Per-type references from an embedding matrix; types with < 2 correct rows are skipped."""
    embeddings = np.asarray(embeddings)
    exercise_type = np.asarray(exercise_type, dtype=object)
    correct = np.asarray(correct, dtype=bool)
    refs = {}
    for c in sorted(set(exercise_type.tolist()), key=str):
        rows = embeddings[(exercise_type == c) & correct]
        if len(rows) < 2:
            warnings.warn(f"exercise type {c!r} has {len(rows)} correct sample(s); no reference built")
            continue
        refs[c] = build_reference(rows, epsilon, ddof)
    if not refs:
        raise ValueError("no exercise type has enough correct samples for a reference")
    return refs


def embed_dataset(model: ContrastiveModel, data: Dataset, head_mode: str) -> np.ndarray:
    if len(data) == 0:
        dim = model.projection_config.out_dim if head_mode == "with_projection" else model.encoder.embedding_dim
        return np.zeros((0, dim))
    return embed(model, data.frames_array(), head_mode)


def build_reference_set(
    model: ContrastiveModel,
    train_data: Dataset,
    head_mode: str = "with_projection",
    epsilon: float = 1e-8,
    ddof: int = 0,
) -> ReferenceSet:
    correct = train_data.filter(lambda s: s.assessment == CORRECT)
    E = embed_dataset(model, correct, head_mode)
    types = [s.exercise_type for s in correct]
    refs = references_from_embeddings(E, types, np.ones(len(types), bool), epsilon, ddof)
    return ReferenceSet(refs, {}, epsilon, head_mode, str(model.metadata.get("checkpoint_id", "")))


def similarity_scores(embeddings: np.ndarray, exercise_type, refs: ReferenceSet) -> np.ndarray:
    """Cosine similarity of every row with the reference of its type."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    out = np.empty(len(embeddings))
    for k, (e, c) in enumerate(zip(embeddings, exercise_type)):
        out[k] = cosine_sim(e, refs.reference(c))
    return out


def score_samples(model: ContrastiveModel, refs: ReferenceSet, data: Dataset) -> np.ndarray:
    missing = {s.exercise_type for s in data} - set(refs.references)
    if missing:
        raise KeyError(f"no reference for exercise type(s) {sorted(missing)}")
    E = embed_dataset(model, data, refs.head_mode)
    return similarity_scores(E, [s.exercise_type for s in data], refs)


def score_sample(model: ContrastiveModel, refs: ReferenceSet, sample: LabeledSample) -> float:
    r = refs.reference(sample.exercise_type)
    e = embed(model, sample.sequence.frames[None], refs.head_mode)[0]
    return cosine_sim(e, r)


def classify(score: float, threshold: float) -> str:
    return CORRECT if score >= threshold else INCORRECT


def select_threshold(scores, correct, default: float = DEFAULT_THRESHOLD) -> tuple[float, float | None]:
    """Balanced-accuracy maximising threshold over midpoints of sorted scores.

    Ties go to the larger threshold. Returns ``(threshold, balanced_accuracy)``
    or ``(default, None)`` when the scores cannot separate anything.
    """
    scores = np.asarray(scores, dtype=np.float64)
    correct = np.asarray(correct, dtype=bool)
    n_pos, n_neg = correct.sum(), (~correct).sum()
    distinct = np.unique(scores)
    if n_pos == 0 or n_neg == 0 or len(distinct) < 2:
        return default, None
    candidates = (distinct[:-1] + distinct[1:]) / 2
    best_t, best_ba = default, -1.0
    for t in candidates:
        pred = scores >= t
        ba = 0.5 * ((pred & correct).sum() / n_pos + (~pred & ~correct).sum() / n_neg)
        if ba >= best_ba:
            best_t, best_ba = float(t), float(ba)
    return best_t, best_ba


def calibrate_from_scores(refs: ReferenceSet, scores, exercise_type, correct, default=DEFAULT_THRESHOLD) -> ReferenceSet:
    exercise_type = np.asarray(exercise_type, dtype=object)
    correct = np.asarray(correct, dtype=bool)
    scores = np.asarray(scores, dtype=np.float64)
    thresholds = {}
    for c in refs.exercise_types:
        mask = exercise_type == c
        th, ba = select_threshold(scores[mask], correct[mask], default)
        if ba is None:
            warnings.warn(f"cannot calibrate threshold for {c!r}; using default {default}")
        thresholds[c] = float(np.clip(th, -1.0, 1.0))
    return replace(refs, thresholds=thresholds)


def calibrate_thresholds(
    model: ContrastiveModel,
    refs: ReferenceSet,
    train_data: Dataset,
    default: float = DEFAULT_THRESHOLD,
) -> ReferenceSet:
    data = train_data.filter(lambda s: s.exercise_type in refs.references)
    scores = score_samples(model, refs, data)
    return calibrate_from_scores(
        refs, scores, [s.exercise_type for s in data], [s.is_correct for s in data], default
    )
