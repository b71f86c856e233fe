"""Metrics, evaluation reports, embedding export and the SVM probe."""

from __future__ import annotations

import csv
import json
import logging
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .data import CORRECT, Dataset, normalize_assessment
from .inference import ReferenceSet, classify, embed_dataset, score_samples

logger = logging.getLogger(__name__)

METRICS = ("accuracy", "auc_roc", "auc_pr")


class UndefinedMetricError(ValueError):
    pass


def _binary(labels) -> np.ndarray:
    return np.array([normalize_assessment(v) == CORRECT for v in labels], dtype=bool)


def accuracy(predictions, truth) -> float:
    predictions, truth = list(predictions), list(truth)
    if len(predictions) != len(truth):
        raise ValueError(f"length mismatch: {len(predictions)} predictions, {len(truth)} labels")
    if not truth:
        raise UndefinedMetricError("accuracy of an empty set")
    return float(np.mean(_binary(predictions) == _binary(truth)))


def auc_roc(scores, truth) -> float:
    """P(score of a random positive > score of a random negative), ties count half."""
    scores = np.asarray(scores, dtype=np.float64)
    pos = _binary(truth)
    n_pos, n_neg = pos.sum(), (~pos).sum()
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC ROC needs both classes")
    ranks = rankdata(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def auc_pr(scores, truth) -> float:
    """Average precision: sum over distinct thresholds of recall step x precision."""
    scores = np.asarray(scores, dtype=np.float64)
    pos = _binary(truth)
    n_pos = pos.sum()
    if n_pos == 0:
        raise UndefinedMetricError("AUC PR needs at least one positive")
    order = np.argsort(-scores, kind="mergesort")
    s, p = scores[order], pos[order]
    tp = np.cumsum(p)
    last = np.r_[s[1:] != s[:-1], True]
    tp, k = tp[last], np.flatnonzero(last) + 1
    precision = tp / k
    recall = tp / n_pos
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def spearman(pred, truth) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if len(pred) != len(truth):
        raise ValueError("length mismatch")
    if len(pred) < 2:
        raise UndefinedMetricError("Spearman needs at least 2 pairs")
    if np.all(pred == pred[0]) or np.all(truth == truth[0]):
        raise UndefinedMetricError("Spearman is undefined for a constant vector")
    a, b = rankdata(pred), rankdata(truth)
    a, b = a - a.mean(), b - b.mean()
    return float(a @ b / np.sqrt((a @ a) * (b @ b)))


# ---------------------------------------------------------------------------
# reports


@dataclass
class EvalReport:
    per_exercise: dict
    macro_average: dict
    protocol: str = "ratio_3_1"
    seed: int = 0
    errors: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_json(), indent=2))
        return path

    def table(self, digits: int = 4) -> str:
        """Aligned text table: one row per metric, one column per type plus ``average``."""
        types = sorted(self.per_exercise, key=str)
        header = ["metric"] + [str(t) for t in types] + ["average"]
        rows = [header]
        for m in METRICS:
            row = [m]
            for t in types:
                v = self.per_exercise[t].get(m)
                row.append("-" if v is None else f"{v:.{digits}f}")
            v = self.macro_average.get(m)
            row.append("-" if v is None else f"{v:.{digits}f}")
            rows.append(row)
        rows.append(["samples"] + [str(self.per_exercise[t]["sample_count"]) for t in types] + [
            str(sum(self.per_exercise[t]["sample_count"] for t in types))
        ])
        widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
        return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows)


def macro_average(per_exercise: dict) -> dict:
    out = {}
    for m in METRICS:
        vals = [v[m] for v in per_exercise.values() if v.get(m) is not None]
        out[m] = float(np.mean(vals)) if vals else None
    return out


def report_from_scores(scores, exercise_type, truth, thresholds: dict, protocol="ratio_3_1", seed=0) -> EvalReport:
    scores = np.asarray(scores, dtype=np.float64)
    exercise_type = np.asarray(exercise_type, dtype=object)
    truth = np.asarray([normalize_assessment(v) for v in truth], dtype=object)
    per, errors = {}, {}
    for c in sorted(set(exercise_type.tolist()), key=str):
        mask = exercise_type == c
        s, z = scores[mask], truth[mask]
        preds = [classify(v, thresholds[c]) for v in s]
        entry = {"sample_count": int(mask.sum())}
        for name, fn, args in (
            ("accuracy", accuracy, (preds, z)),
            ("auc_roc", auc_roc, (s, z)),
            ("auc_pr", auc_pr, (s, z)),
        ):
            try:
                entry[name] = fn(*args)
            except UndefinedMetricError as exc:
                entry[name] = None
                errors.setdefault(str(c), {})[name] = str(exc)
        per[c] = entry
    return EvalReport(per, macro_average(per), protocol, seed, errors)


def evaluate(model, refs: ReferenceSet, data: Dataset, protocol: str = "ratio_3_1", seed: int = 0) -> EvalReport:
    """Per-exercise accuracy / AUC ROC / AUC PR of thresholded similarity scores."""
    scores = score_samples(model, refs, data)
    return report_from_scores(
        scores,
        [s.exercise_type for s in data],
        [s.assessment for s in data],
        refs.thresholds,
        protocol,
        seed,
    )


def combine_reports(reports: list[EvalReport]) -> EvalReport:
    """Average per-type metrics over folds (cross-validation summary)."""
    types = sorted({t for r in reports for t in r.per_exercise}, key=str)
    per = {}
    for t in types:
        entries = [r.per_exercise[t] for r in reports if t in r.per_exercise]
        entry = {"sample_count": sum(e["sample_count"] for e in entries)}
        for m in METRICS:
            vals = [e[m] for e in entries if e.get(m) is not None]
            entry[m] = float(np.mean(vals)) if vals else None
        per[t] = entry
    errors = {}
    for k, r in enumerate(reports):
        for t, e in r.errors.items():
            errors[f"fold{k}:{t}"] = e
    return EvalReport(per, macro_average(per), reports[0].protocol, reports[0].seed, errors)


# ---------------------------------------------------------------------------
# embeddings


def project_2d(points: np.ndarray, perplexity: float = 20.0, seed: int = 0) -> np.ndarray:
    from sklearn.manifold import TSNE

    n = len(points)
    if n < 3:
        raise ValueError("need at least 3 points for a 2-D neighbour embedding")
    if perplexity >= n:
        warnings.warn(f"perplexity {perplexity} >= number of points {n}; using {n - 1}")
        perplexity = n - 1
    return TSNE(n_components=2, perplexity=perplexity, random_state=seed, init="pca").fit_transform(points)


def export_embeddings(
    model,
    data: Dataset,
    head_mode: str,
    out_path,
    refs: ReferenceSet | None = None,
    project: bool = False,
    perplexity: float = 20.0,
    seed: int = 0,
) -> Path:
    """Tab-separated table of embeddings, optionally with a 2-D projection.

    Reference vectors (when ``refs`` is given) are appended as rows with
    ``kind = reference`` so the projection places them among the samples.
    """
    E = embed_dataset(model, data, head_mode)
    dim = E.shape[1]
    rows = [
        ["sample", s.sample_id, s.exercise_type, s.assessment if s.assessment is not None else s.clinical_score]
        for s in data
    ]
    vectors = [E]
    if refs is not None and len(data):
        if refs.head_mode != head_mode:
            raise ValueError(f"reference set was built with head mode {refs.head_mode}")
        for c in refs.exercise_types:
            rows.append(["reference", f"ref:{c}", c, ""])
        vectors.append(np.stack([refs.references[c] for c in refs.exercise_types]))
    V = np.concatenate(vectors) if len(data) else np.zeros((0, dim))
    header = ["kind", "id", "exercise_type", "label"] + [f"e{k}" for k in range(dim)]
    xy = None
    if project and len(V):
        header += ["proj_x", "proj_y"]
        xy = project_2d(V, perplexity, seed)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(header)
        for k, row in enumerate(rows):
            extra = [] if xy is None else [f"{xy[k, 0]:.6g}", f"{xy[k, 1]:.6g}"]
            writer.writerow(row + [f"{v:.9g}" for v in V[k]] + extra)
    return out_path


def read_embeddings(path) -> dict:
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter="\t")
        header = next(reader)
        rows = list(reader)
    cols = {name: k for k, name in enumerate(header)}
    ecols = [k for name, k in cols.items() if name.startswith("e") and name[1:].isdigit()]
    out = {
        "kind": [r[cols["kind"]] for r in rows],
        "id": [r[cols["id"]] for r in rows],
        "exercise_type": [r[cols["exercise_type"]] for r in rows],
        "label": [r[cols["label"]] for r in rows],
        "embedding": np.array([[float(r[k]) for k in ecols] for r in rows]).reshape(len(rows), len(ecols)),
    }
    if "proj_x" in cols:
        out["projection"] = np.array([[float(r[cols["proj_x"]]), float(r[cols["proj_y"]])] for r in rows])
    return out


def svm_probe(train_embeddings, train_labels, val_embeddings, val_labels, C: float = 1.0, gamma: float = 1 / 128) -> float:
    """Validation accuracy of an RBF-kernel SVM fitted on learned representations."""
    from sklearn.svm import SVC

    y_train = _binary(train_labels)
    if y_train.all() or not y_train.any():
        raise ValueError("SVM probe needs both classes in the training labels")
    clf = SVC(C=C, kernel="rbf", gamma=gamma).fit(np.asarray(train_embeddings), y_train)
    return float(np.mean(clf.predict(np.asarray(val_embeddings)) == _binary(val_labels)))


# ---------------------------------------------------------------------------
# protocols


def run_protocol(
    data: Dataset,
    train_config,
    encoder_config=None,
    projection_config=None,
    protocol: str = "ratio_3_1",
    seed: int = 0,
    head_mode: str = "with_projection",
    epsilon: float = 1e-8,
    subject_aware: bool = False,
    default_threshold: float = 0.5,
) -> tuple[EvalReport, list[EvalReport]]:
    """Train, build references, calibrate and evaluate on every split of ``protocol``.

    Returns the fold-averaged report and the per-fold reports (a single
    entry for ``ratio_3_1``).
    """
    from .data import split
    from .inference import build_reference_set, calibrate_thresholds
    from .training import train_contrastive

    folds = []
    for train, val in split(data, protocol, seed, subject_aware):
        model, _ = train_contrastive(train, train_config, encoder_config, projection_config)
        refs = build_reference_set(model, train, head_mode, epsilon)
        refs = calibrate_thresholds(model, refs, train, default_threshold)
        folds.append(evaluate(model, refs, val, protocol, seed))
    return combine_reports(folds), folds
