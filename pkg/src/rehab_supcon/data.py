"""Skeleton sequences, labelled samples and datasets.

Holds the canonical in-memory data model, the adapters that read the public
UI-PRMD / IRDS / KIMORE segmented layouts, temporal re-sampling, the
canonical on-disk format and the train/validation split protocols.
"""

from __future__ import annotations

import csv
import json
import logging
import re
import warnings
from collections import defaultdict, deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

CORRECT = "+"
INCORRECT = "-"
_MINUS_ALIASES = {"-", "−"}

DATASET_KINDS = ("uiprmd", "irds", "kimore", "canonical")
DEFAULT_TARGET_LENGTH = 64


class DataError(Exception):
    """Base class for dataset problems."""


class IngestError(DataError):
    """A source file is missing, unreadable or unusable."""


class ParseError(IngestError):
    """A numeric row in a source file could not be parsed."""

    def __init__(self, path, lineno: int, message: str):
        self.path = Path(path)
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {message}")


# ---------------------------------------------------------------------------
# data model


@dataclass(frozen=True)
class SkeletonGraph:
    """Joint topology: ``joint_count`` nodes, undirected ``edges``, a root."""

    joint_count: int
    edges: tuple[tuple[int, int], ...]
    root_joint: int = 0

    def __post_init__(self):
        if self.joint_count < 1:
            raise ValueError("joint_count must be positive")
        edges = tuple((int(a), int(b)) for a, b in self.edges)
        seen = set()
        for a, b in edges:
            if not (0 <= a < self.joint_count and 0 <= b < self.joint_count):
                raise ValueError(f"edge ({a}, {b}) out of range for {self.joint_count} joints")
            if a == b:
                raise ValueError(f"self-loop on joint {a}")
            key = (min(a, b), max(a, b))
            if key in seen:
                raise ValueError(f"duplicate edge ({a}, {b})")
            seen.add(key)
        if not 0 <= self.root_joint < self.joint_count:
            raise ValueError("root_joint out of range")
        object.__setattr__(self, "edges", edges)
        if np.isinf(self.hop_distance()).any():
            raise ValueError("skeleton graph is not connected")

    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.joint_count, self.joint_count))
        for a, b in self.edges:
            A[a, b] = A[b, a] = 1.0
        return A

    def hop_distance(self) -> np.ndarray:
        """Breadth-first hop count from the root; ``inf`` if unreachable."""
        neighbours = defaultdict(list)
        for a, b in self.edges:
            neighbours[a].append(b)
            neighbours[b].append(a)
        dist = np.full(self.joint_count, np.inf)
        dist[self.root_joint] = 0
        queue = deque([self.root_joint])
        while queue:
            v = queue.popleft()
            for w in neighbours[v]:
                if np.isinf(dist[w]):
                    dist[w] = dist[v] + 1
                    queue.append(w)
        return dist

    def to_dict(self) -> dict:
        return {
            "joint_count": self.joint_count,
            "edges": [list(e) for e in self.edges],
            "root_joint": self.root_joint,
        }


def _one_based(pairs):
    return tuple((a - 1, b - 1) for a, b in pairs)


# Kinect v2 / Kinect One, 25 joints (IRDS and KIMORE); root = spine base.
KINECT_V2_GRAPH = SkeletonGraph(
    25,
    _one_based([
        (1, 2), (2, 21), (3, 21), (4, 3), (5, 21), (6, 5), (7, 6), (8, 7),
        (9, 21), (10, 9), (11, 10), (12, 11), (13, 1), (14, 13), (15, 14),
        (16, 15), (17, 1), (18, 17), (19, 18), (20, 19), (22, 23), (23, 8),
        (24, 25), (25, 12),
    ]),
    root_joint=0,
)

# UI-PRMD Kinect, 22 joints: waist, spine, chest, neck, head, head tip,
# L collar/upper arm/forearm/hand, R collar/upper arm/forearm/hand,
# L upper leg/lower leg/foot/toes, R upper leg/lower leg/foot/toes.
UIPRMD_KINECT_GRAPH = SkeletonGraph(
    22,
    (
        (0, 1), (1, 2), (2, 3), (3, 4), (4, 5),
        (2, 6), (6, 7), (7, 8), (8, 9),
        (2, 10), (10, 11), (11, 12), (12, 13),
        (0, 14), (14, 15), (15, 16), (16, 17),
        (0, 18), (18, 19), (19, 20), (20, 21),
    ),
    root_joint=0,
)


@dataclass(frozen=True, eq=False)
class SkeletonSequence:
    """``frames`` is a T x J x C array of joint coordinates."""

    frames: np.ndarray
    fps: float = 30.0

    def __post_init__(self):
        frames = np.array(self.frames, dtype=np.float64)
        if frames.ndim != 3:
            raise ValueError(f"frames must be T x J x C, got shape {frames.shape}")
        if frames.shape[0] < 2:
            raise ValueError("a sequence needs at least 2 frames")
        if frames.shape[2] < 2:
            raise ValueError("a sequence needs at least 2 channels")
        if not np.isfinite(frames).all():
            raise ValueError("sequence contains non-finite values")
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.frames.shape

    def __len__(self) -> int:
        return self.frames.shape[0]

    def __eq__(self, other):
        if not isinstance(other, SkeletonSequence):
            return NotImplemented
        return (
            self.frames.shape == other.frames.shape
            and np.array_equal(self.frames, other.frames)
            and self.fps == other.fps
        )

    __hash__ = None


@dataclass(frozen=True)
class LabeledSample:
    sequence: SkeletonSequence
    exercise_type: str
    assessment: str | None = None
    clinical_score: float | None = None
    subject_id: str = ""
    sample_id: str = ""

    def __post_init__(self):
        if (self.assessment is None) == (self.clinical_score is None):
            raise ValueError("exactly one of assessment / clinical_score must be given")
        if self.assessment is not None:
            value = normalize_assessment(self.assessment)
            object.__setattr__(self, "assessment", value)
        else:
            score = float(self.clinical_score)
            if not 0.0 <= score <= 50.0:
                raise ValueError(f"clinical_score {score} outside [0, 50]")
            object.__setattr__(self, "clinical_score", score)

    @property
    def is_correct(self) -> bool:
        return self.assessment == CORRECT


def normalize_assessment(value) -> str:
    if value in (CORRECT, 1, True, "correct"):
        return CORRECT
    if value in _MINUS_ALIASES or value in (0, False, "incorrect"):
        return INCORRECT
    raise ValueError(f"unknown assessment label {value!r}")


@dataclass(frozen=True)
class Dataset:
    graph: SkeletonGraph
    samples: tuple[LabeledSample, ...] = ()
    name: str = ""

    def __post_init__(self):
        samples = tuple(self.samples)
        J = self.graph.joint_count
        for s in samples:
            if s.sequence.shape[1] != J:
                raise ValueError(
                    f"sample {s.sample_id!r} has {s.sequence.shape[1]} joints, graph has {J}"
                )
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    @property
    def exercise_types(self) -> list[str]:
        return sorted({s.exercise_type for s in self.samples})

    @property
    def is_regression(self) -> bool:
        return bool(self.samples) and self.samples[0].clinical_score is not None

    def subset(self, indices: Iterable[int], name: str | None = None) -> "Dataset":
        return Dataset(self.graph, tuple(self.samples[i] for i in indices), name or self.name)

    def filter(self, predicate: Callable[[LabeledSample], bool]) -> "Dataset":
        return Dataset(self.graph, tuple(s for s in self.samples if predicate(s)), self.name)

    def of_type(self, exercise_type: str) -> "Dataset":
        return self.filter(lambda s: s.exercise_type == exercise_type)

    def partition(self) -> dict[str, dict[str, list[int]]]:
        """Per exercise type, indices of correct and incorrect samples."""
        out: dict[str, dict[str, list[int]]] = {}
        for i, s in enumerate(self.samples):
            entry = out.setdefault(s.exercise_type, {CORRECT: [], INCORRECT: []})
            if s.assessment is not None:
                entry[s.assessment].append(i)
        return out

    def counts(self) -> dict[str, dict[str, int]]:
        out = {}
        for c, parts in sorted(self.partition().items()):
            n = sum(1 for s in self.samples if s.exercise_type == c)
            out[c] = {"total": n, "correct": len(parts[CORRECT]), "incorrect": len(parts[INCORRECT])}
        return out

    def frames_array(self) -> np.ndarray:
        """Stack all sequences into an N x T x J x C array (equal lengths required)."""
        if not self.samples:
            return np.zeros((0, 0, self.graph.joint_count, 0))
        lengths = {s.sequence.shape for s in self.samples}
        if len(lengths) != 1:
            raise DataError("sequences differ in shape; resample to a common length first")
        return np.stack([s.sequence.frames for s in self.samples])

    def labels(self) -> tuple[np.ndarray, np.ndarray]:
        """Return (exercise_type, assessment-or-score) arrays."""
        types = np.array([s.exercise_type for s in self.samples], dtype=object)
        if self.is_regression:
            target = np.array([s.clinical_score for s in self.samples], dtype=float)
        else:
            target = np.array([s.assessment for s in self.samples], dtype=object)
        return types, target


# ---------------------------------------------------------------------------
# preprocessing


def resample_temporal(sequence: SkeletonSequence, target_length: int) -> SkeletonSequence:
    """Linearly interpolate every joint channel onto ``target_length`` frames."""
    if int(target_length) != target_length or target_length < 2:
        raise ValueError(f"target_length must be an integer >= 2, got {target_length}")
    target_length = int(target_length)
    frames = sequence.frames
    T = frames.shape[0]
    if T == target_length:
        return sequence
    out = resample_array(frames, target_length)
    return SkeletonSequence(out, sequence.fps * (target_length - 1) / (T - 1))


def resample_array(frames: np.ndarray, target_length: int) -> np.ndarray:
    """Array version of :func:`resample_temporal` over the leading axis."""
    T = frames.shape[0]
    if T == target_length:
        return np.array(frames, dtype=np.float64)
    pos = np.arange(target_length) * (T - 1) / (target_length - 1)
    lo = np.minimum(np.floor(pos).astype(int), T - 2)
    w = (pos - lo).reshape((-1,) + (1,) * (frames.ndim - 1))
    out = (1.0 - w) * frames[lo] + w * frames[lo + 1]
    out[0] = frames[0]
    out[-1] = frames[-1]
    return out


def repair_nonfinite(frames: np.ndarray, source: str = "") -> np.ndarray:
    """Fill non-finite entries by linear interpolation along time, per joint channel."""
    frames = np.array(frames, dtype=np.float64)
    bad = ~np.isfinite(frames)
    if not bad.any():
        return frames
    T, J, C = frames.shape
    t = np.arange(T)
    for j in range(J):
        for c in range(C):
            mask = bad[:, j, c]
            if not mask.any():
                continue
            if mask.all():
                raise IngestError(f"{source}: joint {j} has no finite values")
            frames[mask, j, c] = np.interp(t[mask], t[~mask], frames[~mask, j, c])
    return frames


def center_on_root(frames: np.ndarray, root_joint: int) -> np.ndarray:
    return frames - frames[:, root_joint : root_joint + 1, :]


def resample_dataset(dataset: Dataset, target_length: int) -> Dataset:
    samples = tuple(
        LabeledSample(
            resample_temporal(s.sequence, target_length),
            s.exercise_type,
            s.assessment,
            s.clinical_score,
            s.subject_id,
            s.sample_id,
        )
        for s in dataset.samples
    )
    return Dataset(dataset.graph, samples, dataset.name)


# ---------------------------------------------------------------------------
# raw readers

_NUMBER = re.compile(r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?|[-+]?(?:nan|inf)", re.I)


def read_numeric_rows(
    path: Path,
    allowed_widths: Sequence[int],
    skip_header: bool = True,
) -> list[np.ndarray]:
    """Read a comma/whitespace separated numeric text file row by row.

    Parentheses and trailing separators are tolerated. A first line with
    alphabetic content is treated as a header when ``skip_header``.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        cleaned = re.sub(r"[(),;\t]", " ", stripped)
        tokens = cleaned.split()
        try:
            values = np.array([float(tok) for tok in tokens])
        except ValueError:
            if skip_header and not rows and re.search(r"[A-Za-z]", stripped) and not _NUMBER.fullmatch(tokens[0]):
                continue
            raise ParseError(path, lineno, f"non-numeric value in row: {stripped[:60]!r}")
        if values.size not in allowed_widths:
            raise ParseError(
                path, lineno, f"expected {' or '.join(map(str, allowed_widths))} values, got {values.size}"
            )
        rows.append(values)
    if len(rows) < 2:
        raise IngestError(f"{path}: fewer than 2 frames")
    return rows


def _rows_to_frames(rows: list[np.ndarray], joints: int, path: Path) -> np.ndarray:
    widths = {r.size for r in rows}
    if len(widths) != 1:
        raise IngestError(f"{path}: rows have inconsistent widths {sorted(widths)}")
    arr = np.stack(rows)
    per_joint = arr.shape[1] // joints
    arr = arr.reshape(len(rows), joints, per_joint)[:, :, :3]
    return arr


def _load_sequence(path: Path, graph: SkeletonGraph, widths, center: bool) -> SkeletonSequence:
    rows = read_numeric_rows(path, widths)
    frames = _rows_to_frames(rows, graph.joint_count, path)
    frames = repair_nonfinite(frames, str(path))
    if center:
        frames = center_on_root(frames, graph.root_joint)
    return SkeletonSequence(frames, 30.0)


def _parallel_map(fn, items, workers: int):
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


_UIPRMD_NAME = re.compile(r"m(\d+)_s(\d+)_e(\d+)_positions(_inc)?\.txt$", re.I)


def _ingest_uiprmd(root: Path, center: bool, workers: int) -> Dataset:
    files = sorted(
        p for p in root.rglob("*.txt")
        if _UIPRMD_NAME.search(p.name) and "kinect" in str(p.relative_to(root)).lower()
    )
    if not files:
        raise IngestError(f"no UI-PRMD Kinect position files under {root}")
    graph = UIPRMD_KINECT_GRAPH

    def load(path: Path) -> LabeledSample:
        m = _UIPRMD_NAME.search(path.name)
        movement, subject, episode, inc = int(m[1]), int(m[2]), int(m[3]), m[4]
        seq = _load_sequence(path, graph, (66,), center)
        return LabeledSample(
            seq,
            f"u{movement:02d}",
            INCORRECT if inc else CORRECT,
            subject_id=f"s{subject:02d}",
            sample_id=f"u{movement:02d}_s{subject:02d}_e{episode:02d}_{'inc' if inc else 'cor'}",
        )

    return Dataset(graph, tuple(_parallel_map(load, files, workers)), "uiprmd")


# SubjectID_DateID_GestureLabel_RepetitionNo_CorrectLabel_Position.txt
_IRDS_NAME = re.compile(r"^(\d+)_(\d+)_(\d+)_(\d+)_(\d+)_([A-Za-z]+)\.(?:txt|csv)$")


def _ingest_irds(root: Path, center: bool, workers: int) -> Dataset:
    files = sorted(p for p in root.rglob("*") if p.is_file() and _IRDS_NAME.match(p.name))
    if not files:
        raise IngestError(f"no IRDS sample files under {root}")
    graph = KINECT_V2_GRAPH

    def load(path: Path) -> LabeledSample:
        subject, date, gesture, rep, correct, position = _IRDS_NAME.match(path.name).groups()
        if correct not in ("1", "2"):
            raise IngestError(f"{path}: correctness label {correct} not in {{1, 2}}")
        seq = _load_sequence(path, graph, (75, 100), center)
        return LabeledSample(
            seq,
            f"i{int(gesture) + 1:02d}",
            CORRECT if correct == "1" else INCORRECT,
            subject_id=subject,
            sample_id=path.stem,
        )

    return Dataset(graph, tuple(_parallel_map(load, files, workers)), "irds")


_KIMORE_SCORE_COL = re.compile(r"clinical\s*TS\s*Ex\s*#?\s*(\d)", re.I)


def _read_kimore_scores(label_dir: Path) -> dict[int, float]:
    """Return {exercise number: total clinical score} from a ClinicalAssessment file."""
    candidates = sorted(label_dir.glob("ClinicalAssessment*"))
    if not candidates:
        raise IngestError(f"no ClinicalAssessment file in {label_dir}")
    path = candidates[0]
    if path.suffix.lower() == ".csv":
        with open(path, newline="") as fh:
            table = list(csv.reader(fh))
    elif path.suffix.lower() in (".xlsx", ".xlsm"):
        try:
            import openpyxl
        except ImportError as exc:  # pragma: no cover - optional dependency
            raise IngestError(f"reading {path} requires openpyxl") from exc
        wb = openpyxl.load_workbook(path, read_only=True, data_only=True)
        table = [[("" if v is None else str(v)) for v in row] for row in wb.active.iter_rows(values_only=True)]
    else:
        raise IngestError(f"unsupported label file {path}")
    if len(table) < 2:
        raise IngestError(f"{path}: no data row")
    header, row = table[0], table[1]
    scores = {}
    for col, name in enumerate(header):
        m = _KIMORE_SCORE_COL.search(name)
        if m and col < len(row) and row[col].strip():
            try:
                scores[int(m[1])] = float(row[col])
            except ValueError as exc:
                raise ParseError(path, 2, f"bad score {row[col]!r}") from exc
    return scores


def _ingest_kimore(root: Path, center: bool, workers: int) -> Dataset:
    files = sorted(p for p in root.rglob("JointPosition*.csv") if re.fullmatch(r"Es\d", p.parent.parent.name))
    if not files:
        raise IngestError(f"no KIMORE JointPosition files under {root}")
    graph = KINECT_V2_GRAPH

    def load(path: Path) -> LabeledSample | None:
        ex_dir = path.parent.parent
        exercise = int(ex_dir.name[2:])
        subject = ex_dir.parent.name
        scores = _read_kimore_scores(ex_dir / "Label")
        if exercise not in scores:
            warnings.warn(f"{path}: no clinical score for exercise {exercise}; sample skipped")
            return None
        seq = _load_sequence(path, graph, (75, 100), center)
        return LabeledSample(
            seq,
            f"k{exercise:02d}",
            clinical_score=min(max(scores[exercise], 0.0), 50.0),
            subject_id=subject,
            sample_id=f"k{exercise:02d}_{subject}",
        )

    samples = [s for s in _parallel_map(load, files, workers) if s is not None]
    return Dataset(graph, tuple(samples), "kimore")


def ingest(
    dataset_kind: str,
    root_path,
    *,
    center: bool = True,
    workers: int = 1,
) -> Dataset:
    """Read a dataset from disk.

    ``dataset_kind`` is one of ``uiprmd``, ``irds``, ``kimore`` (published
    segmented layouts) or ``canonical`` (the format written by
    :func:`export_canonical`). Raw adapters root-centre every frame when
    ``center`` is set; the canonical reader returns values untouched.
    """
    root = Path(root_path)
    if dataset_kind not in DATASET_KINDS:
        raise ValueError(f"unknown dataset kind {dataset_kind!r}; expected one of {DATASET_KINDS}")
    if not root.is_dir():
        raise IngestError(f"dataset root {root} does not exist or is not a directory")
    if dataset_kind == "canonical":
        return load_canonical(root)
    reader = {"uiprmd": _ingest_uiprmd, "irds": _ingest_irds, "kimore": _ingest_kimore}[dataset_kind]
    dataset = reader(root, center, workers)
    logger.info("ingested %s: %d samples, %d exercise types", dataset_kind, len(dataset), len(dataset.exercise_types))
    return dataset


# ---------------------------------------------------------------------------
# canonical format

_SAFE_ID = re.compile(r"[^A-Za-z0-9_.-]")


def export_canonical(dataset: Dataset, out_path) -> dict:
    """Write ``meta.json``, ``manifest.jsonl`` and one text matrix per sample."""
    out = Path(out_path)
    try:
        frames_dir = out / "frames"
        frames_dir.mkdir(parents=True, exist_ok=True)
        channels = dataset.samples[0].sequence.shape[2] if dataset.samples else 3
        fps = dataset.samples[0].sequence.fps if dataset.samples else 30.0
        meta = {"name": dataset.name, "channel_count": channels, "fps": fps, **dataset.graph.to_dict()}
        (out / "meta.json").write_text(json.dumps(meta, indent=2))
        used = set()
        with open(out / "manifest.jsonl", "w") as fh:
            for i, s in enumerate(dataset.samples):
                stem = _SAFE_ID.sub("_", s.sample_id) or f"sample{i:05d}"
                if stem in used:
                    stem = f"{stem}_{i:05d}"
                used.add(stem)
                frames_file = f"frames/{stem}.txt"
                T, J, C = s.sequence.shape
                np.savetxt(out / frames_file, s.sequence.frames.reshape(T, J * C), fmt="%.17g")
                record = {
                    "id": s.sample_id or stem,
                    "exercise_type": s.exercise_type,
                    "subject_id": s.subject_id,
                    "frames_file": frames_file,
                    "frame_count": T,
                    "fps": s.sequence.fps,
                }
                if s.assessment is not None:
                    record["assessment"] = s.assessment
                else:
                    record["clinical_score"] = s.clinical_score
                fh.write(json.dumps(record) + "\n")
    except OSError as exc:
        raise IngestError(f"cannot write canonical dataset to {out}: {exc}") from exc
    return {"path": str(out), "samples": len(dataset), "counts": dataset.counts()}


def load_canonical(root) -> Dataset:
    root = Path(root)
    try:
        meta = json.loads((root / "meta.json").read_text())
        lines = (root / "manifest.jsonl").read_text().splitlines()
    except (OSError, json.JSONDecodeError) as exc:
        raise IngestError(f"cannot read canonical dataset at {root}: {exc}") from exc
    graph = SkeletonGraph(meta["joint_count"], tuple(map(tuple, meta["edges"])), meta["root_joint"])
    J, C = graph.joint_count, meta["channel_count"]
    samples = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(root / "manifest.jsonl", lineno, str(exc)) from exc
        path = root / rec["frames_file"]
        rows = read_numeric_rows(path, (J * C,), skip_header=False)
        if len(rows) != rec["frame_count"]:
            raise IngestError(f"{path}: {len(rows)} frames, manifest says {rec['frame_count']}")
        frames = np.stack(rows).reshape(len(rows), J, C)
        samples.append(
            LabeledSample(
                SkeletonSequence(frames, rec.get("fps", meta.get("fps", 30.0))),
                rec["exercise_type"],
                rec.get("assessment"),
                rec.get("clinical_score"),
                rec.get("subject_id", ""),
                rec["id"],
            )
        )
    return Dataset(graph, tuple(samples), meta.get("name", root.name))


# ---------------------------------------------------------------------------
# splitting

SPLIT_SCHEMES = ("ratio_3_1", "kfold_5")


def _strata(dataset: Dataset, keys: list) -> dict:
    groups: dict = defaultdict(list)
    for i, key in enumerate(keys):
        s = dataset.samples[i]
        groups[(s.exercise_type, s.assessment)].append(key)
    return groups


def split(
    dataset: Dataset,
    scheme: str = "ratio_3_1",
    seed: int = 0,
    subject_aware: bool = False,
) -> list[tuple[Dataset, Dataset]]:
    """Stratified (exercise type x assessment) train/validation splits.

    ``ratio_3_1`` gives one 75/25 pair, ``kfold_5`` five pairs whose
    validation folds partition the dataset. With ``subject_aware`` whole
    subjects are assigned to folds instead of single samples.
    """
    if scheme not in SPLIT_SCHEMES:
        raise ValueError(f"unknown split scheme {scheme!r}")
    if len(dataset) == 0:
        raise DataError("cannot split an empty dataset")
    rng = np.random.default_rng(seed)
    n_folds = 4 if scheme == "ratio_3_1" else 5

    if subject_aware:
        units: dict = defaultdict(list)
        for i, s in enumerate(dataset.samples):
            units[s.subject_id].append(i)
        unit_ids = sorted(units)
        order = rng.permutation(len(unit_ids))
        fold_of_unit = {unit_ids[u]: k % n_folds for k, u in enumerate(order)}
        fold = np.array([fold_of_unit[s.subject_id] for s in dataset.samples])
    else:
        fold = np.empty(len(dataset), dtype=int)
        leftovers = []
        offset = 0
        for key in sorted(_strata(dataset, list(range(len(dataset)))).items(), key=lambda kv: str(kv[0])):
            (stratum, members) = key
            members = np.array(members)
            if len(members) < n_folds:
                warnings.warn(
                    f"stratum {stratum} has {len(members)} samples (< {n_folds} folds); "
                    "assigned without stratification"
                )
                leftovers.extend(members.tolist())
                continue
            members = members[rng.permutation(len(members))]
            if scheme == "ratio_3_1":
                n_val = int(round(len(members) / 4))
                fold[members] = 1
                fold[members[:n_val]] = 0
            else:
                fold[members] = (np.arange(len(members)) + offset) % n_folds
                offset = (offset + len(members)) % n_folds
        if leftovers:
            leftovers = np.array(leftovers)[rng.permutation(len(leftovers))]
            fold[leftovers] = (np.arange(len(leftovers)) + offset) % n_folds

    if scheme == "ratio_3_1":
        folds = [0]
    else:
        folds = list(range(n_folds))
    pairs = []
    for k in folds:
        val_idx = np.flatnonzero(fold == k)
        train_idx = np.flatnonzero(fold != k)
        pairs.append(
            (
                dataset.subset(train_idx, f"{dataset.name}/train{k}"),
                dataset.subset(val_idx, f"{dataset.name}/val{k}"),
            )
        )
    return pairs
