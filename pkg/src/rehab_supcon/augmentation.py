"""Label-preserving skeleton augmentations and two-view batch construction."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .data import LabeledSample, SkeletonSequence, resample_array


@dataclass
class AugmentationConfig:
    shear_range: float = 0.1
    rotation_range: float = float(np.deg2rad(15.0))
    resample_factor_range: tuple[float, float] = (0.8, 1.2)
    crop_fraction_range: tuple[float, float] = (0.8, 1.0)
    blur_sigma_range: tuple[float, float] = (0.0, 1.0)
    noise_sigma: float = 0.01
    probability: float = 0.5
    rng_seed: int = 0

    def __post_init__(self):
        self.resample_factor_range = tuple(float(v) for v in self.resample_factor_range)
        self.crop_fraction_range = tuple(float(v) for v in self.crop_fraction_range)
        self.blur_sigma_range = tuple(float(v) for v in self.blur_sigma_range)
        for name in ("shear_range", "rotation_range", "noise_sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        for name in ("resample_factor_range", "crop_fraction_range", "blur_sigma_range"):
            lo, hi = getattr(self, name)
            if lo < 0 or hi < lo:
                raise ValueError(f"{name} must be a nonnegative interval, got {(lo, hi)}")
        lo, hi = self.crop_fraction_range
        if lo <= 0 or hi > 1:
            raise ValueError("crop fractions must lie in (0, 1]")
        if self.resample_factor_range[0] <= 0:
            raise ValueError("resample factors must be positive")
        if not 0 <= self.probability <= 1:
            raise ValueError("probability must be in [0, 1]")

    @classmethod
    def identity(cls, rng_seed: int = 0) -> "AugmentationConfig":
        return cls(0.0, 0.0, (1.0, 1.0), (1.0, 1.0), (0.0, 0.0), 0.0, 1.0, rng_seed)

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("resample_factor_range", "crop_fraction_range", "blur_sigma_range"):
            d[key] = list(d[key])
        return d


def rotation_matrix(ax: float, ay: float, az: float) -> np.ndarray:
    cx, sx, cy, sy, cz, sz = np.cos(ax), np.sin(ax), np.cos(ay), np.sin(ay), np.cos(az), np.sin(az)
    Rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    Ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    Rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return Rz @ Ry @ Rx


def _spatial(frames: np.ndarray, M: np.ndarray) -> np.ndarray:
    k = M.shape[0]
    out = frames.copy()
    out[..., :k] = frames[..., :k] @ M.T
    return out


def augment_array(frames: np.ndarray, config: AugmentationConfig, rng: np.random.Generator) -> np.ndarray:
    """Random augmentation of one T x J x C array; output keeps T."""
    T, J, C = frames.shape
    k = min(C, 3)
    out = np.asarray(frames, dtype=np.float64)
    p = config.probability

    if config.shear_range > 0 and rng.random() < p:
        M = np.eye(k) + rng.uniform(-config.shear_range, config.shear_range, (k, k)) * (1 - np.eye(k))
        out = _spatial(out, M)

    if config.rotation_range > 0 and rng.random() < p:
        r = config.rotation_range
        if k == 3:
            R = rotation_matrix(*rng.uniform(-r, r, 3))
        else:
            a = rng.uniform(-r, r)
            R = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
        out = _spatial(out, R)

    lo, hi = config.resample_factor_range
    if hi > lo or lo != 1.0:
        if rng.random() < p:
            factor = rng.uniform(lo, hi)
            out = resample_array(out, max(2, int(round(out.shape[0] * factor))))

    lo, hi = config.crop_fraction_range
    if lo < 1.0 and rng.random() < p:
        fraction = rng.uniform(lo, hi)
        L = max(2, int(round(out.shape[0] * fraction)))
        start = int(rng.integers(0, out.shape[0] - L + 1))
        out = out[start : start + L]

    if out.shape[0] != T:
        out = resample_array(out, T)

    lo, hi = config.blur_sigma_range
    if hi > 0 and rng.random() < p:
        sigma = rng.uniform(lo, hi)
        if sigma > 0:
            out = gaussian_filter1d(out, sigma, axis=0, mode="nearest")

    if config.noise_sigma > 0 and rng.random() < p:
        out = out + rng.normal(0.0, config.noise_sigma, out.shape)

    return out


def augment(sequence, config: AugmentationConfig, draw: np.random.Generator):
    """Augment a :class:`SkeletonSequence` (or a bare array)."""
    if isinstance(sequence, SkeletonSequence):
        return SkeletonSequence(augment_array(sequence.frames, config, draw), sequence.fps)
    return augment_array(np.asarray(sequence), config, draw)


@dataclass
class ViewBatch:
    views: np.ndarray
    exercise_type: np.ndarray
    assessment: np.ndarray
    origin_index: np.ndarray = field(default=None)

    def __post_init__(self):
        n = len(self.views)
        if n % 2:
            raise ValueError("a view batch holds an even number of views")
        if self.origin_index is None:
            self.origin_index = np.repeat(np.arange(n // 2), 2)
        if not (len(self.exercise_type) == len(self.assessment) == len(self.origin_index) == n):
            raise ValueError("label vectors must have one entry per view")

    def __len__(self) -> int:
        return len(self.views)


def two_view_arrays(
    frames: np.ndarray,
    exercise_type: Sequence,
    assessment: Sequence,
    config: AugmentationConfig,
    draw: np.random.Generator,
) -> ViewBatch:
    """Views 2k and 2k+1 are independent augmentations of ``frames[k]``."""
    N = len(frames)
    if N == 0:
        raise ValueError("cannot build a view batch from no samples")
    views = np.empty((2 * N,) + frames.shape[1:])
    for k in range(N):
        views[2 * k] = augment_array(frames[k], config, draw)
        views[2 * k + 1] = augment_array(frames[k], config, draw)
    return ViewBatch(
        views,
        np.repeat(np.asarray(exercise_type, dtype=object), 2),
        np.repeat(np.asarray(assessment, dtype=object), 2),
        np.repeat(np.arange(N), 2),
    )


def build_two_view_batch(
    tuples: Sequence[LabeledSample],
    config: AugmentationConfig,
    draw: np.random.Generator,
) -> ViewBatch:
    if len(tuples) == 0:
        raise ValueError("cannot build a view batch from no samples")
    frames = np.stack([s.sequence.frames for s in tuples])
    return two_view_arrays(
        frames,
        [s.exercise_type for s in tuples],
        [s.assessment for s in tuples],
        config,
        draw,
    )
