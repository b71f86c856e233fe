"""Procedurally generated exercise data for tests and smoke runs.

An 8-joint upper-body skeleton performs one of three movements. Correct
repetitions reach full amplitude; incorrect ones are amplitude-reduced or
carry a compensatory trunk lean. The regression variant grades a single
corruption magnitude onto the 0-50 clinical scale.
"""

from __future__ import annotations

import numpy as np

from .data import CORRECT, INCORRECT, Dataset, LabeledSample, SkeletonGraph, SkeletonSequence, resample_array

# pelvis, spine, neck, head, left elbow, left hand, right elbow, right hand
SYNTHETIC_GRAPH = SkeletonGraph(
    8, ((0, 1), (1, 2), (2, 3), (2, 4), (4, 5), (2, 6), (6, 7)), root_joint=0
)

EXERCISES = ("left_arm_raise", "right_arm_forward", "trunk_flexion")


def _rot(axis: str, angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    if axis == "x":
        return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])
    if axis == "y":
        return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


def _pose(trunk: np.ndarray, left_arm: np.ndarray, right_arm: np.ndarray, scale: float) -> np.ndarray:
    """Forward kinematics. Each argument is a rotation matrix; arms hang along -y at rest."""
    down = np.array([0.0, -1.0, 0.0])
    up = np.array([0.0, 1.0, 0.0])
    p = np.zeros((8, 3))
    p[1] = trunk @ (0.30 * scale * up)
    p[2] = trunk @ (0.60 * scale * up)
    p[3] = trunk @ (0.80 * scale * up)
    l_sh = p[2] + trunk @ np.array([0.18 * scale, 0, 0])
    r_sh = p[2] + trunk @ np.array([-0.18 * scale, 0, 0])
    p[4] = l_sh + trunk @ left_arm @ (0.28 * scale * down)
    p[5] = p[4] + trunk @ left_arm @ (0.26 * scale * down)
    p[6] = r_sh + trunk @ right_arm @ (0.28 * scale * down)
    p[7] = p[6] + trunk @ right_arm @ (0.26 * scale * down)
    return p


def synthesize_repetition(
    exercise: int,
    amplitude: float,
    lean: float,
    rng: np.random.Generator,
    length: int = 32,
    noise: float = 0.01,
) -> np.ndarray:
    """One repetition as a ``length`` x 8 x 3 array.

    ``amplitude`` scales the primary movement (1 = full range) and ``lean``
    is a compensatory lateral trunk tilt in radians at peak.
    """
    raw_len = int(rng.integers(40, 81))
    scale = rng.uniform(0.9, 1.1)
    gamma = rng.uniform(0.8, 1.25)
    heading = rng.uniform(-0.17, 0.17)
    u = np.linspace(0.0, 1.0, raw_len) ** gamma
    phase = np.sin(np.pi * u)
    frames = np.empty((raw_len, 8, 3))
    eye = np.eye(3)
    for t, h in enumerate(phase):
        trunk = _rot("z", lean * h)
        left = right = eye
        if exercise == 0:
            left = _rot("z", amplitude * (np.pi / 2) * h)
        elif exercise == 1:
            right = _rot("x", -amplitude * (np.pi / 2) * h)
        else:
            trunk = _rot("x", amplitude * (np.pi / 4) * h) @ trunk
        frames[t] = _pose(trunk, left, right, scale)
    frames = frames @ _rot("y", heading).T
    frames = resample_array(frames, length)
    frames += rng.normal(0.0, noise, frames.shape)
    return frames - frames[:, :1, :]


def make_synthetic_dataset(
    n_per_type: int = 60,
    length: int = 32,
    incorrect_fraction: float = 0.5,
    exercises: tuple[int, ...] = (0, 1, 2),
    seed: int = 0,
    n_subjects: int = 10,
) -> Dataset:
    """Binary-labelled dataset with ``len(exercises)`` types named ``e0``, ``e1``, ..."""
    rng = np.random.default_rng(seed)
    samples = []
    for ex in exercises:
        n_bad = int(round(n_per_type * incorrect_fraction))
        for k in range(n_per_type):
            correct = k >= n_bad
            if correct:
                amplitude, lean = rng.uniform(0.9, 1.1), rng.uniform(-0.03, 0.03)
            elif rng.random() < 0.5:
                amplitude, lean = rng.uniform(0.3, 0.6), rng.uniform(-0.03, 0.03)
            else:
                amplitude = rng.uniform(0.85, 1.05)
                lean = rng.choice([-1, 1]) * rng.uniform(0.45, 0.7)
            frames = synthesize_repetition(ex, amplitude, lean, rng, length)
            samples.append(
                LabeledSample(
                    SkeletonSequence(frames, 30.0),
                    f"e{ex}",
                    CORRECT if correct else INCORRECT,
                    subject_id=f"s{k % n_subjects:02d}",
                    sample_id=f"e{ex}_{k:03d}",
                )
            )
    return Dataset(SYNTHETIC_GRAPH, tuple(samples), "synthetic")


def make_synthetic_regression(
    n_samples: int = 60,
    exercise: int = 0,
    length: int = 32,
    seed: int = 0,
    n_subjects: int = 10,
) -> Dataset:
    """Clinical-score variant: score = 50 * (1 - corruption magnitude)."""
    rng = np.random.default_rng(seed)
    samples = []
    for k in range(n_samples):
        m = rng.uniform(0.0, 1.0)
        amplitude = 1.0 - 0.55 * m
        lean = rng.choice([-1, 1]) * 0.4 * m * rng.uniform(0.5, 1.0)
        frames = synthesize_repetition(exercise, amplitude, lean, rng, length)
        samples.append(
            LabeledSample(
                SkeletonSequence(frames, 30.0),
                f"e{exercise}",
                clinical_score=50.0 * (1.0 - m),
                subject_id=f"s{k % n_subjects:02d}",
                sample_id=f"r{exercise}_{k:03d}",
            )
        )
    return Dataset(SYNTHETIC_GRAPH, tuple(samples), "synthetic-regression")
