"""Supervised contrastive loss with hard and soft negatives.

Only correct views act as anchors. For an anchor ``i`` of exercise type
``c`` the positives are the other correct views of type ``c``; the
denominator holds the hard negatives (incorrect views of type ``c``) plus a
second sum whose range depends on ``denominator_mode``:

``literal``
    every view other than ``i``. Hard negatives therefore appear twice and
    positives once.
``prose``
    only views of other exercise types (soft negatives).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import torch

from .data import CORRECT, normalize_assessment

logger = logging.getLogger(__name__)

DENOMINATOR_MODES = ("literal", "prose")


class NoAnchorsError(ValueError):
    pass


@dataclass(frozen=True)
class BatchPartitions:
    beta_plus: frozenset
    beta_by_type: dict
    beta_plus_by_type: dict
    beta_minus_by_type: dict
    exercise_type: tuple = ()
    correct: tuple = ()

    @property
    def size(self) -> int:
        return len(self.exercise_type)


@dataclass
class LossConfig:
    temperature: float = 0.1
    denominator_mode: str = "literal"

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if self.denominator_mode not in DENOMINATOR_MODES:
            raise ValueError(f"denominator_mode must be one of {DENOMINATOR_MODES}")


def partition_batch(batch=None, *, exercise_type=None, assessment=None) -> BatchPartitions:
    """Index sets beta+, beta_c, beta+_c and beta-_c of a view batch."""
    if batch is not None:
        exercise_type, assessment = batch.exercise_type, batch.assessment
    types = tuple(exercise_type)
    correct = tuple(normalize_assessment(z) == CORRECT for z in assessment)
    if len(types) != len(correct):
        raise ValueError("exercise_type and assessment differ in length")
    by_type: dict = {}
    for i, c in enumerate(types):
        by_type.setdefault(c, set()).add(i)
    plus = frozenset(i for i, ok in enumerate(correct) if ok)
    return BatchPartitions(
        beta_plus=plus,
        beta_by_type={c: frozenset(s) for c, s in by_type.items()},
        beta_plus_by_type={c: frozenset(s & plus) for c, s in by_type.items()},
        beta_minus_by_type={c: frozenset(s - plus) for c, s in by_type.items()},
        exercise_type=types,
        correct=correct,
    )


def cosine_sim(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ValueError("cosine similarity is undefined for a zero vector")
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


def cosine_similarity_matrix(V: torch.Tensor) -> torch.Tensor:
    norms = V.norm(dim=1, keepdim=True)
    if (norms == 0).any():
        raise ValueError("zero-norm embedding in batch")
    Z = V / norms
    return Z @ Z.T


def contrastive_loss(embeddings, partitions: BatchPartitions, config: LossConfig | None = None):
    """Return ``(loss, diagnostics)``.

    ``loss`` is a scalar tensor (differentiable) when ``embeddings`` is a
    tensor, else a float. The loss is the plain sum over anchors.
    """
    config = config or LossConfig()
    as_numpy = not isinstance(embeddings, torch.Tensor)
    V = torch.as_tensor(np.asarray(embeddings, dtype=np.float64)) if as_numpy else embeddings
    n = V.shape[0]
    if n != partitions.size:
        raise ValueError(f"{n} embeddings but {partitions.size} labels")
    if n < 2:
        raise ValueError("need at least 2 views")
    if not partitions.beta_plus:
        raise NoAnchorsError("no anchors in batch")

    codes = {c: k for k, c in enumerate(sorted(partitions.beta_by_type, key=str))}
    t = torch.tensor([codes[c] for c in partitions.exercise_type])
    p = torch.tensor(partitions.correct)
    same = t[:, None] == t[None, :]
    eye = torch.eye(n, dtype=torch.bool)
    positives = same & p[None, :] & p[:, None] & ~eye
    hard = same & ~p[None, :]
    second = ~eye if config.denominator_mode == "literal" else ~same
    multiplicity = hard.to(V.dtype) + second.to(V.dtype)

    n_pos = positives.sum(1)
    n_hard = hard.sum(1)
    n_soft = (~same).sum(1)
    plus_size = (same & p[None, :]).sum(1)
    has_den = multiplicity.sum(1) > 0
    anchors = p & (n_pos > 0) & has_den
    skipped_no_positive = int((p & (n_pos == 0)).sum())
    skipped_empty_den = int((p & (n_pos > 0) & ~has_den).sum())
    if skipped_no_positive:
        logger.warning("%d anchor(s) without a positive skipped", skipped_no_positive)
    if skipped_empty_den:
        logger.warning("%d anchor(s) with an empty denominator skipped", skipped_empty_den)

    idx = torch.nonzero(anchors).flatten()
    S = cosine_similarity_matrix(V) / config.temperature
    if len(idx):
        S_a = S[idx]
        log_mult = torch.where(
            multiplicity[idx] > 0, multiplicity[idx].log(), torch.full_like(S_a, -torch.inf)
        )
        log_den = torch.logsumexp(S_a + log_mult, dim=1)
        log_prob = S_a - log_den[:, None]
        pos_terms = torch.where(positives[idx], log_prob, torch.zeros_like(log_prob)).sum(1)
        per_anchor = -pos_terms / plus_size[idx].to(V.dtype)
        loss = per_anchor.sum()
    else:
        per_anchor = V.new_zeros(0)
        loss = (V * 0).sum()

    diagnostics = {
        "anchors": int(len(idx)),
        "skipped_no_positive": skipped_no_positive,
        "skipped_empty_denominator": skipped_empty_den,
        "positives": int(n_pos[idx].sum()),
        "hard_negatives": int(n_hard[idx].sum()),
        "soft_negatives": int(n_soft[idx].sum()),
        "per_anchor": [
            {
                "index": int(i),
                "positives": int(n_pos[i]),
                "hard_negatives": int(n_hard[i]),
                "soft_negatives": int(n_soft[i]),
                "loss": float(per_anchor[k].detach()),
            }
            for k, i in enumerate(idx.tolist())
        ],
        "loss_sum": float(loss.detach()),
        "loss_mean": float(loss.detach()) / max(1, len(idx)),
    }
    if as_numpy:
        return float(loss), diagnostics
    return loss, diagnostics
