"""Contrastive pre-training and transfer to a clinical-score regressor."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import torch
from torch import nn

from .augmentation import AugmentationConfig, two_view_arrays
from .contrastive import LossConfig, contrastive_loss, partition_batch
from .data import CORRECT, Dataset, SkeletonGraph
from .model import (
    ContrastiveModel,
    EncoderConfig,
    ProjectionConfig,
    RegressionHeadConfig,
    RegressionModel,
    save_checkpoint,
)

logger = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 2000
    batch_tuples: int = 128
    learning_rate: float = 1e-3
    temperature: float = 0.1
    optimizer: str = "adam"
    adam_betas: tuple[float, float] = (0.9, 0.999)
    seed: int = 0
    augmentation: AugmentationConfig = field(default_factory=AugmentationConfig)
    loss: LossConfig | None = None
    use_ri: bool = False
    checkpoint_every: int = 0

    def __post_init__(self):
        if isinstance(self.augmentation, dict):
            self.augmentation = AugmentationConfig(**self.augmentation)
        if isinstance(self.loss, dict):
            self.loss = LossConfig(**self.loss)
        if self.loss is None:
            self.loss = LossConfig(self.temperature)
        self.loss.temperature = self.temperature
        self.adam_betas = tuple(self.adam_betas)
        if self.optimizer != "adam":
            raise ValueError("only the adam optimizer is supported")
        if self.epochs < 1 or self.batch_tuples < 2 or self.learning_rate <= 0:
            raise ValueError("epochs >= 1, batch_tuples >= 2 and learning_rate > 0 required")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["augmentation"] = self.augmentation.to_dict()
        d["adam_betas"] = list(self.adam_betas)
        return d


def _batches(order: np.ndarray, size: int) -> list[np.ndarray]:
    chunks = [order[i : i + size] for i in range(0, len(order), size)]
    return [c for c in chunks if len(c) >= 2]


def _write_log(fh, record: dict):
    if fh is not None:
        fh.write(json.dumps(record) + "\n")
        fh.flush()


def fit_contrastive(
    frames: np.ndarray,
    exercise_type,
    assessment,
    graph: SkeletonGraph,
    config: TrainConfig,
    encoder_config: EncoderConfig | None = None,
    projection_config: ProjectionConfig | None = None,
    model: ContrastiveModel | None = None,
    log_path=None,
    checkpoint_dir=None,
    callback: Callable[[int, dict], None] | None = None,
    metadata: dict | None = None,
) -> tuple[ContrastiveModel, list[dict]]:
    """Array-level training loop; see :func:`train_contrastive`."""
    frames = np.asarray(frames, dtype=np.float64)
    exercise_type = np.asarray(exercise_type, dtype=object)
    assessment = np.asarray(assessment, dtype=object)
    if (assessment == CORRECT).sum() < 2:
        raise TrainingError("need at least 2 correct samples to form anchors and positives")
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    if model is None:
        encoder_config = encoder_config or EncoderConfig(use_ri=config.use_ri)
        model = ContrastiveModel(graph, encoder_config, projection_config, metadata)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate, betas=config.adam_betas)
    history: list[dict] = []
    fh = open(log_path, "w") if log_path else None
    try:
        for epoch in range(1, config.epochs + 1):
            t0 = time.perf_counter()
            model.train()
            losses, totals = [], {"anchors": 0, "positives": 0, "hard_negatives": 0, "soft_negatives": 0}
            skipped = 0
            for idx in _batches(rng.permutation(len(frames)), config.batch_tuples):
                batch = two_view_arrays(frames[idx], exercise_type[idx], assessment[idx], config.augmentation, rng)
                parts = partition_batch(batch)
                if not parts.beta_plus:
                    skipped += 1
                    _write_log(fh, {"epoch": epoch, "event": "skipped_batch", "reason": "no anchors in batch"})
                    continue
                views = torch.as_tensor(batch.views, dtype=torch.float32)
                loss, diag = contrastive_loss(model(views), parts, config.loss)
                if not torch.isfinite(loss):
                    dump = {"epoch": epoch, "batch": idx.tolist(), "diagnostics": {k: v for k, v in diag.items() if k != "per_anchor"}}
                    raise TrainingError(f"non-finite loss: {json.dumps(dump)}")
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                losses.append(float(loss.detach()))
                for key in totals:
                    totals[key] += diag[key]
            record = {
                "epoch": epoch,
                "loss": float(np.mean(losses)) if losses else None,
                "batches": len(losses),
                "skipped_batches": skipped,
                **totals,
                "seconds": round(time.perf_counter() - t0, 4),
            }
            history.append(record)
            _write_log(fh, record)
            if callback is not None:
                callback(epoch, record)
            if checkpoint_dir and config.checkpoint_every and epoch % config.checkpoint_every == 0:
                model.metadata["epoch"] = epoch
                save_checkpoint(model, Path(checkpoint_dir) / f"checkpoint_epoch{epoch:05d}.npz")
    finally:
        if fh is not None:
            fh.close()
    model.metadata["epoch"] = config.epochs
    model.eval()
    return model, history


def train_contrastive(
    data: Dataset,
    config: TrainConfig,
    encoder_config: EncoderConfig | None = None,
    projection_config: ProjectionConfig | None = None,
    log_path=None,
    checkpoint_dir=None,
    callback=None,
) -> tuple[ContrastiveModel, list[dict]]:
    """Minimise the hard/soft-negative contrastive loss over all exercise types jointly.

    Returns the trained model (in eval mode) and per-epoch log records. A
    batch whose views are all incorrect is skipped and logged.
    """
    if data.is_regression:
        raise TrainingError("contrastive training needs binary assessment labels")
    if len(data.exercise_types) < 2:
        logger.warning("single exercise type: no soft negatives will be formed")
    types, z = data.labels()
    return fit_contrastive(
        data.frames_array(), types, z, data.graph, config, encoder_config, projection_config,
        log_path=log_path, checkpoint_dir=checkpoint_dir, callback=callback,
        metadata={"source_dataset": data.name, "train_config": config.to_dict()},
    )


# ---------------------------------------------------------------------------
# transfer learning


@dataclass
class RegressionTrainConfig:
    epochs: int = 200
    batch_size: int = 16
    learning_rate: float = 1e-3
    adam_betas: tuple[float, float] = (0.9, 0.999)
    seed: int = 0


def predict_scores(model: RegressionModel, frames, batch_size: int = 256) -> np.ndarray:
    """Clinical-score predictions clamped to [0, 50]."""
    model.eval()
    scale = model.metadata.get("target_scale", [0.0, 1.0])
    x = torch.as_tensor(np.asarray(frames), dtype=torch.float32)
    with torch.no_grad():
        out = [model(x[i : i + batch_size]) for i in range(0, len(x), batch_size)]
    raw = torch.cat(out).double().numpy() if out else np.zeros(0)
    return np.clip(raw * scale[1] + scale[0], 0.0, 50.0)


def transfer_to_regression(
    pretrained: ContrastiveModel | None,
    target: Dataset,
    head_config: RegressionHeadConfig | None = None,
    train_config: RegressionTrainConfig | None = None,
    validation: Dataset | None = None,
    encoder_config: EncoderConfig | None = None,
    log_path=None,
) -> tuple[RegressionModel, list[dict]]:
    """Swap the projection head for a two-layer regressor and fit clinical scores.

    With ``pretrained=None`` a randomly initialised encoder is trained jointly
    with the head (the from-scratch comparison). Targets are standardised
    with the training mean and spread; the model stores that affine map.
    """
    head_config = head_config or RegressionHeadConfig()
    train_config = train_config or RegressionTrainConfig()
    if not target.is_regression:
        raise TrainingError("regression target required (samples carry assessment labels, not clinical scores)")
    from .evaluation import UndefinedMetricError, spearman

    torch.manual_seed(train_config.seed)
    rng = np.random.default_rng(train_config.seed)
    if pretrained is not None:
        if pretrained.graph != target.graph:
            raise TrainingError("pretrained encoder graph does not match the target dataset graph")
        enc_cfg = pretrained.encoder_config
        model = RegressionModel(target.graph, enc_cfg, head_config)
        model.encoder.load_state_dict(pretrained.encoder.state_dict())
        freeze = head_config.freeze_encoder
    else:
        model = RegressionModel(target.graph, encoder_config or EncoderConfig(), head_config)
        freeze = False
    if freeze:
        for p in model.encoder.parameters():
            p.requires_grad_(False)

    X = torch.as_tensor(target.frames_array(), dtype=torch.float32)
    y = np.array([s.clinical_score for s in target], dtype=np.float64)
    mu, sd = float(y.mean()), float(y.std())
    sd = sd if sd > 0 else 1.0
    model.metadata.update(
        {
            "target_scale": [mu, sd],
            "pretrained": pretrained is not None,
            "freeze_encoder": freeze,
            "source_dataset": (pretrained.metadata.get("source_dataset") if pretrained is not None else None),
            "target_dataset": target.name,
        }
    )
    yt = torch.as_tensor((y - mu) / sd, dtype=torch.float32)
    params = [p for p in model.parameters() if p.requires_grad]
    optimizer = torch.optim.Adam(params, lr=train_config.learning_rate, betas=train_config.adam_betas)
    loss_fn = nn.MSELoss()
    val_X = validation.frames_array() if validation is not None and len(validation) else None
    val_y = np.array([s.clinical_score for s in validation]) if val_X is not None else None

    history = []
    fh = open(log_path, "w") if log_path else None
    try:
        for epoch in range(1, train_config.epochs + 1):
            model.train()
            if freeze:
                model.encoder.eval()
            order = rng.permutation(len(X))
            batch_losses = []
            for idx in _batches(order, train_config.batch_size):
                pred = model(X[idx])
                loss = loss_fn(pred, yt[idx])
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                batch_losses.append(float(loss.detach()))
            train_pred = predict_scores(model, X)
            record = {
                "epoch": epoch,
                "train_loss": float(np.mean(batch_losses)) if batch_losses else None,
                "train_mse": float(np.mean((train_pred - y) ** 2)),
            }
            if val_X is not None:
                vp = predict_scores(model, val_X)
                record["val_mse"] = float(np.mean((vp - val_y) ** 2))
                try:
                    record["val_spearman"] = spearman(vp, val_y)
                except UndefinedMetricError:
                    record["val_spearman"] = None
            history.append(record)
            _write_log(fh, record)
    finally:
        if fh is not None:
            fh.close()
    model.eval()
    return model, history
