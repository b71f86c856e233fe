import json

import numpy as np
import pytest
import torch

from rehab_supcon.augmentation import AugmentationConfig
from rehab_supcon.data import Dataset, LabeledSample, SkeletonSequence
from rehab_supcon.model import EncoderConfig, ProjectionConfig, RegressionHeadConfig, load_checkpoint
from rehab_supcon.synthetic import make_synthetic_dataset, make_synthetic_regression
from rehab_supcon.training import (
    RegressionTrainConfig,
    TrainConfig,
    TrainingError,
    fit_contrastive,
    predict_scores,
    train_contrastive,
    transfer_to_regression,
)

SMALL = EncoderConfig(layer_channels=(8, 16), temporal_strides=(1, 2), temporal_kernel=3)
PROJ = ProjectionConfig(16, 8)


@pytest.fixture(scope="module")
def small_data():
    return make_synthetic_dataset(n_per_type=8, length=12, seed=1)


def test_config_defaults():
    cfg = TrainConfig()
    assert (cfg.epochs, cfg.batch_tuples, cfg.learning_rate, cfg.temperature) == (2000, 128, 1e-3, 0.1)
    assert cfg.loss.temperature == 0.1
    with pytest.raises(ValueError):
        TrainConfig(optimizer="sgd")


def test_deterministic(small_data, tmp_path):
    cfg = TrainConfig(epochs=3, batch_tuples=8, seed=4)
    m1, h1 = train_contrastive(small_data, cfg, SMALL, PROJ, log_path=tmp_path / "a.jsonl")
    m2, h2 = train_contrastive(small_data, cfg, SMALL, PROJ, log_path=tmp_path / "b.jsonl")
    assert [r["loss"] for r in h1] == [r["loss"] for r in h2]
    for a, b in zip(m1.state_dict().values(), m2.state_dict().values()):
        assert torch.equal(a, b)
    strip = lambda p: [{k: v for k, v in json.loads(l).items() if k != "seconds"} for l in p.read_text().splitlines()]
    assert strip(tmp_path / "a.jsonl") == strip(tmp_path / "b.jsonl")


def test_log_fields_and_checkpoints(small_data, tmp_path):
    cfg = TrainConfig(epochs=2, batch_tuples=8, checkpoint_every=1)
    _, hist = train_contrastive(small_data, cfg, SMALL, PROJ, log_path=tmp_path / "log.jsonl", checkpoint_dir=tmp_path)
    rec = json.loads((tmp_path / "log.jsonl").read_text().splitlines()[0])
    assert {"epoch", "loss", "anchors", "positives", "hard_negatives", "soft_negatives", "seconds"} <= set(rec)
    assert sorted(p.name for p in tmp_path.glob("checkpoint_epoch*.npz")) == [
        "checkpoint_epoch00001.npz", "checkpoint_epoch00002.npz"]
    assert load_checkpoint(tmp_path / "checkpoint_epoch00002.npz").metadata["epoch"] == 2


def test_single_type_has_no_soft_negatives():
    ds = make_synthetic_dataset(n_per_type=8, length=12, exercises=(0,), seed=2)
    _, hist = train_contrastive(ds, TrainConfig(epochs=1, batch_tuples=8), SMALL, PROJ)
    assert hist[0]["soft_negatives"] == 0 and hist[0]["hard_negatives"] > 0


def test_all_incorrect_batches_are_skipped(tmp_path):
    rng = np.random.default_rng(0)
    frames = rng.normal(size=(6, 12, 8, 3))
    z = ["-", "-", "-", "-", "+", "+"]
    from rehab_supcon.synthetic import SYNTHETIC_GRAPH

    cfg = TrainConfig(epochs=2, batch_tuples=2, seed=0)
    _, hist = fit_contrastive(frames, ["a"] * 6, z, SYNTHETIC_GRAPH, cfg, SMALL, PROJ, log_path=tmp_path / "l.jsonl")
    assert sum(r["skipped_batches"] for r in hist) >= 1
    assert "skipped_batch" in (tmp_path / "l.jsonl").read_text()


def test_needs_correct_samples(small_data):
    bad = small_data.filter(lambda s: s.assessment == "-")
    with pytest.raises(TrainingError):
        train_contrastive(bad, TrainConfig(epochs=1), SMALL, PROJ)


def test_non_finite_loss_aborts(small_data):
    cfg = TrainConfig(epochs=1, batch_tuples=8, learning_rate=1e-3)
    from rehab_supcon.model import ContrastiveModel

    model = ContrastiveModel(small_data.graph, SMALL, PROJ)
    with torch.no_grad():
        model.projection.weight.fill_(float("nan"))
    types, z = small_data.labels()
    with pytest.raises(TrainingError, match="non-finite loss"):
        fit_contrastive(small_data.frames_array(), types, z, small_data.graph, cfg, model=model)


class TestTransfer:
    @pytest.fixture(scope="class")
    @classmethod
    def pretrained(cls):
        ds = make_synthetic_dataset(n_per_type=8, length=12, seed=1)
        model, _ = train_contrastive(ds, TrainConfig(epochs=1, batch_tuples=8), SMALL, PROJ)
        return model

    def test_freeze_contract(self, pretrained, tmp_path):
        target = make_synthetic_regression(20, length=12, seed=0)
        before = {k: v.clone() for k, v in pretrained.encoder.state_dict().items()}
        model, hist = transfer_to_regression(
            pretrained, target, RegressionHeadConfig(16, True), RegressionTrainConfig(epochs=3, batch_size=8),
            validation=target, log_path=tmp_path / "t.jsonl",
        )
        for k, v in model.encoder.state_dict().items():
            assert torch.equal(v, before[k]), k
        assert {"train_mse", "val_mse", "val_spearman"} <= set(hist[-1])
        assert len((tmp_path / "t.jsonl").read_text().splitlines()) == 3
        pred = predict_scores(model, target.frames_array())
        assert pred.min() >= 0 and pred.max() <= 50

    def test_unfrozen_encoder_changes(self, pretrained):
        target = make_synthetic_regression(16, length=12, seed=0)
        model, _ = transfer_to_regression(
            pretrained, target, RegressionHeadConfig(16, False), RegressionTrainConfig(epochs=1, batch_size=8)
        )
        changed = any(
            not torch.equal(a, b)
            for a, b in zip(model.encoder.state_dict().values(), pretrained.encoder.state_dict().values())
        )
        assert changed

    def test_binary_target_rejected(self, pretrained):
        with pytest.raises(TrainingError, match="regression target required"):
            transfer_to_regression(pretrained, make_synthetic_dataset(4, 12))

    def test_graph_mismatch_rejected(self, pretrained):
        from rehab_supcon.data import SkeletonGraph

        g = SkeletonGraph(2, ((0, 1),))
        ds = Dataset(g, (LabeledSample(SkeletonSequence(np.ones((12, 2, 3))), "x", clinical_score=3.0),))
        with pytest.raises(TrainingError, match="graph"):
            transfer_to_regression(pretrained, ds)

    def test_constant_target_reports_undefined_spearman(self, pretrained):
        target = make_synthetic_regression(10, length=12, seed=0)
        const = Dataset(target.graph, tuple(
            LabeledSample(s.sequence, s.exercise_type, clinical_score=25.0, sample_id=s.sample_id) for s in target))
        model, hist = transfer_to_regression(pretrained, const, RegressionHeadConfig(16), RegressionTrainConfig(epochs=5, batch_size=5), validation=const)
        assert hist[-1]["val_spearman"] is None
        assert hist[-1]["train_mse"] < hist[0]["train_mse"]
        assert hist[-1]["train_mse"] < 1.0

    def test_from_scratch(self):
        target = make_synthetic_regression(12, length=12, seed=0)
        model, hist = transfer_to_regression(None, target, RegressionHeadConfig(16), RegressionTrainConfig(epochs=1, batch_size=6), encoder_config=SMALL)
        assert model.metadata["pretrained"] is False and not model.metadata["freeze_encoder"]
