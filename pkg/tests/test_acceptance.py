"""Acceptance criteria: each test prints one PASS/FAIL line and asserts it.

The lines are also gathered into an "acceptance criteria" section at the end
of the pytest summary. Criteria that are known not to hold are marked
xfail(strict=False); the reason points to /root/notes/decisions.md.
"""

import os
import time
from unittest import mock

import numpy as np
import pytest
import torch

from conftest import record_acceptance
from oracles import auc_pairs, average_precision, loss_scalar, random_batch, reference_hand, spearman_naive
from rehab_supcon.augmentation import rotation_matrix
from rehab_supcon.contrastive import LossConfig, contrastive_loss, partition_batch
from rehab_supcon.data import CORRECT, INCORRECT, KINECT_V2_GRAPH, split
from rehab_supcon.evaluation import accuracy, auc_pr, auc_roc, evaluate, spearman
from rehab_supcon.inference import (
    ReferenceSet,
    build_reference,
    build_reference_set,
    calibrate_thresholds,
    classify,
    similarity_scores,
)
from rehab_supcon.model import (
    ContrastiveModel,
    EncoderConfig,
    ProjectionConfig,
    RegressionHeadConfig,
    count_parameters,
    embed,
)
from rehab_supcon.synthetic import SYNTHETIC_GRAPH, make_synthetic_dataset, make_synthetic_regression
from rehab_supcon.training import RegressionTrainConfig, TrainConfig, predict_scores, train_contrastive, transfer_to_regression

pytestmark = pytest.mark.acceptance

SEEDS = (0, 1, 2, 3, 4)
DESIGNATED_SEED = 0
REDUCED_ENCODER = EncoderConfig(layer_channels=(64, 128), temporal_strides=(1, 2), temporal_kernel=9)
REDUCED_PROJECTION = ProjectionConfig(128, 64)
EPOCHS = 200
BATCH_TUPLES = 32
LEDGER = "see /root/notes/decisions.md"


def _parts(types, correct):
    return partition_batch(exercise_type=types, assessment=[CORRECT if c else INCORRECT for c in correct])


# ---------------------------------------------------------------------------
# 1-5: oracle and property checks


def test_c1_loss_oracle():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst, checked = 0.0, 0
    while checked < 1000:
        V, types, correct = random_batch(rng, max_views=16, max_dim=8)
        parts = _parts(types, correct)
        if not parts.beta_plus:
            continue
        tau = float(rng.choice([0.05, 0.1, 1.0]))
        for mode in ("literal", "prose"):
            got, _ = contrastive_loss(V, parts, LossConfig(tau, mode))
            worst = max(worst, abs(float(got) - loss_scalar(V.tolist(), types, correct, tau, mode)))
        checked += 1
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and elapsed < 60
    record_acceptance(1, ok, f"loss oracle: 1000 batches x 2 modes, max abs err {worst:.2e} (<=1e-6), {elapsed:.1f}s (<60s)")
    assert ok


def _loss_grad_error(rng):
    while True:
        V, types, correct = random_batch(rng)
        parts = _parts(types, correct)
        if parts.beta_plus:
            break
    cfg = LossConfig(float(rng.choice([0.1, 0.5, 1.0])), str(rng.choice(["literal", "prose"])))
    x = torch.tensor(V, requires_grad=True)
    contrastive_loss(x, parts, cfg)[0].backward()
    g = x.grad.numpy()
    h = 1e-6
    num = np.zeros_like(V)
    for idx in np.ndindex(V.shape):
        e = np.zeros_like(V)
        e[idx] = h
        num[idx] = (float(contrastive_loss(V + e, parts, cfg)[0]) - float(contrastive_loss(V - e, parts, cfg)[0])) / (2 * h)
    return np.linalg.norm(g - num) / max(np.linalg.norm(num), 1e-8)


KINK_MARGIN = 1e-4


def _kink_distance(model, x):
    """Smallest |input| seen by any ReLU; finite differences are invalid near a kink."""
    seen, relu = [], torch.relu

    def watch(t):
        seen.append(float(t.detach().abs().min()))
        return relu(t)

    hooks = [
        m.register_forward_pre_hook(lambda _, inp: seen.append(float(inp[0].detach().abs().min())))
        for m in model.modules()
        if isinstance(m, torch.nn.ReLU)
    ]
    try:
        with mock.patch("torch.relu", watch), torch.no_grad():
            model(x)
    finally:
        for h in hooks:
            h.remove()
    return min(seen)


def _network_grad_error(seed):
    # directional derivative over all parameters and the input at once;
    # returns None when a ReLU input sits within KINK_MARGIN of zero
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    enc = EncoderConfig(layer_channels=(4, 6), temporal_strides=(1, 2), temporal_kernel=3)
    model = ContrastiveModel(SYNTHETIC_GRAPH, enc, ProjectionConfig(6, 3)).double().train()
    x = torch.tensor(rng.normal(size=(3, 8, SYNTHETIC_GRAPH.joint_count, 3)), requires_grad=True)
    w = torch.tensor(rng.normal(size=(3, 3)))
    params = [x] + list(model.parameters())
    dirs = [torch.tensor(rng.normal(size=tuple(p.shape))) for p in params]
    if _kink_distance(model, x) < KINK_MARGIN:
        return None

    def f():
        return float((model(x) * w).sum())

    (model(x) * w).sum().backward()
    analytic = sum(float((p.grad * d).sum()) for p, d in zip(params, dirs))
    h = 1e-6
    with torch.no_grad():
        for p, d in zip(params, dirs):
            p.add_(h * d)
        plus = f()
        for p, d in zip(params, dirs):
            p.sub_(2 * h * d)
        minus = f()
        for p, d in zip(params, dirs):
            p.add_(h * d)
    num = (plus - minus) / (2 * h)
    return abs(analytic - num) / max(abs(num), 1e-8)


def test_c2_gradient_checks():
    rng = np.random.default_rng(11)
    t0 = time.perf_counter()
    loss_err = max(_loss_grad_error(rng) for _ in range(100))
    net_errors, seed = [], 0
    while len(net_errors) < 100:
        err = _network_grad_error(seed)
        if err is not None:
            net_errors.append(err)
        seed += 1
    net_err = max(net_errors)
    elapsed = time.perf_counter() - t0
    ok = loss_err <= 1e-4 and net_err <= 1e-3 and elapsed < 300
    record_acceptance(
        2, ok,
        f"gradients: loss max rel err {loss_err:.2e} (<=1e-4), network max rel err {net_err:.2e} (<=1e-3, {seed - 100} draws near a ReLU kink redrawn), {elapsed:.1f}s (<300s)",
    )
    assert ok


def test_c3_ri_invariance():
    torch.manual_seed(0)
    rng = np.random.default_rng(5)
    J = KINECT_V2_GRAPH.joint_count
    X = rng.normal(size=(50, 32, J, 3))
    model = ContrastiveModel(KINECT_V2_GRAPH, EncoderConfig(use_ri=True))
    # populate batch-norm statistics so the eval-mode network is not near-constant
    model.train()
    with torch.no_grad():
        model(torch.tensor(X, dtype=torch.float32))
    model.eval()
    R = np.stack([rotation_matrix(*rng.uniform(-np.pi, np.pi, 3)) for _ in range(50)])
    X_rot = np.einsum("nij,ntkj->ntki", R, X)
    a = embed(model, X)
    b = embed(model, X_rot)
    rel = np.linalg.norm(a - b, axis=1) / np.linalg.norm(a, axis=1)
    spread = float(np.linalg.norm(a - a.mean(0), axis=1).mean() / np.linalg.norm(a, axis=1).mean())
    ok = rel.max() <= 1e-4 and spread > 1e-3
    record_acceptance(3, ok, f"RI invariance: 50 sequences, max rel err {rel.max():.2e} (<=1e-4), embedding spread {spread:.3f}")
    assert ok


def test_c4_reference_and_decisions():
    rng = np.random.default_rng(8)
    worst, flips = 0.0, 0
    for _ in range(200):
        M, d = int(rng.integers(2, 12)), int(rng.integers(1, 9))
        V = rng.normal(size=(M, d)) * rng.uniform(0.1, 5.0, size=d)
        worst = max(worst, float(np.max(np.abs(build_reference(V) - np.array(reference_hand(V.tolist()))))))
        r = build_reference(V)
        if not np.any(r):
            continue
        E = rng.normal(size=(20, d))
        theta = float(rng.uniform(-0.5, 0.5))
        refs = ReferenceSet({"a": r}, {"a": theta})
        base = [classify(s, theta) for s in similarity_scores(E, ["a"] * len(E), refs)]
        a_, b_ = rng.uniform(0.01, 100.0, 2)
        scaled = ReferenceSet({"a": a_ * r}, {"a": theta})
        flips += sum(x != y for x, y in zip(base, (classify(s, theta) for s in similarity_scores(b_ * E, ["a"] * len(E), scaled))))
    ok = worst <= 1e-9 and flips == 0
    record_acceptance(4, ok, f"reference oracle max abs err {worst:.2e} (<=1e-9); decision flips under positive scaling: {flips}")
    assert ok


def test_c5_metric_oracles():
    rng = np.random.default_rng(21)
    worst = {"accuracy": 0.0, "auc_roc": 0.0, "auc_pr": 0.0, "spearman": 0.0}
    monotone = 0.0
    done = 0
    while done < 1000:
        n = int(rng.integers(2, 15))
        scores = np.round(rng.normal(size=n), int(rng.integers(0, 3)))
        truth = rng.random(n) < 0.5
        if truth.all() or not truth.any():
            continue
        preds = rng.random(n) < 0.5
        labels = [CORRECT if t else INCORRECT for t in truth]
        plabels = [CORRECT if p else INCORRECT for p in preds]
        acc_naive = sum(p == t for p, t in zip(plabels, labels)) / n
        worst["accuracy"] = max(worst["accuracy"], abs(accuracy(plabels, labels) - acc_naive))
        auc = auc_roc(scores, labels)
        worst["auc_roc"] = max(worst["auc_roc"], abs(auc - auc_pairs(scores.tolist(), truth.tolist())))
        worst["auc_pr"] = max(worst["auc_pr"], abs(auc_pr(scores, labels) - average_precision(scores.tolist(), truth.tolist())))
        other = rng.normal(size=n)
        if len(set(scores.tolist())) > 1:
            worst["spearman"] = max(worst["spearman"], abs(spearman(scores, other) - spearman_naive(scores.tolist(), other.tolist())))
        monotone = max(monotone, abs(auc_roc(np.exp(3 * scores) + 2.0, labels) - auc))
        done += 1
    ok = max(worst.values()) <= 1e-9 and monotone <= 1e-12
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    record_acceptance(5, ok, f"metric oracles on 1000 instances: {detail} (<=1e-9); AUC change under monotone map {monotone:.1e}")
    assert ok


# ---------------------------------------------------------------------------
# 6-8: synthetic end-to-end, ablation and transfer


@pytest.fixture(scope="session")
def synthetic_runs():
    runs = {}
    for seed in SEEDS:
        data = make_synthetic_dataset(n_per_type=60, length=32, seed=seed)
        train, val = split(data, "ratio_3_1", seed=seed)[0]
        t0 = time.perf_counter()
        model, history = train_contrastive(
            train, TrainConfig(epochs=EPOCHS, batch_tuples=BATCH_TUPLES, seed=seed), REDUCED_ENCODER, REDUCED_PROJECTION
        )
        reports = {}
        for head_mode in ("with_projection", "encoder_only"):
            refs = calibrate_thresholds(model, build_reference_set(model, train, head_mode), train)
            reports[head_mode] = evaluate(model, refs, val, seed=seed)
        runs[seed] = {
            "model": model,
            "history": history,
            "reports": reports,
            "seconds": time.perf_counter() - t0,
        }
    return runs


def _meets_c6(report):
    return all(m["accuracy"] >= 0.90 and m["auc_roc"] >= 0.95 for m in report.per_exercise.values())


@pytest.mark.xfail(strict=False, reason=f"per-type accuracy/AUC targets not met by the inverse-variance reference; {LEDGER}")
def test_c6_synthetic_end_to_end(synthetic_runs):
    run = synthetic_runs[DESIGNATED_SEED]
    report = run["reports"]["with_projection"]
    losses = [h["loss"] for h in run["history"]]
    first, last = float(np.mean(losses[:10])), float(np.mean(losses[-10:]))
    per_type = ", ".join(f"{c} acc {m['accuracy']:.3f} auc {m['auc_roc']:.3f}" for c, m in sorted(report.per_exercise.items()))
    missed = [k for k, r in synthetic_runs.items() if not _meets_c6(r["reports"]["with_projection"])]
    seeds_ok = len(SEEDS) - len(missed)
    ok = _meets_c6(report) and last < first and run["seconds"] < 600
    record_acceptance(
        6, ok,
        f"synthetic seed {DESIGNATED_SEED}: {per_type} (acc>=0.90, auc>=0.95); loss window mean {first:.2f} -> {last:.2f}; "
        f"{run['seconds']:.0f}s (<600s); seeds meeting targets {seeds_ok}/{len(SEEDS)} (missed: {missed})",
    )
    assert ok


def test_c7_projection_head_ablation(synthetic_runs):
    wp = [r["reports"]["with_projection"].macro_average["accuracy"] for r in synthetic_runs.values()]
    eo = [r["reports"]["encoder_only"].macro_average["accuracy"] for r in synthetic_runs.values()]
    ok = np.mean(wp) >= np.mean(eo)
    record_acceptance(7, ok, f"mean accuracy over {len(SEEDS)} seeds: with_projection {np.mean(wp):.3f} >= encoder_only {np.mean(eo):.3f}")
    assert ok


def _val_spearman(model, val):
    return spearman(predict_scores(model, val.frames_array()), np.array([s.clinical_score for s in val]))


def test_c8_transfer_direction(synthetic_runs):
    fine, scratch = [], []
    for seed in SEEDS:
        target = make_synthetic_regression(n_samples=60, exercise=0, length=32, seed=100 + seed)
        train, val = split(target, "ratio_3_1", seed=seed)[0]
        cfg = RegressionTrainConfig(epochs=EPOCHS, batch_size=16, seed=seed)
        tuned, _ = transfer_to_regression(synthetic_runs[seed]["model"], train, RegressionHeadConfig(), cfg)
        fresh, _ = transfer_to_regression(None, train, RegressionHeadConfig(), cfg, encoder_config=REDUCED_ENCODER)
        fine.append(_val_spearman(tuned, val))
        scratch.append(_val_spearman(fresh, val))
    ok = np.mean(fine) >= np.mean(scratch)
    record_acceptance(
        8, ok,
        f"val Spearman over {len(SEEDS)} seeds: fine-tuned {np.mean(fine):.3f} >= from scratch {np.mean(scratch):.3f} "
        f"(per seed {np.round(fine, 3).tolist()} vs {np.round(scratch, 3).tolist()})",
    )
    assert ok


# ---------------------------------------------------------------------------
# 9-10


def test_c9_full_scale():
    root = os.environ.get("REHAB_SUPCON_DATA_ROOT")
    if not root or not os.path.isdir(root):
        record_acceptance(9, None, "full-scale reproduction needs the public datasets (set REHAB_SUPCON_DATA_ROOT); not run")
        pytest.skip("public datasets not available")
    record_acceptance(9, None, "datasets found, but the full-scale runs take GPU hours; use the CLI (see README)")
    pytest.skip("full-scale runs are not part of the test suite")


def test_c10_parameter_accounting():
    n = count_parameters(ContrastiveModel(KINECT_V2_GRAPH))
    head = count_parameters(ContrastiveModel(KINECT_V2_GRAPH).projection)
    dev = abs(n - 1_249_536) / 1_249_536
    ok = dev <= 0.25 and head == 32_896
    record_acceptance(10, ok, f"default model {n:,} parameters ({dev:.1%} from 1,249,536, <=25%); projection head {head:,} (==32,896)")
    assert ok
