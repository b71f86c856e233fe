import json

import numpy as np
import pytest
import yaml

from rehab_supcon.cli import main
from rehab_supcon.data import Dataset, LabeledSample, export_canonical
from rehab_supcon.synthetic import make_synthetic_dataset, make_synthetic_regression

TINY = {
    "model": {"encoder": {"layer_channels": [8, 16], "temporal_strides": [1, 2], "temporal_kernel": 3},
              "projection": {"out_dim": 8}},
    "train": {"epochs": 2, "batch_tuples": 8},
    "transfer": {"epochs": 2, "batch_size": 4, "hidden_dim": 8},
}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    export_canonical(make_synthetic_dataset(n_per_type=8, length=12, seed=0), root / "data")
    export_canonical(make_synthetic_regression(16, length=12, seed=0), root / "reg")
    (root / "c.yaml").write_text(yaml.safe_dump(TINY))
    return root


def run(*argv):
    return main([str(a) for a in argv])


def test_prepare_errors(tmp_path, capsys):
    assert run("prepare", "--dataset", "irds", "--root", tmp_path / "missing", "--out", tmp_path / "o") == 2
    assert str(tmp_path / "missing") in capsys.readouterr().err
    (tmp_path / "o").mkdir()
    (tmp_path / "o" / "x").write_text("keep")
    (tmp_path / "raw").mkdir()
    assert run("prepare", "--dataset", "irds", "--root", tmp_path / "raw", "--out", tmp_path / "o") == 3
    assert (tmp_path / "o" / "x").read_text() == "keep"


def test_prepare_canonical(tmp_path, workspace):
    assert run("prepare", "--dataset", "canonical", "--root", workspace / "data", "--out", tmp_path / "p", "--length", 16) == 0
    meta = json.loads((tmp_path / "p" / "meta.json").read_text())
    assert meta["joint_count"] == 8
    assert (tmp_path / "p" / "config.yaml").exists()


def test_json_errors(tmp_path, capsys):
    code = run("--json-errors", "eval", "--checkpoint", tmp_path / "none", "--data", tmp_path)
    err = json.loads(capsys.readouterr().err)
    assert code == 2 and err["exit_code"] == 2 and "none" in err["message"]


def test_pipeline(workspace, tmp_path, capsys):
    cfg, data = workspace / "c.yaml", workspace / "data"
    run_dir = tmp_path / "run"
    assert run("train", "--config", cfg, "--data", data, "--out", run_dir, "--seed", 7, "--loss-mode", "prose") == 0
    resolved = yaml.safe_load((run_dir / "config.yaml").read_text())
    assert resolved["train"]["loss_mode"] == "prose" and resolved["train"]["seed"] == 7
    ck = run_dir / "checkpoint.npz"
    assert ck.exists()

    # determinism: same config and seed give the same log modulo timing
    assert run("train", "--config", cfg, "--data", data, "--out", tmp_path / "run2", "--seed", 7, "--loss-mode", "prose") == 0
    strip = lambda p: [{k: v for k, v in json.loads(l).items() if k != "seconds"} for l in p.read_text().splitlines()]
    assert strip(run_dir / "train_log.jsonl") == strip(tmp_path / "run2" / "train_log.jsonl")
    assert run("train", "--config", cfg, "--data", data, "--out", run_dir) == 3

    capsys.readouterr()
    assert run("eval", "--checkpoint", ck, "--data", data, "--out", tmp_path / "ev") == 0
    table = capsys.readouterr().out
    assert "average" in table and "e2" in table
    report = json.loads((tmp_path / "ev" / "report.json").read_text())
    assert set(report["per_exercise"]) == {"e0", "e1", "e2"}

    refs = tmp_path / "refs.json"
    assert run("calibrate", "--checkpoint", ck, "--data", data, "--out", refs) == 0
    assert run("infer", "--checkpoint", ck, "--references", refs, "--data", data, "--subset", "val", "--out", tmp_path / "pred.jsonl") == 0
    rows = [json.loads(l) for l in (tmp_path / "pred.jsonl").read_text().splitlines()]
    assert rows and all(r["prediction"] in "+-" for r in rows)

    sample = next((data / "frames").iterdir())
    capsys.readouterr()
    assert run("infer", "--checkpoint", ck, "--references", refs, "--sample", sample, "--exercise-type", "e0") == 0
    assert json.loads(capsys.readouterr().out)["exercise_type"] == "e0"

    emb = tmp_path / "emb.tsv"
    assert run("embed", "--checkpoint", ck, "--data", data, "--references", refs, "--project", "--perplexity", 5, "--out", emb) == 0
    assert emb.read_text().splitlines()[0].endswith("proj_x\tproj_y")
    assert run("plot", "--embeddings", emb, "--out", tmp_path / "proj.png") == 0
    assert run("plot", "--log", run_dir / "train_log.jsonl", "--out", tmp_path / "loss.png") == 0
    assert (tmp_path / "proj.png").stat().st_size > 0 and (tmp_path / "loss.png").stat().st_size > 0

    for extra in ([], ["--no-freeze-encoder"]):
        out = tmp_path / f"tr{len(extra)}"
        assert run("transfer", "--config", cfg, "--checkpoint", ck, "--data", workspace / "reg", "--out", out, *extra) == 0
        assert "val_spearman" in json.loads((out / "metrics.json").read_text())
    assert run("transfer", "--config", cfg, "--from-scratch", "--data", workspace / "reg", "--out", tmp_path / "scratch") == 0
    assert run("plot", "--log", tmp_path / "scratch" / "transfer_log.jsonl", "--out", tmp_path / "mse.png") == 0
    assert run("transfer", "--config", cfg, "--checkpoint", ck, "--data", data, "--out", tmp_path / "bad") == 2


def test_kfold_and_ri(workspace, tmp_path, capsys):
    out = tmp_path / "kf"
    assert run("train", "--config", workspace / "c.yaml", "--data", workspace / "data", "--out", out,
               "--protocol", "kfold_5", "--ri", "--epochs", 1) == 0
    assert len(list(out.glob("fold*/checkpoint.npz"))) == 5
    capsys.readouterr()
    assert run("eval", "--checkpoint", out, "--data", workspace / "data", "--head-mode", "encoder_only") == 0
    assert "average" in capsys.readouterr().out


def test_output_root_env(workspace, tmp_path, monkeypatch):
    monkeypatch.setenv("REHAB_SUPCON_OUTPUT_ROOT", str(tmp_path))
    monkeypatch.setenv("REHAB_SUPCON_THREADS", "1")
    assert run("train", "--config", workspace / "c.yaml", "--data", workspace / "data", "--out", "rel", "--protocol", "none", "--epochs", 1) == 0
    assert (tmp_path / "rel" / "checkpoint.npz").exists()


def test_bad_config(tmp_path):
    (tmp_path / "bad.yaml").write_text("nonsense: {a: 1}\n")
    assert run("train", "--config", tmp_path / "bad.yaml", "--out", tmp_path / "x") == 2


def test_synth(tmp_path, capsys):
    from rehab_supcon.data import load_canonical

    assert run("synth", "--out", tmp_path / "s", "--samples", 4, "--length", 8) == 0
    ds = load_canonical(tmp_path / "s")
    assert len(ds) == 12 and ds.exercise_types == ["e0", "e1", "e2"]
    assert run("synth", "--out", tmp_path / "s", "--samples", 4) == 3
    assert run("synth", "--out", tmp_path / "r", "--regression", "--samples", 6, "--exercise", 2) == 0
    reg = load_canonical(tmp_path / "r")
    assert reg.is_regression and reg.exercise_types == ["e2"]
