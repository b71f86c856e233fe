"""Command-line interface.

Every command accepts ``--config FILE`` (YAML). Explicit flags override
values from the file, and the resolved configuration is written next to the
command's outputs as ``config.yaml``.

Environment variables:
``REHAB_SUPCON_OUTPUT_ROOT``
    parent directory for relative ``--out`` paths.
``REHAB_SUPCON_THREADS``
    number of torch intra-op threads.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import shutil
import sys
from pathlib import Path

import numpy as np
import yaml

from . import data as data_mod
from .augmentation import AugmentationConfig
from .contrastive import DENOMINATOR_MODES, LossConfig
from .data import CORRECT, DataError, Dataset, SkeletonSequence, ingest, load_canonical, resample_dataset
from .inference import HEAD_MODES, ReferenceSet, build_reference_set, calibrate_thresholds
from .model import (
    CheckpointError,
    EncoderConfig,
    ProjectionConfig,
    RegressionHeadConfig,
    count_parameters,
    load_checkpoint,
    save_checkpoint,
)

logger = logging.getLogger("rehab_supcon")

DEFAULTS = {
    "dataset": {"kind": "canonical", "root": None, "canonical": None, "length": data_mod.DEFAULT_TARGET_LENGTH},
    "model": {
        "encoder": EncoderConfig().to_dict(),
        "projection": {"out_dim": 128},
    },
    "train": {
        "epochs": 2000,
        "batch_tuples": 128,
        "learning_rate": 1e-3,
        "temperature": 0.1,
        "adam_betas": [0.9, 0.999],
        "seed": 0,
        "loss_mode": "literal",
        "checkpoint_every": 0,
        "augmentation": AugmentationConfig().to_dict(),
    },
    "transfer": {
        "epochs": 200,
        "batch_size": 16,
        "learning_rate": 1e-3,
        "hidden_dim": 128,
        "freeze_encoder": True,
        "seed": 0,
    },
    "inference": {"variance_epsilon": 1e-8, "head_mode": "with_projection", "calibrate": True, "default_threshold": 0.5},
    "eval": {"protocol": "ratio_3_1", "seed": 0, "subject_aware": False},
}


class CLIError(Exception):
    def __init__(self, message: str, code: int = 1):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# config handling


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config(path) -> dict:
    if path is None:
        return copy.deepcopy(DEFAULTS)
    path = Path(path)
    if not path.is_file():
        raise CLIError(f"config file {path} not found", 2)
    try:
        loaded = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise CLIError(f"cannot parse config {path}: {exc}", 2) from exc
    if not isinstance(loaded, dict):
        raise CLIError(f"config {path} must be a mapping", 2)
    unknown = set(loaded) - set(DEFAULTS)
    if unknown:
        raise CLIError(f"unknown config section(s): {sorted(unknown)}", 2)
    return _merge(DEFAULTS, loaded)


def _set(cfg: dict, dotted: str, value):
    if value is None:
        return
    *parents, leaf = dotted.split(".")
    node = cfg
    for p in parents:
        node = node.setdefault(p, {})
    node[leaf] = value


def _out_dir(path) -> Path:
    path = Path(path)
    root = os.environ.get("REHAB_SUPCON_OUTPUT_ROOT")
    if root and not path.is_absolute():
        path = Path(root) / path
    return path


def _write_config(cfg: dict, out_dir: Path, command: str):
    out_dir.mkdir(parents=True, exist_ok=True)
    record = {"command": command, **cfg}
    (out_dir / "config.yaml").write_text(yaml.safe_dump(record, sort_keys=True))


def _train_config(cfg: dict):
    from .training import TrainConfig

    t = cfg["train"]
    aug = dict(t["augmentation"])
    aug.setdefault("rng_seed", t["seed"])
    return TrainConfig(
        epochs=int(t["epochs"]),
        batch_tuples=int(t["batch_tuples"]),
        learning_rate=float(t["learning_rate"]),
        temperature=float(t["temperature"]),
        adam_betas=tuple(t["adam_betas"]),
        seed=int(t["seed"]),
        augmentation=AugmentationConfig(**aug),
        loss=LossConfig(float(t["temperature"]), t["loss_mode"]),
        use_ri=bool(cfg["model"]["encoder"].get("use_ri", False)),
        checkpoint_every=int(t.get("checkpoint_every", 0)),
    )


def _encoder_config(cfg: dict, in_channels: int) -> EncoderConfig:
    enc = dict(cfg["model"]["encoder"])
    enc["in_channels"] = in_channels
    return EncoderConfig(**enc)


def _load_data(path) -> Dataset:
    if path is None:
        raise CLIError("--data is required (a canonical dataset directory)", 2)
    path = Path(path)
    if not path.exists():
        raise CLIError(f"data path {path} does not exist", 2)
    return load_canonical(path)


def _load_model(path):
    path = Path(path)
    if not path.exists():
        raise CLIError(f"checkpoint {path} does not exist", 2)
    return load_checkpoint(path)


def _subset(data: Dataset, model, which: str) -> Dataset:
    """Restrict ``data`` to the train / val part recorded in the checkpoint."""
    if which == "all":
        return data
    info = model.metadata.get("split")
    if not info:
        raise CLIError(f"--subset {which} requested but the checkpoint records no split", 2)
    val = set(info["val_ids"])
    keep = (lambda s: s.sample_id in val) if which == "val" else (lambda s: s.sample_id not in val)
    return data.filter(keep)


# ---------------------------------------------------------------------------
# commands


def cmd_prepare(args, cfg):
    root = Path(args.root)
    out = _out_dir(args.out)
    if not root.exists():
        raise CLIError(f"dataset root {root} does not exist", 2)
    if out.exists() and any(out.iterdir()):
        if not args.force:
            raise CLIError(f"output {out} exists; pass --force to overwrite", 3)
        shutil.rmtree(out)
    _set(cfg, "dataset.kind", args.dataset)
    _set(cfg, "dataset.root", str(root))
    _set(cfg, "dataset.length", args.length)
    _set(cfg, "dataset.canonical", str(out))
    ds = ingest(cfg["dataset"]["kind"], root, center=not args.no_center, workers=args.workers)
    if cfg["dataset"]["length"]:
        ds = resample_dataset(ds, int(cfg["dataset"]["length"]))
    summary = data_mod.export_canonical(ds, out)
    _write_config(cfg, out, "prepare")
    print(json.dumps({"out": str(out), "samples": summary["samples"], "exercise_types": ds.exercise_types}))


def cmd_synth(args, cfg):
    from .synthetic import make_synthetic_dataset, make_synthetic_regression

    out = _out_dir(args.out)
    if out.exists() and any(out.iterdir()):
        if not args.force:
            raise CLIError(f"output {out} exists; pass --force to overwrite", 3)
        shutil.rmtree(out)
    if args.regression:
        ds = make_synthetic_regression(args.samples, args.exercise, args.length, args.seed)
    else:
        ds = make_synthetic_dataset(args.samples, args.length, seed=args.seed)
    summary = data_mod.export_canonical(ds, out)
    print(json.dumps({"out": str(out), "samples": summary["samples"], "exercise_types": ds.exercise_types}))


def _train_one(train: Dataset, cfg, run_dir: Path, split_info: dict | None):
    from .training import train_contrastive

    tc = _train_config(cfg)
    enc = _encoder_config(cfg, train.samples[0].sequence.shape[2])
    proj = ProjectionConfig(enc.embedding_dim, int(cfg["model"]["projection"]["out_dim"]))
    run_dir.mkdir(parents=True, exist_ok=True)
    model, history = train_contrastive(
        train, tc, enc, proj, log_path=run_dir / "train_log.jsonl",
        checkpoint_dir=run_dir if tc.checkpoint_every else None,
    )
    if split_info is not None:
        model.metadata["split"] = split_info
    model.metadata["parameter_count"] = count_parameters(model)
    path = save_checkpoint(model, run_dir / "checkpoint.npz")
    return model, history, path


def cmd_train(args, cfg):
    out = _out_dir(args.out)
    if (out / "checkpoint.npz").exists() and not args.force:
        raise CLIError(f"{out} already holds a checkpoint; pass --force to overwrite", 3)
    _set(cfg, "train.seed", args.seed)
    _set(cfg, "train.epochs", args.epochs)
    _set(cfg, "train.batch_tuples", args.batch_tuples)
    _set(cfg, "train.learning_rate", args.lr)
    _set(cfg, "train.temperature", args.temperature)
    _set(cfg, "train.loss_mode", args.loss_mode)
    _set(cfg, "eval.protocol", args.protocol)
    if args.ri:
        _set(cfg, "model.encoder.use_ri", True)
    if args.seed is not None:
        _set(cfg, "eval.seed", args.seed)
        _set(cfg, "train.augmentation.rng_seed", args.seed)
    data_path = args.data or cfg["dataset"].get("canonical")
    _set(cfg, "dataset.canonical", str(data_path) if data_path else None)
    data = _load_data(data_path)
    _write_config(cfg, out, "train")
    protocol = cfg["eval"]["protocol"]
    results = []
    if protocol == "none":
        _, hist, path = _train_one(data, cfg, out, None)
        results.append({"checkpoint": str(path), "final_loss": hist[-1]["loss"]})
    else:
        seed = int(cfg["eval"]["seed"])
        pairs = data_mod.split(data, protocol, seed, bool(cfg["eval"].get("subject_aware", False)))
        for k, (train, val) in enumerate(pairs):
            info = {"scheme": protocol, "seed": seed, "fold": k, "val_ids": [s.sample_id for s in val]}
            run_dir = out if protocol == "ratio_3_1" else out / f"fold{k}"
            _, hist, path = _train_one(train, cfg, run_dir, info)
            results.append({"checkpoint": str(path), "fold": k, "final_loss": hist[-1]["loss"]})
    print(json.dumps({"runs": results}))


def _checkpoints(path) -> list[Path]:
    """A checkpoint file, or a run directory holding one or ``fold*/`` checkpoints."""
    path = Path(path)
    if path.is_file():
        return [path]
    if (path / "checkpoint.npz").is_file():
        return [path / "checkpoint.npz"]
    folds = sorted(path.glob("fold*/checkpoint.npz"))
    if not folds:
        raise CLIError(f"no checkpoint found at {path}", 2)
    return folds


def _references(model, data: Dataset, cfg, subset: str) -> ReferenceSet:
    inf = cfg["inference"]
    train = _subset(data, model, subset)
    refs = build_reference_set(model, train, inf["head_mode"], float(inf["variance_epsilon"]))
    if inf["calibrate"]:
        refs = calibrate_thresholds(model, refs, train, float(inf["default_threshold"]))
    else:
        refs.thresholds = {c: float(inf["default_threshold"]) for c in refs.references}
    return refs


def cmd_calibrate(args, cfg):
    _set(cfg, "inference.head_mode", args.head_mode)
    model = _load_model(args.checkpoint)
    data = _load_data(args.data)
    refs = _references(model, data, cfg, args.subset)
    refs.checkpoint_id = str(Path(args.checkpoint).resolve())
    out = _out_dir(args.out)
    refs.save(out)
    _write_config(cfg, out.parent, "calibrate")
    print(json.dumps({"references": str(out), "thresholds": refs.thresholds}))


def cmd_eval(args, cfg):
    from .evaluation import combine_reports, evaluate

    _set(cfg, "inference.head_mode", args.head_mode)
    _set(cfg, "eval.protocol", args.protocol)
    checkpoints = _checkpoints(args.checkpoint)
    data = _load_data(args.data)
    reports = []
    for ck in checkpoints:
        model = load_checkpoint(ck)
        if args.references:
            refs = ReferenceSet.load(args.references)
        else:
            refs = _references(model, data, cfg, "train" if model.metadata.get("split") else "all")
        val = _subset(data, model, "val" if model.metadata.get("split") and args.subset == "auto" else
                      ("all" if args.subset == "auto" else args.subset))
        reports.append(evaluate(model, refs, val, cfg["eval"]["protocol"], int(cfg["eval"]["seed"])))
    report = reports[0] if len(reports) == 1 else combine_reports(reports)
    out = _out_dir(args.out) if args.out else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        report.save(out / "report.json")
        (out / "report.txt").write_text(report.table() + "\n")
        _write_config(cfg, out, "eval")
    print(report.table())


def cmd_transfer(args, cfg):
    from .evaluation import UndefinedMetricError, spearman
    from .training import RegressionTrainConfig, predict_scores, transfer_to_regression

    _set(cfg, "transfer.epochs", args.epochs)
    _set(cfg, "transfer.seed", args.seed)
    if args.freeze_encoder is not None:
        _set(cfg, "transfer.freeze_encoder", args.freeze_encoder)
    tr = cfg["transfer"]
    data = _load_data(args.data)
    if args.exercise_type:
        data = data.of_type(args.exercise_type)
        if not len(data):
            raise CLIError(f"no samples of exercise type {args.exercise_type!r}", 2)
    if not data.is_regression:
        raise CLIError("regression target required (dataset carries assessment labels)", 2)
    pretrained = None if args.from_scratch else _load_model(args.checkpoint) if args.checkpoint else None
    if pretrained is None and not args.from_scratch:
        raise CLIError("pass --checkpoint or --from-scratch", 2)
    [(train, val)] = data_mod.split(data, "ratio_3_1", int(tr["seed"]))
    out = _out_dir(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_config(cfg, out, "transfer")
    model, history = transfer_to_regression(
        pretrained,
        train,
        RegressionHeadConfig(int(tr["hidden_dim"]), bool(tr["freeze_encoder"])),
        RegressionTrainConfig(int(tr["epochs"]), int(tr["batch_size"]), float(tr["learning_rate"]), seed=int(tr["seed"])),
        validation=val,
        encoder_config=_encoder_config(cfg, data.samples[0].sequence.shape[2]),
        log_path=out / "transfer_log.jsonl",
    )
    model.metadata["split"] = {"scheme": "ratio_3_1", "seed": int(tr["seed"]), "val_ids": [s.sample_id for s in val]}
    save_checkpoint(model, out / "checkpoint.npz")
    pred = predict_scores(model, val.frames_array())
    truth = np.array([s.clinical_score for s in val])
    try:
        rho = spearman(pred, truth)
    except UndefinedMetricError as exc:
        rho = None
        logger.warning("validation Spearman undefined: %s", exc)
    metrics = {"val_spearman": rho, "val_mse": float(np.mean((pred - truth) ** 2)), "val_samples": len(val)}
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2))
    print(json.dumps(metrics))


def cmd_embed(args, cfg):
    from .evaluation import export_embeddings

    _set(cfg, "inference.head_mode", args.head_mode)
    model = _load_model(args.checkpoint)
    data = _subset(_load_data(args.data), model, args.subset)
    refs = ReferenceSet.load(args.references) if args.references else None
    out = _out_dir(args.out)
    export_embeddings(
        model, data, cfg["inference"]["head_mode"], out, refs,
        project=args.project, perplexity=args.perplexity, seed=int(cfg["eval"]["seed"]),
    )
    _write_config(cfg, out.parent, "embed")
    print(json.dumps({"embeddings": str(out), "rows": len(data) + (len(refs.references) if refs else 0)}))


def _read_sample(path, joints: int, channels: int) -> np.ndarray:
    rows = data_mod.read_numeric_rows(Path(path), (joints * channels,))
    return np.stack(rows).reshape(len(rows), joints, channels)


def cmd_infer(args, cfg):
    from .training import predict_scores

    model = _load_model(args.checkpoint)
    if args.sample:
        if not args.exercise_type and model.kind == "contrastive":
            raise CLIError("--exercise-type is required with --sample", 2)
        frames = _read_sample(args.sample, model.graph.joint_count, model.encoder_config.in_channels)
        length = args.length or frames.shape[0]
        seq = SkeletonSequence(data_mod.resample_array(frames, length))
        ids, types, X = [Path(args.sample).stem], [args.exercise_type], seq.frames[None]
    else:
        data = _subset(_load_data(args.data), model, args.subset)
        ids = [s.sample_id for s in data]
        types = [s.exercise_type for s in data]
        X = data.frames_array()
    rows = []
    if model.kind == "regression":
        for i, t, score in zip(ids, types, predict_scores(model, X)):
            rows.append({"id": i, "exercise_type": t, "clinical_score": float(score)})
    else:
        if not args.references:
            raise CLIError("--references is required for a contrastive checkpoint", 2)
        refs = ReferenceSet.load(args.references)
        from .inference import similarity_scores
        from .model import embed

        scores = similarity_scores(embed(model, X, refs.head_mode), types, refs)
        for i, t, s in zip(ids, types, scores):
            rows.append({"id": i, "exercise_type": t, "score": float(s),
                         "prediction": CORRECT if s >= refs.thresholds[t] else data_mod.INCORRECT})
    text = "\n".join(json.dumps(r) for r in rows) + ("\n" if rows else "")
    if args.out:
        out = _out_dir(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
    sys.stdout.write(text)


def cmd_plot(args, cfg):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    from .evaluation import project_2d, read_embeddings

    out = _out_dir(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 4.5))
    if args.log:
        records = [json.loads(line) for line in Path(args.log).read_text().splitlines() if line.strip()]
        records = [r for r in records if "event" not in r]
        if not records:
            raise CLIError(f"{args.log} holds no epoch records", 2)
        epochs = [r["epoch"] for r in records]
        keys = [k for k in ("loss", "train_mse", "val_mse") if k in records[0]]
        for k in keys:
            ax.plot(epochs, [r[k] for r in records], label=k)
        ax.set_xlabel("epoch")
        ax.set_ylabel("loss" if keys == ["loss"] else "MSE")
        ax.legend()
    elif args.embeddings:
        table = read_embeddings(args.embeddings)
        xy = table.get("projection")
        if xy is None:
            xy = project_2d(table["embedding"], args.perplexity, args.seed)
        kinds = np.array(table["kind"])
        types = np.array(table["exercise_type"])
        labels = np.array(table["label"])
        cmap = plt.get_cmap("tab10")
        for k, c in enumerate(sorted(set(types.tolist()))):
            for lab, marker in ((CORRECT, "o"), (data_mod.INCORRECT, "x")):
                m = (kinds == "sample") & (types == c) & (labels == lab)
                if m.any():
                    ax.scatter(xy[m, 0], xy[m, 1], s=14, marker=marker, color=cmap(k % 10), label=f"{c} {lab}")
            m = (kinds == "reference") & (types == c)
            if m.any():
                ax.scatter(xy[m, 0], xy[m, 1], s=160, marker="+", color="black", linewidths=2)
        ax.set_xticks([])
        ax.set_yticks([])
        ax.legend(fontsize=6, ncol=2)
    else:
        raise CLIError("pass --log or --embeddings", 2)
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    plt.close(fig)
    print(json.dumps({"figure": str(out)}))


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rehab-supcon", description="Contrastive exercise-quality assessment.")
    p.add_argument("--json-errors", action="store_true", help="report failures as a JSON object on stderr")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="YAML run configuration")
        sp.set_defaults(func=fn)
        return sp

    sp = add("prepare", cmd_prepare, "ingest a raw dataset into the canonical format")
    sp.add_argument("--dataset", required=True, choices=data_mod.DATASET_KINDS)
    sp.add_argument("--root", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--length", type=int, help="resample every sequence to this many frames")
    sp.add_argument("--no-center", action="store_true", help="keep raw coordinates (no root centring)")
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--force", action="store_true")

    sp = add("synth", cmd_synth, "write a generated dataset in the canonical format")
    sp.add_argument("--out", required=True)
    sp.add_argument("--samples", type=int, default=60, help="per exercise type (total with --regression)")
    sp.add_argument("--length", type=int, default=32)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--regression", action="store_true", help="clinical scores for one exercise instead of labels")
    sp.add_argument("--exercise", type=int, default=0, choices=(0, 1, 2))
    sp.add_argument("--force", action="store_true")

    sp = add("train", cmd_train, "contrastive training")
    sp.add_argument("--data")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--batch-tuples", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--temperature", type=float)
    sp.add_argument("--loss-mode", choices=DENOMINATOR_MODES)
    sp.add_argument("--ri", action="store_true", help="use the rotation-invariant input descriptor")
    sp.add_argument("--protocol", choices=("ratio_3_1", "kfold_5", "none"))
    sp.add_argument("--force", action="store_true")

    sp = add("calibrate", cmd_calibrate, "build reference representations and thresholds")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True, help="reference-set JSON path")
    sp.add_argument("--head-mode", choices=HEAD_MODES)
    sp.add_argument("--subset", choices=("train", "val", "all"), default="train")

    sp = add("eval", cmd_eval, "evaluate a checkpoint (or every fold of a run)")
    sp.add_argument("--checkpoint", required=True, help="checkpoint file or run directory")
    sp.add_argument("--data", required=True)
    sp.add_argument("--references")
    sp.add_argument("--head-mode", choices=HEAD_MODES)
    sp.add_argument("--protocol", choices=("ratio_3_1", "kfold_5"))
    sp.add_argument("--subset", choices=("auto", "train", "val", "all"), default="auto")
    sp.add_argument("--out")

    sp = add("transfer", cmd_transfer, "fit a clinical-score regressor")
    sp.add_argument("--checkpoint")
    sp.add_argument("--from-scratch", action="store_true")
    sp.add_argument("--data", required=True)
    sp.add_argument("--exercise-type")
    sp.add_argument("--out", required=True)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--freeze-encoder", dest="freeze_encoder", action="store_true", default=None)
    sp.add_argument("--no-freeze-encoder", dest="freeze_encoder", action="store_false")

    sp = add("embed", cmd_embed, "export embeddings as TSV")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--head-mode", choices=HEAD_MODES)
    sp.add_argument("--references")
    sp.add_argument("--subset", choices=("train", "val", "all"), default="all")
    sp.add_argument("--project", action="store_true", help="add a 2-D neighbour-embedding projection")
    sp.add_argument("--perplexity", type=float, default=20.0)

    sp = add("infer", cmd_infer, "score samples")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--references")
    sp.add_argument("--data")
    sp.add_argument("--subset", choices=("train", "val", "all"), default="all")
    sp.add_argument("--sample", help="a single frame matrix (one frame per row)")
    sp.add_argument("--exercise-type")
    sp.add_argument("--length", type=int)
    sp.add_argument("--out")

    sp = add("plot", cmd_plot, "loss curves or embedding projections")
    sp.add_argument("--log")
    sp.add_argument("--embeddings")
    sp.add_argument("--perplexity", type=float, default=20.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    threads = os.environ.get("REHAB_SUPCON_THREADS")
    if threads:
        import torch

        torch.set_num_threads(int(threads))
    try:
        cfg = load_config(args.config)
        args.func(args, cfg)
        return 0
    except (CLIError, DataError, CheckpointError, FileNotFoundError, ValueError, KeyError) as exc:
        code = exc.code if isinstance(exc, CLIError) else 2 if isinstance(exc, FileNotFoundError) else 1
        message = str(exc) if not isinstance(exc, KeyError) else str(exc.args[0])
        if args.json_errors:
            sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": message, "exit_code": code}) + "\n")
        else:
            sys.stderr.write(f"error: {message}\n")
        return code


if __name__ == "__main__":
    sys.exit(main())
