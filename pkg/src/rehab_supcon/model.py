"""Spatial-temporal graph convolutional encoder, projection head and checkpoints."""

from __future__ import annotations

import json
import os
import tempfile
import zipfile
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .data import SkeletonGraph, SkeletonSequence

CHECKPOINT_FORMAT = "rehab-supcon-checkpoint"
CHECKPOINT_VERSION = 1


class CheckpointError(Exception):
    pass


# ---------------------------------------------------------------------------
# graph preprocessing


def normalized_adjacency(graph: SkeletonGraph, strategy: str = "spatial") -> np.ndarray:
    """Spatial-configuration partitions of D^-1/2 (A + I) D^-1/2.

    Returns a 3 x J x J stack ``[self, centripetal, centrifugal]`` where entry
    ``[k, v, w]`` weights joint ``w``'s features in the update of joint ``v``.
    A neighbour at the same hop distance from the root as ``v`` falls in the
    self partition (only possible in graphs with cycles).
    """
    if strategy != "spatial":
        raise ValueError(f"unsupported partition strategy {strategy!r}")
    hop = graph.hop_distance()
    if np.isinf(hop).any():
        raise ValueError("graph is disconnected; root distance undefined")
    A = graph.adjacency() + np.eye(graph.joint_count)
    d = A.sum(axis=1) ** -0.5
    N = d[:, None] * A * d[None, :]
    closer = hop[None, :] < hop[:, None]
    further = hop[None, :] > hop[:, None]
    same = ~(closer | further)
    return np.stack([N * same, N * closer, N * further])


def ri_descriptor(sequence, root_joint: int = 0):
    """Per-frame Gram matrix of root-centred joint coordinates (T x J x J).

    Accepts a :class:`SkeletonSequence`, a numpy array ``(..., T, J, C)`` or a
    torch tensor of the same layout; returns the same kind.
    """
    if isinstance(sequence, SkeletonSequence):
        return SkeletonSequence(ri_descriptor(sequence.frames, root_joint), sequence.fps)
    if isinstance(sequence, torch.Tensor):
        x = sequence[..., :3]
        x = x - x[..., root_joint : root_joint + 1, :]
        return x @ x.transpose(-1, -2)
    x = np.asarray(sequence, dtype=np.float64)[..., :3]
    x = x - x[..., root_joint : root_joint + 1, :]
    return x @ np.swapaxes(x, -1, -2)


# ---------------------------------------------------------------------------
# configuration


@dataclass
class EncoderConfig:
    in_channels: int = 3
    layer_channels: tuple[int, ...] = (64, 64, 128, 128, 256, 256, 256, 256)
    temporal_strides: tuple[int, ...] = (1, 1, 2, 1, 2, 1, 1, 1)
    temporal_kernel: int = 9
    bottleneck_ratio: float = 4.0
    partition_strategy: str = "spatial"
    use_ri: bool = False
    dropout: float = 0.0

    def __post_init__(self):
        self.layer_channels = tuple(int(c) for c in self.layer_channels)
        self.temporal_strides = tuple(int(s) for s in self.temporal_strides)
        if len(self.layer_channels) != len(self.temporal_strides) or not self.layer_channels:
            raise ValueError("layer_channels and temporal_strides must be equal, nonzero length")
        if self.temporal_kernel % 2 == 0 or self.temporal_kernel < 1:
            raise ValueError("temporal_kernel must be odd and positive")
        if any(c < 1 for c in self.layer_channels) or any(s < 1 for s in self.temporal_strides):
            raise ValueError("channels and strides must be positive")
        if self.bottleneck_ratio <= 0:
            raise ValueError("bottleneck_ratio must be positive")

    @property
    def embedding_dim(self) -> int:
        return self.layer_channels[-1]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["layer_channels"] = list(self.layer_channels)
        d["temporal_strides"] = list(self.temporal_strides)
        return d


@dataclass
class ProjectionConfig:
    in_dim: int = 256
    out_dim: int = 128


@dataclass
class RegressionHeadConfig:
    hidden_dim: int = 128
    freeze_encoder: bool = True


# ---------------------------------------------------------------------------
# layers


class GraphConv(nn.Module):
    """Partitioned graph convolution: sum_k A_k X W_k + b."""

    def __init__(self, in_channels: int, out_channels: int, partitions: int):
        super().__init__()
        self.weight = nn.Parameter(torch.empty(partitions, in_channels, out_channels))
        self.bias = nn.Parameter(torch.empty(out_channels))
        bound = 1.0 / np.sqrt(partitions * in_channels)
        nn.init.uniform_(self.weight, -bound, bound)
        nn.init.uniform_(self.bias, -bound, bound)

    def forward(self, x: torch.Tensor, A: torch.Tensor) -> torch.Tensor:
        # x: B x C x T x V, A: K x V x V; contract over the narrower channel side first
        if self.weight.shape[1] <= self.weight.shape[2]:
            xa = torch.einsum("bctw,kvw->bkctv", x, A)
            out = torch.einsum("bkctv,kco->botv", xa, self.weight)
        else:
            xw = torch.einsum("bctw,kco->bkotw", x, self.weight)
            out = torch.einsum("bkotw,kvw->botv", xw, A)
        return out + self.bias[None, :, None, None]


class BottleneckTemporalConv(nn.Module):
    """1x1 reduce, k x 1 temporal convolution, 1x1 expand."""

    def __init__(self, channels: int, kernel: int, stride: int, ratio: float):
        super().__init__()
        inner = max(1, int(round(channels / ratio)))
        pad = (kernel - 1) // 2
        self.net = nn.Sequential(
            nn.Conv2d(channels, inner, 1),
            nn.BatchNorm2d(inner),
            nn.ReLU(),
            nn.Conv2d(inner, inner, (kernel, 1), (stride, 1), (pad, 0)),
            nn.BatchNorm2d(inner),
            nn.ReLU(),
            nn.Conv2d(inner, channels, 1),
            nn.BatchNorm2d(channels),
        )

    def forward(self, x):
        return self.net(x)


class STGCNBlock(nn.Module):
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        partitions: int,
        kernel: int,
        stride: int,
        ratio: float,
        residual: bool = True,
        dropout: float = 0.0,
    ):
        super().__init__()
        self.gcn = GraphConv(in_channels, out_channels, partitions)
        self.gcn_bn = nn.BatchNorm2d(out_channels)
        self.tcn = BottleneckTemporalConv(out_channels, kernel, stride, ratio)
        self.drop = nn.Dropout(dropout) if dropout > 0 else nn.Identity()
        if not residual:
            self.residual = None
        elif in_channels == out_channels and stride == 1:
            self.residual = nn.Identity()
        else:
            self.residual = nn.Sequential(
                nn.Conv2d(in_channels, out_channels, 1, (stride, 1)),
                nn.BatchNorm2d(out_channels),
            )

    def forward(self, x, A):
        res = 0 if self.residual is None else self.residual(x)
        y = torch.relu(self.gcn_bn(self.gcn(x, A)))
        y = self.drop(self.tcn(y))
        return torch.relu(y + res)


class STGCNEncoder(nn.Module):
    """Maps B x T x J x C joint sequences to B x d_f embeddings."""

    def __init__(self, graph: SkeletonGraph, config: EncoderConfig):
        super().__init__()
        self.graph = graph
        self.config = config
        A = torch.tensor(normalized_adjacency(graph, config.partition_strategy), dtype=torch.float32)
        self.register_buffer("A", A)
        J = graph.joint_count
        in_ch = J if config.use_ri else config.in_channels
        self.input_channels = in_ch
        self.data_bn = nn.BatchNorm1d(J * in_ch)
        blocks = []
        c_prev = in_ch
        for i, (c, s) in enumerate(zip(config.layer_channels, config.temporal_strides)):
            blocks.append(
                STGCNBlock(
                    c_prev, c, A.shape[0], config.temporal_kernel, s,
                    config.bottleneck_ratio, residual=i > 0, dropout=config.dropout,
                )
            )
            c_prev = c
        self.blocks = nn.ModuleList(blocks)

    @property
    def embedding_dim(self) -> int:
        return self.config.embedding_dim

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 4:
            raise ValueError(f"expected B x T x J x C input, got shape {tuple(x.shape)}")
        B, T, J, C = x.shape
        if J != self.graph.joint_count:
            raise ValueError(f"input has {J} joints, encoder graph has {self.graph.joint_count}")
        if self.config.use_ri:
            x = ri_descriptor(x, self.graph.root_joint)
            C = J
        if C != self.input_channels:
            raise ValueError(f"input has {C} channels, encoder expects {self.input_channels}")
        x = x.reshape(B, T, J * C).transpose(1, 2)
        x = self.data_bn(x)
        x = x.reshape(B, J, C, T).permute(0, 2, 3, 1)
        A = self.A.to(x.dtype)
        for block in self.blocks:
            x = block(x, A)
        return x.mean(dim=(2, 3))


class ContrastiveModel(nn.Module):
    """Encoder f followed by an affine projection head g."""

    kind = "contrastive"

    def __init__(
        self,
        graph: SkeletonGraph,
        encoder_config: EncoderConfig | None = None,
        projection_config: ProjectionConfig | None = None,
        metadata: dict | None = None,
    ):
        super().__init__()
        encoder_config = encoder_config or EncoderConfig()
        if projection_config is None:
            projection_config = ProjectionConfig(in_dim=encoder_config.embedding_dim)
        if projection_config.in_dim != encoder_config.embedding_dim:
            raise ValueError("projection in_dim must equal the encoder embedding dimension")
        self.encoder = STGCNEncoder(graph, encoder_config)
        self.projection = nn.Linear(projection_config.in_dim, projection_config.out_dim)
        self.projection_config = projection_config
        self.metadata = dict(metadata or {})

    @property
    def graph(self) -> SkeletonGraph:
        return self.encoder.graph

    @property
    def encoder_config(self) -> EncoderConfig:
        return self.encoder.config

    def forward(self, x):
        return self.projection(self.encoder(x))

    def head_config(self) -> dict:
        return asdict(self.projection_config)


class RegressionModel(nn.Module):
    """Encoder f followed by a two-layer regression network d_f -> hidden -> 1."""

    kind = "regression"

    def __init__(
        self,
        graph: SkeletonGraph,
        encoder_config: EncoderConfig | None = None,
        head_config: RegressionHeadConfig | None = None,
        metadata: dict | None = None,
    ):
        super().__init__()
        encoder_config = encoder_config or EncoderConfig()
        self.encoder = STGCNEncoder(graph, encoder_config)
        self.regression_config = head_config or RegressionHeadConfig()
        d = encoder_config.embedding_dim
        self.head = nn.Sequential(
            nn.Linear(d, self.regression_config.hidden_dim),
            nn.ReLU(),
            nn.Linear(self.regression_config.hidden_dim, 1),
        )
        self.metadata = dict(metadata or {})

    @property
    def graph(self) -> SkeletonGraph:
        return self.encoder.graph

    @property
    def encoder_config(self) -> EncoderConfig:
        return self.encoder.config

    def forward(self, x):
        return self.head(self.encoder(x)).squeeze(-1)

    def head_config(self) -> dict:
        return asdict(self.regression_config)


# ---------------------------------------------------------------------------
# functional surface


def _as_tensor(views, model: nn.Module) -> torch.Tensor:
    dtype = next(model.parameters()).dtype
    if isinstance(views, torch.Tensor):
        return views.to(dtype)
    return torch.as_tensor(np.asarray(views), dtype=dtype)


@torch.no_grad()
def encode(model: nn.Module, views, batch_size: int = 256) -> np.ndarray:
    """Inference-mode encoder embeddings, B x d_f."""
    was_training = model.training
    model.eval()
    try:
        x = _as_tensor(views, model)
        out = [model.encoder(x[i : i + batch_size]) for i in range(0, len(x), batch_size)]
        if not out:
            return np.zeros((0, model.encoder.embedding_dim))
        return torch.cat(out).double().numpy()
    finally:
        model.train(was_training)


@torch.no_grad()
def project(model: ContrastiveModel, embeddings) -> np.ndarray:
    """Apply the projection head to B x d_f embeddings."""
    e = _as_tensor(embeddings, model)
    if e.dim() != 2 or e.shape[1] != model.projection_config.in_dim:
        raise ValueError(
            f"expected B x {model.projection_config.in_dim} embeddings, got {tuple(e.shape)}"
        )
    return model.projection(e).double().numpy()


def embed(model: ContrastiveModel, views, head_mode: str = "with_projection") -> np.ndarray:
    """g(f(x)) or f(x) depending on ``head_mode``."""
    e = encode(model, views)
    if head_mode == "encoder_only":
        return e
    if head_mode != "with_projection":
        raise ValueError(f"unknown head mode {head_mode!r}")
    return project(model, e)


def count_parameters(module: nn.Module) -> int:
    """Number of trainable scalars."""
    return sum(p.numel() for p in module.parameters() if p.requires_grad)


# ---------------------------------------------------------------------------
# checkpoints


def _graph_from_dict(d: dict) -> SkeletonGraph:
    return SkeletonGraph(d["joint_count"], tuple(map(tuple, d["edges"])), d["root_joint"])


def save_checkpoint(model: nn.Module, path) -> Path:
    """Write an ``.npz`` archive (JSON header + state arrays) atomically."""
    path = Path(path)
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "kind": model.kind,
        "graph": model.graph.to_dict(),
        "encoder_config": model.encoder_config.to_dict(),
        "head_config": model.head_config(),
        "metadata": model.metadata,
    }
    arrays = {f"param/{k}": v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    arrays["__header__"] = np.frombuffer(json.dumps(header).encode(), dtype=np.uint8)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            np.savez(fh, **arrays)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def load_checkpoint(path) -> nn.Module:
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as archive:
            arrays = {k: archive[k] for k in archive.files}
    except FileNotFoundError:
        raise
    except (OSError, ValueError, zipfile.BadZipFile, EOFError) as exc:
        raise CheckpointError(f"{path}: corrupt or unreadable checkpoint ({exc})") from exc
    if "__header__" not in arrays:
        raise CheckpointError(f"{path}: missing checkpoint header")
    try:
        header = json.loads(arrays.pop("__header__").tobytes().decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint header") from exc
    if header.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    if header.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported checkpoint version {header.get('version')} "
            f"(this build reads version {CHECKPOINT_VERSION})"
        )
    graph = _graph_from_dict(header["graph"])
    enc = EncoderConfig(**header["encoder_config"])
    if header["kind"] == "contrastive":
        model = ContrastiveModel(graph, enc, ProjectionConfig(**header["head_config"]), header["metadata"])
    elif header["kind"] == "regression":
        model = RegressionModel(graph, enc, RegressionHeadConfig(**header["head_config"]), header["metadata"])
    else:
        raise CheckpointError(f"{path}: unknown model kind {header['kind']!r}")
    state = {k[len("param/"):]: torch.from_numpy(v.copy()) for k, v in arrays.items()}
    try:
        model.load_state_dict(state)
    except RuntimeError as exc:
        raise CheckpointError(f"{path}: parameters do not match configuration ({exc})") from exc
    for name, p in model.state_dict().items():
        if p.is_floating_point() and not torch.isfinite(p).all():
            raise CheckpointError(f"{path}: non-finite values in {name}")
    model.eval()
    return model
