"""Encoder with a labelled classification head and a novel clustering head.

The encoder is a small perceptron mapping input vectors to features.
Two heads sit on top: a linear labelled head producing one logit per
known class, and a novel head (hidden layer plus linear) producing one
logit per cluster to discover.  Their logits are concatenated with the
labelled block first, and every probability output uses the same
temperature softmax.

Optional over-clustering heads replicate the novel head with more
outputs; they sharpen features through extra classification pressure
and are ignored at evaluation time.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .autodiff import Tensor, concat, matmul, relu, softmax
from .exceptions import (
    CheckpointMismatchError,
    ConfigurationError,
    ShapeMismatchError,
)

CHECKPOINT_MAGIC = b"NCDCKPT1\n"


@dataclass(frozen=True)
class ModelDims:
    """Every dimension needed to rebuild the parameter shapes."""

    input_dim: int
    encoder_hidden: int
    feat_dim: int
    hidden_dim: int
    n_labelled_classes: int
    n_novel_classes: int
    over_factor: int = 3
    num_over_heads: int = 0

    @property
    def n_total_classes(self) -> int:
        return self.n_labelled_classes + self.n_novel_classes


@dataclass(frozen=True)
class ModelConfig:
    """Architecture knobs that do not depend on the dataset."""

    feat_dim: int = 32
    hidden_dim: int = 32
    encoder_hidden: int = 64
    over_factor: int = 3
    num_over_heads: int = 0


@dataclass
class ModelOutput:
    """Per-batch network outputs, one row per input sample.

    ``logits`` is the concatenation of ``logits_labelled`` then
    ``logits_novel`` in that fixed order, and each ``probs*`` field is
    the temperature softmax of the matching logits.
    """

    logits_labelled: Tensor
    logits_novel: Tensor
    logits: Tensor
    probs: Tensor
    probs_labelled: Tensor
    probs_novel: Tensor
    features: Tensor
    over_logits: list[Tensor] = field(default_factory=list)

    def __len__(self) -> int:
        return self.logits.shape[0]


class ModelParams:
    """Parameter tensors for encoder, both heads, and over-heads."""

    def __init__(self, dims: ModelDims,
                 encoder: list[tuple[Tensor, Tensor]],
                 labelled_head: tuple[Tensor, Tensor],
                 novel_head: tuple[Tensor, Tensor, Tensor, Tensor],
                 over_heads: list[tuple[Tensor, Tensor, Tensor, Tensor]]):
        self.dims = dims
        self.encoder = encoder
        self.labelled_head = labelled_head
        self.novel_head = novel_head
        self.over_heads = over_heads

    def tensors(self) -> list[Tensor]:
        return [t for _, t in self.named_tensors()]

    def named_tensors(self) -> list[tuple[str, Tensor]]:
        named: list[tuple[str, Tensor]] = []
        for i, (w, b) in enumerate(self.encoder):
            named.append((f"encoder.{i}.weight", w))
            named.append((f"encoder.{i}.bias", b))
        named.append(("head_labelled.weight", self.labelled_head[0]))
        named.append(("head_labelled.bias", self.labelled_head[1]))
        w1, b1, w2, b2 = self.novel_head
        named.append(("head_novel.hidden.weight", w1))
        named.append(("head_novel.hidden.bias", b1))
        named.append(("head_novel.out.weight", w2))
        named.append(("head_novel.out.bias", b2))
        for i, (ow1, ob1, ow2, ob2) in enumerate(self.over_heads):
            named.append((f"over.{i}.hidden.weight", ow1))
            named.append((f"over.{i}.hidden.bias", ob1))
            named.append((f"over.{i}.out.weight", ow2))
            named.append((f"over.{i}.out.bias", ob2))
        return named

    def copy(self) -> "ModelParams":
        """Deep copy with fresh gradient-requiring tensors."""

        def dup(t: Tensor) -> Tensor:
            return Tensor(t.data.copy(), requires_grad=True)

        return ModelParams(
            self.dims,
            [(dup(w), dup(b)) for w, b in self.encoder],
            (dup(self.labelled_head[0]), dup(self.labelled_head[1])),
            tuple(dup(t) for t in self.novel_head),
            [tuple(dup(t) for t in head) for head in self.over_heads],
        )


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> Tensor:
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-s, s, size=(fan_in, fan_out)), requires_grad=True)


def _zero_bias(n: int) -> Tensor:
    return Tensor(np.zeros(n), requires_grad=True)


def init_model(input_dim: int, n_labelled_classes: int, n_novel_classes: int,
               feat_dim: int = 32, hidden_dim: int = 32,
               encoder_hidden: int = 64, over_factor: int = 3,
               num_over_heads: int = 0, seed: int = 0) -> ModelParams:
    """Glorot-uniform weights, zero biases, deterministic per seed.

    Draw order is fixed (encoder layers, labelled head, novel head,
    over-heads) so a given seed always produces bit-identical values.
    """
    dims = ModelDims(input_dim=int(input_dim), encoder_hidden=int(encoder_hidden),
                     feat_dim=int(feat_dim), hidden_dim=int(hidden_dim),
                     n_labelled_classes=int(n_labelled_classes),
                     n_novel_classes=int(n_novel_classes),
                     over_factor=int(over_factor),
                     num_over_heads=int(num_over_heads))
    if dims.n_labelled_classes < 2:
        raise ConfigurationError(
            f"need at least 2 labelled classes, got {dims.n_labelled_classes}")
    if dims.n_novel_classes < 2:
        raise ConfigurationError(
            f"need at least 2 novel classes, got {dims.n_novel_classes}")
    for name in ("input_dim", "encoder_hidden", "feat_dim", "hidden_dim"):
        if getattr(dims, name) < 1:
            raise ConfigurationError(f"{name} must be positive")
    if dims.num_over_heads < 0:
        raise ConfigurationError("num_over_heads must be nonnegative")
    if dims.num_over_heads > 0 and dims.over_factor < 2:
        raise ConfigurationError("over_factor must be at least 2 when over-heads are enabled")

    rng = np.random.default_rng(seed)
    encoder = []
    widths = [dims.input_dim, dims.encoder_hidden, dims.feat_dim]
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        encoder.append((_glorot(rng, fan_in, fan_out), _zero_bias(fan_out)))
    labelled = (_glorot(rng, dims.feat_dim, dims.n_labelled_classes),
                _zero_bias(dims.n_labelled_classes))
    novel = (_glorot(rng, dims.feat_dim, dims.hidden_dim),
             _zero_bias(dims.hidden_dim),
             _glorot(rng, dims.hidden_dim, dims.n_novel_classes),
             _zero_bias(dims.n_novel_classes))
    over_heads = []
    n_over = dims.n_novel_classes * dims.over_factor
    for _ in range(dims.num_over_heads):
        over_heads.append((_glorot(rng, dims.feat_dim, dims.hidden_dim),
                           _zero_bias(dims.hidden_dim),
                           _glorot(rng, dims.hidden_dim, n_over),
                           _zero_bias(n_over)))
    return ModelParams(dims, encoder, labelled, novel, over_heads)


def _check_batch(X, input_dim: int) -> np.ndarray:
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeMismatchError(f"expected a 2-D batch, got shape {arr.shape}")
    if arr.shape[1] != input_dim:
        raise ShapeMismatchError(
            f"batch has {arr.shape[1]} features, model expects {input_dim}")
    return arr


def forward_batch(params: ModelParams, X, tau: float) -> ModelOutput:
    """Row-wise forward pass; differentiable when run under a tape.

    An empty batch (zero rows of the right width) flows through and
    yields empty outputs rather than raising.
    """
    arr = _check_batch(X, params.dims.input_dim)
    h = Tensor(arr)
    for w, b in params.encoder:
        h = relu(matmul(h, w) + b)
    features = h
    wl, bl = params.labelled_head
    logits_labelled = matmul(features, wl) + bl
    w1, b1, w2, b2 = params.novel_head
    hidden = relu(matmul(features, w1) + b1)
    logits_novel = matmul(hidden, w2) + b2
    logits = concat([logits_labelled, logits_novel], axis=1)
    over_logits = []
    for ow1, ob1, ow2, ob2 in params.over_heads:
        over_hidden = relu(matmul(features, ow1) + ob1)
        over_logits.append(matmul(over_hidden, ow2) + ob2)
    return ModelOutput(
        logits_labelled=logits_labelled,
        logits_novel=logits_novel,
        logits=logits,
        probs=softmax(logits, tau=tau, axis=1),
        probs_labelled=softmax(logits_labelled, tau=tau, axis=1),
        probs_novel=softmax(logits_novel, tau=tau, axis=1),
        features=features,
        over_logits=over_logits,
    )


def forward(params: ModelParams, x, tau: float) -> ModelOutput:
    """Forward a single feature vector; output fields have one row."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeMismatchError(f"expected a single feature vector, got shape {arr.shape}")
    return forward_batch(params, arr[None, :], tau)


def encode_batch(params: ModelParams, X) -> np.ndarray:
    """Encoder features as a plain array; never recorded on a tape."""
    arr = _check_batch(X, params.dims.input_dim)
    h = arr
    for w, b in params.encoder:
        h = np.maximum(h @ w.data + b.data, 0.0)
    return h


def save_checkpoint(path, params: ModelParams, tau: float) -> None:
    """Write a flat binary checkpoint: magic, manifest line, raw tensors.

    The manifest is canonical JSON (sorted keys) listing model
    dimensions, the temperature, and each tensor's name and shape in
    storage order.  Tensor data follows as little-endian float64, so
    identical parameters always produce byte-identical files.
    """
    named = params.named_tensors()
    manifest = {
        "dims": asdict(params.dims),
        "tau": float(tau),
        "tensors": [{"name": n, "shape": list(t.shape)} for n, t in named],
    }
    body = json.dumps(manifest, sort_keys=True, separators=(",", ":"))
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(body.encode("utf-8"))
        fh.write(b"\n")
        for _, t in named:
            fh.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[ModelParams, float]:
    """Read a checkpoint back; exact inverse of :func:`save_checkpoint`."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw.startswith(CHECKPOINT_MAGIC):
        raise CheckpointMismatchError(f"{path}: not a model checkpoint")
    cut = raw.index(b"\n", len(CHECKPOINT_MAGIC))
    try:
        manifest = json.loads(raw[len(CHECKPOINT_MAGIC):cut].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointMismatchError(f"{path}: unreadable manifest") from exc
    dims = ModelDims(**manifest["dims"])
    params = init_model(
        input_dim=dims.input_dim,
        n_labelled_classes=dims.n_labelled_classes,
        n_novel_classes=dims.n_novel_classes,
        feat_dim=dims.feat_dim,
        hidden_dim=dims.hidden_dim,
        encoder_hidden=dims.encoder_hidden,
        over_factor=dims.over_factor,
        num_over_heads=dims.num_over_heads,
        seed=0,
    )
    named = params.named_tensors()
    listed = manifest["tensors"]
    if [n for n, _ in named] != [e["name"] for e in listed]:
        raise CheckpointMismatchError(f"{path}: tensor manifest does not match model layout")
    blob = raw[cut + 1:]
    offset = 0
    for (name, tensor), entry in zip(named, listed):
        shape = tuple(entry["shape"])
        if shape != tensor.shape:
            raise CheckpointMismatchError(
                f"{path}: tensor {name} has shape {shape}, expected {tensor.shape}")
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = count * 8
        if offset + nbytes > len(blob):
            raise CheckpointMismatchError(f"{path}: truncated tensor data")
        tensor.data = np.frombuffer(
            blob, dtype="<f8", count=count, offset=offset).reshape(shape).copy()
        offset += nbytes
    if offset != len(blob):
        raise CheckpointMismatchError(f"{path}: trailing bytes after tensor data")
    return params, float(manifest["tau"])
