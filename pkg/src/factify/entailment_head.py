"""One-hidden-layer MLP over concatenated claim/document embeddings.

The head turns embedding pairs into category probabilities that the fusion
layer consumes as features. Forward pass is relu -> linear -> softmax;
training minimizes mean cross-entropy with Adam. Everything is plain numpy so
the analytic gradients stay inspectable (and checkable against finite
differences).
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

import numpy as np


class ShapeMismatch(Exception):
    """Input or parameter shapes disagree with the configuration."""


class DegenerateDataWarning(UserWarning):
    """Fewer categories present than output_dim; training proceeds anyway."""


class HeadVariant(Enum):
    """Which embeddings feed the head, and how many categories it predicts.

    TEXT_PAIR_3 is the production choice; ALL_CONCAT_5 is a standalone
    five-way classifier evaluated directly rather than fused.
    """

    TEXT_PAIR_3 = "TextPair3"
    IMAGE_PAIR_3 = "ImagePair3"
    TEXT_AND_IMAGE_PAIR_3 = "TextAndImagePair3"
    ALL_CONCAT_5 = "AllConcat5"


def variant_output_dim(variant: HeadVariant) -> int:
    return 5 if variant is HeadVariant.ALL_CONCAT_5 else 3


@dataclass(frozen=True)
class MlpConfig:
    input_dim: int
    hidden_dim: int = 100
    output_dim: int = 3
    learning_rate: float = 1e-3
    max_epochs: int = 200
    batch_size: int = 32
    seed: int = 42
    init_scale: float = 1.0  # shrink toward 0 for near-uniform initial softmax
    patience: int = 10  # early-stop patience on the validation loss, if any

    def __post_init__(self) -> None:
        if self.output_dim not in (3, 5):
            raise ValueError(f"output_dim must be 3 or 5, got {self.output_dim}")
        for name in ("input_dim", "hidden_dim", "max_epochs", "batch_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class MlpParams:
    w1: np.ndarray  # (input_dim, hidden_dim)
    b1: np.ndarray  # (hidden_dim,)
    w2: np.ndarray  # (hidden_dim, output_dim)
    b2: np.ndarray  # (output_dim,)

    def copy(self) -> "MlpParams":
        return MlpParams(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy())

    def blocks(self) -> list[tuple[str, np.ndarray]]:
        return [("w1", self.w1), ("b1", self.b1), ("w2", self.w2), ("b2", self.b2)]


def init_params(config: MlpConfig) -> MlpParams:
    """Seeded uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) init, layer by layer."""
    rng = np.random.default_rng(config.seed)
    bound1 = np.sqrt(1.0 / config.input_dim) * config.init_scale
    bound2 = np.sqrt(1.0 / config.hidden_dim) * config.init_scale
    return MlpParams(
        w1=rng.uniform(-bound1, bound1, size=(config.input_dim, config.hidden_dim)),
        b1=rng.uniform(-bound1, bound1, size=config.hidden_dim),
        w2=rng.uniform(-bound2, bound2, size=(config.hidden_dim, config.output_dim)),
        b2=rng.uniform(-bound2, bound2, size=config.output_dim),
    )


def _check_shapes(config: MlpConfig, params: MlpParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != config.input_dim:
        raise ShapeMismatch(f"input dim {x.shape[-1]} != configured {config.input_dim}")
    if params.w1.shape != (config.input_dim, config.hidden_dim) or params.w2.shape != (
        config.hidden_dim,
        config.output_dim,
    ):
        raise ShapeMismatch("parameter shapes inconsistent with config")
    return x


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def mlp_forward(config: MlpConfig, params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Probabilities for one input vector (1-D) or a batch (2-D)."""
    x = _check_shapes(config, params, x)
    hidden = np.maximum(0.0, x @ params.w1 + params.b1)
    logits = hidden @ params.w2 + params.b2
    return softmax(logits)


def cross_entropy_loss(
    config: MlpConfig, params: MlpParams, x: np.ndarray, y: np.ndarray
) -> float:
    """Mean cross-entropy of the batch, computed in log space for stability."""
    x = _check_shapes(config, params, np.atleast_2d(x))
    hidden = np.maximum(0.0, x @ params.w1 + params.b1)
    logits = hidden @ params.w2 + params.b2
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return float(-log_probs[np.arange(len(x)), y].mean())


def loss_and_grads(
    config: MlpConfig, params: MlpParams, x: np.ndarray, y: np.ndarray
) -> tuple[float, MlpParams]:
    """Batch loss and analytic gradients w.r.t. every parameter block."""
    x = _check_shapes(config, params, np.atleast_2d(x))
    y = np.asarray(y, dtype=np.int64)
    n = len(x)
    pre = x @ params.w1 + params.b1
    hidden = np.maximum(0.0, pre)
    logits = hidden @ params.w2 + params.b2
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = float(-log_probs[np.arange(n), y].mean())

    dlogits = np.exp(log_probs)
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    gw2 = hidden.T @ dlogits
    gb2 = dlogits.sum(axis=0)
    dhidden = dlogits @ params.w2.T
    dhidden[pre <= 0.0] = 0.0
    gw1 = x.T @ dhidden
    gb1 = dhidden.sum(axis=0)
    return loss, MlpParams(gw1, gb1, gw2, gb2)


@dataclass
class TrainingLog:
    """Per-epoch full-training-set loss; entry 0 is the pre-training loss."""

    epoch_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False


class _Adam:
    def __init__(self, params: MlpParams, lr: float):
        self.lr = lr
        self.beta1, self.beta2, self.eps = 0.9, 0.999, 1e-8
        self.t = 0
        self.m = [np.zeros_like(b) for _, b in params.blocks()]
        self.v = [np.zeros_like(b) for _, b in params.blocks()]

    def step(self, params: MlpParams, grads: MlpParams) -> None:
        self.t += 1
        for i, ((_, p), (_, g)) in enumerate(zip(params.blocks(), grads.blocks())):
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * g * g
            m_hat = self.m[i] / (1 - self.beta1**self.t)
            v_hat = self.v[i] / (1 - self.beta2**self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def train_head(
    config: MlpConfig,
    examples: Sequence[tuple[np.ndarray, int]],
    val_examples: Optional[Sequence[tuple[np.ndarray, int]]] = None,
) -> tuple[MlpParams, TrainingLog]:
    """Train with Adam on mean cross-entropy; deterministic given the seed.

    When val_examples is given, the returned weights are the best-validation
    checkpoint and training stops after `patience` epochs without
    improvement. Targets must be ints in [0, output_dim).
    """
    if not examples:
        raise ValueError("no training examples")
    x = np.stack([np.asarray(v, dtype=np.float64) for v, _ in examples])
    y = np.asarray([t for _, t in examples], dtype=np.int64)
    if y.min() < 0 or y.max() >= config.output_dim:
        raise ValueError("targets out of range for output_dim")
    present = np.unique(y)
    if len(present) < config.output_dim:
        warnings.warn(
            f"only {len(present)} of {config.output_dim} categories present; "
            "absent categories receive no positive gradient",
            DegenerateDataWarning,
            stacklevel=2,
        )

    params = init_params(config)
    optimizer = _Adam(params, config.learning_rate)
    rng = np.random.default_rng(config.seed + 1)
    log = TrainingLog()
    log.epoch_losses.append(cross_entropy_loss(config, params, x, y))

    xv = yv = None
    if val_examples:
        xv = np.stack([np.asarray(v, dtype=np.float64) for v, _ in val_examples])
        yv = np.asarray([t for _, t in val_examples], dtype=np.int64)
        log.val_losses.append(cross_entropy_loss(config, params, xv, yv))

    best_params = params.copy()
    best_val = log.val_losses[0] if val_examples else np.inf
    since_best = 0

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(x))
        for start in range(0, len(x), config.batch_size):
            idx = order[start : start + config.batch_size]
            _, grads = loss_and_grads(config, params, x[idx], y[idx])
            optimizer.step(params, grads)
        log.epoch_losses.append(cross_entropy_loss(config, params, x, y))
        if val_examples:
            val_loss = cross_entropy_loss(config, params, xv, yv)
            log.val_losses.append(val_loss)
            if val_loss < best_val:
                best_val = val_loss
                best_params = params.copy()
                log.best_epoch = epoch
                since_best = 0
            else:
                since_best += 1
                if since_best >= config.patience:
                    log.stopped_early = True
                    break

    if val_examples:
        return best_params, log
    log.best_epoch = len(log.epoch_losses) - 1
    return params, log


def head_features(
    variants: Sequence[tuple[MlpConfig, MlpParams]],
    inputs: Sequence[np.ndarray],
    hard_labels: bool = False,
) -> np.ndarray:
    """Concatenated probability vectors from one or more trained heads.

    inputs[i] feeds heads[i]; with hard_labels each block is the one-hot of
    its argmax instead of the probability simplex.
    """
    if len(variants) != len(inputs):
        raise ShapeMismatch(f"{len(variants)} heads but {len(inputs)} inputs")
    parts = []
    for (config, params), x in zip(variants, inputs):
        probs = mlp_forward(config, params, np.asarray(x, dtype=np.float64))
        if hard_labels:
            one_hot = np.zeros_like(probs)
            one_hot[int(np.argmax(probs))] = 1.0
            probs = one_hot
        parts.append(probs)
    return np.concatenate(parts)


# ---------------------------------------------------------------------------
# persistence: text header, then shape-prefixed little-endian f32 blocks
# (w1, b1, w2, b2 in fixed order)
# ---------------------------------------------------------------------------


def save_head(path: str | Path, config: MlpConfig, params: MlpParams) -> None:
    header = "".join(
        f"{key}={getattr(config, key)}\n"
        for key in (
            "input_dim",
            "hidden_dim",
            "output_dim",
            "learning_rate",
            "max_epochs",
            "batch_size",
            "seed",
            "init_scale",
            "patience",
        )
    )
    chunks = [header.encode("utf-8"), b"\n"]
    for _, block in params.blocks():
        arr = np.ascontiguousarray(block, dtype="<f4")
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_head(path: str | Path) -> tuple[MlpConfig, MlpParams]:
    blob = Path(path).read_bytes()
    sep = blob.index(b"\n\n")
    fields: dict[str, str] = {}
    for line in blob[:sep].decode("utf-8").splitlines():
        key, _, value = line.partition("=")
        fields[key] = value
    config = MlpConfig(
        input_dim=int(fields["input_dim"]),
        hidden_dim=int(fields["hidden_dim"]),
        output_dim=int(fields["output_dim"]),
        learning_rate=float(fields["learning_rate"]),
        max_epochs=int(fields["max_epochs"]),
        batch_size=int(fields["batch_size"]),
        seed=int(fields["seed"]),
        init_scale=float(fields["init_scale"]),
        patience=int(fields["patience"]),
    )
    offset = sep + 2
    blocks = []
    for _ in range(4):
        (ndim,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        shape = struct.unpack_from(f"<{ndim}I", blob, offset)
        offset += 4 * ndim
        count = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
        offset += 4 * count
        blocks.append(arr.reshape(shape).astype(np.float64))
    return config, MlpParams(*blocks)
