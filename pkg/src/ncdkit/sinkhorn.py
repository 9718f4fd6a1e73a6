"""Balanced soft cluster assignment via Sinkhorn-Knopp iteration.

Turns a batch of novel-head logits into soft targets whose rows are
valid distributions and whose columns converge to equal mass, so every
cluster receives its fair share of the batch.  Targets feed the
cross-entropy as constants: nothing here touches the tape.

The swapped-view scheme trains each view against the assignment
derived from the other view, which stops the trivial solution where
both views collapse onto the same constant prediction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigurationError, ShapeMismatchError, UsageError

# exp of anything below this underflows to zero; clamping keeps every
# entry of the kernel strictly positive so no normalization divides by 0
_MIN_EXPONENT = -700.0


@dataclass(frozen=True)
class SinkhornConfig:
    epsilon: float = 0.05
    n_iters: int = 3

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ConfigurationError(f"epsilon must be positive, got {self.epsilon}")
        if self.n_iters < 1:
            raise ConfigurationError(f"n_iters must be at least 1, got {self.n_iters}")


def sinkhorn_knopp(logits, config: SinkhornConfig = SinkhornConfig()) -> np.ndarray:
    """Doubly balanced assignment matrix from a logit batch.

    Starts from exp(logits / epsilon) (max-shifted; the shift cancels
    in every normalization) and alternates column scaling toward equal
    cluster mass with row scaling toward unit sample mass, rows last.
    Returns an (M, K) array: rows sum to 1, columns approach M/K.
    """
    arr = np.asarray(logits, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeMismatchError(f"expected an (M, K) logit matrix, got shape {arr.shape}")
    m, k = arr.shape
    if m < 1 or k < 1:
        raise UsageError("assignment needs at least one row and one column")
    if not np.isfinite(arr).all():
        raise UsageError("logits must be finite")

    z = (arr - arr.max()) / config.epsilon
    q = np.exp(np.maximum(z, _MIN_EXPONENT))
    q /= q.sum()
    for _ in range(config.n_iters):
        q /= q.sum(axis=0, keepdims=True)
        q /= k
        q /= q.sum(axis=1, keepdims=True)
        q /= m
    return q * m


def swapped_pseudo_labels(logits_view1, logits_view2,
                          config: SinkhornConfig = SinkhornConfig()):
    """Targets for each view from the other view's assignment."""
    a = np.asarray(logits_view1, dtype=np.float64)
    b = np.asarray(logits_view2, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatchError(
            f"view logit shapes differ: {a.shape} vs {b.shape}")
    return sinkhorn_knopp(b, config), sinkhorn_knopp(a, config)


def zero_pad_target(t, side: str, n_labelled: int, n_novel: int) -> np.ndarray:
    """Embed a per-head target into the concatenated class space.

    Labelled targets keep their mass on the first block, unlabelled
    targets on the last block; the other block is zero.
    """
    arr = np.asarray(t, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeMismatchError(f"target must be a vector, got shape {arr.shape}")
    return zero_pad_targets(arr[None, :], side, n_labelled, n_novel)[0]


def zero_pad_targets(T, side: str, n_labelled: int, n_novel: int) -> np.ndarray:
    """Row-wise :func:`zero_pad_target` for an (n, width) target batch."""
    arr = np.asarray(T, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeMismatchError(f"targets must be 2-D, got shape {arr.shape}")
    if side == "labelled":
        expected = n_labelled
    elif side == "unlabelled":
        expected = n_novel
    else:
        raise ConfigurationError(f"side must be 'labelled' or 'unlabelled', got {side!r}")
    if arr.shape[1] != expected:
        raise ShapeMismatchError(
            f"{side} target width {arr.shape[1]} does not match {expected}")
    out = np.zeros((arr.shape[0], n_labelled + n_novel))
    if side == "labelled":
        out[:, :n_labelled] = arr
    else:
        out[:, n_labelled:] = arr
    return out


def one_hot(labels, n_classes: int) -> np.ndarray:
    """Rows of standard basis vectors for integer class labels."""
    arr = np.asarray(labels)
    if arr.ndim != 1:
        raise ShapeMismatchError(f"labels must be a vector, got shape {arr.shape}")
    if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
        raise UsageError(
            f"labels must lie in [0, {n_classes}), got range "
            f"[{arr.min()}, {arr.max()}]")
    out = np.zeros((arr.shape[0], n_classes))
    out[np.arange(arr.shape[0]), arr.astype(int)] = 1.0
    return out
