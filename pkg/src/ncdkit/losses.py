"""Loss terms for joint training on labelled and unlabelled samples.

Distribution lists are realized as row matrices: a batch of K-class
probability vectors is an (n, K) array whose rows each sum to 1.
Every term clamps probabilities to a small floor and renormalizes
before taking logs, which both avoids log(0) and caps the divergence
terms; the separation term is maximized in the objective, so it must
not be able to diverge.

Sign convention: `total_objective` returns ce - alpha * separation +
beta * consistency, so gradient descent simultaneously minimizes
cross-entropy, maximizes the labelled/unlabelled separation, and
minimizes the view consistency penalty.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    Tensor,
    as_tensor,
    log,
    maximum,
    tensor_mean,
    tensor_sum,
    transpose,
)
from .exceptions import ConfigurationError, ShapeMismatchError, UsageError

PROB_FLOOR = 1e-8


def clamp_probs(p, floor: float = PROB_FLOOR) -> Tensor:
    """Clamp entries to at least ``floor`` and renormalize rows."""
    t = as_tensor(p)
    q = maximum(t, floor)
    return q / q.sum(axis=-1, keepdims=True)


def _as_matrix(x, name: str) -> Tensor:
    t = as_tensor(x)
    if t.ndim != 2:
        raise ShapeMismatchError(f"{name} must be 2-D (rows are distributions), "
                                 f"got shape {t.shape}")
    return t


def _rowwise_kl(pc: Tensor, qc: Tensor) -> Tensor:
    """KL of each row of ``pc`` against the matching row of ``qc``."""
    return ((pc * (log(pc) - log(qc))).sum(axis=-1))


def _pairwise_kl(pc: Tensor, qc: Tensor) -> Tensor:
    """Matrix of KL(row_i of pc, row_j of qc) for all pairs.

    Expands to sum_k p_ik log p_ik - sum_k p_ik log q_jk, which is a
    row reduction plus one matrix product.
    """
    self_term = (pc * log(pc)).sum(axis=1, keepdims=True)
    cross_term = pc @ transpose(log(qc))
    return self_term - cross_term


def kl_div(p, q, floor: float = PROB_FLOOR) -> Tensor:
    """KL divergence between two probability vectors, natural log."""
    pt, qt = as_tensor(p), as_tensor(q)
    if pt.ndim != 1 or qt.ndim != 1 or pt.shape != qt.shape:
        raise ShapeMismatchError(
            f"kl_div expects two equal-length vectors, got {pt.shape} and {qt.shape}")
    pc = clamp_probs(pt, floor)
    qc = clamp_probs(qt, floor)
    return tensor_sum(pc * (log(pc) - log(qc)))


def skl_pair(p, q, floor: float = PROB_FLOOR) -> Tensor:
    """Symmetric KL: the mean of both divergence directions."""
    return 0.5 * (kl_div(p, q, floor) + kl_div(q, p, floor))


def inter_class_loss(P_labelled, P_unlabelled, floor: float = PROB_FLOOR) -> Tensor:
    """Mean symmetric KL over all labelled x unlabelled sample pairs.

    Both inputs hold full-length (concatenated-head) distributions as
    rows.  Either side being empty makes the term 0, so one-sided
    partial batches never fault.
    """
    P_l = _as_matrix(P_labelled, "P_labelled")
    P_u = _as_matrix(P_unlabelled, "P_unlabelled")
    n, m = P_l.shape[0], P_u.shape[0]
    if n == 0 or m == 0:
        return Tensor(0.0)
    if P_l.shape[1] != P_u.shape[1]:
        raise ShapeMismatchError(
            f"distribution widths differ: {P_l.shape[1]} vs {P_u.shape[1]}")
    pc = clamp_probs(P_l, floor)
    qc = clamp_probs(P_u, floor)
    sym = 0.5 * (_pairwise_kl(pc, qc) + transpose(_pairwise_kl(qc, pc)))
    return tensor_sum(sym) / float(n * m)


def intra_class_loss(P_lab, P_lab_view, P_nov, P_nov_view,
                     floor: float = PROB_FLOOR) -> Tensor:
    """View-consistency penalty, one term per head.

    Labelled rows are compared on the labelled head's distributions
    and unlabelled rows on the novel head's, each side averaged over
    its own sample count.  An empty side contributes 0.
    """
    lab = _as_matrix(P_lab, "P_lab")
    lab_v = _as_matrix(P_lab_view, "P_lab_view")
    nov = _as_matrix(P_nov, "P_nov")
    nov_v = _as_matrix(P_nov_view, "P_nov_view")
    if lab.shape != lab_v.shape:
        raise ShapeMismatchError(
            f"labelled view rows misaligned: {lab.shape} vs {lab_v.shape}")
    if nov.shape != nov_v.shape:
        raise ShapeMismatchError(
            f"unlabelled view rows misaligned: {nov.shape} vs {nov_v.shape}")
    total = Tensor(0.0)
    if lab.shape[0] > 0:
        pc, qc = clamp_probs(lab, floor), clamp_probs(lab_v, floor)
        total = total + tensor_mean(
            0.5 * (_rowwise_kl(pc, qc) + _rowwise_kl(qc, pc)))
    if nov.shape[0] > 0:
        pc, qc = clamp_probs(nov, floor), clamp_probs(nov_v, floor)
        total = total + tensor_mean(
            0.5 * (_rowwise_kl(pc, qc) + _rowwise_kl(qc, pc)))
    return total


def cross_entropy_padded(P, Y, floor: float = PROB_FLOOR) -> Tensor:
    """Cross-entropy of predictions against zero-padded targets.

    ``Y`` is treated as a constant: no gradient flows into targets.
    The average runs over all rows, labelled and unlabelled together.
    """
    pt = _as_matrix(P, "P")
    y_arr = np.asarray(Y.data if isinstance(Y, Tensor) else Y, dtype=np.float64)
    if y_arr.shape != pt.shape:
        raise ShapeMismatchError(
            f"targets shape {y_arr.shape} does not match predictions {pt.shape}")
    if pt.shape[0] == 0:
        return Tensor(0.0)
    sums = y_arr.sum(axis=1)
    if not np.allclose(sums, 1.0, atol=1e-6):
        raise UsageError("each target row must sum to 1")
    pc = clamp_probs(pt, floor)
    return -(tensor_sum(Tensor(y_arr) * log(pc)) / float(pt.shape[0]))


def mse_consistency(P, P_hat) -> Tensor:
    """Mean squared difference between two aligned distribution lists.

    Mean over samples and coordinates; the drop-in baseline for the
    symmetric-KL consistency term.
    """
    pt = _as_matrix(P, "P")
    qt = _as_matrix(P_hat, "P_hat")
    if pt.shape != qt.shape:
        raise ShapeMismatchError(
            f"mse_consistency shapes differ: {pt.shape} vs {qt.shape}")
    if pt.shape[0] == 0:
        return Tensor(0.0)
    diff = pt - qt
    return tensor_mean(diff * diff)


def total_objective(ce, inter, intra, alpha: float, beta: float):
    """Combine the three terms: ce - alpha * inter + beta * intra.

    Accepts floats or tensors; with tensor inputs the result stays on
    the tape.
    """
    if alpha < 0 or beta < 0:
        raise ConfigurationError(
            f"loss weights must be nonnegative, got alpha={alpha}, beta={beta}")
    return ce - alpha * inter + beta * intra


@dataclass
class LossBreakdown:
    """Scalar summary of one step or one epoch of the objective."""

    ce: float
    inter: float
    intra: float
    total: float
    alpha: float
    beta: float
    mse: float | None = None
