"""Clustering metrics and the two evaluation protocols.

The assignment solver is written out in full (potential-based shortest
augmenting paths) rather than delegated, since permutation-maximized
accuracy is the headline metric and needs to be exactly optimal, not
greedy.  NMI uses the geometric-mean normalization and ARI the
permutation-model adjustment, both from contingency counts.

Protocols: task-aware scores the novel head alone on unlabelled
training samples (task identity known); task-agnostic scores argmax
over the concatenated distribution on held-out test samples, reported
for the labelled subset, the unlabelled subset, and their
sample-weighted combination.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audit import evaluation_access
from .exceptions import ShapeMismatchError, UsageError
from .model import ModelParams, forward_batch

TASK_AWARE = "task-aware"
TASK_AGNOSTIC = "task-agnostic"


@dataclass
class AssignmentResult:
    permutation: np.ndarray
    total_cost: float


@dataclass
class MetricsReport:
    protocol: str
    subset: str
    acc: float
    nmi: float
    ari: float
    n_samples: int
    permutation: list | None

    def to_json_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "subset": self.subset,
            "acc": self.acc,
            "nmi": self.nmi,
            "ari": self.ari,
            "n_samples": self.n_samples,
            "permutation": self.permutation,
        }


def hungarian(cost) -> AssignmentResult:
    """Minimum-cost perfect matching on a square cost matrix.

    Shortest-augmenting-path formulation with dual potentials, one
    augmentation per row; exact for any finite real costs.
    """
    a = np.asarray(cost, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeMismatchError(f"cost matrix must be square, got shape {a.shape}")
    n = a.shape[0]
    if n == 0:
        raise UsageError("cost matrix is empty")
    if not np.isfinite(a).all():
        raise UsageError("cost matrix must be finite")

    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    match = np.zeros(n + 1, dtype=np.int64)   # match[j] = row assigned to column j
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        match[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = match[j0]
            delta = np.inf
            j1 = 0
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = a[i0 - 1, j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[match[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if match[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            match[j0] = match[j1]
            j0 = j1

    permutation = np.zeros(n, dtype=np.int64)
    for j in range(1, n + 1):
        permutation[match[j] - 1] = j - 1
    total = float(a[np.arange(n), permutation].sum())
    return AssignmentResult(permutation=permutation, total_cost=total)


def _check_label_pair(y, y_hat):
    y = np.asarray(y)
    y_hat = np.asarray(y_hat)
    if y.ndim != 1 or y_hat.ndim != 1:
        raise ShapeMismatchError("labels must be 1-D sequences")
    if y.shape != y_hat.shape:
        raise ShapeMismatchError(
            f"label lengths differ: {y.shape[0]} vs {y_hat.shape[0]}")
    if y.shape[0] == 0:
        raise UsageError("labels are empty")
    return y, y_hat


def _contingency(y, y_hat):
    """Count matrix with one row per true class, one column per cluster."""
    true_vals, t_idx = np.unique(y, return_inverse=True)
    pred_vals, p_idx = np.unique(y_hat, return_inverse=True)
    counts = np.zeros((true_vals.size, pred_vals.size))
    np.add.at(counts, (t_idx, p_idx), 1.0)
    return true_vals, pred_vals, counts


def accuracy_with_assignment(y, y_hat) -> tuple[float, list]:
    """Permutation-maximized accuracy plus the best cluster-to-class map.

    The confusion matrix is padded square over the union of label
    sets, negated, and solved for a minimum-cost matching, so the
    score is the best achievable relabeling of the clusters.  The
    returned map lists (cluster label, matched class label) pairs,
    with None for clusters matched to padding.
    """
    y, y_hat = _check_label_pair(y, y_hat)
    true_vals, pred_vals, counts = _contingency(y, y_hat)
    n = max(true_vals.size, pred_vals.size)
    w = np.zeros((n, n))
    w[:counts.shape[1], :counts.shape[0]] = counts.T   # rows: clusters, cols: classes
    result = hungarian(-w)
    acc = float(w[np.arange(n), result.permutation].sum() / y.shape[0])
    mapping = []
    for row in range(pred_vals.size):
        col = int(result.permutation[row])
        matched = int(true_vals[col]) if col < true_vals.size else None
        mapping.append((int(pred_vals[row]), matched))
    return acc, mapping


def clustering_accuracy(y, y_hat) -> float:
    """Best-permutation match rate between clusters and classes."""
    acc, _ = accuracy_with_assignment(y, y_hat)
    return acc


def nmi(y, y_hat) -> float:
    """Mutual information over the geometric mean of entropies.

    Both partitions single-cluster counts as full agreement (1);
    exactly one degenerate partition shares no information (0).
    """
    y, y_hat = _check_label_pair(y, y_hat)
    _, _, counts = _contingency(y, y_hat)
    total = counts.sum()
    row = counts.sum(axis=1)
    col = counts.sum(axis=0)

    def entropy(freqs):
        p = freqs[freqs > 0] / total
        return float(-(p * np.log(p)).sum())

    h_true = entropy(row)
    h_pred = entropy(col)
    if h_true == 0.0 and h_pred == 0.0:
        return 1.0
    if h_true == 0.0 or h_pred == 0.0:
        return 0.0
    nz = counts > 0
    joint = counts[nz] / total
    outer = np.outer(row, col)[nz] / (total * total)
    info = float((joint * np.log(joint / outer)).sum())
    return info / float(np.sqrt(h_true * h_pred))


def ari(y, y_hat) -> float:
    """Rand index adjusted for chance under the permutation model."""
    y, y_hat = _check_label_pair(y, y_hat)
    _, _, counts = _contingency(y, y_hat)
    n = counts.sum()

    def comb2(x):
        return x * (x - 1.0) / 2.0

    total_pairs = comb2(n)
    if total_pairs == 0.0:
        return 1.0
    sum_cells = comb2(counts).sum()
    sum_rows = comb2(counts.sum(axis=1)).sum()
    sum_cols = comb2(counts.sum(axis=0)).sum()
    # single final division over integer-valued terms keeps simple
    # rationals exact (counts up to ~10^4 stay well inside float64's
    # integer range)
    numerator = 2.0 * (total_pairs * sum_cells - sum_rows * sum_cols)
    denominator = total_pairs * (sum_rows + sum_cols) - 2.0 * sum_rows * sum_cols
    if denominator == 0.0:
        return 1.0
    return float(numerator / denominator)


def evaluate_task_aware(params: ModelParams, split, tau: float) -> MetricsReport:
    """Score the novel head alone on the unlabelled training pool."""
    samples = split.unlabelled_train
    if len(samples.features) == 0:
        raise UsageError("task-aware evaluation needs unlabelled training samples")
    out = forward_batch(params, samples.features, tau)
    pred = np.argmax(out.probs_novel.data, axis=1)
    with evaluation_access():
        truth = samples.hidden.read()
    acc, mapping = accuracy_with_assignment(truth, pred)
    return MetricsReport(
        protocol=TASK_AWARE,
        subset="unlabelled",
        acc=acc,
        nmi=nmi(truth, pred),
        ari=ari(truth, pred),
        n_samples=int(len(samples.features)),
        permutation=[list(pair) for pair in mapping],
    )


def evaluate_task_agnostic(params: ModelParams, split, tau: float) -> list[MetricsReport]:
    """Score concatenated-head argmax on held-out test samples.

    Labelled accuracy is plain classification accuracy on class
    indices; unlabelled accuracy is permutation-maximized over the
    whole concatenated index space; the "all" row weights the two
    subsets by sample count.
    """
    lab = split.labelled_test
    unlab = split.unlabelled_test
    n_l = len(lab.features)
    n_u = len(unlab.features)
    if n_l == 0 or n_u == 0:
        raise UsageError("task-agnostic evaluation needs both test subsets")

    out_l = forward_batch(params, lab.features, tau)
    pred_l = np.argmax(out_l.probs.data, axis=1)
    y_l = np.asarray(lab.labels)
    acc_l = float(np.mean(pred_l == y_l))
    report_l = MetricsReport(
        protocol=TASK_AGNOSTIC, subset="labelled",
        acc=acc_l, nmi=nmi(y_l, pred_l), ari=ari(y_l, pred_l),
        n_samples=n_l, permutation=None,
    )

    out_u = forward_batch(params, unlab.features, tau)
    pred_u = np.argmax(out_u.probs.data, axis=1)
    with evaluation_access():
        y_u = unlab.hidden.read()
    acc_u, mapping = accuracy_with_assignment(y_u, pred_u)
    report_u = MetricsReport(
        protocol=TASK_AGNOSTIC, subset="unlabelled",
        acc=acc_u, nmi=nmi(y_u, pred_u), ari=ari(y_u, pred_u),
        n_samples=n_u, permutation=[list(pair) for pair in mapping],
    )

    weight = float(n_l + n_u)
    report_all = MetricsReport(
        protocol=TASK_AGNOSTIC, subset="all",
        acc=(n_l * report_l.acc + n_u * report_u.acc) / weight,
        nmi=(n_l * report_l.nmi + n_u * report_u.nmi) / weight,
        ari=(n_l * report_l.ari + n_u * report_u.ari) / weight,
        n_samples=n_l + n_u, permutation=None,
    )
    return [report_l, report_u, report_all]
