"""Two-phase training: supervised pretraining, then joint discovery.

Pretraining fits the network to the labelled pool with padded
cross-entropy alone.  Discovery then runs mixed mini-batches: every
sample and its augmented views go through the network, labelled rows
keep their one-hot targets, unlabelled rows get balanced-assignment
pseudo-labels swapped between views, and the objective combines that
cross-entropy with the inter-class separation reward and the
intra-class view-consistency penalty.

A loss term whose switch is off (or whose weight is zero) is skipped
outright rather than multiplied by zero, so a run with everything
disabled takes exactly the cross-entropy-only code path, bit for bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .autodiff import SGD, Tape, Tensor, backward, concat, softmax
from .data import AugmentConfig, DatasetSplit, MiniBatch, make_batches
from .exceptions import ConfigurationError, UsageError
from .losses import (
    LossBreakdown,
    cross_entropy_padded,
    inter_class_loss,
    intra_class_loss,
    mse_consistency,
)
from .metrics import evaluate_task_aware
from .model import ModelParams, forward_batch, init_model
from .sinkhorn import SinkhornConfig, one_hot, sinkhorn_knopp, zero_pad_targets

_PHASE_PRETRAIN = 0
_PHASE_DISCOVER = 1

INTRA_MODES = ("skld", "mse", "off")


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for both training phases.

    ``intra_mode`` picks the view-consistency penalty: "skld" for the
    symmetric divergence, "mse" for the squared-distance variant,
    "off" to drop the term.  ``snapshot_every`` > 0 stores a
    task-aware evaluation report every that many discovery epochs.
    """

    alpha: float = 0.05
    beta: float = 0.01
    tau: float = 0.1
    lr: float = 0.01
    momentum: float = 0.9
    pretrain_epochs: int = 100
    discover_epochs: int = 200
    batch_size: int = 128
    intra_mode: str = "skld"
    inter_enabled: bool = True
    sinkhorn: SinkhornConfig = field(default_factory=SinkhornConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    seed: int = 0
    snapshot_every: int = 0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ConfigurationError("loss weights must be nonnegative")
        if self.tau <= 0:
            raise ConfigurationError(f"tau must be positive, got {self.tau}")
        if self.lr < 0:
            raise ConfigurationError(f"lr must be nonnegative, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigurationError(
                f"momentum must lie in [0, 1), got {self.momentum}")
        if self.pretrain_epochs < 0 or self.discover_epochs < 0:
            raise ConfigurationError("epoch counts must be nonnegative")
        if self.batch_size < 2:
            raise ConfigurationError(
                f"batch_size must be at least 2, got {self.batch_size}")
        mode = str(self.intra_mode).lower()
        if mode not in INTRA_MODES:
            raise ConfigurationError(
                f"intra_mode must be one of {INTRA_MODES}, got {self.intra_mode!r}")
        object.__setattr__(self, "intra_mode", mode)
        if self.snapshot_every < 0:
            raise ConfigurationError("snapshot_every must be nonnegative")


@dataclass
class EpochRecord:
    """Epoch-mean losses plus the cross-head logit norm.

    ``cross_head_norm`` is the mean row norm of the wrong head's
    logits: the novel head on labelled samples and the labelled head
    on unlabelled samples.  ``snapshot`` holds evaluation reports as
    plain dicts when periodic snapshots are on.
    """

    epoch: int
    phase: str
    ce: float
    inter: float
    intra: float
    total: float
    cross_head_norm: float
    snapshot: dict | None = None

    def to_json_dict(self) -> dict:
        out = {
            "epoch": self.epoch,
            "phase": self.phase,
            "ce": self.ce,
            "inter": self.inter,
            "intra": self.intra,
            "total": self.total,
            "cross_head_norm": self.cross_head_norm,
        }
        if self.snapshot is not None:
            out["snapshot"] = self.snapshot
        return out


class TrainLog:
    """Ordered per-epoch records for one phase, JSON-lines on disk."""

    def __init__(self, phase: str):
        self.phase = phase
        self.records: list[EpochRecord] = []

    def append(self, record: EpochRecord) -> None:
        if self.records and record.epoch <= self.records[-1].epoch:
            raise UsageError(
                f"epoch index must increase, got {record.epoch} after "
                f"{self.records[-1].epoch}")
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def to_json_lines(self) -> str:
        return "".join(json.dumps(r.to_json_dict(), separators=(",", ":")) + "\n"
                       for r in self.records)

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_json_lines())


def _check_dims(params: ModelParams, split: DatasetSplit) -> None:
    dims = params.dims
    if dims.input_dim != split.input_dim:
        raise ConfigurationError(
            f"model expects {dims.input_dim}-dim inputs, split has "
            f"{split.input_dim}")
    if (dims.n_labelled_classes != split.n_labelled_classes
            or dims.n_novel_classes != split.n_novel_classes):
        raise ConfigurationError(
            f"model heads ({dims.n_labelled_classes}+{dims.n_novel_classes}) "
            f"do not match split classes ({split.n_labelled_classes}"
            f"+{split.n_novel_classes})")


def cross_head_logit_norm(params: ModelParams, split: DatasetSplit, tau: float,
                          include_unlabelled: bool = True) -> float:
    """Mean row norm of each pool's wrong-head logits.

    Labelled training samples contribute the norm of their novel-head
    logits, unlabelled ones the norm of their labelled-head logits.
    A drop over training signals the heads specializing.  Pretraining
    passes ``include_unlabelled=False`` since it must not look at the
    unlabelled pool at all.
    """
    total, count = 0.0, 0
    if len(split.labelled_train):
        out = forward_batch(params, split.labelled_train.features, tau)
        norms = np.linalg.norm(out.logits_novel.data, axis=1)
        total += float(norms.sum())
        count += norms.shape[0]
    if include_unlabelled and len(split.unlabelled_train):
        out = forward_batch(params, split.unlabelled_train.features, tau)
        norms = np.linalg.norm(out.logits_labelled.data, axis=1)
        total += float(norms.sum())
        count += norms.shape[0]
    return total / count if count else 0.0


def _labelled_batches(features, labels, batch_size, seed):
    rng = np.random.default_rng(seed)
    n = features.shape[0]
    order = rng.permutation(n)
    for idx in np.array_split(order, math.ceil(n / batch_size)):
        yield features[idx], labels[idx]


def pretrain(params: ModelParams, split: DatasetSplit,
             cfg: TrainConfig) -> tuple[ModelParams, TrainLog]:
    """Supervised warm-up on the labelled pool only.

    Minimizes padded cross-entropy of the labelled samples; the
    unlabelled pool and both divergence terms stay untouched.
    Updates ``params`` in place and also returns it.
    """
    if len(split.labelled_train) == 0:
        raise UsageError("pretraining needs a nonempty labelled pool")
    _check_dims(params, split)
    dims = params.dims
    log = TrainLog("pretrain")
    opt = SGD(params.tensors(), lr=cfg.lr, momentum=cfg.momentum)
    for epoch in range(cfg.pretrain_epochs):
        ce_sum, steps = 0.0, 0
        batches = _labelled_batches(split.labelled_train.features,
                                    split.labelled_train.labels,
                                    cfg.batch_size,
                                    [cfg.seed, _PHASE_PRETRAIN, epoch])
        for X, y in batches:
            targets = zero_pad_targets(one_hot(y, dims.n_labelled_classes),
                                       "labelled", dims.n_labelled_classes,
                                       dims.n_novel_classes)
            with Tape() as tape:
                out = forward_batch(params, X, cfg.tau)
                ce = cross_entropy_padded(out.probs, targets)
            opt.step(backward(ce, tape))
            ce_sum += ce.item()
            steps += 1
        ce_mean = ce_sum / steps
        log.append(EpochRecord(
            epoch=epoch, phase="pretrain", ce=ce_mean, inter=0.0, intra=0.0,
            total=ce_mean,
            cross_head_norm=cross_head_logit_norm(params, split, cfg.tau,
                                                  include_unlabelled=False)))
    return params, log


def _view_targets(view_logits: list[np.ndarray],
                  sk: SinkhornConfig) -> tuple[list[np.ndarray], np.ndarray]:
    """Swapped balanced assignments for each view plus their mean.

    Each view is targeted by the mean assignment of the other views
    (the plain swap when there are two); the original sample takes
    the mean over all views.
    """
    assignments = [sinkhorn_knopp(z, sk) for z in view_logits]
    n_views = len(assignments)
    stacked = np.stack(assignments)
    targets = []
    for v in range(n_views):
        others = [assignments[u] for u in range(n_views) if u != v]
        targets.append(np.mean(others, axis=0))
    return targets, stacked.mean(axis=0)


def discover_step(params: ModelParams, batch: MiniBatch, cfg: TrainConfig,
                  opt: SGD) -> LossBreakdown:
    """One joint update on a mixed mini-batch; returns the losses.

    Cross-entropy averages over originals and all views.  The
    inter-class term compares original full distributions across the
    two pools; the intra-class term compares each original with each
    of its views on its own head's distribution.  Pseudo-label
    targets are plain arrays, so no gradient reaches them.
    """
    dims = params.dims
    n_lab, n_unl = batch.n_labelled, batch.n_unlabelled
    use_inter = cfg.inter_enabled and cfg.alpha != 0 and n_lab > 0 and n_unl > 0
    use_intra = cfg.intra_mode != "off" and cfg.beta != 0

    with Tape() as tape:
        out_lab = out_unl = None
        lab_views, unl_views = [], []
        prob_blocks, target_blocks = [], []

        if n_lab:
            out_lab = forward_batch(params, batch.labelled_features, cfg.tau)
            lab_views = [forward_batch(params, v, cfg.tau)
                         for v in batch.labelled_views]
            lab_target = zero_pad_targets(
                one_hot(batch.labelled_labels, dims.n_labelled_classes),
                "labelled", dims.n_labelled_classes, dims.n_novel_classes)
            prob_blocks.append(out_lab.probs)
            target_blocks.append(lab_target)
            for view_out in lab_views:
                prob_blocks.append(view_out.probs)
                target_blocks.append(lab_target)

        if n_unl:
            out_unl = forward_batch(params, batch.unlabelled_features, cfg.tau)
            unl_views = [forward_batch(params, v, cfg.tau)
                         for v in batch.unlabelled_views]
            view_targets, orig_target = _view_targets(
                [v.logits_novel.data for v in unl_views], cfg.sinkhorn)
            prob_blocks.append(out_unl.probs)
            target_blocks.append(zero_pad_targets(
                orig_target, "unlabelled", dims.n_labelled_classes,
                dims.n_novel_classes))
            for view_out, target in zip(unl_views, view_targets):
                prob_blocks.append(view_out.probs)
                target_blocks.append(zero_pad_targets(
                    target, "unlabelled", dims.n_labelled_classes,
                    dims.n_novel_classes))

        probs_all = concat(prob_blocks, axis=0) if len(prob_blocks) > 1 \
            else prob_blocks[0]
        ce = cross_entropy_padded(probs_all, np.concatenate(target_blocks))

        if dims.num_over_heads and n_unl:
            over_terms = []
            for j in range(dims.num_over_heads):
                view_targets, orig_target = _view_targets(
                    [v.over_logits[j].data for v in unl_views], cfg.sinkhorn)
                blocks = [softmax(out_unl.over_logits[j], cfg.tau)]
                targets = [orig_target]
                for view_out, target in zip(unl_views, view_targets):
                    blocks.append(softmax(view_out.over_logits[j], cfg.tau))
                    targets.append(target)
                over_terms.append(cross_entropy_padded(
                    concat(blocks, axis=0), np.concatenate(targets)))
            scale = 1.0 / (1 + dims.num_over_heads)
            combined = ce
            for term in over_terms:
                combined = combined + term
            ce = scale * combined

        total = ce
        inter_val = intra_val = 0.0
        mse_val = None

        if use_inter:
            inter = inter_class_loss(out_lab.probs, out_unl.probs)
            total = total - cfg.alpha * inter
            inter_val = inter.item()

        if use_intra:
            n_views = cfg.augment.views_per_sample
            acc = None
            for v in range(n_views):
                p_lab = out_lab.probs_labelled if n_lab else np.empty(
                    (0, dims.n_labelled_classes))
                p_lab_v = lab_views[v].probs_labelled if n_lab else np.empty(
                    (0, dims.n_labelled_classes))
                p_unl = out_unl.probs_novel if n_unl else np.empty(
                    (0, dims.n_novel_classes))
                p_unl_v = unl_views[v].probs_novel if n_unl else np.empty(
                    (0, dims.n_novel_classes))
                if cfg.intra_mode == "skld":
                    term = intra_class_loss(p_lab, p_lab_v, p_unl, p_unl_v)
                else:
                    term = Tensor(0.0)
                    if n_lab:
                        term = term + mse_consistency(p_lab, p_lab_v)
                    if n_unl:
                        term = term + mse_consistency(p_unl, p_unl_v)
                acc = term if acc is None else acc + term
            intra = (1.0 / n_views) * acc
            total = total + cfg.beta * intra
            intra_val = intra.item()
            if cfg.intra_mode == "mse":
                mse_val = intra_val

    opt.step(backward(total, tape))
    return LossBreakdown(ce=ce.item(), inter=inter_val, intra=intra_val,
                         total=total.item(), alpha=cfg.alpha, beta=cfg.beta,
                         mse=mse_val)


def discover(params: ModelParams, split: DatasetSplit,
             cfg: TrainConfig) -> tuple[ModelParams, TrainLog]:
    """Joint fine-tuning over mixed mini-batches.

    Updates ``params`` in place and also returns it.  The divergence
    terms act only here, never at evaluation time, and the unlabelled
    pool's true classes are never consulted.
    """
    if len(split.labelled_train) == 0 or len(split.unlabelled_train) == 0:
        raise UsageError("discovery needs both training pools nonempty")
    _check_dims(params, split)
    log = TrainLog("discover")
    opt = SGD(params.tensors(), lr=cfg.lr, momentum=cfg.momentum)
    for epoch in range(cfg.discover_epochs):
        batches = make_batches(split, cfg.batch_size, cfg.augment,
                               [cfg.seed, _PHASE_DISCOVER, epoch])
        sums = {"ce": 0.0, "inter": 0.0, "intra": 0.0, "total": 0.0}
        for batch in batches:
            breakdown = discover_step(params, batch, cfg, opt)
            sums["ce"] += breakdown.ce
            sums["inter"] += breakdown.inter
            sums["intra"] += breakdown.intra
            sums["total"] += breakdown.total
        steps = len(batches)
        snapshot = None
        if cfg.snapshot_every and (epoch + 1) % cfg.snapshot_every == 0:
            snapshot = evaluate_task_aware(params, split, cfg.tau).to_json_dict()
        log.append(EpochRecord(
            epoch=epoch, phase="discover",
            ce=sums["ce"] / steps, inter=sums["inter"] / steps,
            intra=sums["intra"] / steps, total=sums["total"] / steps,
            cross_head_norm=cross_head_logit_norm(params, split, cfg.tau),
            snapshot=snapshot))
    return params, log


@dataclass(frozen=True)
class AblationVariant:
    """One switch setting of the objective's optional terms."""

    name: str
    inter_enabled: bool
    intra_mode: str


CANONICAL_VARIANTS = (
    AblationVariant("baseline", inter_enabled=False, intra_mode="off"),
    AblationVariant("inter", inter_enabled=True, intra_mode="off"),
    AblationVariant("intra", inter_enabled=False, intra_mode="skld"),
    AblationVariant("full", inter_enabled=True, intra_mode="skld"),
    AblationVariant("mse", inter_enabled=False, intra_mode="mse"),
)


@dataclass
class AblationRow:
    variant: str
    seed_count: int
    acc_mean: float
    acc_std: float
    nmi_mean: float
    nmi_std: float
    ari_mean: float
    ari_std: float


@dataclass
class AblationResult:
    """Aggregated rows plus per-seed detail for each variant."""

    rows: list[AblationRow]
    seeds: tuple[int, ...]
    per_seed: dict[str, list[tuple[float, float, float]]]

    def to_csv(self) -> str:
        lines = ["variant,seed_count,acc_mean,acc_std,nmi_mean,nmi_std,"
                 "ari_mean,ari_std"]
        for row in self.rows:
            lines.append(",".join([
                row.variant, str(row.seed_count),
                repr(row.acc_mean), repr(row.acc_std),
                repr(row.nmi_mean), repr(row.nmi_std),
                repr(row.ari_mean), repr(row.ari_std)]))
        return "\n".join(lines) + "\n"


def run_ablation(split: DatasetSplit, base_cfg: TrainConfig,
                 variants=CANONICAL_VARIANTS,
                 seeds=(0, 1, 2, 3, 4)) -> AblationResult:
    """Train every variant over the same seeds and aggregate metrics.

    One pretraining run per seed is shared by all variants (the
    optional terms only act during discovery), then each variant
    fine-tunes its own copy.  Rows report mean and population std of
    the task-aware protocol's ACC/NMI/ARI.
    """
    variants = tuple(variants)
    seeds = tuple(int(s) for s in seeds)
    if not variants:
        raise UsageError("ablation needs at least one variant")
    if not seeds:
        raise UsageError("ablation needs at least one seed")
    names = [v.name for v in variants]
    if len(set(names)) != len(names):
        raise ConfigurationError(f"duplicate variant names in {names}")

    scores: dict[str, list[tuple[float, float, float]]] = {n: [] for n in names}
    for seed in seeds:
        cfg_seed = replace(base_cfg, seed=seed)
        params = init_model(split.input_dim, split.n_labelled_classes,
                            split.n_novel_classes, seed=seed)
        pretrain(params, split, cfg_seed)
        for variant in variants:
            cfg_v = replace(cfg_seed, inter_enabled=variant.inter_enabled,
                            intra_mode=variant.intra_mode)
            tuned = params.copy()
            discover(tuned, split, cfg_v)
            report = evaluate_task_aware(tuned, split, cfg_v.tau)
            scores[variant.name].append((report.acc, report.nmi, report.ari))

    rows = []
    for name in names:
        arr = np.asarray(scores[name])
        rows.append(AblationRow(
            variant=name, seed_count=len(seeds),
            acc_mean=float(arr[:, 0].mean()), acc_std=float(arr[:, 0].std()),
            nmi_mean=float(arr[:, 1].mean()), nmi_std=float(arr[:, 1].std()),
            ari_mean=float(arr[:, 2].mean()), ari_std=float(arr[:, 2].std())))
    return AblationResult(rows=rows, seeds=seeds, per_seed=scores)
