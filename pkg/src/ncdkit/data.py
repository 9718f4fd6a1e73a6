"""Synthetic benchmarks, vector augmentations, batching, and dataset I/O.

A benchmark is a set of isotropic Gaussian clusters with means pushed
at least ``separation`` standard deviations apart.  The first block of
classes keeps its labels; the rest become the unlabelled pool whose
true classes ride along only as evaluation oracle, wrapped in
:class:`HiddenLabels` so stray training-time reads are counted.

Everything here is deterministic per seed: generation, augmentation
draws, epoch shuffles, and the CSV round trip (floats are written as
shortest round-trip decimals).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .audit import in_evaluation_scope
from .exceptions import (
    ConfigurationError,
    GenerationError,
    ShapeMismatchError,
    UsageError,
)

_MEAN_PLACEMENT_TRIES = 200


class HiddenLabels:
    """Ground-truth classes of unlabelled samples, held for evaluation.

    ``read()`` returns the labels; calling it outside an
    ``evaluation_access()`` scope bumps ``audit_reads``.  Training
    code must never move that counter.
    """

    def __init__(self, values):
        self._values = np.asarray(values, dtype=np.int64)
        if self._values.ndim != 1:
            raise ShapeMismatchError("hidden labels must be a vector")
        self.audit_reads = 0

    def __len__(self) -> int:
        return self._values.shape[0]

    def read(self) -> np.ndarray:
        if not in_evaluation_scope():
            self.audit_reads += 1
        return self._values.copy()


@dataclass
class LabelledSamples:
    features: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return self.features.shape[0]


@dataclass
class UnlabelledSamples:
    features: np.ndarray
    hidden: HiddenLabels

    def __len__(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class SyntheticSpec:
    """Benchmark shape: dimensions, class counts, difficulty, seed."""

    input_dim: int = 16
    n_classes: int = 10
    n_labelled_classes: int = 5
    samples_per_class: int = 200
    separation: float = 4.0
    test_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.input_dim < 1:
            raise ConfigurationError("input_dim must be positive")
        if self.samples_per_class < 1:
            raise ConfigurationError("samples_per_class must be positive")
        if not 1 <= self.n_labelled_classes < self.n_classes:
            raise ConfigurationError(
                f"need 1 <= n_labelled_classes < n_classes, got "
                f"{self.n_labelled_classes} of {self.n_classes}")
        if self.n_novel_classes < 2:
            raise ConfigurationError("need at least 2 unlabelled classes")
        if self.separation < 0:
            raise ConfigurationError("separation must be nonnegative")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigurationError("test_fraction must lie strictly in (0, 1)")

    @property
    def n_novel_classes(self) -> int:
        return self.n_classes - self.n_labelled_classes


@dataclass
class DatasetSplit:
    """Labelled and unlabelled pools with held-out test counterparts.

    Unlabelled ground truth lives in :class:`HiddenLabels` as global
    class indices (n_labelled_classes and up), so the labelled and
    unlabelled index ranges never overlap.
    """

    labelled_train: LabelledSamples
    unlabelled_train: UnlabelledSamples
    labelled_test: LabelledSamples
    unlabelled_test: UnlabelledSamples
    n_labelled_classes: int
    n_novel_classes: int
    input_dim: int
    provenance: SyntheticSpec | None = None

    def hidden_audit_reads(self) -> int:
        return (self.unlabelled_train.hidden.audit_reads
                + self.unlabelled_test.hidden.audit_reads)


@dataclass(frozen=True)
class AugmentConfig:
    """Vector stand-ins for image augmentations.

    Multiplicative scaling plays the role of intensity change,
    additive jitter of color noise, and coordinate masking of
    cropping.  ``views_per_sample`` counts augmented views built per
    sample each epoch, in addition to the original.
    """

    jitter_sigma: float = 0.1
    mask_fraction: float = 0.1875
    scale_range: tuple[float, float] = (0.9, 1.1)
    views_per_sample: int = 3

    def __post_init__(self):
        if self.jitter_sigma < 0:
            raise ConfigurationError("jitter_sigma must be nonnegative")
        if not 0.0 <= self.mask_fraction < 1.0:
            raise ConfigurationError("mask_fraction must lie in [0, 1)")
        lo, hi = self.scale_range
        if lo > hi:
            raise ConfigurationError("scale_range must be (low, high) with low <= high")
        if self.views_per_sample < 2:
            raise ConfigurationError("views_per_sample must be at least 2")


@dataclass
class MiniBatch:
    """One step's worth of samples with their augmented views.

    ``labelled_views`` and ``unlabelled_views`` hold one array per
    view, row-aligned with the corresponding original features.
    """

    labelled_features: np.ndarray
    labelled_labels: np.ndarray
    labelled_views: list[np.ndarray]
    unlabelled_features: np.ndarray
    unlabelled_views: list[np.ndarray]

    @property
    def n_labelled(self) -> int:
        return self.labelled_features.shape[0]

    @property
    def n_unlabelled(self) -> int:
        return self.unlabelled_features.shape[0]


def _place_means(rng: np.random.Generator, spec: SyntheticSpec) -> np.ndarray:
    """Random unit directions pushed outward until pairwise separated.

    The radius starts at the required separation and grows
    geometrically on each failed attempt; with a sensible dimension
    this succeeds almost immediately, and a genuinely infeasible
    request (many classes on a line) exhausts the retry budget.
    """
    radius = max(spec.separation, 1e-3)
    for _ in range(_MEAN_PLACEMENT_TRIES):
        raw = rng.normal(size=(spec.n_classes, spec.input_dim))
        norms = np.linalg.norm(raw, axis=1, keepdims=True)
        if (norms == 0).any():
            continue
        means = raw / norms * radius
        diffs = means[:, None, :] - means[None, :, :]
        dist = np.linalg.norm(diffs, axis=2)
        dist[np.diag_indices(spec.n_classes)] = np.inf
        if dist.min() >= spec.separation:
            return means
        radius *= 1.3
    raise GenerationError(
        f"could not place {spec.n_classes} means at separation "
        f"{spec.separation} in {spec.input_dim} dimensions")


def generate(spec: SyntheticSpec) -> DatasetSplit:
    """Build the benchmark split for a spec, deterministic per seed."""
    rng = np.random.default_rng(spec.seed)
    means = _place_means(rng, spec)
    n_test = int(round(spec.test_fraction * spec.samples_per_class))
    n_train = spec.samples_per_class - n_test
    if n_train < 1 or n_test < 1:
        raise ConfigurationError(
            f"samples_per_class {spec.samples_per_class} with test_fraction "
            f"{spec.test_fraction} leaves an empty subset")

    train_feats, train_classes = [], []
    test_feats, test_classes = [], []
    for c in range(spec.n_classes):
        draws = means[c] + rng.normal(size=(spec.samples_per_class, spec.input_dim))
        train_feats.append(draws[:n_train])
        test_feats.append(draws[n_train:])
        train_classes.append(np.full(n_train, c, dtype=np.int64))
        test_classes.append(np.full(n_test, c, dtype=np.int64))

    def bundle(feats, classes):
        f = np.concatenate(feats)
        c = np.concatenate(classes)
        lab = c < spec.n_labelled_classes
        return (LabelledSamples(features=f[lab], labels=c[lab]),
                UnlabelledSamples(features=f[~lab], hidden=HiddenLabels(c[~lab])))

    lab_train, unlab_train = bundle(train_feats, train_classes)
    lab_test, unlab_test = bundle(test_feats, test_classes)
    return DatasetSplit(
        labelled_train=lab_train,
        unlabelled_train=unlab_train,
        labelled_test=lab_test,
        unlabelled_test=unlab_test,
        n_labelled_classes=spec.n_labelled_classes,
        n_novel_classes=spec.n_novel_classes,
        input_dim=spec.input_dim,
        provenance=spec,
    )


def augment(x, cfg: AugmentConfig, seed) -> np.ndarray:
    """One augmented view of a feature vector, fixed by the seed.

    Draw order is scale factor, jitter vector, mask positions; the
    mask zeroes floor(mask_fraction * dim) distinct coordinates.
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeMismatchError(f"augment expects a vector, got shape {arr.shape}")
    rng = np.random.default_rng(seed)
    lo, hi = cfg.scale_range
    out = arr * rng.uniform(lo, hi)
    out = out + rng.normal(scale=cfg.jitter_sigma, size=arr.shape)
    n_mask = int(math.floor(cfg.mask_fraction * arr.shape[0]))
    if n_mask:
        out[rng.choice(arr.shape[0], size=n_mask, replace=False)] = 0.0
    return out


def make_batches(split: DatasetSplit, batch_size: int, cfg: AugmentConfig,
                 seed) -> list[MiniBatch]:
    """One epoch of proportionally mixed, shuffled mini-batches.

    Both pools are shuffled independently and chopped into the same
    number of chunks, so each batch carries labelled and unlabelled
    samples roughly in proportion to pool sizes.  Every sample
    appears exactly once per epoch and carries ``views_per_sample``
    augmented views built from per-sample seeds.
    """
    if batch_size < 2:
        raise ConfigurationError(f"batch_size must be at least 2, got {batch_size}")
    n = len(split.labelled_train)
    m = len(split.unlabelled_train)
    if n + m == 0:
        raise UsageError("cannot batch an empty split")
    rng = np.random.default_rng(seed)
    order_lab = rng.permutation(n)
    order_unlab = rng.permutation(m)
    view_seeds_lab = rng.integers(0, 2 ** 63, size=(n, cfg.views_per_sample))
    view_seeds_unlab = rng.integers(0, 2 ** 63, size=(m, cfg.views_per_sample))

    n_batches = math.ceil((n + m) / batch_size)
    lab_chunks = np.array_split(order_lab, n_batches)
    unlab_chunks = np.array_split(order_unlab, n_batches)

    def build_views(features, indices, seed_table):
        views = []
        for v in range(cfg.views_per_sample):
            rows = [augment(features[i], cfg, seed_table[i, v]) for i in indices]
            views.append(np.stack(rows) if rows
                         else np.empty((0, features.shape[1])))
        return views

    batches = []
    lab_feat = split.labelled_train.features
    lab_y = split.labelled_train.labels
    unlab_feat = split.unlabelled_train.features
    for lab_idx, unlab_idx in zip(lab_chunks, unlab_chunks):
        batches.append(MiniBatch(
            labelled_features=lab_feat[lab_idx],
            labelled_labels=lab_y[lab_idx],
            labelled_views=build_views(lab_feat, lab_idx, view_seeds_lab),
            unlabelled_features=unlab_feat[unlab_idx],
            unlabelled_views=build_views(unlab_feat, unlab_idx, view_seeds_unlab),
        ))
    return batches


def save_dataset_csv(split: DatasetSplit, path) -> None:
    """Write the split as CSV: split,side,class,f0,f1,...

    The class column always holds the global class index, unlabelled
    rows included: the file is the evaluation oracle.  Floats are
    written as shortest round-trip decimals so identical splits
    produce identical bytes.
    """
    dim = split.input_dim
    header = "split,side,class," + ",".join(f"f{i}" for i in range(dim))
    lines = [header]

    def emit(tag, side, features, classes):
        for row, cls in zip(features, classes):
            values = ",".join(repr(float(v)) for v in row)
            lines.append(f"{tag},{side},{int(cls)},{values}")

    emit("train", "labelled", split.labelled_train.features,
         split.labelled_train.labels)
    emit("train", "unlabelled", split.unlabelled_train.features,
         split.unlabelled_train.hidden._values)
    emit("test", "labelled", split.labelled_test.features,
         split.labelled_test.labels)
    emit("test", "unlabelled", split.unlabelled_test.features,
         split.unlabelled_test.hidden._values)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")


def load_dataset_csv(path) -> DatasetSplit:
    """Read a split back from CSV; inverse of :func:`save_dataset_csv`.

    Class counts are derived from the class column (labelled classes
    are the distinct labelled values; the rest of the contiguous
    range is unlabelled).
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh if line.strip()]
    if not lines:
        raise UsageError(f"{path}: empty dataset file")
    header = lines[0].split(",")
    if header[:3] != ["split", "side", "class"]:
        raise UsageError(f"{path}: unexpected header {lines[0]!r}")
    dim = len(header) - 3
    if dim < 1 or header[3:] != [f"f{i}" for i in range(dim)]:
        raise UsageError(f"{path}: malformed feature columns")

    rows = {("train", "labelled"): ([], []), ("train", "unlabelled"): ([], []),
            ("test", "labelled"): ([], []), ("test", "unlabelled"): ([], [])}
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 3 + dim:
            raise UsageError(f"{path}:{lineno}: expected {3 + dim} fields")
        key = (parts[0], parts[1])
        if key not in rows:
            raise UsageError(f"{path}:{lineno}: unknown split/side {key}")
        feats, classes = rows[key]
        classes.append(int(parts[2]))
        feats.append([float(v) for v in parts[3:]])

    def as_arrays(key):
        feats, classes = rows[key]
        f = np.asarray(feats, dtype=np.float64).reshape(len(feats), dim)
        c = np.asarray(classes, dtype=np.int64)
        return f, c

    lab_tr_f, lab_tr_c = as_arrays(("train", "labelled"))
    unlab_tr_f, unlab_tr_c = as_arrays(("train", "unlabelled"))
    lab_te_f, lab_te_c = as_arrays(("test", "labelled"))
    unlab_te_f, unlab_te_c = as_arrays(("test", "unlabelled"))

    labelled_values = np.concatenate([lab_tr_c, lab_te_c])
    unlabelled_values = np.concatenate([unlab_tr_c, unlab_te_c])
    if labelled_values.size == 0 or unlabelled_values.size == 0:
        raise UsageError(f"{path}: dataset needs both labelled and unlabelled rows")
    n_labelled = int(labelled_values.max()) + 1
    n_total = int(unlabelled_values.max()) + 1
    if labelled_values.min() < 0 or unlabelled_values.min() < n_labelled:
        raise UsageError(
            f"{path}: class ranges overlap (labelled up to {n_labelled - 1}, "
            f"unlabelled must start at {n_labelled})")
    n_novel = n_total - n_labelled
    if n_novel < 2:
        raise UsageError(f"{path}: fewer than 2 unlabelled classes")

    return DatasetSplit(
        labelled_train=LabelledSamples(features=lab_tr_f, labels=lab_tr_c),
        unlabelled_train=UnlabelledSamples(features=unlab_tr_f,
                                           hidden=HiddenLabels(unlab_tr_c)),
        labelled_test=LabelledSamples(features=lab_te_f, labels=lab_te_c),
        unlabelled_test=UnlabelledSamples(features=unlab_te_f,
                                          hidden=HiddenLabels(unlab_te_c)),
        n_labelled_classes=n_labelled,
        n_novel_classes=n_novel,
        input_dim=dim,
        provenance=None,
    )
