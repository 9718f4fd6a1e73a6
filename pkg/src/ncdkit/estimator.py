"""Scikit-learn style wrapper around the discovery pipeline.

``NovelClassDiscoverer`` follows the estimator protocol: construct
with hyperparameters, ``fit(X, y)`` where ``y`` holds class indices
for labelled rows and ``-1`` for unlabelled ones, then ``predict``
assigns any sample to one of the labelled or discovered classes.
Discovered classes take the index range right after the labelled
ones, so predictions live in a single flat label space.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .data import (
    AugmentConfig,
    DatasetSplit,
    HiddenLabels,
    LabelledSamples,
    UnlabelledSamples,
)
from .exceptions import ConfigurationError
from .model import forward_batch, init_model
from .sinkhorn import SinkhornConfig
from .training import TrainConfig, discover, pretrain

UNLABELLED = -1


class NovelClassDiscoverer(BaseEstimator):
    """Joint classifier over known classes and discovered ones.

    Parameters mirror the training configuration; ``n_novel_classes``
    is the number of clusters to discover and must be known up front.
    After fitting, ``params_`` holds the trained network and
    ``classes_`` the flat label range.
    """

    def __init__(self, n_novel_classes=2, feat_dim=32, hidden_dim=32,
                 encoder_hidden=64, alpha=0.05, beta=0.01, tau=0.1, lr=0.01,
                 momentum=0.9, pretrain_epochs=100, discover_epochs=200,
                 batch_size=128, intra_mode="skld", inter_enabled=True,
                 sinkhorn_epsilon=0.05, sinkhorn_iters=3, jitter_sigma=0.1,
                 mask_fraction=0.1875, scale_range=(0.9, 1.1),
                 views_per_sample=3, seed=0):
        self.n_novel_classes = n_novel_classes
        self.feat_dim = feat_dim
        self.hidden_dim = hidden_dim
        self.encoder_hidden = encoder_hidden
        self.alpha = alpha
        self.beta = beta
        self.tau = tau
        self.lr = lr
        self.momentum = momentum
        self.pretrain_epochs = pretrain_epochs
        self.discover_epochs = discover_epochs
        self.batch_size = batch_size
        self.intra_mode = intra_mode
        self.inter_enabled = inter_enabled
        self.sinkhorn_epsilon = sinkhorn_epsilon
        self.sinkhorn_iters = sinkhorn_iters
        self.jitter_sigma = jitter_sigma
        self.mask_fraction = mask_fraction
        self.scale_range = scale_range
        self.views_per_sample = views_per_sample
        self.seed = seed

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            alpha=self.alpha, beta=self.beta, tau=self.tau, lr=self.lr,
            momentum=self.momentum, pretrain_epochs=self.pretrain_epochs,
            discover_epochs=self.discover_epochs, batch_size=self.batch_size,
            intra_mode=self.intra_mode, inter_enabled=self.inter_enabled,
            sinkhorn=SinkhornConfig(epsilon=self.sinkhorn_epsilon,
                                    n_iters=self.sinkhorn_iters),
            augment=AugmentConfig(jitter_sigma=self.jitter_sigma,
                                  mask_fraction=self.mask_fraction,
                                  scale_range=tuple(self.scale_range),
                                  views_per_sample=self.views_per_sample),
            seed=self.seed)

    def fit(self, X, y):
        """Train on a mix of labelled rows and ``-1``-marked ones."""
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y)
        if X.ndim != 2:
            raise ConfigurationError(f"X must be 2-D, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise ConfigurationError(
                f"y must be one label per row, got shape {y.shape} for "
                f"{X.shape[0]} rows")
        if not np.issubdtype(y.dtype, np.integer):
            y_float = np.asarray(y, dtype=np.float64)
            if not np.all(y_float == np.round(y_float)):
                raise ConfigurationError("y must hold integer labels")
            y = y_float.astype(np.int64)
        else:
            y = y.astype(np.int64)
        if y.min() < UNLABELLED:
            raise ConfigurationError(
                f"labels must be >= 0 or the unlabelled marker "
                f"{UNLABELLED}, got {y.min()}")

        labelled = y != UNLABELLED
        y_lab = y[labelled]
        if y_lab.size == 0:
            raise ConfigurationError("fit needs at least one labelled row")
        observed = np.unique(y_lab)
        n_labelled = int(observed.max()) + 1
        if n_labelled < 2 or not np.array_equal(observed,
                                                np.arange(n_labelled)):
            raise ConfigurationError(
                f"labelled classes must cover 0..k-1 with k >= 2, "
                f"got {observed.tolist()}")

        cfg = self._train_config()
        n_unlab = int((~labelled).sum())
        split = DatasetSplit(
            labelled_train=LabelledSamples(X[labelled].copy(), y_lab.copy()),
            unlabelled_train=UnlabelledSamples(
                X[~labelled].copy(),
                HiddenLabels(np.full(n_unlab, UNLABELLED, dtype=np.int64))),
            labelled_test=LabelledSamples(np.empty((0, X.shape[1])),
                                          np.empty(0, dtype=np.int64)),
            unlabelled_test=UnlabelledSamples(
                np.empty((0, X.shape[1])), HiddenLabels([])),
            n_labelled_classes=n_labelled,
            n_novel_classes=int(self.n_novel_classes),
            input_dim=X.shape[1])

        params = init_model(X.shape[1], n_labelled,
                            int(self.n_novel_classes),
                            feat_dim=self.feat_dim,
                            hidden_dim=self.hidden_dim,
                            encoder_hidden=self.encoder_hidden,
                            seed=self.seed)
        _, self.pretrain_log_ = pretrain(params, split, cfg)
        _, self.discover_log_ = discover(params, split, cfg)
        self.hidden_audit_reads_ = split.hidden_audit_reads()
        self.params_ = params
        self.n_labelled_classes_ = n_labelled
        self.n_features_in_ = X.shape[1]
        self.classes_ = np.arange(n_labelled + int(self.n_novel_classes))
        return self

    def _require_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError(
                "this NovelClassDiscoverer instance is not fitted yet; "
                "call fit before predicting")

    def predict_proba(self, X) -> np.ndarray:
        """Distribution over all labelled and discovered classes."""
        self._require_fitted()
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features_in_:
            raise ConfigurationError(
                f"expected shape (n, {self.n_features_in_}), got {X.shape}")
        out = forward_batch(self.params_, X, self.tau)
        return out.probs.data.copy()

    def predict(self, X) -> np.ndarray:
        """Flat class index per row, discovered classes included."""
        return self.predict_proba(X).argmax(axis=1)
