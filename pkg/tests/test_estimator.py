"""Tests for the scikit-learn style estimator wrapper."""

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from ncdkit.data import SyntheticSpec, generate
from ncdkit.estimator import NovelClassDiscoverer
from ncdkit.exceptions import ConfigurationError, UsageError


def mixed_training_data(seed=0):
    """Small flat (X, y) pair with -1 marking the unlabelled rows."""
    spec = SyntheticSpec(input_dim=6, n_classes=4, n_labelled_classes=2,
                         samples_per_class=30, separation=5.0, seed=seed)
    split = generate(spec)
    X = np.concatenate([split.labelled_train.features,
                        split.unlabelled_train.features])
    y = np.concatenate([split.labelled_train.labels,
                        np.full(len(split.unlabelled_train), -1)])
    return X, y, split


def small_estimator(**overrides):
    base = dict(n_novel_classes=2, feat_dim=8, hidden_dim=8,
                encoder_hidden=12, pretrain_epochs=10, discover_epochs=15,
                batch_size=16, seed=0)
    base.update(overrides)
    return NovelClassDiscoverer(**base)


class TestEstimatorProtocol:
    def test_get_params_round_trip(self):
        est = small_estimator()
        params = est.get_params()
        assert params["n_novel_classes"] == 2
        assert params["alpha"] == 0.05
        est.set_params(alpha=0.1)
        assert est.alpha == 0.1

    def test_clone_preserves_configuration(self):
        est = small_estimator(alpha=0.07)
        twin = clone(est)
        assert twin.alpha == 0.07
        assert twin.get_params() == est.get_params()

    def test_predict_before_fit_raises(self):
        est = small_estimator()
        with pytest.raises(NotFittedError):
            est.predict(np.zeros((1, 6)))

    def test_fitted_attributes(self):
        X, y, _ = mixed_training_data()
        est = small_estimator().fit(X, y)
        assert est.n_labelled_classes_ == 2
        assert est.n_features_in_ == 6
        np.testing.assert_array_equal(est.classes_, [0, 1, 2, 3])
        assert len(est.pretrain_log_) == 10
        assert len(est.discover_log_) == 15


class TestFitValidation:
    def test_rejects_one_dimensional_x(self):
        est = small_estimator()
        with pytest.raises(ConfigurationError):
            est.fit(np.zeros(6), np.zeros(6))

    def test_rejects_misaligned_y(self):
        est = small_estimator()
        with pytest.raises(ConfigurationError):
            est.fit(np.zeros((4, 6)), np.array([0, 1]))

    def test_rejects_labels_below_marker(self):
        est = small_estimator()
        X = np.zeros((4, 6))
        with pytest.raises(ConfigurationError):
            est.fit(X, np.array([0, 1, -1, -2]))

    def test_rejects_fractional_labels(self):
        est = small_estimator()
        X = np.zeros((3, 6))
        with pytest.raises(ConfigurationError):
            est.fit(X, np.array([0.0, 0.5, 1.0]))

    def test_accepts_integer_valued_floats(self):
        X, y, _ = mixed_training_data()
        est = small_estimator(pretrain_epochs=1, discover_epochs=1)
        est.fit(X, y.astype(np.float64))
        assert est.n_labelled_classes_ == 2

    def test_rejects_gappy_label_range(self):
        est = small_estimator()
        X = np.zeros((6, 6))
        with pytest.raises(ConfigurationError):
            est.fit(X, np.array([0, 0, 2, 2, -1, -1]))

    def test_rejects_single_labelled_class(self):
        est = small_estimator()
        X = np.zeros((4, 6))
        with pytest.raises(ConfigurationError):
            est.fit(X, np.array([0, 0, -1, -1]))

    def test_rejects_all_labelled(self):
        X, y, _ = mixed_training_data()
        est = small_estimator()
        with pytest.raises(UsageError):
            est.fit(X[y != -1], y[y != -1])


class TestFitPredict:
    def test_labelled_rows_classified_correctly(self):
        X, y, split = mixed_training_data()
        est = small_estimator(pretrain_epochs=30, discover_epochs=20).fit(X, y)
        pred = est.predict(split.labelled_test.features)
        acc = (pred == split.labelled_test.labels).mean()
        assert acc >= 0.9

    def test_unlabelled_rows_land_in_novel_range(self):
        X, y, split = mixed_training_data()
        est = small_estimator(pretrain_epochs=30, discover_epochs=40).fit(X, y)
        pred = est.predict(split.unlabelled_train.features)
        assert (pred >= 2).mean() >= 0.9

    def test_predict_proba_rows_normalized(self):
        X, y, _ = mixed_training_data()
        est = small_estimator(pretrain_epochs=2, discover_epochs=2).fit(X, y)
        proba = est.predict_proba(X[:10])
        assert proba.shape == (10, 4)
        np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-9)
        np.testing.assert_array_equal(proba.argmax(axis=1),
                                      est.predict(X[:10]))

    def test_deterministic_given_seed(self):
        X, y, _ = mixed_training_data()
        a = small_estimator(pretrain_epochs=3, discover_epochs=3).fit(X, y)
        b = small_estimator(pretrain_epochs=3, discover_epochs=3).fit(X, y)
        np.testing.assert_array_equal(a.predict(X), b.predict(X))

    def test_fit_never_reads_placeholder_labels(self):
        X, y, _ = mixed_training_data()
        est = small_estimator(pretrain_epochs=2, discover_epochs=2)
        est.fit(X, y)
        assert est.hidden_audit_reads_ == 0

    def test_predict_rejects_wrong_width(self):
        X, y, _ = mixed_training_data()
        est = small_estimator(pretrain_epochs=1, discover_epochs=1).fit(X, y)
        with pytest.raises(ConfigurationError):
            est.predict(np.zeros((2, 9)))
