import numpy as np
import pytest

from ncdkit.exceptions import ConfigurationError, ShapeMismatchError, UsageError
from ncdkit.sinkhorn import (
    SinkhornConfig,
    one_hot,
    sinkhorn_knopp,
    swapped_pseudo_labels,
    zero_pad_target,
    zero_pad_targets,
)


def scaling_oracle(logits, epsilon, iters=5000):
    """Independent transport-style reference using u/v scaling vectors.

    Solves for diag(u) K diag(v) with unit row sums and column sums
    m/k, a different algebraic route from repeated matrix
    normalization.
    """
    arr = np.asarray(logits, dtype=float)
    m, k = arr.shape
    kernel = np.exp((arr - arr.max()) / epsilon)
    kernel = np.maximum(kernel, 1e-300)
    row_mass = np.ones(m)
    col_mass = np.full(k, m / k)
    u = np.ones(m)
    v = np.ones(k)
    for _ in range(iters):
        u = row_mass / (kernel @ v)
        v = col_mass / (kernel.T @ u)
    return u[:, None] * kernel * v[None, :]


class TestConfig:
    def test_defaults(self):
        cfg = SinkhornConfig()
        assert cfg.epsilon == 0.05
        assert cfg.n_iters == 3

    def test_validation(self):
        with pytest.raises(ConfigurationError):
            SinkhornConfig(epsilon=0.0)
        with pytest.raises(ConfigurationError):
            SinkhornConfig(n_iters=0)


class TestSinkhorn:
    def test_equal_logits_uniform(self):
        q = sinkhorn_knopp(np.zeros((4, 5)), SinkhornConfig())
        np.testing.assert_allclose(q, np.full((4, 5), 0.2), atol=1e-12)

    def test_marginals_mild_logits_few_iterations(self):
        # at epsilon 0.05 the iteration contracts fast while logit
        # spread stays small against epsilon; 100 rounds then lands far
        # below the 1e-6 marginal tolerance
        rng = np.random.default_rng(0)
        cfg = SinkhornConfig(epsilon=0.05, n_iters=100)
        for _ in range(10):
            m, k = int(rng.integers(3, 40)), int(rng.integers(2, 8))
            q = sinkhorn_knopp(rng.normal(scale=0.2, size=(m, k)), cfg)
            np.testing.assert_allclose(q.sum(axis=1), np.ones(m), atol=1e-6)
            np.testing.assert_allclose(q.sum(axis=0), np.full(k, m / k), atol=1e-6)

    def test_marginals_wide_logits_when_converged(self):
        # unit-scale logits against epsilon 0.05 mix slowly; given
        # enough rounds the fixed point is still doubly balanced
        rng = np.random.default_rng(0)
        cfg = SinkhornConfig(epsilon=0.05, n_iters=2000)
        for _ in range(5):
            m, k = int(rng.integers(3, 40)), int(rng.integers(2, 8))
            q = sinkhorn_knopp(rng.normal(size=(m, k)), cfg)
            np.testing.assert_allclose(q.sum(axis=1), np.ones(m), atol=1e-6)
            np.testing.assert_allclose(q.sum(axis=0), np.full(k, m / k), atol=1e-6)

    def test_matches_scaling_oracle(self):
        rng = np.random.default_rng(1)
        for trial in range(5):
            logits = rng.normal(size=(6, 4))
            mine = sinkhorn_knopp(logits, SinkhornConfig(epsilon=0.1, n_iters=3000))
            ref = scaling_oracle(logits, epsilon=0.1, iters=30000)
            np.testing.assert_allclose(mine, ref, atol=1e-8, err_msg=f"trial {trial}")

    def test_strong_diagonal_recovers_identity(self):
        logits = np.eye(3) * 10.0
        q = sinkhorn_knopp(logits, SinkhornConfig(epsilon=0.05, n_iters=100))
        np.testing.assert_allclose(q, np.eye(3), atol=1e-3)

    def test_deterministic(self):
        rng = np.random.default_rng(2)
        logits = rng.normal(size=(8, 3))
        a = sinkhorn_knopp(logits, SinkhornConfig())
        b = sinkhorn_knopp(logits.copy(), SinkhornConfig())
        assert a.tobytes() == b.tobytes()

    def test_shift_invariance(self):
        rng = np.random.default_rng(3)
        logits = rng.normal(size=(5, 4))
        a = sinkhorn_knopp(logits, SinkhornConfig())
        b = sinkhorn_knopp(logits + 2.5, SinkhornConfig())
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_entropy_grows_with_epsilon(self):
        rng = np.random.default_rng(4)
        logits = rng.normal(size=(6, 4))

        def mean_row_entropy(q):
            q = np.maximum(q, 1e-300)
            return float(-(q * np.log(q)).sum(axis=1).mean())

        entropies = [
            mean_row_entropy(sinkhorn_knopp(logits, SinkhornConfig(epsilon=eps, n_iters=100)))
            for eps in (0.02, 0.1, 1.0, 10.0)
        ]
        assert entropies == sorted(entropies)

    def test_fewer_rows_than_clusters(self):
        rng = np.random.default_rng(5)
        q = sinkhorn_knopp(rng.normal(size=(3, 5)), SinkhornConfig(n_iters=1000))
        np.testing.assert_allclose(q.sum(axis=1), np.ones(3), atol=1e-6)
        np.testing.assert_allclose(q.sum(axis=0), np.full(5, 3 / 5), atol=1e-6)

    def test_extreme_logits_stay_finite(self):
        logits = np.array([[1e4, -1e4, 0.0], [-1e4, 1e4, 0.0]])
        q = sinkhorn_knopp(logits, SinkhornConfig(epsilon=0.05, n_iters=100))
        assert np.isfinite(q).all()
        np.testing.assert_allclose(q.sum(axis=1), np.ones(2), atol=1e-6)

    def test_rejects_non_finite(self):
        with pytest.raises(UsageError):
            sinkhorn_knopp(np.array([[np.nan, 1.0]]), SinkhornConfig())

    def test_rejects_wrong_rank(self):
        with pytest.raises(ShapeMismatchError):
            sinkhorn_knopp(np.ones(4), SinkhornConfig())


class TestSwapped:
    def test_identical_views_identical_targets(self):
        rng = np.random.default_rng(6)
        logits = rng.normal(size=(5, 3))
        t1, t2 = swapped_pseudo_labels(logits, logits.copy())
        np.testing.assert_allclose(t1, t2, atol=1e-15)

    def test_swapping_inputs_swaps_outputs(self):
        rng = np.random.default_rng(7)
        a = rng.normal(size=(4, 3))
        b = rng.normal(size=(4, 3))
        t1, t2 = swapped_pseudo_labels(a, b)
        s1, s2 = swapped_pseudo_labels(b, a)
        assert t1.tobytes() == s2.tobytes()
        assert t2.tobytes() == s1.tobytes()

    def test_composes_from_base_algorithm(self):
        rng = np.random.default_rng(8)
        a = rng.normal(size=(2, 2))
        b = rng.normal(size=(2, 2))
        cfg = SinkhornConfig()
        t1, t2 = swapped_pseudo_labels(a, b, cfg)
        assert t1.tobytes() == sinkhorn_knopp(b, cfg).tobytes()
        assert t2.tobytes() == sinkhorn_knopp(a, cfg).tobytes()

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            swapped_pseudo_labels(np.zeros((2, 3)), np.zeros((3, 3)))


class TestPadding:
    def test_labelled_example(self):
        t = zero_pad_target(np.array([0.0, 1.0, 0.0]), "labelled", 3, 2)
        np.testing.assert_array_equal(t, [0, 1, 0, 0, 0])

    def test_unlabelled_example(self):
        t = zero_pad_target(np.array([0.5, 0.5]), "unlabelled", 3, 2)
        np.testing.assert_array_equal(t, [0, 0, 0, 0.5, 0.5])

    def test_sum_preserved(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            v = rng.uniform(0, 1, size=4)
            v /= v.sum()
            for side, c_l, c_u in (("labelled", 4, 3), ("unlabelled", 3, 4)):
                padded = zero_pad_target(v, side, c_l, c_u)
                assert padded.sum() == pytest.approx(1.0, abs=1e-12)
                assert padded.shape == (7,)

    def test_batch_padding_matches_rows(self):
        rng = np.random.default_rng(10)
        T = rng.uniform(0, 1, size=(5, 3))
        T /= T.sum(axis=1, keepdims=True)
        batch = zero_pad_targets(T, "unlabelled", 2, 3)
        for i in range(5):
            np.testing.assert_array_equal(batch[i],
                                          zero_pad_target(T[i], "unlabelled", 2, 3))

    def test_wrong_width(self):
        with pytest.raises(ShapeMismatchError):
            zero_pad_target(np.array([1.0, 0.0]), "labelled", 3, 2)

    def test_bad_side(self):
        with pytest.raises(ConfigurationError):
            zero_pad_target(np.array([1.0, 0.0]), "both", 2, 2)


class TestOneHot:
    def test_basic(self):
        out = one_hot(np.array([2, 0]), 3)
        np.testing.assert_array_equal(out, [[0, 0, 1], [1, 0, 0]])

    def test_empty(self):
        assert one_hot(np.array([], dtype=int), 4).shape == (0, 4)

    def test_out_of_range(self):
        with pytest.raises(UsageError):
            one_hot(np.array([3]), 3)
