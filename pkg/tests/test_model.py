import numpy as np
import pytest

from conftest import central_difference_gradient, relative_error, tape_gradients

from ncdkit.autodiff import Tape, backward, tensor_sum
from ncdkit.exceptions import CheckpointMismatchError, ConfigurationError, ShapeMismatchError
from ncdkit.model import (
    ModelDims,
    encode_batch,
    forward,
    forward_batch,
    init_model,
    load_checkpoint,
    save_checkpoint,
)


def small_model(seed=0, num_over_heads=0):
    return init_model(input_dim=6, n_labelled_classes=3, n_novel_classes=2,
                      feat_dim=5, hidden_dim=4, encoder_hidden=7,
                      num_over_heads=num_over_heads, seed=seed)


def zero_model(**kwargs):
    params = small_model(**kwargs)
    for t in params.tensors():
        t.data = np.zeros_like(t.data)
    return params


class TestInit:
    def test_same_seed_bit_identical(self):
        a = small_model(seed=41)
        b = small_model(seed=41)
        for (na, ta), (nb, tb) in zip(a.named_tensors(), b.named_tensors()):
            assert na == nb
            assert ta.data.tobytes() == tb.data.tobytes()

    def test_different_seed_differs(self):
        a = small_model(seed=1)
        b = small_model(seed=2)
        assert a.encoder[0][0].data.tobytes() != b.encoder[0][0].data.tobytes()

    def test_biases_zero(self):
        params = small_model()
        for name, t in params.named_tensors():
            if name.endswith("bias"):
                assert not t.data.any()

    def test_weight_bound(self):
        params = small_model(seed=3)
        for name, t in params.named_tensors():
            if name.endswith("weight"):
                fan_in, fan_out = t.shape
                bound = np.sqrt(6.0 / (fan_in + fan_out))
                assert np.abs(t.data).max() <= bound

    def test_rejects_small_class_counts(self):
        with pytest.raises(ConfigurationError):
            init_model(input_dim=4, n_labelled_classes=1, n_novel_classes=3)
        with pytest.raises(ConfigurationError):
            init_model(input_dim=4, n_labelled_classes=3, n_novel_classes=1)

    def test_over_heads_shapes(self):
        params = init_model(input_dim=6, n_labelled_classes=3, n_novel_classes=4,
                            feat_dim=5, hidden_dim=4, over_factor=3,
                            num_over_heads=2, seed=0)
        assert len(params.over_heads) == 2
        for _, _, w2, b2 in params.over_heads:
            assert w2.shape == (4, 12)
            assert b2.shape == (12,)

    def test_copy_is_independent(self):
        params = small_model(seed=5)
        clone = params.copy()
        clone.encoder[0][0].data[0, 0] += 1.0
        assert params.encoder[0][0].data[0, 0] != clone.encoder[0][0].data[0, 0]


class TestForward:
    def test_zero_model_uniform(self):
        params = zero_model()
        out = forward_batch(params, np.ones((4, 6)), tau=0.1)
        np.testing.assert_allclose(out.probs.data, np.full((4, 5), 0.2), atol=1e-15)
        np.testing.assert_allclose(out.probs_labelled.data, np.full((4, 3), 1 / 3))
        np.testing.assert_allclose(out.probs_novel.data, np.full((4, 2), 0.5))

    def test_probability_rows_sum_to_one(self):
        rng = np.random.default_rng(7)
        params = small_model(seed=7)
        out = forward_batch(params, rng.normal(size=(9, 6)), tau=0.1)
        for probs in (out.probs, out.probs_labelled, out.probs_novel):
            np.testing.assert_allclose(probs.data.sum(axis=1),
                                       np.ones(9), atol=1e-12)

    def test_concatenation_order(self):
        rng = np.random.default_rng(8)
        params = small_model(seed=8)
        out = forward_batch(params, rng.normal(size=(3, 6)), tau=0.1)
        np.testing.assert_array_equal(out.logits.data[:, :3],
                                      out.logits_labelled.data)
        np.testing.assert_array_equal(out.logits.data[:, 3:],
                                      out.logits_novel.data)

    def test_restricted_probs_renormalize_to_head_probs(self):
        # the joint softmax normalizer cancels when a block is
        # renormalized, so the restriction collapses onto the per-head
        # softmax; the separate fields matter for gradient routing, not
        # for their values
        rng = np.random.default_rng(9)
        params = small_model(seed=9)
        out = forward_batch(params, rng.normal(size=(5, 6)), tau=0.1)
        restricted = out.probs.data[:, :3]
        restricted = restricted / restricted.sum(axis=1, keepdims=True)
        np.testing.assert_allclose(restricted, out.probs_labelled.data, atol=1e-12)

    def test_single_sample_matches_batch_of_one(self):
        rng = np.random.default_rng(10)
        params = small_model(seed=10)
        X = rng.normal(size=(4, 6))
        batch_one = forward_batch(params, X[2:3], tau=0.1)
        single = forward(params, X[2], tau=0.1)
        np.testing.assert_array_equal(single.probs.data, batch_one.probs.data)
        np.testing.assert_array_equal(single.logits.data, batch_one.logits.data)
        full = forward_batch(params, X, tau=0.1)
        np.testing.assert_allclose(single.probs.data[0], full.probs.data[2],
                                   rtol=1e-12, atol=1e-15)

    def test_row_permutation_equivariance(self):
        rng = np.random.default_rng(11)
        params = small_model(seed=11)
        X = rng.normal(size=(6, 6))
        perm = rng.permutation(6)
        out = forward_batch(params, X, tau=0.2)
        out_perm = forward_batch(params, X[perm], tau=0.2)
        np.testing.assert_array_equal(out.probs.data[perm], out_perm.probs.data)

    def test_empty_batch_flows_through(self):
        params = small_model()
        out = forward_batch(params, np.empty((0, 6)), tau=0.1)
        assert len(out) == 0
        assert out.probs.data.shape == (0, 5)

    def test_wrong_width_rejected(self):
        params = small_model()
        with pytest.raises(ShapeMismatchError):
            forward_batch(params, np.ones((2, 5)), tau=0.1)
        with pytest.raises(ShapeMismatchError):
            forward(params, np.ones(4), tau=0.1)

    def test_over_head_logit_width(self):
        params = init_model(input_dim=6, n_labelled_classes=3, n_novel_classes=2,
                            feat_dim=5, hidden_dim=4, over_factor=3,
                            num_over_heads=1, seed=0)
        out = forward_batch(params, np.ones((2, 6)), tau=0.1)
        assert len(out.over_logits) == 1
        assert out.over_logits[0].shape == (2, 6)

    def test_encode_batch_matches_features(self):
        rng = np.random.default_rng(12)
        params = small_model(seed=12)
        X = rng.normal(size=(5, 6))
        out = forward_batch(params, X, tau=0.1)
        np.testing.assert_allclose(encode_batch(params, X), out.features.data)

    def test_forward_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(13)
        params = small_model(seed=13)
        X = rng.normal(size=(3, 6))
        weights = params.tensors()
        direction = rng.normal(size=(3, 5))

        def build_loss():
            out = forward_batch(params, X, tau=0.1)
            return tensor_sum(out.probs * direction)

        analytic = tape_gradients(build_loss, weights)
        numeric = central_difference_gradient(
            lambda: float(build_loss().data), weights)
        for a, n in zip(analytic, numeric):
            assert relative_error(a, n) < 1e-4


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        params = small_model(seed=21, num_over_heads=1)
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, params, tau=0.1)
        loaded, tau = load_checkpoint(path)
        assert tau == 0.1
        for (na, ta), (nb, tb) in zip(params.named_tensors(), loaded.named_tensors()):
            assert na == nb
            assert ta.data.tobytes() == tb.data.tobytes()
        again = tmp_path / "again.ckpt"
        save_checkpoint(again, loaded, tau=tau)
        assert path.read_bytes() == again.read_bytes()

    def test_save_is_deterministic(self, tmp_path):
        params = small_model(seed=22)
        p1 = tmp_path / "a.ckpt"
        p2 = tmp_path / "b.ckpt"
        save_checkpoint(p1, params, tau=0.1)
        save_checkpoint(p2, params, tau=0.1)
        assert p1.read_bytes() == p2.read_bytes()

    def test_dims_preserved(self, tmp_path):
        params = small_model(seed=23)
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, params, tau=0.25)
        loaded, tau = load_checkpoint(path)
        assert loaded.dims == params.dims
        assert tau == 0.25

    def test_rejects_garbage(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"not a checkpoint")
        with pytest.raises(CheckpointMismatchError):
            load_checkpoint(path)

    def test_rejects_truncation(self, tmp_path):
        params = small_model(seed=24)
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, params, tau=0.1)
        data = path.read_bytes()
        path.write_bytes(data[:-16])
        with pytest.raises(CheckpointMismatchError):
            load_checkpoint(path)

    def test_loaded_model_forward_identical(self, tmp_path):
        rng = np.random.default_rng(25)
        params = small_model(seed=25)
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, params, tau=0.1)
        loaded, tau = load_checkpoint(path)
        X = rng.normal(size=(4, 6))
        a = forward_batch(params, X, tau=0.1).probs.data
        b = forward_batch(loaded, X, tau=tau).probs.data
        assert a.tobytes() == b.tobytes()


class TestDims:
    def test_total_classes(self):
        dims = ModelDims(input_dim=4, encoder_hidden=8, feat_dim=4, hidden_dim=4,
                         n_labelled_classes=3, n_novel_classes=5)
        assert dims.n_total_classes == 8
