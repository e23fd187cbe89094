import math

import numpy as np
import pytest

from avq.autoencoder import (
    AutoencoderLayer,
    EncoderChain,
    TrainingHyperparams,
    decode,
    encode,
    greedy_stack,
    init_layer,
    kl_divergence,
    loss,
    train_layer,
)
from avq.errors import DimensionError, TrainingError, ValidationError


def random_layer(rng, d, h, hyper=None):
    return AutoencoderLayer(
        rng.normal(size=(h, d)),
        rng.normal(size=h),
        rng.normal(size=(d, h)),
        rng.normal(size=d),
        hyper or TrainingHyperparams(l2_weight=0.01, sparsity_weight=0.5, sparsity_target=0.2),
    )


def finite_difference(layer, X, name, h=1e-5):
    p = layer.params()[name]
    g = np.zeros_like(p)
    it = np.nditer(p, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = p[idx]
        p[idx] = old + h
        jp, _ = loss(layer, X)
        p[idx] = old - h
        jm, _ = loss(layer, X)
        p[idx] = old
        g[idx] = (jp - jm) / (2 * h)
    return g


def max_rel_error(a, b):
    return np.max(np.abs(a - b) / np.maximum(1.0, np.abs(a) + np.abs(b)))


class TestEncodeDecode:
    def test_zero_weights_give_half(self):
        layer = AutoencoderLayer(np.zeros((3, 5)), np.zeros(3), np.zeros((5, 3)), np.zeros(5))
        np.testing.assert_array_equal(encode(layer, np.ones((5, 7))), 0.5)

    def test_zero_decoder_returns_bias(self):
        rng = np.random.default_rng(0)
        layer = random_layer(rng, 4, 2)
        layer.W_dec[:] = 0.0
        out = decode(layer, encode(layer, rng.normal(size=(4, 6))))
        np.testing.assert_array_equal(out, np.repeat(layer.b_dec[:, None], 6, axis=1))

    def test_baseline_first_layer_shape(self):
        layer = init_layer(115, 60, TrainingHyperparams())
        assert encode(layer, np.random.default_rng(1).random((115, 33))).shape == (60, 33)

    def test_sigmoid_range(self):
        rng = np.random.default_rng(2)
        layer = random_layer(rng, 6, 4)
        H = encode(layer, 50 * rng.normal(size=(6, 200)))
        assert np.all((H >= 0) & (H <= 1))
        assert np.all(np.isfinite(H))

    def test_dimension_mismatch(self):
        layer = init_layer(5, 3, TrainingHyperparams())
        with pytest.raises(DimensionError):
            encode(layer, np.zeros((4, 2)))
        with pytest.raises(DimensionError):
            decode(layer, np.zeros((5, 2)))


class TestObjective:
    def test_kl_identity(self):
        assert kl_divergence(0.05, 0.05) == 0.0

    def test_kl_closed_form(self):
        expected = 0.05 * math.log(0.25) + 0.95 * math.log(0.95 / 0.8)
        assert kl_divergence(0.05, 0.2) == pytest.approx(expected, abs=1e-15)
        assert kl_divergence(0.05, 0.2) == pytest.approx(0.09395, abs=1e-5)

    def test_perfect_reconstruction_zero_loss(self):
        # with h + 1 >= n the affine decoder can interpolate the codes exactly
        rng = np.random.default_rng(3)
        d, h, n = 3, 5, 4
        layer = AutoencoderLayer(
            rng.normal(size=(h, d)), rng.normal(size=h), np.zeros((d, h)), np.zeros(d),
            TrainingHyperparams(l2_weight=0, sparsity_weight=0),
        )
        X = rng.normal(size=(d, n))
        H1 = np.vstack([encode(layer, X), np.ones((1, n))])
        sol = np.linalg.lstsq(H1.T, X.T, rcond=None)[0].T
        layer.W_dec, layer.b_dec = sol[:, :h].copy(), sol[:, h].copy()
        J, _ = loss(layer, X)
        assert J == pytest.approx(0.0, abs=1e-20)

    def test_loss_nonnegative(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            layer = random_layer(rng, 5, 3)
            J, _ = loss(layer, rng.normal(size=(5, 8)))
            assert J >= 0

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            d, h, n = rng.integers(2, 9), rng.integers(1, 6), rng.integers(1, 13)
            layer = random_layer(rng, d, h)
            layer.W_enc *= 0.3
            X = rng.normal(size=(d, n))
            _, grads = loss(layer, X)
            for name in ("W_enc", "b_enc", "W_dec", "b_dec"):
                assert max_rel_error(grads[name], finite_difference(layer, X, name)) < 1e-6, name


class TestTraining:
    def test_subspace_reconstruction(self):
        rng = np.random.default_rng(0)
        A = rng.normal(size=(20, 5))
        X = A @ rng.uniform(-1, 1, size=(5, 200))
        X = (X - X.min(axis=1, keepdims=True)) / np.ptp(X, axis=1, keepdims=True)
        hp = TrainingHyperparams(l2_weight=0, sparsity_weight=0, learning_rate=1e-2, max_epochs=400, tolerance=1e-12)
        layer = train_layer(X, 10, hp)
        assert len(layer.loss_history) <= 401
        mse = np.mean((decode(layer, encode(layer, X)) - X) ** 2)
        assert mse < 1e-2

    def test_deterministic(self):
        X = np.random.default_rng(1).random((12, 40))
        hp = TrainingHyperparams(max_epochs=50, seed=7)
        a, b = train_layer(X, 5, hp), train_layer(X, 5, hp)
        for k in ("W_enc", "b_enc", "W_dec", "b_dec"):
            assert a.params()[k].tobytes() == b.params()[k].tobytes()

    def test_seed_changes_init(self):
        X = np.random.default_rng(1).random((12, 40))
        a = train_layer(X, 5, TrainingHyperparams(max_epochs=5, seed=1))
        b = train_layer(X, 5, TrainingHyperparams(max_epochs=5, seed=2))
        assert not np.array_equal(a.W_enc, b.W_enc)

    def test_loss_nonincreasing_on_toy_problem(self):
        rng = np.random.default_rng(2)
        X = rng.random((6, 50))
        hp = TrainingHyperparams(l2_weight=0, sparsity_weight=0, max_epochs=300, tolerance=1e-14)
        hist = np.array(train_layer(X, 6, hp).loss_history)
        assert np.all(np.diff(hist) <= 1e-8)

    def test_sparsity_pressure(self):
        X = np.random.default_rng(3).random((115, 1500))
        layer = train_layer(X, 25, TrainingHyperparams())
        rho_hat = encode(layer, X).mean()
        assert 0.02 <= rho_hat <= 0.15

    def test_few_samples_warns(self):
        with pytest.warns(UserWarning):
            train_layer(np.random.default_rng(0).random((4, 3)), 5, TrainingHyperparams(max_epochs=2))

    def test_non_finite_input_rejected(self):
        X = np.ones((3, 4))
        X[0, 0] = np.nan
        with pytest.raises(ValidationError):
            train_layer(X, 2)

    def test_divergence_reports_epoch(self):
        X = np.random.default_rng(0).random((3, 10)) * 1e200
        with pytest.raises(TrainingError) as exc:
            train_layer(X, 2, TrainingHyperparams(max_epochs=5))
        assert exc.value.epoch == 0

    def test_hyperparameter_validation(self):
        with pytest.raises(ValidationError):
            TrainingHyperparams(sparsity_target=1.0)
        with pytest.raises(ValidationError):
            TrainingHyperparams(l2_weight=-1)


class TestGreedyStack:
    @pytest.mark.parametrize(
        "dims,out",
        [([60, 25], 25), ([], 115), ([90, 40, 25], 25)],
    )
    def test_output_dims(self, dims, out):
        X = np.random.default_rng(0).random((115, 40))
        chain = greedy_stack(X, dims, TrainingHyperparams(max_epochs=3))
        assert chain.dims == [115, *dims]
        assert len(chain) == len(dims)
        assert chain.encode(X).shape == (out, 40)

    def test_empty_chain_is_identity(self):
        X = np.random.default_rng(1).random((7, 9))
        chain = greedy_stack(X, [], TrainingHyperparams())
        np.testing.assert_array_equal(chain.encode(X), X)

    def test_second_layer_trained_on_codes(self):
        X = np.random.default_rng(2).random((10, 30))
        hp = TrainingHyperparams(max_epochs=5)
        chain = greedy_stack(X, [6, 3], hp)
        H1 = chain.layers[0].encode(X)
        ref = train_layer(H1, 3, TrainingHyperparams(max_epochs=5, seed=1))
        np.testing.assert_array_equal(chain.layers[1].W_enc, ref.W_enc)

    def test_chain_rejects_mismatched_layers(self):
        hp = TrainingHyperparams()
        with pytest.raises(DimensionError):
            EncoderChain([init_layer(5, 3, hp), init_layer(4, 2, hp)], 5)
