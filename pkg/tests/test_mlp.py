import warnings

import numpy as np
import pytest

import oracles
from nmfk_mlp import mlp
from nmfk_mlp.errors import Divergence, FormatError, ShapeMismatch
from nmfk_mlp.numerics import make_rng
from nmfk_mlp.windows import FEATURE_NORMALIZATION, N_CLASSES, N_FEATURES

TINY = (N_FEATURES, 8, 8, 8, N_CLASSES)


def batch(seed, n=16, dims=N_FEATURES):
    rng = make_rng(seed)
    return rng.normal(size=(n, dims)), rng.integers(0, N_CLASSES, size=n)


def flat_params(model):
    return model.weights + model.biases


def numeric_gradient(model, x, y, h=1e-5):
    grads = []
    for p in flat_params(model):
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = mlp.loss(model, x, y)
            p[idx] = old - h
            down = mlp.loss(model, x, y)
            p[idx] = old
            g[idx] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def gradient_matches(model, x, y):
    gw, gb = mlp.gradient(model, x, y)
    for a, n in zip(gw + gb, numeric_gradient(model, x, y)):
        ok = np.isclose(a, n, rtol=1e-5, atol=1e-8)
        if not ok.all():
            return False
    return True


def separable_set(seed, n=400):
    rng = make_rng(seed)
    x = np.vstack([rng.normal(-2, 0.3, size=(n // 2, N_FEATURES)), rng.normal(2, 0.3, size=(n // 2, N_FEATURES))])
    y = np.array([0] * (n // 2) + [6] * (n // 2))
    return x, y


class TestForward:
    def test_zero_model_is_uniform(self):
        model = mlp.init_model(TINY, seed=0)
        model.weights = [np.zeros_like(w) for w in model.weights]
        p = mlp.forward(model, np.ones(N_FEATURES))
        assert np.allclose(p, 1 / 7, atol=1e-15)

    def test_softmax_shift_invariance(self):
        model = mlp.init_model(TINY, seed=1)
        x, _ = batch(1)
        before = mlp.forward(model, x)
        model.biases[-1] = model.biases[-1] + 3.7
        assert np.allclose(mlp.forward(model, x), before, atol=1e-14)

    def test_matches_loop_oracle(self):
        model = mlp.init_model(TINY, seed=2)
        model.biases = [make_rng(2, i).normal(size=b.shape) for i, b in enumerate(model.biases)]
        x, _ = batch(2, n=5)
        got = mlp.forward(model, x)
        for row, p in zip(x, got):
            ref = oracles.mlp_forward([w.tolist() for w in model.weights], [b.tolist() for b in model.biases],
                                      row.tolist())
            assert np.allclose(p, ref, atol=1e-10, rtol=0)

    def test_probabilities(self):
        model = mlp.init_model(seed=3)
        x, _ = batch(3, n=50)
        p = mlp.forward(model, x * 10)
        assert np.all(p >= 0)
        assert np.allclose(p.sum(axis=1), 1.0, atol=1e-9)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            mlp.forward(mlp.init_model(TINY), np.ones(20))

    def test_default_architecture(self):
        model = mlp.init_model()
        assert model.layer_dims == [21, 300, 200, 100, 7]
        assert model.activations == ["relu", "relu", "relu", "softmax"]


class TestLoss:
    def test_perfect_classifier(self):
        model = mlp.init_model(TINY, seed=0, l2_lambda=0.0)
        model.weights = [np.zeros_like(w) for w in model.weights]
        model.biases[-1] = np.array([0.0, 0, 0, 100, 0, 0, 0])
        assert mlp.loss(model, np.zeros((3, N_FEATURES)), [3, 3, 3]) == pytest.approx(0.0, abs=1e-12)

    def test_uniform_model(self):
        model = mlp.init_model(TINY, l2_lambda=0.0)
        model.weights = [np.zeros_like(w) for w in model.weights]
        assert mlp.loss(model, np.ones((4, N_FEATURES)), [0, 1, 2, 3]) == pytest.approx(np.log(7), abs=1e-12)

    def test_matches_summation_oracle(self):
        model = mlp.init_model(TINY, seed=4, l2_lambda=0.01)
        x, y = batch(4, n=6)
        probs = [oracles.mlp_forward([w.tolist() for w in model.weights], [b.tolist() for b in model.biases],
                                     row.tolist()) for row in x]
        ref = oracles.cross_entropy(probs, y.tolist(), [w.tolist() for w in model.weights], 0.01)
        assert mlp.loss(model, x, y) == pytest.approx(ref, abs=1e-10)

    def test_l2_never_decreases(self):
        x, y = batch(5)
        a = mlp.init_model(TINY, seed=5, l2_lambda=0.0)
        b = a.copy()
        b.l2_lambda = 0.05
        assert 0 <= mlp.loss(a, x, y) <= mlp.loss(b, x, y)


class TestGradient:
    @pytest.mark.parametrize("seed", range(3))
    def test_finite_differences(self, seed):
        model = mlp.init_model(TINY, seed=seed, l2_lambda=0.01)
        model.biases = [make_rng(seed, 9, i).normal(0, 0.1, size=b.shape) for i, b in enumerate(model.biases)]
        x, y = batch(seed, n=10)
        assert gradient_matches(model, x, y)

    def test_dead_input_layer(self):
        model = mlp.init_model(TINY, seed=1, l2_lambda=0.03)
        gw, _ = mlp.gradient(model, np.zeros((5, N_FEATURES)), [0, 1, 2, 3, 4])
        assert np.array_equal(gw[0], (0.03 / 5) * model.weights[0])

    def test_duplicates_average(self):
        model = mlp.init_model(TINY, seed=2, l2_lambda=0.0)
        x, y = batch(2, n=1)
        single = mlp.gradient(model, x, y)
        double = mlp.gradient(model, np.vstack([x, x]), np.concatenate([y, y]))
        for a, b in zip(single[0] + single[1], double[0] + double[1]):
            assert np.allclose(a, b, rtol=1e-12, atol=1e-15)

    def test_penalty_scales_with_batch(self):
        # the weight-decay part of the gradient is l2_lambda / N times W
        model = mlp.init_model(TINY, seed=2, l2_lambda=0.02)
        free = model.copy()
        free.l2_lambda = 0.0
        x, y = batch(3, n=8)
        for a, b, w in zip(mlp.gradient(model, x, y)[0], mlp.gradient(free, x, y)[0], model.weights):
            assert np.allclose(a - b, 0.02 / 8 * w, rtol=1e-12, atol=1e-15)


class TestTrain:
    def test_separable_toy(self):
        x, y = separable_set(0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            model = mlp.train(x, y, mlp.TrainConfig(hidden=(8, 8, 8), max_epochs=50, seed=1, batch_size=20))
        assert mlp.accuracy(model, x, y) >= 0.99
        assert model.metadata["epochs_trained"] <= 50

    def test_missing_classes_warn(self):
        x, y = separable_set(1, n=40)
        with pytest.warns(UserWarning, match="absent"):
            mlp.train(x, y, mlp.TrainConfig(hidden=(4,), max_epochs=1))

    def test_deterministic(self):
        x, y = batch(6, n=120)
        cfg = mlp.TrainConfig(hidden=(16, 8), max_epochs=5, seed=3)
        a = mlp.train(x[:100], y[:100], cfg, x[100:], y[100:])
        b = mlp.train(x[:100], y[:100], cfg, x[100:], y[100:])
        assert mlp.dumps_model(a) == mlp.dumps_model(b)

    def test_best_snapshot(self):
        x, y = batch(7, n=300)
        cfg = mlp.TrainConfig(hidden=(32, 16), max_epochs=30, seed=4, batch_size=20, lr_initial=0.01)
        model = mlp.train(x[:200], y[:200], cfg, x[200:], y[200:])
        meta = model.metadata
        accs = [h["accuracy"] for h in meta["history"]]
        assert meta["best_accuracy"] == max(accs)
        assert accs[meta["best_epoch"] - 1] == max(accs)
        assert mlp.accuracy(model, x[200:], y[200:]) == max(accs)
        assert meta["accuracy_source"] == "validation"

    def test_schedule(self):
        x, y = batch(8, n=200)
        cfg = mlp.TrainConfig(hidden=(4,), max_epochs=200, seed=0, lr_initial=1e-6)
        model = mlp.train(x[:150], y[:150], cfg, x[150:], y[150:])
        hist = model.metadata["history"]
        lrs = [h["lr"] for h in hist]
        # lr drops by exactly 5 after stalls, and stopping happens after 10 stalled epochs
        assert all(a == b or a / b == pytest.approx(5.0) for a, b in zip(lrs, lrs[1:]))
        assert lrs[-1] < lrs[0]
        assert len(hist) < 200

    def test_max_epochs_one(self):
        x, y = batch(9, n=50)
        model = mlp.train(x, y, mlp.TrainConfig(hidden=(4,), max_epochs=1))
        assert model.metadata["epochs_trained"] == 1

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence(self):
        x, y = batch(10, n=20)
        with pytest.raises(Divergence):
            mlp.train(x, y, mlp.TrainConfig(hidden=(4,), max_epochs=3, lr_initial=1e200))

    def test_label_permutation_equivariance(self):
        x, y = batch(11, n=140)
        perm = make_rng(11, 1).permutation(N_CLASSES)
        cfg = mlp.TrainConfig(hidden=(12, 8), max_epochs=4, seed=2, batch_size=30)
        init = mlp.init_model((N_FEATURES, 12, 8, N_CLASSES), seed=2, l2_lambda=cfg.l2_lambda)
        init.biases[-1] = make_rng(11, 2).normal(size=N_CLASSES)
        permuted = init.copy()
        # class c becomes perm[c]: output unit perm[c] takes the parameters of unit c
        permuted.weights[-1] = np.empty_like(init.weights[-1])
        permuted.weights[-1][:, perm] = init.weights[-1]
        permuted.biases[-1] = np.empty_like(init.biases[-1])
        permuted.biases[-1][perm] = init.biases[-1]
        a = mlp.train(x, y, cfg, init=init)
        b = mlp.train(x, perm[y], cfg, init=permuted)
        assert np.allclose(mlp.forward(b, x)[:, perm], mlp.forward(a, x), atol=1e-8)
        assert np.array_equal(mlp.predict(b, x), perm[mlp.predict(a, x)])


class TestPersistence:
    def test_roundtrip(self, tmp_path):
        model = mlp.init_model(seed=3)
        model.metadata = {"note": "x"}
        path = tmp_path / "m.json"
        mlp.save(model, path)
        back = mlp.load(path)
        x = make_rng(0).normal(size=(100, N_FEATURES))
        assert np.array_equal(mlp.forward(back, x), mlp.forward(model, x))
        assert back.feature_normalization_tag == FEATURE_NORMALIZATION
        assert back.metadata == {"note": "x"}

    def test_truncated(self, tmp_path):
        path = tmp_path / "m.json"
        mlp.save(mlp.init_model(TINY), path)
        text = path.read_text()
        path.write_text(text[: len(text) // 2])
        with pytest.raises(FormatError):
            mlp.load(path)

    def test_version_mismatch(self, tmp_path):
        path = tmp_path / "m.json"
        mlp.save(mlp.init_model(TINY), path)
        path.write_text(path.read_text().replace('"version": 1', '"version": 99'))
        with pytest.raises(FormatError, match="version"):
            mlp.load(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FormatError, match="nope.json"):
            mlp.load(tmp_path / "nope.json")
