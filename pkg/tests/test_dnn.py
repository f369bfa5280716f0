import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from deepfrechet.dnn import (
    IMPROVEMENT_TOL,
    Mlp,
    MlpConfig,
    best_validation_risk,
    forward,
    grid_search,
    hyperparameter_grid,
    loss_and_grad,
    make_rng,
    train,
    train_val_split,
)
from deepfrechet.exceptions import InputError, NumericError, ShapeError

from oracles import finite_difference_grads


def unit_relu_net():
    cfg = MlpConfig(layers=1, width=1, dropout=0.0)
    return Mlp([np.array([[1.0]]), np.array([[1.0]])], [np.zeros(1), np.zeros(1)], cfg)


def random_net(rng, p, layers, width):
    cfg = MlpConfig(layers=layers, width=width, dropout=0.0)
    return Mlp.init(p, cfg, rng)


class TestForward:
    def test_zero_network(self, rng):
        net = Mlp.init(3, MlpConfig(), rng)
        for w in net.weights:
            w[:] = 0.0
        for b in net.biases:
            b[:] = 0.0
        assert forward(net, rng.normal(size=3)) == 0.0

    def test_relu_blocks_negative(self):
        assert forward(unit_relu_net(), [-3.0]) == 0.0

    def test_relu_passes_positive(self):
        assert forward(unit_relu_net(), [2.0]) == 2.0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            forward(unit_relu_net(), [1.0, 2.0])

    def test_non_finite(self):
        net = unit_relu_net()
        net.weights[0][:] = 1e308
        net.weights[1][:] = 1e308
        with pytest.raises(NumericError):
            forward(net, [10.0])

    def test_eval_mode_ignores_rng(self, rng):
        net = Mlp.init(4, MlpConfig(dropout=0.4), rng)
        x = rng.normal(size=4)
        assert forward(net, x, rng=1) == forward(net, x, rng=2) == forward(net, x)

    def test_dropout_is_stochastic_and_seeded(self, rng):
        net = Mlp.init(4, MlpConfig(dropout=0.4, width=64), rng)
        x = rng.normal(size=4)
        a, b = forward(net, x, True, rng=1), forward(net, x, True, rng=2)
        assert a != b
        assert forward(net, x, True, rng=1) == a


class TestLossAndGrad:
    def test_perfect_fit(self, rng):
        net = Mlp.init(2, MlpConfig(dropout=0.0), rng)
        X = rng.normal(size=(5, 2))
        z = net.predict(X)
        risk, grads = loss_and_grad(net, X, z)
        assert risk == 0.0
        for g in grads:
            np.testing.assert_array_equal(g, 0.0)

    def test_single_sample_output_layer(self):
        # identity hidden layer on positive inputs: output layer sees (x, 1)
        cfg = MlpConfig(layers=1, width=2, dropout=0.0)
        net = Mlp([np.eye(2), np.array([[0.5, -1.0]])], [np.zeros(2), np.array([0.3])], cfg)
        x, z = np.array([[2.0, 3.0]]), np.array([1.0])
        ghat = 0.5 * 2 - 3 + 0.3
        _, grads = loss_and_grad(net, x, z)
        np.testing.assert_allclose(grads[1], 2 * (ghat - 1.0) * x, atol=1e-15)
        np.testing.assert_allclose(grads[3], [2 * (ghat - 1.0)], atol=1e-15)

    def test_empty_batch(self):
        with pytest.raises(InputError):
            loss_and_grad(unit_relu_net(), np.zeros((0, 1)), np.zeros(0))

    @given(st.integers(0, 2**31), st.integers(1, 4), st.integers(1, 3), st.integers(1, 6), st.integers(1, 7))
    def test_matches_finite_differences(self, seed, p, layers, width, batch):
        rng = np.random.default_rng(seed)
        net = random_net(rng, p, layers, width)
        X, z = rng.normal(size=(batch, p)), rng.normal(size=batch)
        _, grads = loss_and_grad(net, X, z)
        fd = finite_difference_grads(lambda: loss_and_grad(net, X, z)[0], net.params)
        for g, f in zip(grads, fd):
            np.testing.assert_allclose(g, f, rtol=1e-4, atol=1e-7)


class TestSplit:
    @given(st.integers(5, 300), st.floats(0.05, 0.95), st.integers(0, 1000))
    def test_partition(self, n, frac, seed):
        try:
            s = train_val_split(n, frac, seed)
        except InputError:
            assert round(frac * n) in (0, n)
            return
        assert set(s.train).isdisjoint(s.val)
        assert sorted(np.concatenate([s.train, s.val])) == list(range(n))
        assert abs(len(s.val) - frac * n) <= 1

    def test_degenerate(self):
        with pytest.raises(InputError):
            train_val_split(5, 0.05, 0)


class TestTrain:
    def test_constant_target(self, rng):
        X = rng.normal(size=(40, 3))
        net = train(X, np.full(40, 2.5), MlpConfig(seed=1))
        assert np.max(np.abs(net.predict(X) - 2.5)) < 0.05

    def test_linear_target(self, rng):
        X = rng.uniform(size=(500, 2))
        z = 2 * X[:, 0] - X[:, 1] + 1
        net = train(X, z, MlpConfig(seed=0))
        assert np.mean((net.predict(X) - z) ** 2) < 0.01

    def test_patience_zero(self, rng):
        X = rng.normal(size=(60, 2))
        net = train(X, X[:, 0] ** 2, MlpConfig(patience=0, seed=3, max_epochs=200))
        vals = [h["val"] for h in net.history]
        ref = vals[0]
        stop = None
        for e, v in enumerate(vals[1:], start=2):
            if v < ref - IMPROVEMENT_TOL:
                ref = v
            else:
                stop = e
                break
        assert stop is not None and len(vals) == stop

    def test_returns_best_epoch(self, rng):
        X = rng.normal(size=(80, 3))
        z = np.sin(X[:, 0]) + 0.3 * rng.normal(size=80)
        cfg = MlpConfig(seed=5, max_epochs=150)
        net = train(X, z, cfg)
        split = train_val_split(80, cfg.val_fraction, make_rng(cfg.seed))
        val = np.mean((net.predict(X[split.val]) - z[split.val]) ** 2) / net.z_scale**2
        assert val == pytest.approx(min(h["val"] for h in net.history), rel=1e-10)
        assert best_validation_risk(net) == pytest.approx(val * net.z_scale**2, rel=1e-10)

    def test_deterministic(self, rng):
        X = rng.normal(size=(50, 2))
        z = X[:, 0] - X[:, 1] ** 2
        a, b = train(X, z, MlpConfig(seed=9, max_epochs=30)), train(X, z, MlpConfig(seed=9, max_epochs=30))
        assert a.history == b.history
        for wa, wb in zip(a.params, b.params):
            np.testing.assert_array_equal(wa, wb)

    def test_too_few_samples(self):
        with pytest.raises(InputError):
            train(np.zeros((4, 1)), np.arange(4.0))

    def test_serialization_round_trip(self, rng):
        X = rng.normal(size=(30, 2))
        net = train(X, X.sum(axis=1), MlpConfig(seed=2, max_epochs=20))
        again = Mlp.from_dict(net.to_dict())
        np.testing.assert_array_equal(again.predict(X), net.predict(X))
        assert again.history == net.history


class TestConfig:
    def test_dict_round_trip(self):
        cfg = MlpConfig(layers=4, width=16, dropout=0.3, learning_rate=5e-4, seed=11)
        assert MlpConfig.from_dict(cfg.to_dict()) == cfg

    def test_unknown_key_names_field(self):
        with pytest.raises(InputError) as err:
            MlpConfig.from_dict({"layers": 3, "neurons": 8})
        assert err.value.field == "neurons"

    @pytest.mark.parametrize("kwargs", [{"layers": 0}, {"width": 0}, {"dropout": 1.0}, {"val_fraction": 0.0}])
    def test_invalid(self, kwargs):
        with pytest.raises(InputError):
            MlpConfig(**kwargs)

    def test_candidate_grid(self):
        grid = hyperparameter_grid()
        assert len(grid) == 256
        assert {c.width for c in grid} == {8, 16, 32, 64}
        assert {c.layers for c in grid} == {3, 4, 5, 6}
        assert {c.dropout for c in grid} == {0.1, 0.2, 0.3, 0.4}
        assert {c.learning_rate for c in grid} == {1e-4, 5e-4, 1e-3, 5e-3}


class TestGridSearch:
    def test_single_candidate(self, rng):
        cfg = MlpConfig(max_epochs=5)
        assert grid_search(rng.normal(size=(20, 2)), rng.normal(size=20), [cfg]) is cfg

    def test_zero_learning_rate_loses(self, rng):
        X = rng.normal(size=(100, 2))
        z = 3 * X[:, 0] + X[:, 1]
        frozen, live = MlpConfig(learning_rate=0.0, max_epochs=50), MlpConfig(learning_rate=1e-3, max_epochs=50)
        assert grid_search(X, z, [frozen, live]) is live

    def test_tie_goes_to_earlier(self, rng):
        X = rng.normal(size=(20, 2))
        a, b = MlpConfig(max_epochs=5, seed=1), MlpConfig(max_epochs=5, seed=1)
        assert grid_search(X, X[:, 0], [a, b]) is a

    def test_empty(self):
        with pytest.raises(InputError):
            grid_search(np.zeros((10, 1)), np.zeros(10), [])
