"""Tests for the coupling-layer network: forward pass, training,
differentiation oracles, serialization."""

import numpy as np
import pytest

from knockint.exceptions import (ConfigurationError, ContractViolation,
                                 TrainingDivergedError)
from knockint.network import (CoupledNetwork, TrainConfig, batch_input_gradient,
                              batch_input_hessian, forward, init_network,
                              input_gradient, input_hessian, load_network,
                              predict, raw_output, save_network, train)

from conftest import random_network


# ---------------------------------------------------------------- init

def test_init_filters_equal():
    net = init_network(3, hidden_sizes=(4, 3, 2), seed=7)
    np.testing.assert_array_equal(net.z, net.z_tilde)


def test_init_deterministic():
    a = init_network(3, hidden_sizes=(4, 3, 2), seed=7)
    b = init_network(3, hidden_sizes=(4, 3, 2), seed=7)
    for wa, wb in zip(a.w, b.w):
        np.testing.assert_array_equal(wa, wb)
    np.testing.assert_array_equal(a.z, b.z)


def test_init_shapes():
    net = init_network(30, hidden_sizes=(64, 32, 16))
    assert [w.shape for w in net.w] == [(30, 64), (64, 32), (32, 16), (16, 1)]
    assert [b.shape for b in net.b] == [(64,), (32,), (16,), (1,)]


def test_init_no_coupling_first_layer_width():
    net = init_network(5, hidden_sizes=(4, 3, 2), coupling=False)
    assert net.z is None and net.z_tilde is None
    assert net.w[0].shape == (10, 4)


def test_init_invalid_sizes():
    with pytest.raises(ConfigurationError):
        init_network(0)
    with pytest.raises(ConfigurationError):
        init_network(3, hidden_sizes=(4, 0, 2))


# ---------------------------------------------------------------- forward

def test_forward_zero_network():
    net = init_network(2, hidden_sizes=(3, 3, 3))
    net.z[:] = 0.0
    net.z_tilde[:] = 0.0
    for w in net.w:
        w[:] = 0.0
    assert forward(net, np.ones(4)) == 0.0


def test_forward_hand_evaluated_passthrough():
    # p=1, single-unit layers wired as identities; positive pre-activations
    # keep every ELU in its identity branch, so the output is just z*x.
    net = CoupledNetwork(
        z=np.array([1.0]), z_tilde=np.array([0.0]),
        w=[np.array([[1.0]])] * 4,
        b=[np.zeros(1)] * 4,
        task="regression", hidden_sizes=(1, 1, 1), coupling=True,
    )
    assert forward(net, np.array([2.0, 9.0])) == pytest.approx(2.0)


def test_forward_knockoff_path_severed():
    net = random_network(p=3, seed=1)
    net.z_tilde = np.zeros(3)
    x = np.array([0.3, -0.2, 0.9, 5.0, -4.0, 7.0])
    x2 = x.copy()
    x2[3:] = [1.0, 2.0, 3.0]
    assert forward(net, x) == forward(net, x2)


def test_forward_rejects_wrong_length():
    net = random_network(p=3)
    with pytest.raises(ContractViolation):
        forward(net, np.zeros(5))


def test_binary_forward_in_unit_interval():
    net = random_network(p=3, seed=5, task="binary")
    vals = predict(net, np.random.default_rng(0).standard_normal((20, 6)))
    assert np.all((vals > 0) & (vals < 1))


# ---------------------------------------------------------------- gradients

def _finite_diff_grad(net, x, h=1e-4):
    g = np.zeros_like(x)
    for k in range(len(x)):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (raw_output(net, (x + e)[None])[0]
                - raw_output(net, (x - e)[None])[0]) / (2 * h)
    return g


def _away_from_kinks(net, x, margin=1e-2):
    from knockint.network import _filter_layer, _elu
    h = _filter_layer(net, x[None])
    for l in range(3):
        pre = h @ net.w[l] + net.b[l]
        if np.min(np.abs(pre)) < margin:
            return False
        h = _elu(pre)
    return True


def test_gradient_zero_network():
    net = init_network(2, hidden_sizes=(3, 3, 3))
    net.z[:] = net.z_tilde[:] = 0.0
    for w in net.w:
        w[:] = 0.0
    np.testing.assert_array_equal(input_gradient(net, np.ones(4)), np.zeros(4))


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    checked = 0
    for trial in range(40):
        net = random_network(p=3, hidden=(5, 4, 3), seed=trial)
        x = rng.standard_normal(6)
        if not _away_from_kinks(net, x):
            continue
        g = input_gradient(net, x)
        fd = _finite_diff_grad(net, x)
        np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-7)
        checked += 1
    assert checked >= 10


def test_gradient_scales_with_filter_weight():
    # Doubling z[j] doubles dy/dx_j when no pre-activation changes sign.
    net = random_network(p=3, seed=11)
    x = np.full(6, 0.01)  # tiny input keeps pre-activation signs stable
    g1 = input_gradient(net, x)[0]
    net2 = net.copy()
    net2.z = net.z.copy()
    net2.z[0] *= 2.0
    # keep the filter output identical by halving the input coordinate
    x2 = x.copy()
    x2[0] /= 2.0
    g2 = input_gradient(net2, x2)[0]
    assert g2 == pytest.approx(2 * g1, rel=1e-10)


def test_batch_gradient_matches_single():
    net = random_network(p=4, seed=2)
    X = np.random.default_rng(1).standard_normal((7, 8))
    G = batch_input_gradient(net, X)
    for i in range(7):
        np.testing.assert_allclose(G[i], input_gradient(net, X[i]), rtol=1e-12)


# ---------------------------------------------------------------- Hessians

def test_hessian_zero_network():
    net = init_network(2, hidden_sizes=(3, 3, 3))
    net.z[:] = net.z_tilde[:] = 0.0
    for w in net.w:
        w[:] = 0.0
    np.testing.assert_array_equal(input_hessian(net, np.ones(4)), np.zeros((4, 4)))


def test_hessian_locally_affine_region_is_zero():
    # Force every ELU input positive: the network is affine there.
    net = random_network(p=2, seed=4)
    net.w = [np.abs(w) for w in net.w]
    net.b = [np.abs(b) + 1.0 for b in net.b]
    net.z = np.abs(net.z)
    net.z_tilde = np.abs(net.z_tilde)
    x = np.abs(np.random.default_rng(0).standard_normal(4))
    H = input_hessian(net, x)
    np.testing.assert_allclose(H, np.zeros((4, 4)), atol=1e-14)


def test_hessian_matches_finite_difference_of_gradient():
    rng = np.random.default_rng(9)
    checked = 0
    for trial in range(40):
        net = random_network(p=2, hidden=(4, 4, 3), seed=100 + trial)
        x = rng.standard_normal(4)
        if not _away_from_kinks(net, x):
            continue
        H = input_hessian(net, x)
        h = 1e-4
        fd = np.zeros((4, 4))
        for k in range(4):
            e = np.zeros(4)
            e[k] = h
            fd[:, k] = (input_gradient(net, x + e) - input_gradient(net, x - e)) / (2 * h)
        scale = max(np.max(np.abs(H)), 1.0)
        np.testing.assert_allclose(H, fd, atol=1e-3 * scale)
        checked += 1
    assert checked >= 10


def test_hessian_exactly_symmetric():
    for trial in range(5):
        net = random_network(p=3, seed=trial)
        x = np.random.default_rng(trial).standard_normal(6)
        H = input_hessian(net, x)
        assert np.max(np.abs(H - H.T)) == 0.0


def test_hessian_knockoff_severance():
    net = random_network(p=3, seed=8)
    net.z_tilde = np.zeros(3)
    x = np.random.default_rng(2).standard_normal(6)
    x2 = x.copy()
    x2[3:] += 10.0
    H1, H2 = input_hessian(net, x), input_hessian(net, x2)
    np.testing.assert_array_equal(H1[:3, :3], H2[:3, :3])
    g1, g2 = input_gradient(net, x), input_gradient(net, x2)
    np.testing.assert_array_equal(g1[:3], g2[:3])


# ---------------------------------------------------------------- training

def test_train_descends_on_constant_target():
    rng = np.random.default_rng(0)
    X = rng.uniform(size=(200, 6))
    y = np.zeros(200)
    net = init_network(3, hidden_sizes=(8, 6, 4), seed=0)
    cfg = TrainConfig(epochs=10, batch_size=32, seed=0)
    _, trace = train(net, X, y, cfg)
    assert trace["train_loss"][-1] <= trace["train_loss"][0]
    assert all(np.isfinite(trace["train_loss"]))


def test_train_learns_linear_target():
    rng = np.random.default_rng(1)
    X = rng.uniform(size=(2000, 4))
    y = 3.0 * X[:, 0]
    net = init_network(2, hidden_sizes=(16, 8, 4), seed=1)
    cfg = TrainConfig(epochs=120, batch_size=64, seed=1, l1_filter_penalty=0.0)
    trained, _ = train(net, X[:1000], y[:1000], cfg)
    resid = predict(trained, X[1000:]) - y[1000:]
    assert np.mean(resid ** 2) < 0.01 * np.var(y[1000:])


def test_train_deterministic():
    rng = np.random.default_rng(2)
    X = rng.uniform(size=(300, 6))
    y = X[:, 0] * X[:, 1]
    cfg = TrainConfig(epochs=5, batch_size=50, seed=3)
    n1, t1 = train(init_network(3, hidden_sizes=(6, 5, 4), seed=3), X, y, cfg)
    n2, t2 = train(init_network(3, hidden_sizes=(6, 5, 4), seed=3), X, y, cfg)
    for wa, wb in zip(n1.w, n2.w):
        np.testing.assert_array_equal(wa, wb)
    assert t1["train_loss"] == t2["train_loss"]


def test_train_diverged_raises_with_epoch():
    rng = np.random.default_rng(4)
    X = rng.uniform(size=(100, 4))
    y = rng.uniform(size=100)
    net = init_network(2, hidden_sizes=(4, 3, 2), seed=0)
    net.w[3][:] = 1e200  # blow up the output scale so the loss overflows
    cfg = TrainConfig(epochs=3, batch_size=32, seed=0)
    with pytest.raises(TrainingDivergedError) as err:
        train(net, X, y, cfg)
    assert err.value.epoch >= 0


def test_train_binary_task():
    rng = np.random.default_rng(5)
    X = rng.uniform(size=(600, 4))
    y = (X[:, 0] > 0.5).astype(float)
    net = init_network(2, hidden_sizes=(8, 6, 4), task="binary", seed=0)
    trained, trace = train(net, X, y, TrainConfig(epochs=40, batch_size=64, seed=0))
    acc = np.mean((predict(trained, X) > 0.5) == y)
    assert acc > 0.9
    assert trace["train_loss"][-1] < trace["train_loss"][0]


def test_train_config_validation():
    for bad in (TrainConfig(learning_rate=0.0), TrainConfig(epochs=0),
                TrainConfig(batch_size=0), TrainConfig(l1_filter_penalty=-1.0),
                TrainConfig(l1_mlp_penalty=-1.0), TrainConfig(grad_clip=0.0),
                TrainConfig(validation_fraction=1.0)):
        with pytest.raises(ConfigurationError):
            bad.validate()


def test_validation_trace_present():
    rng = np.random.default_rng(6)
    X = rng.uniform(size=(200, 4))
    y = X[:, 0]
    net = init_network(2, hidden_sizes=(4, 3, 2), seed=0)
    cfg = TrainConfig(epochs=4, batch_size=32, seed=0, validation_fraction=0.25)
    _, trace = train(net, X, y, cfg)
    assert len(trace["val_loss"]) == 4
    assert all(np.isfinite(trace["val_loss"]))


# ---------------------------------------------------------------- serialization

def test_network_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.uniform(size=(200, 6))
    y = X[:, 0] + X[:, 1] * X[:, 2]
    net = init_network(3, hidden_sizes=(6, 5, 4), seed=0)
    trained, _ = train(net, X, y, TrainConfig(epochs=3, batch_size=32, seed=0))
    path = tmp_path / "net.npz"
    save_network(trained, path)
    loaded = load_network(path)
    for wa, wb in zip(trained.w, loaded.w):
        np.testing.assert_array_equal(wa, wb)
    np.testing.assert_array_equal(trained.z, loaded.z)
    np.testing.assert_array_equal(trained.z_tilde, loaded.z_tilde)
    assert loaded.task == trained.task
    assert loaded.hidden_sizes == trained.hidden_sizes
    assert loaded.y_mean == trained.y_mean and loaded.y_std == trained.y_std


def test_no_coupling_network_roundtrip(tmp_path):
    net = random_network(p=3, coupling=False, seed=1)
    path = tmp_path / "net.npz"
    save_network(net, path)
    loaded = load_network(path)
    assert loaded.z is None and loaded.z_tilde is None
    np.testing.assert_array_equal(loaded.w[0], net.w[0])
