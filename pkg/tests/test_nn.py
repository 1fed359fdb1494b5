import numpy as np
import pytest

from teleosim.nn import MLP, Adam, numeric_gradient


def test_forward_shapes():
    net = MLP([3, 8, 2], seed=0)
    y, _ = net.forward(np.zeros(3))
    assert y.shape == (2,)
    yb, _ = net.forward(np.zeros((5, 3)))
    assert yb.shape == (5, 2)


def test_single_matches_batch_row():
    net = MLP([4, 6, 3], seed=1)
    rng = np.random.default_rng(2)
    xb = rng.normal(size=(7, 4))
    yb, _ = net.forward(xb)
    for i in range(7):
        yi, _ = net.forward(xb[i])
        assert np.allclose(yi, yb[i], atol=1e-14)


@pytest.mark.parametrize("out_act", ["identity", "softplus"])
def test_parameter_gradients_match_fd(out_act):
    net = MLP([3, 5, 4, 1], out_activation=out_act, seed=3)
    rng = np.random.default_rng(4)
    x = rng.normal(size=(6, 3))
    target = rng.normal(size=(6, 1))

    def loss(flat):
        net.set_params_flat(flat)
        y, _ = net.forward(x)
        return 0.5 * np.sum((y - target) ** 2)

    flat0 = net.params_flat()
    net.set_params_flat(flat0)
    y, cache = net.forward(x)
    _, grads = net.backward(cache, y - target)
    ga = net.grads_flat(grads)
    gf = numeric_gradient(loss, flat0)
    assert np.linalg.norm(ga - gf) < 1e-6 * max(np.linalg.norm(gf), 1.0)


def test_input_gradients_match_fd():
    net = MLP([3, 8, 8, 1], out_activation="softplus", seed=5)
    rng = np.random.default_rng(6)
    for _ in range(10):
        x = rng.normal(size=3)
        _, ga = net.input_gradient(x)
        gf = numeric_gradient(lambda v: net.forward(v)[0][0], x)
        denom = max(np.linalg.norm(ga), np.linalg.norm(gf), 1e-12)
        assert np.linalg.norm(ga - gf) / denom < 1e-6


def test_batched_input_gradient():
    net = MLP([2, 6, 1], seed=7)
    xb = np.random.default_rng(8).normal(size=(4, 2))
    _, gb = net.input_gradient(xb)
    for i in range(4):
        _, gi = net.input_gradient(xb[i])
        assert np.allclose(gb[i], gi, atol=1e-14)


def test_adam_fits_toy_regression():
    net = MLP([1, 16, 1], seed=9)
    rng = np.random.default_rng(10)
    x = rng.uniform(-1.0, 1.0, size=(64, 1))
    y = 0.5 * x ** 2 - 0.3 * x
    opt = Adam(net.params_flat().size, lr=1e-2)
    for _ in range(800):
        pred, cache = net.forward(x)
        _, grads = net.backward(cache, (pred - y) / len(x))
        net.set_params_flat(opt.step(net.params_flat(), net.grads_flat(grads)))
    pred, _ = net.forward(x)
    assert np.mean((pred - y) ** 2) < 1e-4


def test_seeded_init_reproducible():
    a = MLP([3, 4, 2], seed=11).params_flat()
    b = MLP([3, 4, 2], seed=11).params_flat()
    c = MLP([3, 4, 2], seed=12).params_flat()
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_serialization_roundtrip():
    net = MLP([3, 5, 1], out_activation="softplus", seed=13)
    clone = MLP.from_dict(net.to_dict())
    x = np.random.default_rng(14).normal(size=(3, 3))
    ya, _ = net.forward(x)
    yb, _ = clone.forward(x)
    assert np.array_equal(ya, yb)


def test_flat_roundtrip_and_length_check():
    net = MLP([2, 3, 1], seed=15)
    flat = net.params_flat()
    net.set_params_flat(flat)
    assert np.array_equal(net.params_flat(), flat)
    with pytest.raises(ValueError):
        net.set_params_flat(flat[:-1])


def test_rejects_bad_config():
    with pytest.raises(ValueError):
        MLP([3])
    with pytest.raises(ValueError):
        MLP([3, 1], activation="relu6")
    with pytest.raises(ValueError):
        MLP([3, 2], seed=0).input_gradient(np.zeros(3))
