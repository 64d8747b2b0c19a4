import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fibbeam.antenna import ArrayGeometry, ElementPattern, Panel, attach_grid, build_device, make_device
from fibbeam.neural import (
    MlpParams,
    NetShape,
    NumericalError,
    TrainConfig,
    build_baseline_specific,
    cross_entropy,
    forward,
    gradient,
    indoor_shapes,
    init_params,
    load_model,
    predict_joint,
    predict_sub6,
    save_model,
    sub6_shapes,
    train,
)
from fibbeam.sphgrid import fibonacci_grid

import oracles


def random_params(shape, seed, standardise=False):
    p = init_params(shape, np.random.default_rng(seed))
    for b in p.biases:
        b += np.random.default_rng(seed + 1).normal(0, 0.1, b.shape)
    if standardise:
        p.feature_mean = np.full(shape.input_dim, 0.3)
        p.feature_std = np.full(shape.input_dim, 1.7)
    return p


def gradient_check(shape, seed, batch=6):
    rng = np.random.default_rng(seed)
    params = random_params(shape, seed, standardise=True)
    x = rng.normal(size=(batch, shape.input_dim))
    labels = (rng.random((batch, shape.output_dim)) < 0.4).astype(float)
    labels[np.arange(batch), rng.integers(0, shape.output_dim, batch)] = 1.0
    idx = rng.integers(0, shape.embedding_vocab, batch) if shape.embedding_vocab else None
    _, grads = gradient(params, x, labels, idx)
    fd = oracles.finite_difference(lambda: gradient(params, x, labels, idx)[0], params.arrays())
    return oracles.relative_error(grads, fd)


# ---------------------------------------------------------------- shapes and forward


def test_shape_validation():
    with pytest.raises(ValueError):
        NetShape(0, 3)
    assert NetShape(9, 20, hidden_width=128, embedding_vocab=8).embedding_dim == 64
    dims = NetShape(9, 20, hidden_layers=3, hidden_width=16, embedding_vocab=8).layer_dims()
    assert dims == [(9, 16), (24, 16), (16, 16), (16, 20)]


def test_zero_params_uniform_output():
    shape = NetShape(5, 7, hidden_layers=2, hidden_width=8)
    p = init_params(shape, np.random.default_rng(0))
    for a in p.arrays():
        a[...] = 0
    assert np.allclose(forward(p, np.ones(5)), 1 / 7)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 30))
def test_output_on_simplex(seed, out_dim):
    shape = NetShape(4, out_dim, hidden_layers=2, hidden_width=6, embedding_vocab=3)
    p = random_params(shape, seed)
    x = np.random.default_rng(seed).normal(size=(5, 4)) * 10
    probs = forward(p, x, np.arange(5) % 3)
    assert np.all(probs >= 0)
    assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-9)


def test_output_permutation_symmetry():
    shape = NetShape(3, 5, hidden_layers=2, hidden_width=8)
    p = random_params(shape, 1)
    x = np.random.default_rng(1).normal(size=3)
    before = forward(p, x)
    q = p.copy()
    q.weights[-1][:, [1, 3]] = q.weights[-1][:, [3, 1]]
    q.biases[-1][[1, 3]] = q.biases[-1][[3, 1]]
    after = forward(q, x)
    assert np.allclose(after[[3, 1]], before[[1, 3]]) and after[0] == pytest.approx(before[0])


def test_beam_index_required_iff_embedding():
    p = random_params(NetShape(3, 4, hidden_layers=2, hidden_width=4, embedding_vocab=2), 0)
    with pytest.raises(ValueError):
        forward(p, np.zeros(3))
    with pytest.raises(ValueError):
        forward(p, np.zeros(3), 2)
    q = random_params(NetShape(3, 4, hidden_layers=2, hidden_width=4), 0)
    with pytest.raises(ValueError):
        forward(q, np.zeros(3), 0)


def test_embedding_changes_output():
    p = random_params(NetShape(3, 4, hidden_layers=2, hidden_width=8, embedding_vocab=3), 2)
    x = np.ones(3)
    assert not np.allclose(forward(p, x, 0), forward(p, x, 2))


# ---------------------------------------------------------------- loss


def test_cross_entropy_examples():
    assert cross_entropy(np.array([0.0, 1.0, 0.0]), np.array([0, 1, 0])) == pytest.approx(0.0, abs=1e-15)
    c = 9
    assert cross_entropy(np.full(c, 1 / c), np.eye(c)[4]) == pytest.approx(math.log(c))
    multi = np.zeros(c)
    multi[[1, 2, 7]] = 1
    assert cross_entropy(np.full(c, 1 / c), multi) == pytest.approx(math.log(c))
    with pytest.raises(ValueError):
        cross_entropy(np.full(c, 1 / c), np.zeros(c))


def test_cross_entropy_log_clamp():
    assert cross_entropy(np.array([1.0, 0.0]), np.array([0, 1])) == pytest.approx(-math.log(1e-12))


# ---------------------------------------------------------------- gradients


@pytest.mark.parametrize("seed", range(10))
def test_gradient_matches_finite_differences(seed):
    emb = 3 if seed % 2 == 0 else None
    shape = NetShape(4, 5, hidden_layers=2, hidden_width=6, embedding_vocab=emb)
    assert gradient_check(shape, seed) < 1e-4


def test_gradient_deeper_net():
    assert gradient_check(NetShape(3, 4, hidden_layers=4, hidden_width=6, embedding_vocab=4), 99) < 1e-4


def test_zero_gradient_when_perfectly_fit():
    shape = NetShape(2, 3, hidden_layers=2, hidden_width=4)
    p = random_params(shape, 0)
    p.weights[-1][...] = 0
    p.biases[-1][...] = [0.0, 60.0, 0.0]
    loss, grads = gradient(p, np.array([[0.5, -0.5]]), np.array([[0, 1, 0]]))
    assert loss < 1e-20
    assert max(np.abs(g).max() for g in grads) < 1e-8


def test_untouched_embedding_rows_zero():
    shape = NetShape(3, 4, hidden_layers=2, hidden_width=6, embedding_vocab=5)
    p = random_params(shape, 3)
    rng = np.random.default_rng(3)
    _, grads = gradient(p, rng.normal(size=(4, 3)), np.eye(4), np.array([1, 3, 1, 3]))
    d_emb = grads[-1]
    assert np.all(d_emb[[0, 2, 4]] == 0) and np.any(d_emb[[1, 3]] != 0)


def test_duplicated_batch_same_gradient():
    shape = NetShape(4, 6, hidden_layers=3, hidden_width=8, embedding_vocab=3)
    p = random_params(shape, 4)
    rng = np.random.default_rng(4)
    x = rng.normal(size=(5, 4))
    y = (rng.random((5, 6)) < 0.5).astype(float)
    y[:, 0] = 1
    idx = rng.integers(0, 3, 5)
    l1, g1 = gradient(p, x, y, idx)
    l2, g2 = gradient(p, np.vstack([x, x]), np.vstack([y, y]), np.concatenate([idx, idx]))
    assert l1 == pytest.approx(l2, abs=1e-12)
    assert all(np.allclose(a, b, atol=1e-10) for a, b in zip(g1, g2))


# ---------------------------------------------------------------- training


def test_train_separable_toy():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(200, 2))
    cls = (x[:, 0] + 0.5 * x[:, 1] > 0).astype(int)
    x[:, 0] += np.where(cls == 1, 0.5, -0.5)  # margin
    y = np.eye(2)[cls]
    params, trace = train(x, y, NetShape(2, 2, hidden_layers=2, hidden_width=16), TrainConfig(epochs=40, batch_size=16))
    acc = np.mean(np.argmax(forward(params, x), axis=1) == cls)
    assert acc == 1.0
    assert trace[-1] < trace[0]


def test_train_deterministic():
    rng = np.random.default_rng(6)
    x = rng.normal(size=(64, 3))
    y = np.eye(4)[rng.integers(0, 4, 64)]
    idx = rng.integers(0, 2, 64)
    shape = NetShape(3, 4, hidden_layers=2, hidden_width=8, embedding_vocab=2)
    a, ta = train(x, y, shape, TrainConfig(epochs=3, seed=9), beam_index=idx)
    b, tb = train(x, y, shape, TrainConfig(epochs=3, seed=9), beam_index=idx)
    assert ta == tb
    assert all(np.array_equal(u, v) for u, v in zip(a.arrays(), b.arrays()))
    c, _ = train(x, y, shape, TrainConfig(epochs=3, seed=10), beam_index=idx)
    assert not np.array_equal(a.weights[0], c.weights[0])


def test_train_nan_aborts():
    x = np.full((8, 2), np.nan)
    with pytest.raises(NumericalError):
        train(x, np.eye(2)[[0, 1] * 4], NetShape(2, 2, hidden_layers=1, hidden_width=4), TrainConfig(epochs=1))


def test_train_shape_mismatch():
    with pytest.raises(ValueError):
        train(np.zeros((4, 3)), np.eye(2)[[0, 1, 0, 1]], NetShape(2, 2), TrainConfig(epochs=1))


# ---------------------------------------------------------------- inference pipelines


def _force_output(params, k):
    params.weights[-1][...] = 0
    params.biases[-1][...] = 0
    params.biases[-1][k] = 80.0


def test_predict_joint_one_beam_device():
    dev = attach_grid(make_device("one", [Panel(ArrayGeometry(), (0, 0, 0), ElementPattern.iso())]), fibonacci_grid(10))
    shapes = indoor_shapes(4, 1, 10, hidden_layers=2, hidden_width=8)
    n1, n2 = random_params(shapes["net1"], 0), random_params(shapes["net2_generic"], 1)
    x = np.random.default_rng(0).normal(size=(3, 9))
    joint = predict_joint(n1, n2, x, dev)
    assert joint.shape == (3, 4, 1)
    assert np.allclose(joint[:, :, 0], forward(n1, x))


def test_predict_joint_conditionals_and_one_hot_law():
    dev = attach_grid(build_device("EF"), fibonacci_grid(100))
    shapes = indoor_shapes(8, 20, 100, hidden_layers=2, hidden_width=8)
    n1, n2 = random_params(shapes["net1"], 2), random_params(shapes["net2_generic"], 3)
    x = np.random.default_rng(1).normal(size=(4, 9))
    joint = predict_joint(n1, n2, x, dev)
    p_ap = forward(n1, x)
    cond = joint / p_ap[:, :, None]
    assert np.allclose(cond.sum(axis=2), 1.0, atol=1e-9)
    assert np.allclose(joint.sum(axis=(1, 2)), 1.0, atol=1e-9)
    for k in (0, 17, 63):
        _force_output(n2, k)
        j = predict_joint(n1, n2, x, dev)
        assert np.all(np.argmax(j, axis=2) == dev.fib_map[k])


def test_predict_joint_specific():
    shapes = indoor_shapes(8, 20, 100, hidden_layers=2, hidden_width=8)
    n1, n2 = random_params(shapes["net1"], 2), random_params(shapes["net2_specific"], 3)
    joint = predict_joint(n1, n2, np.zeros((2, 9)))
    assert joint.shape == (2, 8, 20)


def test_predict_sub6_one_hot_and_mass():
    dev = attach_grid(build_device("ULA8"), fibonacci_grid(100))
    shape = sub6_shapes(16, 8, 8, 100, hidden_layers=2, hidden_width=8)["generic"]
    p = random_params(shape, 4)
    x = np.random.default_rng(2).normal(size=(100, 16))
    joint = predict_sub6(p, x, dev, 8)
    flat = forward(p, x).reshape(100, 8, 100)
    # independent reshape-and-sum oracle
    for b in range(100):
        for i in range(8):
            for j in range(8):
                assert joint[b, i, j] == pytest.approx(sum(flat[b, i, k] for k in range(100) if dev.fib_map[k] == j), abs=1e-12)
    assert np.allclose(joint.sum(axis=2), flat.sum(axis=2), atol=1e-12)
    assert np.allclose(joint.sum(axis=(1, 2)), 1.0, atol=1e-12)
    _force_output(p, 3 * 100 + 42)
    j1 = predict_sub6(p, x[:1], dev, 8)[0]
    assert np.unravel_index(np.argmax(j1), j1.shape) == (3, dev.fib_map[42])
    with pytest.raises(ValueError):
        predict_sub6(p, x, dev, 7)


def test_baseline_shapes():
    assert build_baseline_specific("indoor", n_ap=8, n_ut=build_device("EF").n_beams).output_dim == 20
    assert build_baseline_specific("sub6", input_dim=256, n_ap=64, n_ut=8).output_dim == 512
    assert sub6_shapes(256, 64, 8, 100)["generic"].output_dim == 6400
    assert indoor_shapes(8, 20, 100)["net2_generic"].output_dim == 100
    with pytest.raises(ValueError):
        build_baseline_specific("outdoor", n_ap=1, n_ut=1)


def test_model_round_trip(tmp_path):
    rng = np.random.default_rng(7)
    x = rng.normal(size=(32, 3))
    y = np.eye(4)[rng.integers(0, 4, 32)]
    params, _ = train(x, y, NetShape(3, 4, hidden_layers=2, hidden_width=8, embedding_vocab=2), TrainConfig(epochs=2, seed=3),
                      beam_index=rng.integers(0, 2, 32))
    save_model(params, tmp_path / "m.npz")
    back = load_model(tmp_path / "m.npz")
    assert back.shape == params.shape
    assert all(np.array_equal(a, b) for a, b in zip(back.arrays(), params.arrays()))
    assert back.meta["seed"] == 3 and back.meta["train_config_digest"] == TrainConfig(epochs=2, seed=3).digest()
    assert np.array_equal(forward(back, x, 1), forward(params, x, 1))
