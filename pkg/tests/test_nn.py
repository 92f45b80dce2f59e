import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from learncert import data, nn
from learncert.errors import CorruptFileError, DimensionError, DivergenceError, HashMismatchError, NumericalError

from conftest import random_batch


def central_diff(f, x, h=1e-5):
    g = np.zeros_like(x)
    for i in range(x.shape[0]):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def rel_err(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12)


def test_param_count_and_layout():
    spec = nn.ModelSpec((64, 128, 10))
    assert spec.param_count == 64 * 128 + 128 + 128 * 10 + 10
    slices = list(spec.layers())
    assert slices[0][0] == slice(0, 64 * 128)
    assert slices[-1][1].stop == spec.param_count


def test_invalid_specs():
    with pytest.raises(ValueError):
        nn.ModelSpec((5,))
    with pytest.raises(ValueError):
        nn.ModelSpec((5, 0, 2))
    with pytest.raises(ValueError):
        nn.ModelSpec((5, 2), activation="sigmoid")


def test_zero_params_predict_class_zero(backend):
    spec = nn.ModelSpec((6, 5, 4))
    x = np.random.default_rng(0).uniform(size=(9, 6))
    theta = np.zeros(spec.param_count)
    assert np.all(nn.forward(theta, spec, x) == 0.0)
    assert nn.predict(theta, spec, x).tolist() == [0] * 9


def test_identity_layer(backend):
    spec = nn.ModelSpec((4, 4))
    theta = np.concatenate([np.eye(4).ravel(), np.zeros(4)])
    x = np.zeros((1, 4))
    x[0, 2] = 1.0
    assert nn.predict(theta, spec, x).tolist() == [2]


def test_dimension_errors():
    spec = nn.ModelSpec((3, 2))
    with pytest.raises(DimensionError) as info:
        nn.forward(np.zeros(5), spec, np.zeros((1, 3)))
    assert info.value.expected == spec.param_count and info.value.actual == 5
    with pytest.raises(DimensionError):
        nn.forward(np.zeros(spec.param_count), spec, np.zeros((1, 4)))
    with pytest.raises(NumericalError):
        nn.forward(np.full(spec.param_count, np.nan), spec, np.zeros((1, 3)))


def test_accuracy_constant_predictor(backend):
    spec = nn.ModelSpec((3, 4))
    theta = np.zeros(spec.param_count)
    labels = np.arange(40) % 4
    ds = data.LabeledDataset(np.full((40, 3), 0.5), labels, 4)
    assert nn.accuracy(theta, spec, ds) == pytest.approx(0.25, abs=0)
    ds0 = data.LabeledDataset(np.full((7, 3), 0.5), np.zeros(7, int), 4)
    assert nn.accuracy(theta, spec, ds0) == 1.0


def test_accuracy_matches_recount(backend, small_blobs, small_model):
    spec, theta = small_model
    _, test = small_blobs
    logits = nn.forward(theta, spec, test.samples)
    hits = sum(1 for row, y in zip(logits, test.labels) if int(np.argmax(row)) == y)
    assert nn.accuracy(theta, spec, test) == hits / len(test)


def test_uniform_logits_loss():
    spec = nn.ModelSpec((3, 10))
    loss, grad = nn.loss_and_grad(np.zeros(spec.param_count), spec, np.full((4, 3), 0.2), np.arange(4))
    assert loss == pytest.approx(math.log(10), abs=1e-12)
    assert grad.shape == (spec.param_count,)


def test_saturated_loss():
    spec = nn.ModelSpec((2, 2))
    theta = np.array([0.0, 0.0, 0.0, 0.0, 40.0, -40.0])
    loss, grad = nn.loss_and_grad(theta, spec, np.array([[0.5, 0.5]]), np.array([0]))
    assert loss < 1e-6
    assert np.linalg.norm(grad) < 1e-4


@pytest.mark.parametrize("seed", [0, 1, 2])
@pytest.mark.parametrize("activation", ["relu", "tanh"])
def test_param_gradient_finite_differences(backend, seed, activation):
    spec = nn.ModelSpec((2, 16, 3), activation)
    theta = nn.init_params(spec, seed) + 0.1 * np.random.default_rng(seed).standard_normal(spec.param_count)
    x, y = random_batch(seed, 12, 2, 3)
    _, grad = nn.loss_and_grad(theta, spec, x, y)
    fd = central_diff(lambda t: nn.loss_and_grad(t, spec, x, y)[0], theta)
    assert rel_err(grad, fd) < 1e-4


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_input_gradient_finite_differences(backend, seed):
    spec = nn.ModelSpec((5, 8, 3), "tanh")
    theta = nn.init_params(spec, seed)
    x, y = random_batch(seed + 10, 6, 5, 3)
    _, gx = nn.loss_and_input_grad(theta, spec, x, y)
    fd = central_diff(lambda v: nn.loss_and_input_grad(theta, spec, v.reshape(x.shape), y)[0], x.ravel())
    assert rel_err(gx.ravel(), fd) < 1e-4


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), shift=st.floats(-50, 50))
def test_logit_shift_preserves_prediction(seed, shift):
    spec = nn.ModelSpec((4, 6, 5))
    theta = nn.init_params(spec, seed)
    x = np.random.default_rng(seed).uniform(size=(8, 4))
    shifted = theta.copy()
    shifted[-5:] += shift  # same constant on every output logit
    logits = nn.forward(theta, spec, x)
    np.testing.assert_allclose(nn.forward(shifted, spec, x), logits + shift, atol=1e-9)
    base = nn.predict(theta, spec, x)
    gaps = np.sort(logits, axis=1)
    clear = gaps[:, -1] - gaps[:, -2] > 1e-9
    assert np.array_equal(nn.predict(shifted, spec, x)[clear], base[clear])


def test_sgd_step_basic_cases():
    theta = np.array([1.0, -2.0, 3.0])
    cfg = nn.TrainConfig(learning_rate=0.1, momentum=0.0)
    same, _ = nn.sgd_step(theta, np.zeros(3), nn.TrainConfig(momentum=0.9), np.zeros(3))
    np.testing.assert_array_equal(same, theta)
    moved, _ = nn.sgd_step(theta, np.ones(3), cfg)
    np.testing.assert_allclose(moved, theta - 0.1, rtol=0, atol=1e-15)
    with pytest.raises(NumericalError):
        nn.sgd_step(theta, np.array([np.nan, 0.0, 0.0]), cfg)


def test_momentum_recursion_oracle():
    lr, mu, wd = 0.05, 0.9, 0.01
    cfg = nn.TrainConfig(learning_rate=lr, momentum=mu, weight_decay=wd)
    theta0 = np.array([0.3, -1.2])
    grads = [np.array([0.5, 0.25]), np.array([-0.75, 1.5])]
    theta, vel = theta0.copy(), None
    for g in grads:
        theta, vel = nn.sgd_step(theta, g, cfg, vel)
    # scalar recursion per coordinate
    for i in range(2):
        t, v = theta0[i], 0.0
        for g in grads:
            v = mu * v + g[i] + wd * t
            t = t - lr * v
        assert abs(theta[i] - t) < 1e-12
        assert abs(vel[i] - v) < 1e-12


def test_train_zero_steps_and_determinism(small_blobs):
    train, _ = small_blobs
    spec = nn.ModelSpec((8, 16, 4))
    init = nn.init_params(spec, 4)
    out = nn.train(spec, train, nn.TrainConfig(steps=0), init=init)
    np.testing.assert_array_equal(out, init)
    a = nn.train(spec, train, nn.TrainConfig(steps=40, batch_size=32, seed=2))
    b = nn.train(spec, train, nn.TrainConfig(steps=40, batch_size=32, seed=2))
    assert a.tobytes() == b.tobytes()


def test_separable_two_class_blobs():
    train, _ = data.make_blobs(data.BlobSpec(num_classes=2, input_dim=2, samples_per_class=100,
                                             cluster_spread=0.03, center_spread=0.3, seed=5))
    spec = nn.ModelSpec((2, 16, 2))
    theta = nn.train(spec, train, nn.TrainConfig(steps=300, batch_size=32, seed=0))
    assert nn.accuracy(theta, spec, train) >= 0.99


def test_divergence_reports_step(small_blobs):
    train, _ = small_blobs
    spec = nn.ModelSpec((8, 16, 4))
    with pytest.raises(DivergenceError) as info:
        nn.train(spec, train, nn.TrainConfig(learning_rate=1e200, momentum=0.0, steps=50, batch_size=32))
    assert 0 <= info.value.step < 50


def test_train_config_validation():
    with pytest.raises(ValueError):
        nn.TrainConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        nn.TrainConfig(momentum=1.0)
    with pytest.raises(ValueError):
        nn.BatchSampler(10, 11, 0)


def test_batch_sampler_epochs_cover_all_rows():
    s = nn.BatchSampler(10, 5, 0)
    seen = np.concatenate([s.next(), s.next()])
    assert sorted(seen.tolist()) == list(range(10))


def test_param_file_round_trip(tmp_path):
    spec = nn.ModelSpec((3, 4, 2))
    theta = nn.init_params(spec, 0)
    path = tmp_path / "surrogate"
    nn.save_params(path, theta, spec)
    raw = path.read_bytes()
    assert raw[:4] == b"LCPV"
    np.testing.assert_array_equal(nn.load_params(path, spec), theta)
    with pytest.raises(HashMismatchError):
        nn.load_params(path, nn.ModelSpec((3, 4, 2), "tanh"))
    path.write_bytes(raw[:-3])
    with pytest.raises(CorruptFileError):
        nn.load_params(path)
    path.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(CorruptFileError):
        nn.load_params(path)


def test_init_is_glorot_bounded():
    spec = nn.ModelSpec((10, 30, 5))
    theta = nn.init_params(spec, 0)
    for w, b, fi, fo in spec.layers():
        assert np.max(np.abs(theta[w])) <= math.sqrt(6 / (fi + fo))
        assert np.all(theta[b] == 0)
