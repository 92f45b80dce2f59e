import numpy as np
import pytest

from learncert import nn, smoothing
from learncert.errors import CorruptFileError


def test_zero_sigma_is_identity():
    theta = np.arange(5.0)
    np.testing.assert_array_equal(smoothing.perturb_params(theta, 0.0, 3, 1), theta)


def test_noise_statistics():
    d, sigma = 10_000, 0.25
    eps = smoothing.perturb_params(np.zeros(d), sigma, 0, 42)
    assert abs(eps.mean()) <= 3 * sigma / np.sqrt(d)
    assert abs(eps.std() / sigma - 1) <= 0.05


def test_draws_are_reproducible():
    theta = np.ones(20)
    a = smoothing.perturb_params(theta, 0.3, 7, 5)
    np.testing.assert_array_equal(a, smoothing.perturb_params(theta, 0.3, 7, 5))
    assert not np.array_equal(a, smoothing.perturb_params(theta, 0.3, 8, 5))


def test_zero_sigma_samples_collapse(small_blobs, small_model):
    spec, theta = small_model
    _, test = small_blobs
    s = smoothing.sample_accuracies(theta, spec, test, smoothing.SmoothingConfig(0.0, 7, 0))
    assert np.all(s.values == nn.accuracy(theta, spec, test))
    for q in (0.1, 0.5, 0.99):
        assert smoothing.empirical_qps(s, q) == nn.accuracy(theta, spec, test)


def test_single_draw(small_blobs, small_model):
    spec, theta = small_model
    s = smoothing.sample_accuracies(theta, spec, small_blobs[1], smoothing.SmoothingConfig(0.25, 1, 0))
    assert len(s) == 1


def test_matches_serial_oracle(backend, small_blobs, small_model):
    spec, theta = small_model
    _, test = small_blobs
    cfg = smoothing.SmoothingConfig(0.25, 200, 9)
    oracle = []
    for j in reversed(range(cfg.n)):  # deliberately out of order
        eps = smoothing.rng.stream(cfg.seed, "smoothing", j).standard_normal(theta.shape[0])
        noisy = theta + cfg.sigma * eps
        pred = np.argmax(nn.forward(noisy, spec, test.samples), axis=1)
        oracle.append(np.count_nonzero(pred == test.labels) / len(test))
    for workers in (1, 4):
        s = smoothing.sample_accuracies(theta, spec, test, cfg, workers=workers)
        assert s.values.tolist() == sorted(oracle)


def test_empirical_qps_examples():
    cfg10 = smoothing.SmoothingConfig(0.25, 10, 0)
    s = smoothing.AccuracySamples(np.arange(1, 11) / 10, cfg10)
    assert smoothing.empirical_qps(s, 0.9) == 0.9
    grid = smoothing.AccuracySamples(np.arange(1, 1001) / 1000, smoothing.SmoothingConfig(0.25, 1000, 0))
    assert smoothing.empirical_qps(grid, 0.37) == 0.37
    const = smoothing.AccuracySamples(np.full(10, 0.3), cfg10)
    assert {smoothing.empirical_qps(const, q) for q in (0.01, 0.5, 0.99)} == {0.3}
    with pytest.raises(ValueError):
        smoothing.empirical_qps(s, 1.0)


def test_qps_monotone_in_q():
    values = np.sort(np.random.default_rng(0).uniform(size=50))
    s = smoothing.AccuracySamples(values, smoothing.SmoothingConfig(0.25, 50, 0))
    qs = np.linspace(0.01, 0.99, 60)
    out = [smoothing.empirical_qps(s, q) for q in qs]
    assert all(b >= a for a, b in zip(out, out[1:]))


def test_samples_validation():
    cfg = smoothing.SmoothingConfig(0.25, 3, 0)
    with pytest.raises(ValueError):
        smoothing.AccuracySamples([0.3, 0.2, 0.5], cfg)
    with pytest.raises(ValueError):
        smoothing.AccuracySamples([0.3, 0.5], cfg)
    with pytest.raises(ValueError):
        smoothing.SmoothingConfig(-0.1, 3, 0)
    with pytest.raises(ValueError):
        smoothing.SmoothingConfig(0.25, 0, 0)


def test_text_round_trip(tmp_path, small_blobs, small_model):
    spec, theta = small_model
    s = smoothing.sample_accuracies(theta, spec, small_blobs[1], smoothing.SmoothingConfig(0.3, 25, 4))
    path = tmp_path / "samples"
    smoothing.save_samples(path, s)
    text = path.read_text()
    assert "\nvalues:\n" in text and text.count("\n") == 25 + 7
    assert smoothing.load_samples(path) == s
    path.write_text(text.replace("values:\n", ""))
    with pytest.raises(CorruptFileError):
        smoothing.load_samples(path)
