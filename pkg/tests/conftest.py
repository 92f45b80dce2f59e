import numpy as np
import pytest

from learncert import data, kernels, nn


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    """Run a test once per available kernel backend."""
    previous = kernels.use_backend(request.param)
    yield request.param
    kernels.use_backend(previous)


@pytest.fixture(scope="session")
def small_blobs():
    spec = data.BlobSpec(num_classes=4, input_dim=8, samples_per_class=40, test_per_class=20, seed=3)
    return data.make_blobs(spec)


@pytest.fixture(scope="session")
def small_model(small_blobs):
    train, _ = small_blobs
    spec = nn.ModelSpec((8, 16, 4))
    theta = nn.train(spec, train, nn.TrainConfig(steps=150, batch_size=32, seed=1))
    return spec, theta


@pytest.fixture(scope="session")
def default_blobs():
    return data.make_blobs(data.BlobSpec())


def random_batch(seed, n, dim, k):
    gen = np.random.default_rng(seed)
    return gen.uniform(size=(n, dim)), gen.integers(0, k, n)


ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
