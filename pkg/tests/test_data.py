import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from learncert import data, nn
from learncert.errors import CorruptFileError, DimensionError, HashMismatchError

XI = 8 / 255


def test_blob_shapes():
    train, test = data.make_blobs(data.BlobSpec(num_classes=4, samples_per_class=50, test_per_class=10))
    assert train.samples.shape == (200, 64)
    assert set(train.labels.tolist()) == {0, 1, 2, 3}
    assert len(test) == 40
    assert train.samples.min() >= 0 and train.samples.max() <= 1


def test_zero_spread_collapses_to_centres():
    train, test = data.make_blobs(data.BlobSpec(num_classes=3, input_dim=5, cluster_spread=0.0))
    for k in range(3):
        rows = train.samples[train.labels == k]
        assert np.all(rows == rows[0])
        np.testing.assert_array_equal(test.samples[test.labels == k][0], rows[0])


def test_generation_is_pure():
    spec = data.BlobSpec(num_classes=3, input_dim=4, seed=11)
    a, b = data.make_blobs(spec), data.make_blobs(spec)
    assert a[0] == b[0] and a[1] == b[1]
    assert data.make_blobs(data.BlobSpec(num_classes=3, input_dim=4, seed=12))[0] != a[0]


def test_train_and_test_disjoint():
    train, test = data.make_blobs(data.BlobSpec(num_classes=3, input_dim=6))
    rows = {r.tobytes() for r in train.samples}
    assert not any(r.tobytes() in rows for r in test.samples)


def test_default_blobs_are_learnable(default_blobs):
    train, test = default_blobs
    spec = nn.ModelSpec()
    theta = nn.train(spec, train, nn.TrainConfig())
    assert nn.accuracy(theta, spec, test) >= 0.90


def test_invalid_inputs():
    with pytest.raises(ValueError):
        data.BlobSpec(num_classes=1)
    with pytest.raises(ValueError):
        data.BlobSpec(input_dim=1)
    with pytest.raises(ValueError):
        data.LabeledDataset(np.full((2, 2), 1.5), [0, 1], 2)
    with pytest.raises(ValueError):
        data.LabeledDataset(np.zeros((2, 2)), [0, 2], 2)
    with pytest.raises(ValueError):
        data.ClasswisePerturbation(np.full((2, 2), 0.1), XI)


def test_dataset_is_immutable():
    ds = data.LabeledDataset(np.zeros((2, 2)), [0, 1], 2)
    with pytest.raises(ValueError):
        ds.samples[0, 0] = 1.0


def test_zero_perturbation_is_identity(small_blobs):
    train, _ = small_blobs
    out = data.apply_perturbation(train, data.ClasswisePerturbation.zeros(4, 8))
    assert out == train


def test_clip_saturation():
    ds = data.LabeledDataset(np.array([[0.99, 0.5]]), [0], 1 + 1)
    delta = data.ClasswisePerturbation(np.array([[0.05, 0.0], [0.0, 0.0]]), 0.1)
    assert data.apply_perturbation(ds, delta).samples[0, 0] == 1.0


def test_perturbation_shape_mismatch(small_blobs):
    train, _ = small_blobs
    with pytest.raises(DimensionError):
        data.apply_perturbation(train, data.ClasswisePerturbation.zeros(3, 8))
    with pytest.raises(DimensionError):
        data.apply_perturbation(train, data.ClasswisePerturbation.zeros(4, 9))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_perturbation_elementwise_recount(seed):
    gen = np.random.default_rng(seed)
    x = gen.uniform(size=(30, 6))
    x[gen.uniform(size=x.shape) < 0.1] = 1.0
    x[gen.uniform(size=x.shape) < 0.1] = 0.0
    y = gen.integers(0, 3, 30)
    ds = data.LabeledDataset(x, y, 3)
    delta = data.ClasswisePerturbation(gen.uniform(-XI, XI, (3, 6)), XI)
    before = ds.samples.copy()
    out = data.apply_perturbation(ds, delta)
    np.testing.assert_array_equal(ds.samples, before)
    np.testing.assert_array_equal(out.labels, y)
    for i in range(30):
        for j in range(6):
            raw = x[i, j] + delta.rows[y[i], j]
            v = out.samples[i, j]
            assert 0.0 <= v <= 1.0
            assert abs(v - raw) <= XI + 1e-15
            if 0.0 <= raw <= 1.0:
                assert v == raw  # deviation only where clipping acted
            else:
                assert v == (1.0 if raw > 1.0 else 0.0)


def test_split_validation_is_stratified(small_blobs):
    train, _ = small_blobs
    rest, held = data.split_validation(train, 0.2, 0)
    assert len(rest) + len(held) == len(train)
    assert np.bincount(held.labels).tolist() == [8, 8, 8, 8]


def test_dataset_file_round_trip(tmp_path, small_blobs):
    train, _ = small_blobs
    path = tmp_path / "train"
    data.save_dataset(path, train)
    assert path.read_bytes()[:4] == b"LCDS"
    assert data.load_dataset(path) == train
    raw = path.read_bytes()
    path.write_bytes(raw[:-10])
    with pytest.raises(CorruptFileError):
        data.load_dataset(path)
    flipped = bytearray(raw)
    flipped[200] ^= 1
    path.write_bytes(bytes(flipped))
    with pytest.raises(CorruptFileError):
        data.load_dataset(path)


def test_perturbation_file_round_trip(tmp_path, small_blobs):
    train, _ = small_blobs
    delta = data.ClasswisePerturbation(np.random.default_rng(0).uniform(-XI, XI, (4, 8)), XI)
    path = tmp_path / "delta"
    data.save_perturbation(path, delta, train)
    assert data.load_perturbation(path, train) == delta
    other = data.LabeledDataset(train.samples, train.labels, 4, "other-domain")
    with pytest.raises(HashMismatchError, match="crafted for domain"):
        data.load_perturbation(path, other)
    path.write_bytes(path.read_bytes()[:50])
    with pytest.raises(CorruptFileError):
        data.load_perturbation(path)
