"""Synthetic labelled datasets, class-wise perturbations, and their file formats."""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from learncert import rng
from learncert.errors import CorruptFileError, DimensionError, HashMismatchError


def _frozen(a: np.ndarray, dtype) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    samples: np.ndarray
    labels: np.ndarray
    num_classes: int
    domain_id: str = "unnamed"
    seed: int = 0

    def __post_init__(self):
        samples = _frozen(self.samples, np.float64)
        labels = _frozen(self.labels, np.int64)
        if samples.ndim != 2 or samples.shape[0] < 1:
            raise ValueError("samples must be a nonempty (N, I) matrix")
        if labels.shape != (samples.shape[0],):
            raise DimensionError("label count", samples.shape[0], labels.shape)
        if not np.all((samples >= 0.0) & (samples <= 1.0)):
            raise ValueError("sample entries must lie in [0, 1]")
        if labels.min() < 0 or labels.max() >= self.num_classes:
            raise ValueError(f"labels must lie in 0..{self.num_classes - 1}")
        if not 0 <= self.seed <= rng.MASK64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.samples.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, LabeledDataset):
            return NotImplemented
        return (
            self.num_classes == other.num_classes
            and self.domain_id == other.domain_id
            and self.seed == other.seed
            and np.array_equal(self.samples, other.samples)
            and np.array_equal(self.labels, other.labels)
        )

    @property
    def input_dim(self) -> int:
        return self.samples.shape[1]

    def domain_digest(self) -> bytes:
        """Identity of the sample space a class-wise perturbation is built for."""
        return domain_digest(self.num_classes, self.input_dim, self.domain_id)

    def subset(self, index) -> "LabeledDataset":
        return LabeledDataset(self.samples[index], self.labels[index], self.num_classes, self.domain_id, self.seed)

    def content_digest(self) -> str:
        h = hashlib.blake2b(digest_size=16)
        h.update(self.domain_digest())
        h.update(np.ascontiguousarray(self.samples, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.labels, dtype="<u2").tobytes())
        return h.hexdigest()


def domain_digest(num_classes: int, input_dim: int, domain_id: str) -> bytes:
    return hashlib.blake2b(f"{num_classes}|{input_dim}|{domain_id}".encode(), digest_size=16).digest()


@dataclass(frozen=True, eq=False)
class ClasswisePerturbation:
    """One additive noise row per class, each inside the l-inf ball of radius ``xi``."""

    rows: np.ndarray
    xi: float

    def __post_init__(self):
        rows = _frozen(self.rows, np.float64)
        if rows.ndim != 2:
            raise ValueError("rows must be a (K, I) matrix")
        if not self.xi > 0:
            raise ValueError("xi must be positive")
        if np.max(np.abs(rows), initial=0.0) > self.xi:
            raise ValueError("perturbation row exceeds its l-inf budget")
        object.__setattr__(self, "rows", rows)

    @classmethod
    def zeros(cls, num_classes: int, input_dim: int, xi: float = 8 / 255) -> "ClasswisePerturbation":
        return cls(np.zeros((num_classes, input_dim)), xi)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ClasswisePerturbation):
            return NotImplemented
        return self.xi == other.xi and np.array_equal(self.rows, other.rows)


@dataclass(frozen=True)
class BlobSpec:
    """Gaussian class clusters in the unit cube.

    Class centres are drawn as ``0.5 + center_spread * N(0, I)`` (clipped), and
    samples as ``centre + cluster_spread * N(0, I)`` (clipped).
    """

    num_classes: int = 10
    input_dim: int = 64
    samples_per_class: int = 200
    cluster_spread: float = 0.08
    seed: int = 0
    test_per_class: int = 100
    center_spread: float = 0.04

    def __post_init__(self):
        if self.num_classes < 2 or self.input_dim < 2:
            raise ValueError("need at least 2 classes and 2 input dimensions")
        if self.samples_per_class < 1 or self.test_per_class < 1:
            raise ValueError("per-class sample counts must be positive")
        if self.cluster_spread < 0 or self.center_spread < 0:
            raise ValueError("spreads must be nonnegative")
        if not 0 <= self.seed <= rng.MASK64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    @property
    def domain_id(self) -> str:
        return (f"blobs-k{self.num_classes}-i{self.input_dim}-c{self.center_spread!r}"
                f"-s{self.cluster_spread!r}-seed{self.seed}")


def make_blobs(spec: BlobSpec) -> tuple[LabeledDataset, LabeledDataset]:
    """Disjoint train/test splits drawn from the same cluster centres."""
    gen = rng.stream(spec.seed, "blobs")
    centers = np.clip(0.5 + spec.center_spread * gen.standard_normal((spec.num_classes, spec.input_dim)), 0.0, 1.0)

    def draw(per_class: int, label: str):
        g = rng.stream(spec.seed, label)
        labels = np.repeat(np.arange(spec.num_classes), per_class)
        noise = g.standard_normal((labels.shape[0], spec.input_dim))
        samples = np.clip(centers[labels] + spec.cluster_spread * noise, 0.0, 1.0)
        order = g.permutation(labels.shape[0])
        return LabeledDataset(samples[order], labels[order], spec.num_classes, spec.domain_id, spec.seed)

    return draw(spec.samples_per_class, "blobs-train"), draw(spec.test_per_class, "blobs-test")


def apply_perturbation(data: LabeledDataset, delta: ClasswisePerturbation) -> LabeledDataset:
    """``x -> clip(x + delta[y], 0, 1)`` for every sample; labels untouched."""
    if delta.rows.shape[0] != data.num_classes:
        raise DimensionError("perturbation class count", data.num_classes, delta.rows.shape[0])
    if delta.rows.shape[1] != data.input_dim:
        raise DimensionError("perturbation width", data.input_dim, delta.rows.shape[1])
    samples = np.clip(data.samples + delta.rows[data.labels], 0.0, 1.0)
    return LabeledDataset(samples, data.labels, data.num_classes, data.domain_id, data.seed)


def split_validation(data: LabeledDataset, fraction: float, seed: int) -> tuple[LabeledDataset, LabeledDataset]:
    """Stratified split into (remainder, held-out slice of ``fraction`` per class)."""
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1)")
    gen = rng.stream(seed, "validation-split")
    held = []
    for k in range(data.num_classes):
        members = np.flatnonzero(data.labels == k)
        take = max(1, int(round(fraction * members.shape[0])))
        held.append(gen.permutation(members)[:take])
    held_idx = np.sort(np.concatenate(held))
    mask = np.ones(len(data), dtype=bool)
    mask[held_idx] = False
    return data.subset(np.flatnonzero(mask)), data.subset(held_idx)


# --- file formats --------------------------------------------------------

DATA_MAGIC = b"LCDS"
DELTA_MAGIC = b"LCPT"
FORMAT_VERSION = 1
_DATA_HEADER = struct.Struct("<4sIQQQQH")
_DELTA_HEADER = struct.Struct("<4sIQQd16s")
_CHECKSUM = 16


def _checksum(payload: bytes) -> bytes:
    return hashlib.blake2b(payload, digest_size=_CHECKSUM).digest()


def _verify(raw: bytes, path) -> bytes:
    if len(raw) < _CHECKSUM:
        raise CorruptFileError(f"{path}: file too short")
    payload, stored = raw[:-_CHECKSUM], raw[-_CHECKSUM:]
    if _checksum(payload) != stored:
        raise CorruptFileError(f"{path}: checksum mismatch (truncated or modified)")
    return payload


def dataset_bytes(data: LabeledDataset) -> bytes:
    dom = data.domain_id.encode()
    n, i = data.samples.shape
    header = _DATA_HEADER.pack(DATA_MAGIC, FORMAT_VERSION, n, i, data.num_classes, data.seed, len(dom))
    payload = (header + dom + data.samples.astype("<f8").tobytes() + data.labels.astype("<u2").tobytes())
    return payload + _checksum(payload)


def save_dataset(path, data: LabeledDataset) -> None:
    Path(path).write_bytes(dataset_bytes(data))


def load_dataset(path) -> LabeledDataset:
    raw = Path(path).read_bytes()
    if len(raw) < _DATA_HEADER.size or raw[:4] != DATA_MAGIC:
        raise CorruptFileError(f"{path}: not a dataset file")
    magic, version, n, i, k, seed, dom_len = _DATA_HEADER.unpack_from(raw)
    if version != FORMAT_VERSION:
        raise CorruptFileError(f"{path}: unsupported version {version}")
    expected = _DATA_HEADER.size + dom_len + 8 * n * i + 2 * n + _CHECKSUM
    if len(raw) != expected:
        raise CorruptFileError(f"{path}: expected {expected} bytes, found {len(raw)}")
    payload = _verify(raw, path)
    pos = _DATA_HEADER.size
    domain_id = payload[pos:pos + dom_len].decode()
    pos += dom_len
    samples = np.frombuffer(payload, dtype="<f8", count=n * i, offset=pos).reshape(n, i)
    pos += 8 * n * i
    labels = np.frombuffer(payload, dtype="<u2", count=n, offset=pos)
    return LabeledDataset(samples, labels, k, domain_id, seed)


def perturbation_bytes(delta: ClasswisePerturbation, domain: bytes) -> bytes:
    k, i = delta.rows.shape
    payload = _DELTA_HEADER.pack(DELTA_MAGIC, FORMAT_VERSION, k, i, delta.xi, domain) + delta.rows.astype("<f8").tobytes()
    return payload + _checksum(payload)


def save_perturbation(path, delta: ClasswisePerturbation, data: LabeledDataset) -> None:
    """Write ``delta`` stamped with the domain digest of the dataset it was crafted for."""
    Path(path).write_bytes(perturbation_bytes(delta, data.domain_digest()))


def load_perturbation(path, data: LabeledDataset | None = None) -> ClasswisePerturbation:
    raw = Path(path).read_bytes()
    if len(raw) < _DELTA_HEADER.size or raw[:4] != DELTA_MAGIC:
        raise CorruptFileError(f"{path}: not a perturbation file")
    magic, version, k, i, xi, domain = _DELTA_HEADER.unpack_from(raw)
    if version != FORMAT_VERSION:
        raise CorruptFileError(f"{path}: unsupported version {version}")
    expected = _DELTA_HEADER.size + 8 * k * i + _CHECKSUM
    if len(raw) != expected:
        raise CorruptFileError(f"{path}: expected {expected} bytes, found {len(raw)}")
    payload = _verify(raw, path)
    if data is not None and domain != data.domain_digest():
        raise HashMismatchError(
            f"{path}: perturbation was crafted for domain {domain.hex()}, dataset "
            f"{data.domain_id!r} has {data.domain_digest().hex()}"
        )
    rows = np.frombuffer(payload, dtype="<f8", count=k * i, offset=_DELTA_HEADER.size).reshape(k, i)
    return ClasswisePerturbation(rows, xi)
