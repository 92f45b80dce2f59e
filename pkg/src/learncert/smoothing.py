"""Gaussian smoothing in weight space and the accuracy order statistics it yields."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from learncert import nn, rng
from learncert.errors import CorruptFileError

STREAM_LABEL = "smoothing"


@dataclass(frozen=True)
class SmoothingConfig:
    sigma: float = 0.25
    n: int = 1000
    seed: int = 0

    def __post_init__(self):
        # sigma == 0 is accepted as the degenerate no-noise case
        if not self.sigma >= 0:
            raise ValueError("sigma must be nonnegative")
        if self.n < 1:
            raise ValueError("n must be at least 1")


@dataclass(frozen=True, eq=False)
class AccuracySamples:
    values: np.ndarray
    config: SmoothingConfig
    surrogate_digest: str = ""
    dataset_id: str = ""

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 1 or values.shape[0] != self.config.n:
            raise ValueError(f"expected {self.config.n} accuracy values, got shape {values.shape}")
        if np.any(np.diff(values) < 0):
            raise ValueError("accuracy values must be sorted nondecreasing")
        if values.size and (values[0] < 0 or values[-1] > 1):
            raise ValueError("accuracy values must lie in [0, 1]")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, AccuracySamples):
            return NotImplemented
        return (self.config == other.config and self.surrogate_digest == other.surrogate_digest
                and self.dataset_id == other.dataset_id and np.array_equal(self.values, other.values))

    def order_statistic(self, k: int) -> float:
        """1-based ``a_k``."""
        return float(self.values[k - 1])


def noise(d: int, sigma: float, draw_index: int, seed: int) -> np.ndarray:
    return sigma * rng.stream(seed, STREAM_LABEL, draw_index).standard_normal(d)


def perturb_params(theta: np.ndarray, sigma: float, draw_index: int, seed: int) -> np.ndarray:
    """``theta + eps`` with ``eps ~ N(0, sigma^2 I)`` drawn from the stream addressed by ``(seed, draw_index)``."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    theta = np.asarray(theta, dtype=np.float64)
    if sigma == 0:
        return theta.copy()
    return theta + noise(theta.shape[0], sigma, draw_index, seed)


def sample_accuracies(theta: np.ndarray, spec: nn.ModelSpec, data, cfg: SmoothingConfig,
                      workers: int = 1) -> AccuracySamples:
    """Accuracy of ``cfg.n`` weight-perturbed copies of ``theta`` on ``data``, sorted."""
    theta = nn.check_params(theta, spec)

    def one(j: int) -> float:
        return nn.accuracy(perturb_params(theta, cfg.sigma, j, cfg.seed), spec, data)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(one, range(cfg.n)))
    else:
        values = [one(j) for j in range(cfg.n)]
    return AccuracySamples(
        np.sort(np.asarray(values)), cfg, nn.param_digest(theta, spec), getattr(data, "domain_id", "")
    )


def quantile_index(n: int, q: float) -> int:
    """1-based index ``ceil(n * q)``, tolerant of float representation error in ``n * q``."""
    return min(n, max(1, math.ceil(n * q - 1e-9)))


def empirical_qps(samples: AccuracySamples, q: float) -> float:
    """Smallest order statistic whose empirical CDF reaches ``q``."""
    if not 0 < q < 1:
        raise ValueError("q must lie in (0, 1)")
    if len(samples) == 0:
        raise ValueError("no samples")
    return samples.order_statistic(quantile_index(len(samples), q))


# --- text format ---------------------------------------------------------

_HEADER_KEYS = ("sigma", "n", "seed", "surrogate_digest", "dataset_id")


def format_samples(samples: AccuracySamples) -> str:
    c = samples.config
    lines = [
        "# learncert accuracy samples v1",
        f"sigma: {c.sigma!r}",
        f"n: {c.n}",
        f"seed: {c.seed}",
        f"surrogate_digest: {samples.surrogate_digest}",
        f"dataset_id: {samples.dataset_id}",
        "values:",
    ]
    lines += [f"{v:.17g}" for v in samples.values]
    return "\n".join(lines) + "\n"


def save_samples(path, samples: AccuracySamples) -> None:
    Path(path).write_text(format_samples(samples))


def load_samples(path) -> AccuracySamples:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# learncert accuracy samples"):
        raise CorruptFileError(f"{path}: not an accuracy-samples file")
    header = {}
    try:
        pos = lines.index("values:")
    except ValueError:
        raise CorruptFileError(f"{path}: missing values section") from None
    for line in lines[1:pos]:
        key, _, value = line.partition(": ")
        header[key] = value
    missing = [k for k in _HEADER_KEYS if k not in header]
    if missing:
        raise CorruptFileError(f"{path}: missing header fields {missing}")
    cfg = SmoothingConfig(float(header["sigma"]), int(header["n"]), int(header["seed"]))
    values = [float(v) for v in lines[pos + 1:]]
    if len(values) != cfg.n:
        raise CorruptFileError(f"{path}: header says n={cfg.n} but {len(values)} values follow")
    return AccuracySamples(np.asarray(values), cfg, header["surrogate_digest"], header["dataset_id"])
