"""Recovery attacks inside an l2 weight ball and empirical certificate validation."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from learncert import nn, rng
from learncert.certify import Certificate
from learncert.data import LabeledDataset, split_validation
from learncert.errors import AbstainedError, DimensionError, DivergenceError


def project_l2(theta: np.ndarray, center: np.ndarray, eta: float) -> np.ndarray:
    """Euclidean projection of ``theta`` onto the ball of radius ``eta`` around ``center``."""
    theta = np.asarray(theta, dtype=np.float64)
    center = np.asarray(center, dtype=np.float64)
    if theta.shape != center.shape:
        raise DimensionError("parameter vector length", center.shape, theta.shape)
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    diff = theta - center
    dist = float(np.linalg.norm(diff))
    if dist <= eta:
        return theta.copy()
    return center + diff * (eta / dist)


class RecoveryMode(str, enum.Enum):
    GENERALIZED = "generalized"
    BEST_CASE = "best_case"


@dataclass(frozen=True)
class RecoveryConfig:
    eta_budget: float = 1.0
    lr: float = 0.01
    steps: int = 300
    clean_fraction: float = 0.2
    batch_size: int = 128
    seed: int = 0

    def __post_init__(self):
        if self.eta_budget < 0:
            raise ValueError("eta_budget must be nonnegative")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.steps < 0:
            raise ValueError("steps must be nonnegative")
        if not 0 < self.clean_fraction <= 1:
            raise ValueError("clean_fraction must lie in (0, 1]")


@dataclass
class RecoveryCurve:
    points: list[tuple[float, float]] = field(default_factory=list)
    mode: RecoveryMode = RecoveryMode.GENERALIZED
    seed: int = 0

    def __post_init__(self):
        etas = [e for e, _ in self.points]
        if any(b <= a for a, b in zip(etas, etas[1:])):
            raise ValueError("eta values must be strictly increasing")

    @property
    def etas(self) -> list[float]:
        return [e for e, _ in self.points]

    @property
    def accuracies(self) -> list[float]:
        return [a for _, a in self.points]

    def to_csv(self) -> str:
        lines = ["eta,accuracy,mode,seed"]
        lines += [f"{e!r},{a!r},{self.mode.value},{self.seed}" for e, a in self.points]
        return "\n".join(lines) + "\n"


def attacker_subset(data: LabeledDataset, fraction: float, seed: int) -> LabeledDataset:
    if fraction >= 1:
        return data
    return split_validation(data, fraction, rng.derive_seed(seed, "attacker-subset"))[1]


def finetune_in_ball(theta_hat: np.ndarray, spec: nn.ModelSpec, data: LabeledDataset, cfg: RecoveryConfig,
                     callback: Optional[Callable[[int, np.ndarray], None]] = None) -> np.ndarray:
    """Plain projected SGD on cross-entropy, projecting back into the ball after every step."""
    theta_hat = nn.check_params(theta_hat, spec)
    theta = theta_hat.copy()
    if cfg.eta_budget == 0:
        return theta
    sgd = nn.TrainConfig(learning_rate=cfg.lr, momentum=0.0, batch_size=cfg.batch_size, seed=cfg.seed)
    sampler = nn.BatchSampler(len(data), min(cfg.batch_size, len(data)), rng.derive_seed(cfg.seed, "recovery"))
    for step in range(cfg.steps):
        idx = sampler.next()
        loss, grad, _ = nn._backprop(theta, spec, data.samples[idx], data.labels[idx], want_input=False)
        if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
            raise DivergenceError(step)
        theta, _ = nn.sgd_step(theta, grad, sgd)
        theta = project_l2(theta, theta_hat, cfg.eta_budget)
        if callback is not None:
            callback(step, theta)
    return theta


def recovery_attack(theta_hat: np.ndarray, spec: nn.ModelSpec, clean: LabeledDataset, test: LabeledDataset,
                    cfg: RecoveryConfig, callback=None) -> tuple[np.ndarray, float]:
    """Fine-tune on a ``clean_fraction`` subset of ``clean``; report accuracy on ``test``."""
    subset = attacker_subset(clean, cfg.clean_fraction, cfg.seed)
    theta = finetune_in_ball(theta_hat, spec, subset, cfg, callback)
    return theta, nn.accuracy(theta, spec, test)


def estimate_true_learnability(theta_hat: np.ndarray, spec: nn.ModelSpec, test: LabeledDataset, eta: float,
                               cfg: RecoveryConfig | None = None) -> float:
    """Best-case recovery: fine-tune directly on ``test`` inside the eta ball and score on it."""
    cfg = cfg or RecoveryConfig()
    cfg = RecoveryConfig(eta, cfg.lr, cfg.steps, 1.0, cfg.batch_size, cfg.seed)
    theta = finetune_in_ball(theta_hat, spec, test, cfg)
    return nn.accuracy(theta, spec, test)


def recovery_curve(theta_hat, spec, clean, test, etas, cfg: RecoveryConfig,
                   mode: RecoveryMode = RecoveryMode.GENERALIZED) -> RecoveryCurve:
    mode = RecoveryMode(mode)
    points = []
    for eta in etas:
        run = RecoveryConfig(float(eta), cfg.lr, cfg.steps, cfg.clean_fraction, cfg.batch_size, cfg.seed)
        if mode is RecoveryMode.BEST_CASE:
            acc = estimate_true_learnability(theta_hat, spec, test, float(eta), run)
        else:
            acc = recovery_attack(theta_hat, spec, clean, test, run)[1]
        points.append((float(eta), acc))
    return RecoveryCurve(points, mode, cfg.seed)


def sample_sphere(d: int, gen: np.random.Generator) -> np.ndarray:
    """Uniform direction on the unit sphere in ``R^d``."""
    v = gen.standard_normal(d)
    return v / np.linalg.norm(v)


def validation_draw(theta_hat: np.ndarray, eta: float, sigma: float, trial: int, seed: int,
                    interior: bool = False) -> np.ndarray:
    """``theta_hat + upsilon + eps`` for one validation trial."""
    gen = rng.stream(seed, "validate", trial)
    d = theta_hat.shape[0]
    u = sample_sphere(d, gen)
    radius = eta * gen.uniform() ** (1.0 / d) if interior else eta
    eps = sigma * gen.standard_normal(d) if sigma > 0 else 0.0
    return theta_hat + radius * u + eps


def validate_certificate(theta_hat: np.ndarray, spec: nn.ModelSpec, test: LabeledDataset, cert: Certificate,
                         m_trials: int = 500, seed: int = 0, interior: bool = False) -> float:
    """Fraction of certified-set draws whose accuracy exceeds the certified bound.

    Each trial shifts the surrogate by ``eta`` along a uniform random
    direction (the boundary of the certified set unless ``interior``) and
    adds ``N(0, sigma^2 I)`` noise.
    """
    if cert.abstained:
        raise AbstainedError("cannot validate an abstained certificate")
    if m_trials < 1:
        raise ValueError("m_trials must be positive")
    theta_hat = nn.check_params(theta_hat, spec)
    exceed = 0
    for trial in range(m_trials):
        theta = validation_draw(theta_hat, cert.eta, cert.sigma, trial, seed, interior)
        if nn.accuracy(theta, spec, test) > cert.bound:
            exceed += 1
    return exceed / m_trials


def validation_report(violation_rate: float, m_trials: int, cert: Certificate) -> dict:
    return {"m_trials": m_trials, "violation_rate": violation_rate, "bound": cert.bound, "q": cert.q}
