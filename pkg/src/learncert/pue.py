"""Crafting class-wise unlearnable perturbations under random weight perturbations.

One crafting round alternates

* ``surrogate_steps`` surrogate updates on ``D_s + delta``; each mini-batch is
  revisited once per weight-noise level ``s, 2s, ..., S`` with the gradient
  averaged over ``u_train`` noise draws at that level, and
* one pass of sign-gradient updates of ``delta`` over the held-out slice,
  again once per noise level with ``u_perturb`` draws,

until the surrogate's error on the perturbed held-out slice reaches the stop
error. Weight noise stays off until that error first drops below
``warmup_error``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from learncert import kernels, nn, rng
from learncert.data import ClasswisePerturbation, LabeledDataset, apply_perturbation, split_validation
from learncert.errors import NonConvergenceError, NumericalError


class Mode(str, enum.Enum):
    EMN = "emn"
    PUE_B = "pue-b"
    PUE = "pue"

    @classmethod
    def parse(cls, value) -> "Mode":
        if isinstance(value, Mode):
            return value
        key = str(value).lower().replace("_", "-")
        for m in cls:
            if m.value == key:
                return m
        raise ValueError(f"unknown crafting mode {value!r}; expected one of {[m.value for m in cls]}")


@dataclass(frozen=True)
class CraftConfig:
    mode: Mode = Mode.PUE
    u_train: int = 5
    u_perturb: int = 10
    noise_cap: float = 0.25
    noise_step: float = 0.05
    surrogate_steps: int = 10
    stop_error: float = 0.1
    warmup_error: float = 0.5
    step_size: Optional[float] = None
    xi: float = 8 / 255
    validation_fraction: float = 0.2
    max_rounds: int = 200
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode.parse(self.mode))
        if self.u_train < 1 or self.u_perturb < 1:
            raise ValueError("u_train and u_perturb must be positive")
        if self.noise_cap < 0:
            raise ValueError("noise_cap must be nonnegative")
        if self.noise_cap > 0 and not 0 < self.noise_step <= self.noise_cap:
            raise ValueError("need 0 < noise_step <= noise_cap")
        if not 0 < self.stop_error < 1:
            raise ValueError("stop_error must lie in (0, 1)")
        if not self.xi > 0:
            raise ValueError("xi must be positive")
        if self.step_size is not None and not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.surrogate_steps < 1 or self.max_rounds < 1:
            raise ValueError("surrogate_steps and max_rounds must be positive")

    @property
    def perturb_step(self) -> float:
        return self.xi / 10 if self.step_size is None else self.step_size

    @property
    def label(self) -> str:
        if self.mode is Mode.EMN:
            return "EMN"
        if self.mode is Mode.PUE_B:
            return "PUE-B"
        return f"PUE-{self.u_perturb}"

    def noise_levels(self) -> list[float]:
        """Weight-noise STD ramp ``s, 2s, ..., S``; a single zero level when ``S == 0``."""
        if self.noise_cap == 0:
            return [0.0]
        count = int(math.floor(self.noise_cap / self.noise_step + 1e-9))
        return [self.noise_step * (j + 1) for j in range(count)]


@dataclass
class CraftRound:
    round: int
    error: float
    train_sigmas: list[float]
    perturb_sigmas: list[float]

    def to_dict(self) -> dict:
        return {"round": self.round, "error": self.error,
                "train_sigmas": self.train_sigmas, "perturb_sigmas": self.perturb_sigmas}


@dataclass
class CraftResult:
    delta: ClasswisePerturbation
    theta: np.ndarray
    config: CraftConfig
    history: list[CraftRound] = field(default_factory=list)

    @property
    def final_error(self) -> float:
        return self.history[-1].error if self.history else 1.0

    def history_dict(self) -> dict:
        return {
            "mode": self.config.mode.value,
            "label": self.config.label,
            "final_error": self.final_error,
            "rounds": [r.to_dict() for r in self.history],
        }


def _noisy_copies(theta: np.ndarray, sigma: float, count: int, gen_args: tuple) -> list[np.ndarray]:
    if sigma == 0:
        return [theta]
    return [theta + sigma * rng.stream(*gen_args, j).standard_normal(theta.shape[0]) for j in range(count)]


def mean_param_grad(thetas: Sequence[np.ndarray], spec: nn.ModelSpec, x: np.ndarray, y: np.ndarray):
    """Loss and gradient averaged over weight-perturbed copies; gradient is in parameter space."""
    total_loss = 0.0
    total = np.zeros(spec.param_count)
    for t in thetas:
        loss, g, _ = nn._backprop(t, spec, x, y, want_input=False)
        total_loss += loss
        total += g
    return total_loss / len(thetas), total / len(thetas)


def delta_grad(rows: np.ndarray, x: np.ndarray, y: np.ndarray, thetas: Sequence[np.ndarray],
               spec: nn.ModelSpec) -> np.ndarray:
    """Gradient of the batch-mean loss, averaged over ``thetas``, w.r.t. each class row of delta.

    The ``[0, 1]`` clip on the perturbed input is treated as identity.
    """
    xp = np.clip(x + rows[y], 0.0, 1.0)
    per_sample = np.zeros_like(xp)
    for t in thetas:
        per_sample += nn._backprop(t, spec, xp, y, want_input=True)[2]
    per_sample /= len(thetas)
    grad = np.zeros_like(rows)
    np.add.at(grad, y, per_sample)
    return grad


def opt_step(delta: ClasswisePerturbation, x: np.ndarray, y: np.ndarray, thetas: Sequence[np.ndarray],
             spec: nn.ModelSpec, step_size: float) -> ClasswisePerturbation:
    """``delta[i] <- clip(delta[i] - step * sign(grad_i), -xi, xi)`` for each class in the batch.

    Classes absent from the batch get a zero gradient and are left unchanged.
    """
    grad = delta_grad(delta.rows, x, y, thetas, spec)
    if not np.all(np.isfinite(grad)):
        raise NumericalError("non-finite gradient w.r.t. the perturbation")
    rows = np.array(delta.rows, dtype=np.float64, order="C")
    kernels.sign_clip_step(rows, grad, step_size, delta.xi)
    return ClasswisePerturbation(rows, delta.xi)


def _surrogate_updates(theta, velocity, xb, yb, levels, count, spec, train_cfg, stream_args):
    for li, sigma in enumerate(levels):
        thetas = _noisy_copies(theta, sigma, count, (*stream_args, li))
        loss, g = mean_param_grad(thetas, spec, xb, yb)
        if not np.isfinite(loss):
            raise NumericalError("surrogate loss became non-finite")
        theta, velocity = nn.sgd_step(theta, g, train_cfg, velocity)
    return theta, velocity


def _error(theta, spec, data: LabeledDataset) -> float:
    return 1.0 - nn.accuracy(theta, spec, data)


def craft(source: LabeledDataset, spec: nn.ModelSpec, cfg: CraftConfig,
          train_cfg: nn.TrainConfig | None = None, init: np.ndarray | None = None) -> CraftResult:
    """Jointly optimise a class-wise perturbation and its surrogate.

    The surrogate trains on all of ``source``; the perturbation is optimised
    and validated on a stratified ``validation_fraction`` slice.

    Raises :class:`NonConvergenceError` (with the history attached) if the
    stop error is not reached within ``max_rounds``.
    """
    train_cfg = train_cfg or nn.TrainConfig(seed=cfg.seed)
    if source.input_dim != spec.input_dim or source.num_classes != spec.num_classes:
        raise ValueError("dataset shape does not match the model spec")
    _, val = split_validation(source, cfg.validation_fraction, rng.derive_seed(cfg.seed, "craft-split"))
    theta = nn.init_params(spec, rng.derive_seed(cfg.seed, "craft-init")) if init is None else init.copy()
    velocity = None
    delta = ClasswisePerturbation.zeros(source.num_classes, source.input_dim, cfg.xi)
    batch = min(train_cfg.batch_size, len(source))
    train_sampler = nn.BatchSampler(len(source), batch, rng.derive_seed(cfg.seed, "craft-train-batches"))
    val_batch = min(train_cfg.batch_size, len(val))
    val_sampler = nn.BatchSampler(len(val), val_batch, rng.derive_seed(cfg.seed, "craft-perturb-batches"))
    val_batches = math.ceil(len(val) / val_batch)
    noise_seed = rng.derive_seed(cfg.seed, "craft-weight-noise")

    levels = cfg.noise_levels()
    zeros = [0.0] * len(levels)
    noise_on = False
    noisy_rounds = 0
    history: list[CraftRound] = []
    for rnd in range(cfg.max_rounds):
        train_levels = levels if (noise_on and cfg.mode is not Mode.EMN) else zeros
        perturb_levels = levels if (noise_on and cfg.mode is Mode.PUE) else zeros

        for i in range(cfg.surrogate_steps):
            idx = train_sampler.next()
            xb = np.clip(source.samples[idx] + delta.rows[source.labels[idx]], 0.0, 1.0)
            theta, velocity = _surrogate_updates(
                theta, velocity, xb, source.labels[idx], train_levels, cfg.u_train, spec, train_cfg,
                (noise_seed, "surrogate", rnd, i),
            )

        for i in range(val_batches):
            idx = val_sampler.next()
            xb, yb = val.samples[idx], val.labels[idx]
            for li, sigma in enumerate(perturb_levels):
                thetas = _noisy_copies(theta, sigma, cfg.u_perturb, (noise_seed, "perturb", rnd, i, li))
                delta = opt_step(delta, xb, yb, thetas, spec, cfg.perturb_step)

        error = _error(theta, spec, apply_perturbation(val, delta))
        history.append(CraftRound(rnd, error, list(train_levels), list(perturb_levels)))
        if noise_on and any(train_levels):
            noisy_rounds += 1
        if not noise_on and error < cfg.warmup_error:
            noise_on = True
        if error <= cfg.stop_error and (cfg.mode is Mode.EMN or noisy_rounds > 0):
            return CraftResult(delta, theta, cfg, history)
    result = CraftResult(delta, theta, cfg, history)
    raise NonConvergenceError(
        f"{cfg.label}: perturbed-validation error {history[-1].error:.4f} above {cfg.stop_error} "
        f"after {cfg.max_rounds} rounds", history=result,
    )


def train_offline_surrogate(poisoned: LabeledDataset, spec: nn.ModelSpec, cfg: CraftConfig,
                            train_cfg: nn.TrainConfig | None = None, max_epochs: int = 200,
                            min_noise_epochs: int = 20) -> np.ndarray:
    """Fit a surrogate on already-perturbed data with the same ramped weight-noise augmentation.

    Stops once the (noise-free) training error is below ``cfg.stop_error`` and
    ``min_noise_epochs`` full epochs have been trained with weight noise active. With
    ``noise_cap == 0`` this is plain training.
    """
    train_cfg = train_cfg or nn.TrainConfig(seed=cfg.seed)
    theta = nn.init_params(spec, rng.derive_seed(cfg.seed, "offline-init"))
    velocity = None
    batch = min(train_cfg.batch_size, len(poisoned))
    sampler = nn.BatchSampler(len(poisoned), batch, rng.derive_seed(cfg.seed, "offline-batches"))
    steps_per_epoch = math.ceil(len(poisoned) / batch)
    noise_seed = rng.derive_seed(cfg.seed, "offline-weight-noise")
    levels = cfg.noise_levels()
    uses_noise = any(levels)
    noise_on = False
    noisy_steps = 0
    error = 1.0
    for epoch in range(max_epochs):
        active = levels if noise_on else [0.0] * len(levels)
        for i in range(steps_per_epoch):
            idx = sampler.next()
            theta, velocity = _surrogate_updates(
                theta, velocity, poisoned.samples[idx], poisoned.labels[idx], active, cfg.u_train, spec,
                train_cfg, (noise_seed, "offline", epoch, i),
            )
            if noise_on:
                noisy_steps += 1
        error = _error(theta, spec, poisoned)
        if not noise_on and uses_noise and error < cfg.warmup_error:
            noise_on = True
        if error < cfg.stop_error and (not uses_noise or noisy_steps >= min_noise_epochs * steps_per_epoch):
            return theta
    raise NonConvergenceError(f"offline surrogate training error {error:.4f} after {max_epochs} epochs")
