"""Certified (q, eta)-learnability from smoothed accuracy order statistics.

The certificate bound is an order statistic ``a_k`` of the sampled accuracies,
where ``k`` is the smallest index at which ``a_k`` upper-bounds the
``q_bar``-quantile of the smoothed accuracy with confidence ``1 - alpha``.
The coverage of ``a_k`` equals ``P[Binomial(n, q_bar) <= k - 1]``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

import numpy as np
from scipy.special import gammaln, ndtr, ndtri

from learncert.errors import AbstainedError
from learncert.smoothing import AccuracySamples, quantile_index


def norm_cdf(x: float) -> float:
    return float(ndtr(x))


def norm_ppf(p: float) -> float:
    return float(ndtri(p))


def q_bar(q: float, eta: float, sigma: float) -> float:
    """Quantile level the unperturbed surrogate must be bounded at: ``Phi(Phi^-1(q) + eta / sigma)``."""
    if not 0 < q < 1:
        raise ValueError("q must lie strictly inside (0, 1)")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    if eta == 0:
        return float(q)
    return norm_cdf(norm_ppf(q) + eta / sigma)


def log_binom_pmf(n: int, p: float) -> np.ndarray:
    """``log P[X = i]`` for ``i = 0..n``, ``X ~ Binomial(n, p)``."""
    i = np.arange(n + 1, dtype=np.float64)
    log_choose = gammaln(n + 1) - gammaln(i + 1) - gammaln(n - i + 1)
    if p == 0.0 or p == 1.0:
        out = np.full(n + 1, -np.inf)
        out[0 if p == 0.0 else n] = 0.0
        return out
    return log_choose + i * math.log(p) + (n - i) * math.log1p(-p)


def binom_log_sf(n: int, p: float) -> np.ndarray:
    """``log P[X >= k]`` for ``k = 0..n`` (exact sum in log space)."""
    logpmf = log_binom_pmf(n, p)
    return np.logaddexp.accumulate(logpmf[::-1])[::-1]


def binom_cdf(k: int, n: int, p: float) -> float:
    """``P[X <= k]``."""
    if k < 0:
        return 0.0
    if k >= n:
        return 1.0
    logpmf = log_binom_pmf(n, p)
    log_lower = float(np.logaddexp.reduce(logpmf[:k + 1]))
    if log_lower < math.log(0.5):
        return math.exp(log_lower)
    # upper tail is the smaller one; subtract it to keep digits near 1
    return float(-np.expm1(np.logaddexp.reduce(logpmf[k + 1:])))


def coverage(k: int, n: int, qb: float) -> float:
    """Probability that ``a_k`` lies at or above the true ``qb``-quantile."""
    return binom_cdf(k - 1, n, qb)


def quantile_upper_bound(n: int, alpha: float, sigma: float, eta: float, q: float) -> Optional[int]:
    """Smallest ``k >= ceil(n * q_bar)`` with coverage ``>= 1 - alpha``; ``None`` means abstain.

    Abstention happens exactly when ``q_bar ** n > alpha``: even ``k = n``
    leaves probability ``q_bar ** n`` that every draw falls below the quantile.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    qb = q_bar(q, eta, sigma)
    return index_for_level(n, alpha, qb)


def index_for_level(n: int, alpha: float, qb: float) -> Optional[int]:
    if n * math.log(qb) > math.log(alpha):
        return None
    log_sf = binom_log_sf(n, qb)
    # coverage(k) >= 1 - alpha  <=>  P[X >= k] <= alpha
    log_alpha = math.log(alpha)
    for k in range(quantile_index(n, qb), n + 1):
        if log_sf[k] <= log_alpha:
            return k
    return None  # pragma: no cover - excluded by the q_bar ** n test above


def max_certifiable_eta(q: float, sigma: float, n: int, alpha: float) -> float:
    """Largest eta that does not abstain: ``sigma * (Phi^-1(alpha^(1/n)) - Phi^-1(q))``.

    Negative when even eta = 0 abstains.
    """
    # Phi^-1(p) = -Phi^-1(1 - p); 1 - alpha^(1/n) is formed with expm1 to keep digits
    upper = -norm_ppf(-math.expm1(math.log(alpha) / n))
    return sigma * (upper - norm_ppf(q))


@dataclass(frozen=True)
class CertRequest:
    q: float = 0.9
    eta: float = 0.0
    alpha: float = 0.01

    def __post_init__(self):
        if not 0 < self.q < 1:
            raise ValueError("q must lie in (0, 1)")
        if self.eta < 0:
            raise ValueError("eta must be nonnegative")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")


@dataclass(frozen=True)
class Certificate:
    q: float
    eta: float
    sigma: float
    n: int
    alpha: float
    q_bar: float
    k: Optional[int]
    bound: Optional[float]
    generalization_addend: Optional[float] = None
    seed: int = 0
    surrogate_digest: str = ""
    dataset_id: str = ""
    offset: Optional[float] = None

    @property
    def abstained(self) -> bool:
        return self.k is None

    @property
    def generalization_bound(self) -> Optional[float]:
        if self.abstained or self.generalization_addend is None:
            return None
        return self.bound + self.generalization_addend

    @property
    def offset_bound(self) -> Optional[float]:
        if self.abstained:
            return None
        return self.bound + (self.offset or 0.0)

    def with_offset(self, offset: float) -> "Certificate":
        """Attach a reporting offset; the raw bound is never modified."""
        return replace(self, offset=float(offset))

    def to_dict(self) -> dict:
        d = {
            "q": self.q,
            "eta": self.eta,
            "sigma": self.sigma,
            "n": self.n,
            "alpha": self.alpha,
            "q_bar": self.q_bar,
            "k": self.k,
        }
        if self.abstained:
            d["abstain"] = True
        else:
            d["bound"] = self.bound
        d["generalization_addend"] = self.generalization_addend
        d["seed"] = self.seed
        d["surrogate_digest"] = self.surrogate_digest
        d["dataset_id"] = self.dataset_id
        if self.offset is not None:
            d["offset"] = self.offset
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "Certificate":
        fields = {k: d.get(k) for k in ("q", "eta", "sigma", "n", "alpha", "q_bar", "k", "generalization_addend",
                                         "offset")}
        abstain = bool(d.get("abstain", False))
        return cls(
            bound=None if abstain else d["bound"],
            seed=d.get("seed", 0),
            surrogate_digest=d.get("surrogate_digest", ""),
            dataset_id=d.get("dataset_id", ""),
            **fields,
        )

    @classmethod
    def from_json(cls, text: str) -> "Certificate":
        return cls.from_dict(json.loads(text))


def certify_learnability(samples: AccuracySamples, req: CertRequest,
                         generalization: Optional[tuple[int, float]] = None,
                         hoeffding_variant: str = "2N") -> Certificate:
    """Certify ``a_k`` as the (q, eta)-learnability bound, or abstain.

    ``generalization=(N_test, beta)`` attaches the Hoeffding addend for a test
    set of ``N_test`` samples drawn from the domain.
    """
    cfg = samples.config
    if cfg.sigma <= 0:
        raise ValueError("certification needs sigma > 0")
    n = len(samples)
    k = quantile_upper_bound(n, req.alpha, cfg.sigma, req.eta, req.q)
    addend = None
    if generalization is not None:
        n_test, beta = generalization
        addend = hoeffding_addend(n_test, n, beta, hoeffding_variant)
    return Certificate(
        q=req.q, eta=req.eta, sigma=cfg.sigma, n=n, alpha=req.alpha,
        q_bar=q_bar(req.q, req.eta, cfg.sigma), k=k,
        bound=None if k is None else samples.order_statistic(k),
        generalization_addend=addend, seed=cfg.seed,
        surrogate_digest=samples.surrogate_digest, dataset_id=samples.dataset_id,
    )


# --- generalisation ------------------------------------------------------

HOEFFDING_VARIANTS = ("2N", "N")


def hoeffding_addend(n_test: int, n: int, beta: float, variant: str = "2N") -> float:
    """``sqrt(log(2n / beta) / (2 N))``; the ``"N"`` variant drops the factor 2 in the denominator."""
    if n_test < 1:
        raise ValueError("n_test must be at least 1")
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    if variant not in HOEFFDING_VARIANTS:
        raise ValueError(f"variant must be one of {HOEFFDING_VARIANTS}")
    denom = 2 * n_test if variant == "2N" else n_test
    return math.sqrt(math.log(2 * n / beta) / denom)


def hoeffding_generalization(t: float, n_test: int, n: int, beta: float, variant: str = "2N") -> float:
    return t + hoeffding_addend(n_test, n, beta, variant)


def pac_bayes_penalty(theta_norm: float, sigma: float, n_test: int, alpha: float) -> float:
    if n_test < 2:
        raise ValueError("PAC-Bayes bound needs n_test >= 2")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    return math.sqrt((theta_norm ** 2 / sigma ** 2 + math.log(n_test / alpha)) / (2 * (n_test - 1)))


def pac_bayes_lower_bound(mean_acc: float, theta_norm: float, sigma: float, n_test: int, alpha: float) -> float:
    """Lower bound on expected domain accuracy of the Gaussian-smoothed classifier."""
    return mean_acc - pac_bayes_penalty(theta_norm, sigma, n_test, alpha)


class TightnessGap(NamedTuple):
    value: float
    underestimate: bool


def tightness_gap(estimate: float, cert: Certificate) -> TightnessGap:
    """Learnability estimate minus the certified bound.

    A negative gap means the empirical estimate fell below the certified
    bound, i.e. the estimate underestimates the true learnability.
    """
    if cert.abstained:
        raise AbstainedError("tightness gap needs a non-abstained certificate")
    gap = estimate - cert.bound
    return TightnessGap(gap, gap < 0)
