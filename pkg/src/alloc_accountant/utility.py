"""Bernoulli mean estimation under random allocation versus Poisson sampling.

Each of ``n`` users holds a bit with mean ``p``. Over ``t`` steps the server sums
the contributions it receives and adds ``N(0, sigma^2)`` noise per step; the
final estimate divides the total by ``n``. Under allocation every user
contributes exactly once; under Poisson sampling each user contributes to each
step with probability ``1/t``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import accountant
from .core_dp import Delta, Direction


class UtilityScheme(enum.Enum):
    ALLOCATION = "allocation"
    POISSON = "poisson"

    @classmethod
    def parse(cls, value: str | UtilityScheme) -> UtilityScheme:
        return value if isinstance(value, cls) else cls(str(value).lower())


@dataclass(frozen=True)
class UtilityConfig:
    scheme: UtilityScheme
    p: float
    n: int
    t: int
    sigma: float
    trials: int = 10_000
    seed: int = 0
    dim: int = 1

    def __post_init__(self):
        object.__setattr__(self, "scheme", UtilityScheme.parse(self.scheme))
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {self.p!r}")
        for name in ("n", "t", "trials", "dim"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if not self.sigma >= 0.0 or math.isinf(self.sigma):
            raise ValueError(f"sigma must be finite and >= 0, got {self.sigma!r}")


@dataclass(frozen=True)
class MseEstimate:
    empirical_mse: float
    std_error: float
    mean_estimate: float
    mean_std_error: float


def analytic_mse(cfg: UtilityConfig) -> float:
    """Sampling variance plus privacy noise, plus the participation noise for Poisson.

    The Poisson term is the large-n approximation ``p / n``.
    """
    n = cfg.n
    value = cfg.p * (1.0 - cfg.p) / n + cfg.dim * cfg.t * cfg.sigma ** 2 / n ** 2
    if cfg.scheme is UtilityScheme.POISSON:
        value += cfg.p / n
    return value


def simulate_mse(cfg: UtilityConfig) -> MseEstimate:
    """Empirical squared error of the estimator over ``cfg.trials`` independent trials."""
    if cfg.trials < 100:
        raise ValueError("at least 100 trials are required")
    rng = np.random.default_rng(cfg.seed)
    trials = cfg.trials
    ones = rng.binomial(cfg.n, cfg.p, size=trials).astype(float)
    if cfg.scheme is UtilityScheme.POISSON:
        # Each of the u * t (user, step) pairs with a one is kept with probability 1/t.
        ones = rng.binomial(ones.astype(np.int64) * cfg.t, 1.0 / cfg.t).astype(float)
    noise_sd = math.sqrt(cfg.dim * cfg.t) * cfg.sigma
    total = ones + rng.normal(0.0, 1.0, size=trials) * noise_sd
    est = total / cfg.n
    sq = (est - cfg.p) ** 2
    return MseEstimate(float(sq.mean()), float(sq.std(ddof=1) / math.sqrt(trials)),
                       float(est.mean()), float(est.std(ddof=1) / math.sqrt(trials)))


def calibrate_sigma(scheme: UtilityScheme | str, t: int, epsilon: float, delta: float | Delta,
                    lo: float = 0.05, hi: float = 200.0, rtol: float = 1e-4,
                    direction: Direction = Direction.BOTH) -> float:
    """Smallest sigma (to ``rtol``) whose accounted epsilon at ``delta`` is at most ``epsilon``."""
    scheme = UtilityScheme.parse(scheme)
    acc_scheme = accountant.Scheme.ALLOCATION if scheme is UtilityScheme.ALLOCATION \
        else accountant.Scheme.POISSON

    def eps_at(sigma: float) -> float:
        spec = accountant.SchemeSpec(acc_scheme, sigma, t, direction=direction)
        try:
            return accountant.epsilon(spec, delta).value
        except accountant.NoBoundAvailable:
            return math.inf

    if eps_at(hi) > epsilon:
        raise ValueError(f"target epsilon {epsilon} not reached at sigma={hi}")
    if eps_at(lo) <= epsilon:
        return lo
    while hi / lo > 1.0 + rtol:
        mid = math.sqrt(lo * hi)
        if eps_at(mid) <= epsilon:
            hi = mid
        else:
            lo = mid
    return hi
