"""Monte-Carlo estimates of the allocation hockey-stick divergence with Hoeffding intervals.

The privacy loss of 1-out-of-t allocation of the Gaussian pair depends on the
sample only through ``r = (1/t) sum_i exp((2 Z_i - 1) / (2 sigma^2))``:

* remove: ``delta(eps) = E_P[(1 - e^eps / r)_+]`` with one coordinate shifted to mean 1;
* add:    ``delta(eps) = E_Q[(1 - e^eps * r)_+]`` with all coordinates centred.

Both integrands lie in [0, 1], so the two-sided Hoeffding interval is exact.

Samples are generated in fixed-size shards, each with its own Philox stream
keyed by ``(seed, shard index)``; the result does not depend on how many worker
threads process the shards.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special

from .core_dp import Direction, _check_sigma

THREADS_ENV = "ALLOC_ACCOUNTANT_THREADS"
_SHARD_VALUES = 1 << 21


@dataclass(frozen=True)
class McEstimate:
    estimate: float
    ci_low: float
    ci_high: float
    n_samples: int
    confidence: float
    seed: int

    @property
    def half_width(self) -> float:
        return hoeffding_half_width(self.n_samples, self.confidence)


def hoeffding_half_width(n: int, confidence: float) -> float:
    return math.sqrt(math.log(2.0 / (1.0 - confidence)) / (2.0 * n))


def default_workers() -> int:
    raw = os.environ.get(THREADS_ENV, "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def shard_size(t: int) -> int:
    return max(1, _SHARD_VALUES // t)


def _log_ratio(z: np.ndarray, sigma: float, t: int) -> np.ndarray:
    return special.logsumexp((2.0 * z - 1.0) / (2.0 * sigma * sigma), axis=1) - math.log(t)


def _shard_sums(sigma: float, t: int, eps: np.ndarray, side: Direction, seed: int,
                shard: int, count: int) -> list[float]:
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, shard])))
    z = rng.normal(0.0, sigma, size=(count, t))
    if side is Direction.REMOVE:
        # By symmetry the shifted coordinate can be taken to be the first one.
        z[:, 0] += 1.0
        log_r = _log_ratio(z, sigma, t)
        expo = eps[:, None] - log_r[None, :]
    else:
        log_r = _log_ratio(z, sigma, t)
        expo = eps[:, None] + log_r[None, :]
    vals = -np.expm1(np.minimum(expo, 0.0))
    return [math.fsum(row) for row in vals]


def _check_inputs(sigma: float, t: int, n: int, confidence: float, seed: int) -> None:
    _check_sigma(sigma)
    if int(t) != t or t < 1:
        raise ValueError(f"t must be a positive integer, got {t!r}")
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    if not 0.0 < confidence < 1.0:
        raise ValueError(f"confidence must lie in (0, 1), got {confidence!r}")
    if int(seed) != seed or not 0 <= seed < 2 ** 64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed!r}")


def mc_delta_many(sigma: float, t: int, epsilons: Sequence[float], direction: Direction | str,
                  n: int, seed: int, confidence: float = 0.99,
                  workers: int | None = None) -> list[McEstimate]:
    """Estimates at several epsilons from one shared set of samples."""
    _check_inputs(sigma, t, n, confidence, seed)
    side = Direction.parse(direction)
    if side is Direction.BOTH:
        raise ValueError("a single direction is required")
    eps = np.asarray([float(e) for e in epsilons], dtype=float)
    if np.any(np.isnan(eps)):
        raise ValueError("epsilon must be a number")
    size = shard_size(int(t))
    counts = [size] * (int(n) // size)
    if n % size:
        counts.append(int(n) % size)
    workers = default_workers() if workers is None else max(1, int(workers))

    def job(i: int) -> list[float]:
        return _shard_sums(float(sigma), int(t), eps, side, int(seed), i, counts[i])

    if workers == 1:
        partial = [job(i) for i in range(len(counts))]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partial = list(pool.map(job, range(len(counts))))
    half = hoeffding_half_width(int(n), confidence)
    out = []
    for j in range(len(eps)):
        mean = math.fsum(p[j] for p in partial) / n
        mean = min(max(mean, 0.0), 1.0)
        out.append(McEstimate(mean, max(mean - half, 0.0), min(mean + half, 1.0),
                              int(n), float(confidence), int(seed)))
    return out


def mc_delta_remove(sigma: float, t: int, epsilon: float, n: int, seed: int,
                    confidence: float = 0.99, workers: int | None = None) -> McEstimate:
    """Remove-direction estimate of delta(epsilon) for 1-out-of-t Gaussian allocation."""
    return mc_delta_many(sigma, t, [epsilon], Direction.REMOVE, n, seed, confidence, workers)[0]


def mc_delta_add(sigma: float, t: int, epsilon: float, n: int, seed: int,
                 confidence: float = 0.99, workers: int | None = None) -> McEstimate:
    """Add-direction estimate of delta(epsilon) for 1-out-of-t Gaussian allocation."""
    return mc_delta_many(sigma, t, [epsilon], Direction.ADD, n, seed, confidence, workers)[0]
