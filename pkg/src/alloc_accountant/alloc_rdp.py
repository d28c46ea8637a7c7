"""Direct RDP analysis of 1-out-of-t random allocation.

Remove direction: the order-``alpha`` moment of the averaged likelihood ratio
``(1/t) sum_i P(y_i)/Q(y_i)`` under ``Q^t`` expands over integer partitions of
``alpha`` with at most ``t`` parts,

    exp((a-1) rho) = t^-a sum_Pi binom(t; C(Pi)) binom(a; Pi) prod_{p in Pi} exp((p-1) rho_p),

where ``rho_p`` is the order-``p`` RDP of a single step (``rho_1 = 0``).

Add direction: a Gaussian surrogate with scale ``sqrt(t) sigma`` evaluated at a
shifted threshold.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Callable, Iterator, Mapping, Sequence

import numpy as np
from scipy import special

from .core_dp import (
    DEFAULT_ORDERS,
    Delta,
    Direction,
    _check_open_delta,
    _check_sigma,
    gaussian_delta,
    gaussian_epsilon,
    search_epsilon,
)

DEFAULT_ALPHA_CAP = 60


class OrderTooLargeError(ValueError):
    pass


@dataclass(frozen=True)
class IntegerPartition:
    """Parts in non-increasing order."""

    parts: tuple[int, ...]

    def __post_init__(self):
        parts = tuple(int(p) for p in self.parts)
        if not parts or any(p < 1 for p in parts):
            raise ValueError("partition parts must be positive integers")
        if any(b > a for a, b in zip(parts, parts[1:])):
            raise ValueError("partition parts must be non-increasing")
        object.__setattr__(self, "parts", parts)

    @property
    def total(self) -> int:
        return sum(self.parts)

    def __len__(self) -> int:
        return len(self.parts)

    def __iter__(self):
        return iter(self.parts)

    @property
    def counts(self) -> tuple[int, ...]:
        """Multiplicities of the distinct part values, largest value first."""
        out = []
        prev = None
        for p in self.parts:
            if p == prev:
                out[-1] += 1
            else:
                out.append(1)
                prev = p
        return tuple(out)


@dataclass(frozen=True)
class PartitionWeights:
    log_count_coeff: float
    log_multinomial: float
    counts: tuple[int, ...]


def partitions(alpha: int, max_parts: int) -> Iterator[IntegerPartition]:
    """All partitions of ``alpha`` into at most ``max_parts`` parts.

    Yields in descending lexicographic order, starting from ``[alpha]``.
    """
    if alpha < 1 or max_parts < 1:
        raise ValueError("alpha and max_parts must be >= 1")

    def rec(remaining: int, largest: int, slots: int, prefix: list[int]):
        if remaining == 0:
            yield IntegerPartition(tuple(prefix))
            return
        if slots == 0:
            return
        for p in range(min(largest, remaining), 0, -1):
            # The rest must fit into slots - 1 parts of size <= p.
            if p * slots < remaining:
                break
            prefix.append(p)
            yield from rec(remaining - p, p, slots - 1, prefix)
            prefix.pop()

    yield from rec(int(alpha), int(alpha), int(max_parts), [])


@functools.lru_cache(maxsize=None)
def restricted_partition_count(alpha: int, max_parts: int) -> int:
    """Number of partitions of ``alpha`` into at most ``max_parts`` parts."""
    if alpha == 0:
        return 1
    if alpha < 0 or max_parts <= 0:
        return 0
    return (restricted_partition_count(alpha, max_parts - 1)
            + restricted_partition_count(alpha - max_parts, max_parts))


def partition_weights(partition: IntegerPartition, t: int) -> PartitionWeights:
    """Log coefficients ``ln binom(t; C(Pi))`` and ``ln alpha!/prod p!`` of a partition."""
    counts = partition.counts
    n = len(partition)
    if n > t:
        raise ValueError("partition has more parts than steps")
    log_count = (special.gammaln(t + 1.0) - special.gammaln(t - n + 1.0)
                 - sum(special.gammaln(c + 1.0) for c in counts))
    log_multi = special.gammaln(partition.total + 1.0) - sum(
        special.gammaln(p + 1.0) for p in partition.parts)
    return PartitionWeights(float(log_count), float(log_multi), counts)


def _check_t(t: int) -> int:
    if int(t) != t or t < 1:
        raise ValueError(f"t must be a positive integer, got {t!r}")
    return int(t)


def _check_alpha(alpha: int, cap: int) -> int:
    if int(alpha) != alpha or alpha < 2:
        raise ValueError(f"alpha must be an integer >= 2, got {alpha!r}")
    if alpha > cap:
        raise OrderTooLargeError(f"order {alpha} exceeds the configured cap {cap}")
    return int(alpha)


def _step_log_moments(step_rdp: Mapping[int, float] | Callable[[int], float],
                      max_order: int) -> np.ndarray:
    """``(p - 1) * rho_p`` for p = 0..max_order (entries 0 and 1 are 0)."""
    lookup = step_rdp if callable(step_rdp) else step_rdp.__getitem__
    out = np.zeros(max_order + 1)
    for p in range(2, max_order + 1):
        try:
            rho = float(lookup(p))
        except KeyError:
            raise ValueError(f"step RDP missing for order {p}") from None
        if not math.isfinite(rho) or rho < 0:
            raise ValueError(f"step RDP at order {p} must be finite and >= 0")
        out[p] = (p - 1) * rho
    return out


def _log_normalized_moments(log_moments: np.ndarray, t: int, max_order: int) -> np.ndarray:
    """``ln E[((1/t) sum_i X_i)^s]`` for s = 0..max_order.

    Each partition is reached exactly once by choosing, for every part size p,
    how many parts ``c_p`` equal p; the state is (sum so far, parts so far).
    Everything stays in log space and every summand is positive.
    """
    A = max_order
    log_t = math.log(t)
    table = np.full((A + 1, A + 1), -np.inf)
    table[0, 0] = 0.0
    for p in range(1, A + 1):
        w = log_moments[p] - special.gammaln(p + 1.0) - (p - 1) * log_t
        new = table.copy()
        for c in range(1, A // p + 1):
            shift = c * w - special.gammaln(c + 1.0)
            src = table[: A + 1 - c * p, : A + 1 - c]
            dst = new[c * p:, c:]
            np.logaddexp(dst, src + shift, out=dst)
        table = new
    n = np.arange(A + 1)
    # ln t!/((t-n)! t^n); -inf once n exceeds t.
    with np.errstate(divide="ignore"):
        falling = np.concatenate(([0.0], np.cumsum(np.log1p(-np.minimum(np.arange(A), t) / t))))
    falling[n > t] = -np.inf
    out = special.logsumexp(table + falling[None, :], axis=1)
    return out + special.gammaln(np.arange(A + 1) + 1.0)


def alloc_rdp_remove_general(step_rdp: Mapping[int, float] | Callable[[int], float], t: int,
                             alpha: int, alpha_cap: int = DEFAULT_ALPHA_CAP) -> float:
    """Remove-direction RDP of 1-out-of-t allocation of an arbitrary randomizer.

    Args:
        step_rdp: order-p RDP of the randomizer for every p in 2..alpha.
        t: number of steps.
        alpha: integer order >= 2.
    """
    t = _check_t(t)
    alpha = _check_alpha(alpha, alpha_cap)
    return _general_curve(step_rdp, t, alpha, max(alpha, alpha_cap))[alpha]


def _general_curve(step_rdp, t: int, alpha: int, size: int) -> tuple[float, ...]:
    log_moments = _step_log_moments(step_rdp, alpha)
    if t == 1:
        return tuple(log_moments[a] / (a - 1) if a >= 2 else 0.0 for a in range(alpha + 1))
    padded = np.zeros(size + 1)
    padded[: alpha + 1] = log_moments
    values = _log_normalized_moments(padded, t, size)
    return tuple(max(float(values[a]), 0.0) / (a - 1) if a >= 2 else 0.0
                 for a in range(alpha + 1))


def alloc_rdp_remove_enumerated(step_rdp: Mapping[int, float] | Callable[[int], float], t: int,
                                alpha: int) -> float:
    """Same quantity as :func:`alloc_rdp_remove_general`, summed partition by partition."""
    t = _check_t(t)
    alpha = _check_alpha(alpha, 10 ** 9)
    log_moments = _step_log_moments(step_rdp, alpha)
    log_t = math.log(t)
    terms = []
    for part in partitions(alpha, min(t, alpha)):
        n = len(part)
        # binom(t; C) / t^alpha, kept near 1 for the all-ones partition.
        log_coeff = (math.fsum(math.log1p(-j / t) for j in range(n))
                     - sum(math.lgamma(c + 1.0) for c in part.counts) - (alpha - n) * log_t)
        terms.append(log_coeff + partition_weights(part, t).log_multinomial
                     + sum(log_moments[p] for p in part.parts))
    value = special.logsumexp(terms)
    return max(float(value), 0.0) / (alpha - 1)


def _gauss_step_rdp(sigma: float, p: int) -> float:
    return p / (2.0 * sigma * sigma)


@functools.lru_cache(maxsize=4096)
def _gauss_curve(sigma: float, t: int, max_order: int) -> tuple[float, ...]:
    step = functools.partial(_gauss_step_rdp, sigma)
    return _general_curve(step, t, max_order, max_order)


def alloc_rdp_remove_gauss(sigma: float, t: int, alpha: int,
                           alpha_cap: int = DEFAULT_ALPHA_CAP) -> float:
    """Exact remove-direction RDP of 1-out-of-t allocation with Gaussian noise."""
    sigma = _check_sigma(sigma)
    t = _check_t(t)
    alpha = _check_alpha(alpha, alpha_cap)
    return _gauss_curve(sigma, t, max(alpha, alpha_cap))[alpha]


def alloc_add_delta_gauss(sigma: float, t: int, epsilon: float) -> Delta:
    """Add-direction bound: Gaussian profile at scale sqrt(t) sigma, shifted threshold."""
    sigma = _check_sigma(sigma)
    t = _check_t(t)
    shift = (1.0 - 1.0 / t) / (2.0 * sigma * sigma)
    return gaussian_delta(math.sqrt(t) * sigma, epsilon - shift)


def composed_add_delta_gauss(sigma: float, t_block: int, blocks: int, epsilon: float) -> Delta:
    """Add-direction surrogate for ``blocks`` independent 1-out-of-t_block allocations.

    Each block's surrogate is a shifted Gaussian pair; ``blocks`` of them compose to
    a Gaussian pair with scale ``sigma * sqrt(t_block / blocks)`` and total shift.
    """
    sigma = _check_sigma(sigma)
    t_block = _check_t(t_block)
    shift = blocks * (1.0 - 1.0 / t_block) / (2.0 * sigma * sigma)
    return gaussian_delta(sigma * math.sqrt(t_block / blocks), epsilon - shift)


def composed_add_epsilon_gauss(sigma: float, t_block: int, blocks: int,
                               delta: float | Delta) -> float:
    """Inverse of :func:`composed_add_delta_gauss` in epsilon (closed form)."""
    sigma = _check_sigma(sigma)
    t_block = _check_t(t_block)
    shift = blocks * (1.0 - 1.0 / t_block) / (2.0 * sigma * sigma)
    return shift + gaussian_epsilon(sigma * math.sqrt(t_block / blocks), delta)


def multi_alloc_reduce(t: int, k: int) -> tuple[int, int]:
    """Split k-out-of-t allocation into k blocks of 1-out-of-floor(t/k)."""
    t = _check_t(t)
    if int(k) != k or k < 1:
        raise ValueError(f"k must be a positive integer, got {k!r}")
    if k > t:
        raise ValueError(f"k={k} exceeds t={t}")
    return t // int(k), int(k)


def alloc_rdp_epsilon(sigma: float, t: int, k: int, epochs: int, delta: float | Delta,
                      direction: Direction = Direction.BOTH,
                      orders: Sequence[int] = DEFAULT_ORDERS) -> dict[Direction, tuple[float, int | None]]:
    """Direct-analysis epsilon per direction for k-out-of-t allocation over ``epochs``.

    Returns ``{side: (epsilon, best_alpha)}``; the add side has no order (None).
    """
    delta = _check_open_delta(delta)
    t_block, blocks = multi_alloc_reduce(t, k)
    blocks *= int(epochs)
    out: dict[Direction, tuple[float, int | None]] = {}
    for side in Direction.parse(direction).sides:
        if side is Direction.REMOVE:
            if t_block == 1:
                rho_fn = functools.partial(_gaussian_rho_scaled, sigma, blocks)
            else:
                cap = max(orders)
                rho_fn = functools.partial(_alloc_rho_scaled, sigma, t_block, blocks, cap)
            out[side] = search_epsilon(rho_fn, delta, orders)
        else:
            eps = composed_add_epsilon_gauss(sigma, t_block, blocks, delta)
            out[side] = (max(eps, 0.0), None)
    return out


def alloc_rdp_delta(sigma: float, t: int, k: int, epochs: int, epsilon: float,
                    direction: Direction = Direction.BOTH,
                    orders: Sequence[int] = DEFAULT_ORDERS) -> dict[Direction, Delta]:
    """Direct-analysis delta per direction (forward counterpart of :func:`alloc_rdp_epsilon`)."""
    from .core_dp import search_delta

    t_block, blocks = multi_alloc_reduce(t, k)
    blocks *= int(epochs)
    out: dict[Direction, Delta] = {}
    for side in Direction.parse(direction).sides:
        if side is Direction.REMOVE:
            if t_block == 1:
                rho_fn = functools.partial(_gaussian_rho_scaled, sigma, blocks)
            else:
                rho_fn = functools.partial(_alloc_rho_scaled, sigma, t_block, blocks, max(orders))
            out[side] = search_delta(rho_fn, epsilon, orders)[0]
        else:
            out[side] = composed_add_delta_gauss(sigma, t_block, blocks, epsilon)
    return out


def _gaussian_rho_scaled(sigma: float, blocks: int, alpha: int) -> float:
    return blocks * alpha / (2.0 * sigma * sigma)


def _alloc_rho_scaled(sigma: float, t: int, blocks: int, cap: int, alpha: int) -> float:
    return blocks * alloc_rdp_remove_gauss(sigma, t, alpha, alpha_cap=cap)
