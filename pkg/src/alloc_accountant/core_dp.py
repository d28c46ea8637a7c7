"""Gaussian-mechanism divergences, RDP to (eps, delta) conversion, and inversion.

Conventions: the Gaussian randomizer is the pair ``(N(1, sigma^2), N(0, sigma^2))``.
All small probabilities are carried together with their natural logarithm
(:class:`Delta`) so that values far below ``1e-300`` remain meaningful.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import special
from scipy.optimize import brentq

DEFAULT_ORDERS: tuple[int, ...] = tuple(range(2, 61))
DEFAULT_BRACKET: tuple[float, float] = (1e-6, 100.0)

_LOG_HALF = math.log(0.5)
_SQRT2 = math.sqrt(2.0)


class TargetUnattainableError(ValueError):
    """Raised when a monotone delta profile cannot reach a target inside a bracket."""

    def __init__(self, message: str, lo: float, hi: float, delta_lo: float, delta_hi: float):
        super().__init__(
            f"{message}: delta({lo!r})={delta_lo!r}, delta({hi!r})={delta_hi!r}")
        self.lo = lo
        self.hi = hi
        self.delta_lo = delta_lo
        self.delta_hi = delta_hi


class Direction(enum.Enum):
    REMOVE = "remove"
    ADD = "add"
    BOTH = "both"

    @property
    def sides(self) -> tuple[Direction, ...]:
        if self is Direction.BOTH:
            return (Direction.REMOVE, Direction.ADD)
        return (self,)

    @classmethod
    def parse(cls, value: str | Direction) -> Direction:
        if isinstance(value, Direction):
            return value
        return cls(str(value).lower())


class Delta(float):
    """A probability in [0, 1] that remembers its natural logarithm.

    ``Delta(0.25)`` computes the log itself; ``Delta.from_log(-800.0)`` keeps the
    exact log even though the linear value underflows to 0.
    """

    __slots__ = ("log",)

    def __new__(cls, value: float, log: float | None = None) -> Delta:
        value = float(value)
        if math.isnan(value):
            raise ValueError("delta must not be NaN")
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"delta must lie in [0, 1], got {value!r}")
        obj = super().__new__(cls, value)
        if log is None:
            log = math.log(value) if value > 0.0 else -math.inf
        obj.log = float(log)
        return obj

    @classmethod
    def from_log(cls, log_value: float) -> Delta:
        if math.isnan(log_value):
            raise ValueError("log delta must not be NaN")
        log_value = min(float(log_value), 0.0)
        return cls(math.exp(log_value), log_value)

    def __repr__(self) -> str:
        return f"Delta({float(self)!r}, log={self.log!r})"

    def __reduce__(self):
        return (Delta, (float(self), self.log))


def as_delta(value: float | Delta) -> Delta:
    return value if isinstance(value, Delta) else Delta(value)


def log_of(value: float | Delta) -> float:
    if isinstance(value, Delta):
        return value.log
    return math.log(value) if value > 0 else -math.inf


def _check_finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")
    return value


def _check_sigma(sigma: float) -> float:
    sigma = _check_finite("sigma", sigma)
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma!r}")
    return sigma


def _check_open_delta(delta: float | Delta) -> Delta:
    delta = as_delta(delta)
    if not 0.0 < delta < 1.0 and not (delta == 0.0 and delta.log > -math.inf):
        raise ValueError(f"delta must lie strictly inside (0, 1), got {float(delta)!r}")
    return delta


# ---------------------------------------------------------------------------
# Gaussian mechanism
# ---------------------------------------------------------------------------

def gaussian_log_delta(sigma: float, epsilon: float) -> float:
    """Natural log of the hockey-stick divergence of N(1, s^2) against N(0, s^2)."""
    sigma = _check_sigma(sigma)
    epsilon = _check_finite("epsilon", epsilon)
    a = 0.5 / sigma - epsilon * sigma
    b = -0.5 / sigma - epsilon * sigma
    if a < 0.0:
        # Both CDF terms sit in the lower tail. Factor out exp(-a^2/2); the
        # second term has the same Gaussian factor because b^2 - a^2 = 2 eps.
        diff = special.erfcx(-a / _SQRT2) - special.erfcx(-b / _SQRT2)
        if diff <= 0.0:
            return -math.inf
        return -0.5 * a * a + _LOG_HALF + math.log(diff)
    log_first = float(special.log_ndtr(a))
    log_second = epsilon + float(special.log_ndtr(b))
    if log_second >= log_first:
        return -math.inf
    return min(log_first + math.log1p(-math.exp(log_second - log_first)), 0.0)


def gaussian_delta(sigma: float, epsilon: float) -> Delta:
    """Exact privacy profile of the Gaussian mechanism with unit sensitivity.

    Negative ``epsilon`` is allowed; the hockey-stick divergence with threshold
    ``exp(epsilon) < 1`` is still well defined.
    """
    return Delta.from_log(gaussian_log_delta(sigma, epsilon))


def gaussian_epsilon(sigma: float, delta: float | Delta, rtol: float = 1e-10) -> float:
    """Smallest epsilon with ``gaussian_delta(sigma, epsilon) <= delta``.

    The result can be negative when ``delta`` exceeds ``gaussian_delta(sigma, 0)``.
    """
    sigma = _check_sigma(sigma)
    target = _check_open_delta(delta).log

    def g(eps: float) -> float:
        return gaussian_log_delta(sigma, eps) - target

    lo, hi = DEFAULT_BRACKET
    while g(hi) > 0.0:
        hi *= 2.0
    while g(lo) < 0.0:
        lo = lo - max(1.0, abs(lo)) * 2.0
    root = brentq(g, lo, hi, xtol=1e-300, rtol=max(rtol * 0.1, 4 * np.finfo(float).eps),
                  maxiter=500)
    linear_target = float(delta)

    def infeasible(eps: float) -> bool:
        lg = gaussian_log_delta(sigma, eps)
        # Also check the rounded linear value, which is what callers compare.
        return lg > target or (linear_target > 0.0 and math.exp(lg) > linear_target)

    # brentq may land on either side of the root; step up until feasible.
    step = max(abs(root), 1e-300) * rtol * 0.5
    while infeasible(root):
        root += step
        step *= 2.0
    return float(root)


def gaussian_rdp(sigma: float, alpha: float) -> float:
    """Order-``alpha`` Renyi divergence of the Gaussian pair: ``alpha / (2 sigma^2)``."""
    sigma = _check_sigma(sigma)
    alpha = _check_finite("alpha", alpha)
    if alpha < 1:
        raise ValueError(f"alpha must be >= 1, got {alpha!r}")
    return alpha / (2.0 * sigma * sigma)


# ---------------------------------------------------------------------------
# RDP curves and conversion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RdpCurve:
    """Renyi divergence bounds on an integer order grid (orders >= 2)."""

    orders: tuple[int, ...]
    rho: tuple[float, ...]

    def __post_init__(self):
        orders = tuple(int(a) for a in self.orders)
        rho = tuple(float(r) for r in self.rho)
        if len(orders) != len(rho):
            raise ValueError("orders and rho must have the same length")
        if any(a < 2 for a in orders):
            raise ValueError("RDP orders must be integers >= 2")
        if any(b <= a for a, b in zip(orders, orders[1:])):
            raise ValueError("RDP orders must be strictly increasing")
        if any(not math.isfinite(r) or r < 0 for r in rho):
            raise ValueError("rho values must be finite and non-negative")
        for r0, r1 in zip(rho, rho[1:]):
            if r1 < r0 - 1e-9 * max(1.0, abs(r0)):
                raise ValueError("rho must be non-decreasing in alpha")
        object.__setattr__(self, "orders", orders)
        object.__setattr__(self, "rho", rho)

    @classmethod
    def from_function(cls, rho_fn: Callable[[int], float],
                      orders: Iterable[int] = DEFAULT_ORDERS) -> RdpCurve:
        orders = tuple(orders)
        return cls(orders, tuple(rho_fn(a) for a in orders))

    def __len__(self) -> int:
        return len(self.orders)

    def scale(self, times: float) -> RdpCurve:
        """Compose the curve with itself ``times`` times (order-wise sum)."""
        if times < 0:
            raise ValueError("composition count must be non-negative")
        return RdpCurve(self.orders, tuple(times * r for r in self.rho))

    def __add__(self, other: RdpCurve) -> RdpCurve:
        if not isinstance(other, RdpCurve):
            return NotImplemented
        if self.orders != other.orders:
            raise ValueError("cannot compose RDP curves on different order grids")
        return RdpCurve(self.orders, tuple(a + b for a, b in zip(self.rho, other.rho)))

    def as_dict(self) -> dict[int, float]:
        return dict(zip(self.orders, self.rho))


def rdp_to_log_delta(rho: float, alpha: float, epsilon: float) -> float:
    """Log of the RDP to hockey-stick bound, before clamping to [0, 1]."""
    return (-math.log(alpha - 1.0) + (alpha - 1.0) * (rho - epsilon)
            + alpha * math.log1p(-1.0 / alpha))


def rdp_to_delta(rho: float, alpha: float, epsilon: float) -> Delta:
    """Hockey-stick bound implied by an ``(alpha, rho)`` Renyi bound, clamped to [0, 1]."""
    rho = _check_finite("rho", rho)
    alpha = _check_finite("alpha", alpha)
    epsilon = _check_finite("epsilon", epsilon)
    if alpha <= 1:
        raise ValueError(f"alpha must be > 1, got {alpha!r}")
    if rho < 0:
        raise ValueError(f"rho must be non-negative, got {rho!r}")
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon!r}")
    return Delta.from_log(rdp_to_log_delta(rho, alpha, epsilon))


def _order_slack(alpha: int, log_delta: float) -> float:
    return (-log_delta + alpha * math.log1p(-1.0 / alpha) - math.log(alpha - 1.0)) / (alpha - 1.0)


def search_epsilon(rho_fn: Callable[[int], float], delta: float | Delta,
                   orders: Sequence[int] = DEFAULT_ORDERS) -> tuple[float, int]:
    """Best epsilon over ``orders`` for a lazily evaluated, non-decreasing RDP curve.

    Orders are visited in increasing order and the scan stops as soon as no larger
    order can improve on the best value found, so expensive ``rho_fn`` evaluations
    past the optimum are skipped. Returns ``(epsilon, best_alpha)``.
    """
    delta = _check_open_delta(delta)
    orders = [int(a) for a in orders]
    if not orders:
        raise ValueError("empty order grid")
    log_delta = delta.log
    slack = [_order_slack(a, log_delta) for a in orders]
    # Lowest slack attainable at or beyond each position: with rho non-decreasing,
    # eps(a') >= rho(a) + suffix_min[a] for every a' >= a.
    suffix_min = list(slack)
    for i in range(len(slack) - 2, -1, -1):
        suffix_min[i] = min(slack[i], suffix_min[i + 1])
    best_eps, best_alpha = math.inf, orders[0]
    for i, alpha in enumerate(orders):
        rho = float(rho_fn(alpha))
        if rho + min(0.0, suffix_min[i]) > best_eps:
            break
        eps = rho + slack[i]
        if eps < best_eps:
            best_eps, best_alpha = eps, alpha
    return max(best_eps, 0.0), best_alpha


def rdp_to_epsilon(curve: RdpCurve, delta: float | Delta) -> tuple[float, int]:
    """Minimum epsilon over the orders of ``curve`` with early stopping."""
    if len(curve) == 0:
        raise ValueError("empty RDP curve")
    lookup = curve.as_dict()
    return search_epsilon(lookup.__getitem__, delta, curve.orders)


def exhaustive_rdp_to_epsilon(curve: RdpCurve, delta: float | Delta) -> tuple[float, int]:
    """Reference scan over every order; used to validate the early-stopping search."""
    if len(curve) == 0:
        raise ValueError("empty RDP curve")
    log_delta = _check_open_delta(delta).log
    best_eps, best_alpha = math.inf, curve.orders[0]
    for alpha, rho in zip(curve.orders, curve.rho):
        eps = rho + _order_slack(alpha, log_delta)
        if eps < best_eps:
            best_eps, best_alpha = eps, alpha
    return max(best_eps, 0.0), best_alpha


def search_delta(rho_fn: Callable[[int], float], epsilon: float,
                 orders: Sequence[int] = DEFAULT_ORDERS) -> tuple[Delta, int]:
    """Best hockey-stick bound over ``orders`` for a lazily evaluated RDP curve.

    Stops once the bound at every remaining order provably exceeds the best so far.
    """
    epsilon = _check_finite("epsilon", epsilon)
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon!r}")
    orders = [int(a) for a in orders]
    if not orders:
        raise ValueError("empty order grid")
    const = [alpha * math.log1p(-1.0 / alpha) - math.log(alpha - 1.0) for alpha in orders]
    best_log, best_alpha = math.inf, orders[0]
    for i, alpha in enumerate(orders):
        rho = float(rho_fn(alpha))
        if rho >= epsilon and i + 1 < len(orders):
            gap = rho - epsilon
            floor = min((a - 1.0) * gap + c for a, c in zip(orders[i:], const[i:]))
            if floor > best_log:
                break
        value = (alpha - 1.0) * (rho - epsilon) + const[i]
        if value < best_log:
            best_log, best_alpha = value, alpha
    return Delta.from_log(best_log), best_alpha


def rdp_curve_delta(curve: RdpCurve, epsilon: float) -> tuple[Delta, int]:
    """Minimum of :func:`rdp_to_delta` over the orders of ``curve``."""
    if len(curve) == 0:
        raise ValueError("empty RDP curve")
    return search_delta(curve.as_dict().__getitem__, epsilon, curve.orders)


# ---------------------------------------------------------------------------
# Generic monotone inversion
# ---------------------------------------------------------------------------

def invert_delta_fn(delta_fn: Callable[[float], float], target_delta: float | Delta,
                    bracket: tuple[float, float] = DEFAULT_BRACKET, rtol: float = 1e-9,
                    expand: bool = False) -> float:
    """Smallest epsilon (to ``rtol``) in ``bracket`` with ``delta_fn(epsilon) <= target``.

    ``delta_fn`` must be non-increasing on the bracket. With ``expand=True`` the
    upper end is doubled until it reaches the target (up to 1e6).

    Raises:
        TargetUnattainableError: the bracket does not straddle the target.
    """
    target = float(target_delta)
    lo, hi = float(bracket[0]), float(bracket[1])
    if not lo < hi:
        raise ValueError(f"invalid bracket {bracket!r}")
    d_lo = float(delta_fn(lo))
    if d_lo <= target:
        return lo
    d_hi = float(delta_fn(hi))
    while d_hi > target and expand and hi < 1e6:
        lo, d_lo = hi, d_hi
        hi *= 2.0
        d_hi = float(delta_fn(hi))
    if d_hi > target:
        raise TargetUnattainableError("target unattainable within bracket",
                                      lo, hi, d_lo, d_hi)
    while hi - lo > rtol * max(abs(hi), 1e-12):
        mid = 0.5 * (lo + hi)
        if float(delta_fn(mid)) <= target:
            hi = mid
        else:
            lo = mid
    return hi
