"""(epsilon, delta) bounds for 1-out-of-t allocation that reduce to Poisson accounting.

Every bound here is stated for a single allocation (``k = 1``, one epoch) of the
Gaussian mechanism; block composition is the accountant's job.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import optimize

from .alloc_rdp import alloc_add_delta_gauss
from .core_dp import (
    DEFAULT_ORDERS,
    Delta,
    Direction,
    _check_open_delta,
    _check_sigma,
    gaussian_delta,
    gaussian_epsilon,
    log_of,
)
from .poisson import poisson_side_delta, poisson_side_epsilon

CAP_ACTIVE = "cap-active"
EPS_PRIME_BOUNDARY = "eps-prime-boundary"
RECURSIVE_FALLBACK = "recursive-fallback"
LOCAL_PASSTHROUGH = "t=1-local"
LOCAL_FLOOR = "local-floor"

# Fractions of the slack budget assigned to t * delta0; the rest goes to delta'.
TRUNCATED_SPLITS = tuple(1.0 / (1.0 + 10.0 ** x) for x in np.linspace(-4.0, 4.0, 9))


class RegimeError(ValueError):
    """Parameters fall outside the regime in which an asymptotic bound holds."""


@dataclass(frozen=True)
class AllocConfig:
    sigma: float
    t: int
    k: int = 1
    epochs: int = 1
    direction: Direction = Direction.BOTH

    def __post_init__(self):
        _check_sigma(self.sigma)
        if int(self.t) != self.t or self.t < 1:
            raise ValueError(f"t must be a positive integer, got {self.t!r}")
        if int(self.k) != self.k or not 1 <= self.k <= self.t:
            raise ValueError(f"k must be an integer in [1, t], got {self.k!r}")
        if int(self.epochs) != self.epochs or self.epochs < 1:
            raise ValueError(f"epochs must be a positive integer, got {self.epochs!r}")
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "t", int(self.t))
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "epochs", int(self.epochs))
        object.__setattr__(self, "direction", Direction.parse(self.direction))


@dataclass(frozen=True)
class SideBounds:
    """Per-direction values (delta or epsilon) of one method, plus diagnostics."""

    values: Mapping[Direction, float]
    flags: frozenset[str] = frozenset()
    detail: Mapping[str, float] = field(default_factory=dict)

    @property
    def combined(self) -> float:
        return max(self.values.values(), key=log_of)

    def __getitem__(self, side: Direction) -> float:
        return self.values[Direction.parse(side)]


def _single(cfg: AllocConfig) -> None:
    if cfg.k != 1 or cfg.epochs != 1:
        raise ValueError("this bound covers a single 1-out-of-t allocation (k = 1, epochs = 1)")


def _positive_eps(epsilon: float) -> float:
    epsilon = float(epsilon)
    if not epsilon > 0.0 or math.isnan(epsilon):
        raise ValueError(f"epsilon must be positive, got {epsilon!r}")
    return epsilon


def _scaled(log_factor: float, delta: Delta) -> Delta:
    return Delta.from_log(min(log_factor + delta.log, 0.0))


def _sum(*parts: float) -> Delta:
    """Sum of non-negative deltas, in log space, capped at 1."""
    logs = [log_of(p) for p in parts]
    return Delta.from_log(min(float(np.logaddexp.reduce(logs)), 0.0))


def _local_delta(cfg: AllocConfig, epsilon: float) -> SideBounds:
    d = gaussian_delta(cfg.sigma, epsilon)
    return SideBounds({s: d for s in cfg.direction.sides}, frozenset({LOCAL_PASSTHROUGH}))


def _local_epsilon(cfg: AllocConfig, delta: Delta) -> SideBounds:
    e = max(gaussian_epsilon(cfg.sigma, delta), 0.0)
    return SideBounds({s: e for s in cfg.direction.sides}, frozenset({LOCAL_PASSTHROUGH}))


def _floor_at_local(cfg: AllocConfig, bounds: SideBounds, solve_epsilon: bool,
                    target: float) -> SideBounds:
    """Clamp a bound at the single-Gaussian value.

    An allocation releases one Gaussian at a random step and pure noise
    elsewhere, so it is post-processing of one Gaussian release.
    """
    local = (max(gaussian_epsilon(cfg.sigma, target), 0.0) if solve_epsilon
             else gaussian_delta(cfg.sigma, target))
    values, floored = {}, False
    for side, v in bounds.values.items():
        if log_of(local) < log_of(v):
            v, floored = local, True
        values[side] = v
    flags = bounds.flags | {LOCAL_FLOOR} if floored else bounds.flags
    return SideBounds(values, flags, bounds.detail)


# ---------------------------------------------------------------- decomposition


@dataclass(frozen=True)
class DecompositionParams:
    lam: float
    t: int

    def __post_init__(self):
        if not 0.0 < self.lam <= 1.0:
            raise ValueError(f"lambda must lie in (0, 1], got {self.lam!r}")

    @property
    def log_gamma_remove(self) -> float:
        # gamma = 1 / (1 - (1 - lam)^t)
        if self.lam == 1.0:
            return 0.0
        return -math.log(-math.expm1(self.t * math.log1p(-self.lam)))

    @property
    def gamma_remove(self) -> float:
        return math.exp(self.log_gamma_remove)

    def gamma_add(self, epsilon: float) -> float:
        return 1.0 + math.exp(epsilon) * (self.gamma_remove - 1.0)

    def log_gamma_add(self, epsilon: float) -> float:
        g_minus = -math.expm1(-self.log_gamma_remove) * self.gamma_remove
        if g_minus == 0.0:
            return 0.0
        return float(np.logaddexp(0.0, epsilon + math.log(g_minus)))

    def eps_remove(self, epsilon: float) -> float:
        return math.log1p(math.expm1(epsilon) / self.gamma_remove)

    def eps_add(self, epsilon: float) -> float:
        return -math.log1p(math.expm1(-epsilon) / self.gamma_remove)

    @property
    def eps_add_limit(self) -> float:
        """Supremum of ``eps_add`` as epsilon grows."""
        if self.gamma_remove == 1.0:
            return math.inf
        return -math.log1p(-1.0 / self.gamma_remove)


def _decomp_remove(cfg: AllocConfig, params: DecompositionParams, epsilon: float,
                   orders) -> Delta:
    d, _ = poisson_side_delta(cfg.sigma, params.lam, Direction.REMOVE,
                              params.eps_remove(epsilon), cfg.t, orders)
    return _scaled(params.log_gamma_remove, d)


def _decomp_add_raw(cfg: AllocConfig, params: DecompositionParams, epsilon: float,
                    orders) -> Delta:
    d, _ = poisson_side_delta(cfg.sigma, params.lam, Direction.ADD,
                              params.eps_add(epsilon), cfg.t, orders)
    return _scaled(params.log_gamma_add(epsilon), d)


_ENVELOPE_GRID = tuple(float(e) for e in np.geomspace(1e-3, 64.0, 49))


@functools.lru_cache(maxsize=1024)
def _decomp_add_turning_point(sigma: float, t: int, lam: float, orders: tuple[int, ...]) -> float:
    """Epsilon minimizing the raw add bound (infinite if it never turns upward)."""
    cfg = AllocConfig(sigma, t, direction=Direction.ADD)
    params = DecompositionParams(lam, t)
    fn = lambda e: _decomp_add_raw(cfg, params, e, orders).log
    scores = [fn(e) for e in _ENVELOPE_GRID]
    i = int(np.argmin(scores))
    if i == len(scores) - 1 or math.isinf(scores[i]):
        return math.inf
    lo = _ENVELOPE_GRID[max(i - 1, 0)]
    hi = _ENVELOPE_GRID[i + 1]
    res = optimize.minimize_scalar(lambda u: fn(math.exp(u)), bounds=(math.log(lo), math.log(hi)),
                                   method="bounded", options={"xatol": 1e-6})
    return float(math.exp(res.x)) if res.fun <= scores[i] else _ENVELOPE_GRID[i]


def _decomp_add(cfg: AllocConfig, params: DecompositionParams, epsilon: float,
                orders) -> Delta:
    # The raw add bound turns upward once eps_add saturates; the true delta is
    # non-increasing, so past the turning point the bound there still applies.
    turn = _decomp_add_turning_point(cfg.sigma, cfg.t, params.lam, tuple(orders))
    return _decomp_add_raw(cfg, params, min(epsilon, turn), orders)


def decomposition_delta(cfg: AllocConfig, epsilon: float, lam: float | None = None,
                        orders=DEFAULT_ORDERS) -> SideBounds:
    """Decomposition bound: inflated Poisson delta at a deflated epsilon.

    Args:
        cfg: single allocation (k = 1, one epoch).
        epsilon: target epsilon, > 0.
        lam: Poisson rate of the reference scheme, default 1/t.
    """
    _single(cfg)
    epsilon = _positive_eps(epsilon)
    if cfg.t == 1:
        return _local_delta(cfg, epsilon)
    params = DecompositionParams(1.0 / cfg.t if lam is None else float(lam), cfg.t)
    values: dict[Direction, float] = {}
    for side in cfg.direction.sides:
        if side is Direction.REMOVE:
            values[side] = _decomp_remove(cfg, params, epsilon, orders)
        else:
            values[side] = _decomp_add(cfg, params, epsilon, orders)
    return SideBounds(values, detail={"gamma_remove": params.gamma_remove, "lambda": params.lam})


def _first_feasible(fn: Callable[[float], float], target_log: float, lo: float, hi: float,
                    points: int = 48, rtol: float = 1e-9) -> float | None:
    """Smallest epsilon on a log grid in [lo, hi] with ``fn <= target``, refined by bisection."""
    grid = np.geomspace(lo, hi, points)
    prev = None
    for e in grid:
        if fn(float(e)) <= target_log:
            if prev is None:
                return float(e)
            a, b = prev, float(e)
            while b - a > rtol * b:
                m = 0.5 * (a + b)
                if fn(m) <= target_log:
                    b = m
                else:
                    a = m
            return b
        prev = float(e)
    return None


def decomposition_epsilon(cfg: AllocConfig, delta: float | Delta, lam: float | None = None,
                          orders=DEFAULT_ORDERS) -> SideBounds:
    """Epsilon form of :func:`decomposition_delta`; infinite when no epsilon reaches delta."""
    _single(cfg)
    delta = _check_open_delta(delta)
    if cfg.t == 1:
        return _local_epsilon(cfg, delta)
    params = DecompositionParams(1.0 / cfg.t if lam is None else float(lam), cfg.t)
    values: dict[Direction, float] = {}
    for side in cfg.direction.sides:
        if side is Direction.REMOVE:
            inner = Delta.from_log(delta.log - params.log_gamma_remove)
            e_pois, _ = poisson_side_epsilon(cfg.sigma, params.lam, side, inner, cfg.t, orders)
            values[side] = math.log1p(params.gamma_remove * math.expm1(e_pois))
        else:
            fn = lambda e: _decomp_add_raw(cfg, params, e, orders).log
            found = _first_feasible(fn, delta.log, 1e-6, 60.0)
            values[side] = math.inf if found is None else found
    return SideBounds(values, detail={"gamma_remove": params.gamma_remove, "lambda": params.lam})


# ---------------------------------------------------------------- truncated Poisson


@dataclass(frozen=True)
class TruncatedPoissonParams:
    gamma: float
    eta: float
    eps0: float
    delta0: Delta
    delta_prime: Delta
    cap_active: bool = False

    @classmethod
    def build(cls, t: int, eps0: float, delta0: float | Delta,
              delta_prime: float | Delta) -> TruncatedPoissonParams:
        delta_prime = _check_open_delta(delta_prime)
        cap = 1.0 - 1.0 / t
        log_raw = (_log_cosh(eps0) + 0.5 * math.log(2.0 / t)
                   + 0.5 * math.log(-delta_prime.log))
        cap_active = log_raw >= math.log(cap) if cap > 0.0 else True
        gamma = cap if cap_active else math.exp(log_raw)
        eta = min(1.0 / (t * (1.0 - gamma)), 1.0)
        return cls(gamma, eta, float(eps0), Delta(float(delta0)), delta_prime, cap_active)


def _log_cosh(x: float) -> float:
    x = abs(x)
    return x + math.log1p(math.exp(-2.0 * x)) - math.log(2.0)


def truncated_poisson_params(sigma: float, t: int, slack_budget: float | Delta,
                             split: float) -> TruncatedPoissonParams:
    """Parameters when a fraction ``split`` of the slack goes to ``t * delta0``."""
    slack = _check_open_delta(slack_budget)
    if not 0.0 < split < 1.0:
        raise ValueError("split must lie in (0, 1)")
    delta0 = Delta.from_log(slack.log + math.log(split) - math.log(t))
    delta_prime = Delta.from_log(slack.log + math.log1p(-split))
    eps0 = max(gaussian_epsilon(sigma, delta0), 0.0)
    return TruncatedPoissonParams.build(t, eps0, delta0, delta_prime)


def best_truncated_params(sigma: float, t: int, slack_budget: float | Delta) -> TruncatedPoissonParams:
    """Split of the slack that minimizes the effective rate eta.

    The additive slack is the same for every split and the Poisson term grows
    with the rate, so the best split is the one with the smallest eta whatever
    epsilon and direction are.
    """
    best = None
    for q in TRUNCATED_SPLITS:
        p = truncated_poisson_params(sigma, t, slack_budget, q)
        if best is None or p.eta < best.eta:
            best = p
    return best


def truncated_poisson_delta(cfg: AllocConfig, epsilon: float, slack_budget: float | Delta,
                            orders=DEFAULT_ORDERS) -> SideBounds:
    """Truncated-Poisson bound: Poisson delta at rate eta plus the slack budget."""
    _single(cfg)
    epsilon = _positive_eps(epsilon)
    if cfg.t == 1:
        return _local_delta(cfg, epsilon)
    slack = _check_open_delta(slack_budget)
    params = best_truncated_params(cfg.sigma, cfg.t, slack)
    values = {}
    for side in cfg.direction.sides:
        d, _ = poisson_side_delta(cfg.sigma, params.eta, side, epsilon, cfg.t, orders)
        values[side] = _sum(d, slack)
    flags = frozenset({CAP_ACTIVE}) if params.cap_active else frozenset()
    bounds = SideBounds(values, flags, {"eta": params.eta, "gamma": params.gamma,
                                        "eps0": params.eps0, "slack": float(slack)})
    return _floor_at_local(cfg, bounds, False, epsilon)


_SLACK_FRACTIONS = (0.5, 0.3, 0.2, 0.1, 0.05, 0.02, 0.01, 0.003, 0.001)


def truncated_poisson_epsilon(cfg: AllocConfig, delta: float | Delta,
                              orders=DEFAULT_ORDERS) -> SideBounds:
    """Smallest epsilon over a fixed grid of slack fractions of ``delta``."""
    _single(cfg)
    delta = _check_open_delta(delta)
    if cfg.t == 1:
        return _local_epsilon(cfg, delta)
    values = {}
    best_detail: dict[str, float] = {}
    cap_hits = []
    for side in cfg.direction.sides:
        best = (math.inf, None)
        for f in _SLACK_FRACTIONS:
            slack = Delta.from_log(delta.log + math.log(f))
            rest = Delta.from_log(delta.log + math.log1p(-f))
            params = best_truncated_params(cfg.sigma, cfg.t, slack)
            e, _ = poisson_side_epsilon(cfg.sigma, params.eta, side, rest, cfg.t, orders)
            if e < best[0]:
                best = (e, params, f)
        values[side] = best[0]
        cap_hits.append(best[1].cap_active)
        best_detail[f"slack_fraction_{side.value}"] = best[2]
        best_detail[f"eta_{side.value}"] = best[1].eta
    flags = frozenset({CAP_ACTIVE}) if all(cap_hits) else frozenset()
    return _floor_at_local(cfg, SideBounds(values, flags, best_detail), True, delta)


def truncated_poisson_best_delta(cfg: AllocConfig, epsilon: float,
                                 orders=DEFAULT_ORDERS) -> SideBounds:
    """Truncated-Poisson delta with the slack budget chosen on a log grid."""
    _single(cfg)
    epsilon = _positive_eps(epsilon)
    if cfg.t == 1:
        return _local_delta(cfg, epsilon)
    best: SideBounds | None = None
    for exponent in range(3, 21):
        cand = truncated_poisson_delta(cfg, epsilon, 10.0 ** -exponent, orders)
        if best is None or log_of(cand.combined) < log_of(best.combined):
            best = cand
    return best


# ---------------------------------------------------------------- recursive


@dataclass(frozen=True)
class RecursiveParams:
    eps_prime: float
    eta: float
    tau: float

    @classmethod
    def build(cls, eps_prime: float, t: int) -> RecursiveParams:
        eps_prime = _positive_eps(eps_prime)
        log_eta = 2.0 * eps_prime - math.log(t)
        if log_eta > 1e-12:
            raise ValueError(f"eps_prime={eps_prime!r} gives rate exp(2 eps')/t > 1")
        tau = 1.0 / (math.exp(eps_prime) * math.expm1(eps_prime))
        return cls(eps_prime, min(math.exp(log_eta), 1.0), tau)

    def correction_log(self, side: Direction, base_add: Delta) -> float:
        extra = 2.0 * self.eps_prime if side is Direction.ADD else 0.0
        return math.log(self.tau) + extra + base_add.log


def max_eps_prime(t: int) -> float:
    return 0.5 * math.log(t)


def default_base_add(cfg: AllocConfig, orders=DEFAULT_ORDERS) -> Callable[[float], Delta]:
    """Pointwise minimum of the decomposition and direct add-direction bounds."""
    add_cfg = AllocConfig(cfg.sigma, cfg.t, direction=Direction.ADD)

    def base(eps_prime: float) -> Delta:
        d1 = decomposition_delta(add_cfg, eps_prime, orders=orders)[Direction.ADD]
        d2 = alloc_add_delta_gauss(cfg.sigma, cfg.t, eps_prime)
        return min(d1, d2, key=log_of)

    return base


def recursive_delta(cfg: AllocConfig, epsilon: float, eps_prime: float,
                    base_add_bound: Callable[[float], Delta],
                    orders=DEFAULT_ORDERS) -> SideBounds:
    """Recursive bound at a fixed ``eps_prime``."""
    _single(cfg)
    epsilon = _positive_eps(epsilon)
    params = RecursiveParams.build(eps_prime, cfg.t)
    base = Delta(base_add_bound(params.eps_prime))
    values = {}
    for side in cfg.direction.sides:
        d, _ = poisson_side_delta(cfg.sigma, params.eta, side, epsilon, cfg.t, orders)
        values[side] = _sum(d, Delta.from_log(min(params.correction_log(side, base), 0.0)))
    return SideBounds(values, detail={"eps_prime": params.eps_prime, "eta": params.eta})


# Fixed geometric grid of eps' values, from ln(t)/2 down by factors of 2^(1/8).
EPS_PRIME_POINTS = 64
EPS_PRIME_RATIO = 2.0 ** 0.125


def eps_prime_grid(t: int) -> tuple[float, ...]:
    """Candidate ``eps_prime`` values, increasing; all satisfy ``exp(2 eps') <= t``."""
    if t < 2:
        return ()
    cap = max_eps_prime(t)
    return tuple(cap * EPS_PRIME_RATIO ** -j for j in range(EPS_PRIME_POINTS - 1, -1, -1))


def _argmin_flags(scores: list[float]) -> tuple[int, frozenset[str]]:
    i = int(np.argmin(scores))
    boundary = len(scores) > 1 and i in (0, len(scores) - 1)
    return i, frozenset({EPS_PRIME_BOUNDARY}) if boundary else frozenset()


def _grid_scores(cfg: AllocConfig, epsilon: float, grid: Sequence[float],
                 base_add_bound: Callable[[float], Delta], orders) -> list[SideBounds]:
    return [recursive_delta(cfg, epsilon, ep, base_add_bound, orders) for ep in grid]


def optimize_eps_prime(cfg: AllocConfig, epsilon: float,
                       base_add_bound: Callable[[float], Delta],
                       orders=DEFAULT_ORDERS) -> tuple[float | None, frozenset[str]]:
    """Best ``eps_prime`` for :func:`recursive_delta` at ``epsilon`` on a fixed grid.

    The grid does not depend on epsilon, so the optimized bound is a minimum of
    non-increasing functions of epsilon and stays monotone. Ties go to the
    smaller ``eps_prime``. Returns ``(None, flags)`` when the grid is empty.
    The score is the worse of the configured directions.
    """
    grid = eps_prime_grid(cfg.t)
    if not grid:
        return None, frozenset({RECURSIVE_FALLBACK})
    scores = [log_of(b.combined) for b in _grid_scores(cfg, epsilon, grid, base_add_bound, orders)]
    i, flags = _argmin_flags(scores)
    return grid[i], flags


def recursive_best_delta(cfg: AllocConfig, epsilon: float,
                         base_add_bound: Callable[[float], Delta] | None = None,
                         orders=DEFAULT_ORDERS) -> SideBounds:
    """Recursive bound with ``eps_prime`` optimized per direction.

    Falls back to the base bounds when no ``eps_prime`` is admissible.
    """
    _single(cfg)
    epsilon = _positive_eps(epsilon)
    if cfg.t == 1:
        return _local_delta(cfg, epsilon)
    base = base_add_bound or default_base_add(cfg, orders)
    grid = eps_prime_grid(cfg.t)
    if not grid:
        values = {}
        for side in cfg.direction.sides:
            if side is Direction.REMOVE:
                rem_cfg = AllocConfig(cfg.sigma, cfg.t, direction=Direction.REMOVE)
                values[side] = decomposition_delta(rem_cfg, epsilon, orders=orders)[side]
            else:
                values[side] = Delta(base(epsilon))
        return SideBounds(values, frozenset({RECURSIVE_FALLBACK}))
    rows = _grid_scores(cfg, epsilon, grid, base, orders)
    values, detail = {}, {}
    flags: set[str] = set()
    for side in cfg.direction.sides:
        i, side_flags = _argmin_flags([log_of(r[side]) for r in rows])
        values[side] = rows[i][side]
        detail[f"eps_prime_{side.value}"] = grid[i]
        flags |= side_flags
    return SideBounds(values, frozenset(flags), detail)


def recursive_epsilon(cfg: AllocConfig, delta: float | Delta,
                      base_add_bound: Callable[[float], Delta] | None = None,
                      orders=DEFAULT_ORDERS) -> SideBounds:
    """Epsilon form of the recursive bound.

    For each ``eps_prime`` on the fixed grid the correction term is subtracted
    from ``delta`` and the Poisson scheme at rate ``eta`` is inverted; the
    smallest epsilon wins. Grid points whose correction uses up ``delta`` are
    skipped.
    """
    _single(cfg)
    delta = _check_open_delta(delta)
    if cfg.t == 1:
        return _local_epsilon(cfg, delta)
    base = base_add_bound or default_base_add(cfg, orders)
    grid = eps_prime_grid(cfg.t)
    bases = [Delta(base(ep)) for ep in grid]
    values = {}
    detail = {}
    flags: set[str] = set()
    for side in cfg.direction.sides:
        scores = []
        for ep, b in zip(grid, bases):
            params = RecursiveParams.build(ep, cfg.t)
            corr = params.correction_log(side, b)
            if corr >= delta.log + math.log(0.999):
                scores.append(math.inf)
                continue
            rest = Delta.from_log(delta.log + math.log(-math.expm1(corr - delta.log)))
            e, _ = poisson_side_epsilon(cfg.sigma, params.eta, side, rest, cfg.t, orders)
            scores.append(e)
        i, side_flags = _argmin_flags(scores)
        if math.isinf(scores[i]):
            values[side] = math.inf
            flags.add(RECURSIVE_FALLBACK)
            continue
        flags |= side_flags
        values[side] = scores[i]
        detail[f"eps_prime_{side.value}"] = grid[i]
    return SideBounds(values, frozenset(flags), detail)


# ---------------------------------------------------------------- Gaussian asymptotic


def gauss_combined_regime_threshold(t: int, k: int, delta: float | Delta) -> float:
    log_ratio = math.log(t) - log_of(_check_open_delta(delta))
    return 8.0 * max(math.sqrt(log_ratio), math.sqrt(k / t) * log_ratio)


def gauss_combined_k_delta(cfg: AllocConfig, epsilon: float, delta_slack: float | Delta,
                           orders=DEFAULT_ORDERS) -> Delta:
    """Large-sigma bound for k-out-of-t allocation: Poisson at rate 2k/t plus twice the slack.

    Raises:
        RegimeError: sigma is not above the regime threshold.
    """
    if cfg.epochs != 1:
        raise ValueError("the asymptotic bound covers a single epoch")
    epsilon = _positive_eps(epsilon)
    slack = _check_open_delta(delta_slack)
    threshold = gauss_combined_regime_threshold(cfg.t, cfg.k, slack)
    if not cfg.sigma > threshold:
        raise RegimeError(f"outside the asymptotic regime: sigma={cfg.sigma:g} <= {threshold:g}")
    rate = min(2.0 * cfg.k / cfg.t, 1.0)
    ds = [poisson_side_delta(cfg.sigma, rate, side, epsilon, cfg.t, orders)[0]
          for side in cfg.direction.sides]
    worst = max(ds, key=log_of)
    return _sum(worst, Delta.from_log(math.log(2.0) + slack.log))
