"""Top-level privacy accountant for the local, Poisson and random-allocation schemes."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

from . import alloc_bounds as ab
from .alloc_rdp import alloc_rdp_delta, alloc_rdp_epsilon, multi_alloc_reduce
from .core_dp import (
    DEFAULT_ORDERS,
    Delta,
    Direction,
    _check_open_delta,
    gaussian_delta,
    gaussian_epsilon,
    log_of,
)
from .poisson import poisson_side_delta, poisson_side_epsilon

__all__ = [
    "Scheme",
    "Method",
    "SchemeSpec",
    "MethodOutcome",
    "BoundResult",
    "NoBoundAvailable",
    "epsilon",
    "delta",
    "multi_alloc_reduce",
]

APPROXIMATE_ADD = "approximate-add"
UNSUPPORTED_COMPOSITION = "k>1 unsupported"


class Scheme(enum.Enum):
    LOCAL = "local"
    POISSON = "poisson"
    ALLOCATION = "allocation"

    @classmethod
    def parse(cls, value: str | Scheme) -> Scheme:
        return value if isinstance(value, cls) else cls(str(value).lower())


class Method(enum.Enum):
    DECOMPOSITION = "decomposition"
    TRUNCATED_POISSON = "truncated_poisson"
    RECURSIVE = "recursive"
    DIRECT_RDP = "direct_rdp"

    @classmethod
    def parse(cls, value: str | Method) -> Method:
        return value if isinstance(value, cls) else cls(str(value).lower().replace("-", "_"))


ALL_METHODS = tuple(Method)


class NoBoundAvailable(RuntimeError):
    """Every enabled method failed; ``reasons`` maps method name to the cause."""

    def __init__(self, reasons: Mapping[str, str]):
        detail = "; ".join(f"{k}: {v}" for k, v in reasons.items())
        super().__init__(f"no bound available ({detail})")
        self.reasons = dict(reasons)


@dataclass(frozen=True)
class SchemeSpec:
    scheme: Scheme
    sigma: float
    t: int
    k: int = 1
    epochs: int = 1
    lam: float | None = None
    direction: Direction = Direction.BOTH
    methods: tuple[Method, ...] = ALL_METHODS
    orders: tuple[int, ...] = field(default=DEFAULT_ORDERS, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme.parse(self.scheme))
        object.__setattr__(self, "direction", Direction.parse(self.direction))
        object.__setattr__(self, "methods", tuple(dict.fromkeys(Method.parse(m) for m in self.methods)))
        if not self.methods:
            raise ValueError("at least one method is required")
        # Validates sigma, t, k and epochs.
        ab.AllocConfig(self.sigma, self.t, self.k, self.epochs)
        for name in ("sigma",):
            object.__setattr__(self, name, float(getattr(self, name)))
        for name in ("t", "k", "epochs"):
            object.__setattr__(self, name, int(getattr(self, name)))
        if self.lam is not None:
            lam = float(self.lam)
            if not 0.0 <= lam <= 1.0:
                raise ValueError(f"lambda must lie in [0, 1], got {self.lam!r}")
            object.__setattr__(self, "lam", lam)

    @property
    def poisson_rate(self) -> float:
        return self.k / self.t if self.lam is None else self.lam

    @property
    def blocks(self) -> int:
        return self.k * self.epochs


@dataclass(frozen=True)
class MethodOutcome:
    """Per-direction values of one method, or the reason it is unavailable."""

    name: str
    values: Mapping[Direction, float] | None
    reason: str | None = None
    flags: frozenset[str] = frozenset()
    detail: Mapping[str, float] = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return self.values is not None

    def combined(self) -> float | None:
        if self.values is None:
            return None
        return max(self.values.values(), key=log_of)


@dataclass(frozen=True)
class BoundResult:
    """Combined bound: per direction the minimum over methods, then the maximum over directions."""

    quantity: str
    value: float
    direction: Direction
    per_direction: Mapping[Direction, float]
    winners: Mapping[Direction, str]
    methods: Mapping[str, MethodOutcome]
    diagnostics: frozenset[str] = frozenset()

    @property
    def winning_method(self) -> str:
        side = max(self.per_direction, key=lambda s: log_of(self.per_direction[s]))
        return self.winners[side]

    @property
    def epsilon(self) -> float:
        if self.quantity != "epsilon":
            raise AttributeError("this result holds a delta")
        return self.value

    @property
    def delta(self) -> float:
        if self.quantity != "delta":
            raise AttributeError("this result holds an epsilon")
        return self.value


# Errors that turn a method into "unavailable" instead of aborting the query.
_METHOD_ERRORS = (ValueError, ArithmeticError)


def _run(name: str, fn: Callable[[], ab.SideBounds], flags: Iterable[str] = ()) -> MethodOutcome:
    try:
        out = fn()
    except _METHOD_ERRORS as exc:
        return MethodOutcome(name, None, f"{type(exc).__name__}: {exc}")
    values = dict(out.values)
    bad = [s.value for s, v in values.items() if not math.isfinite(v)]
    if bad:
        return MethodOutcome(name, None, f"no finite bound ({', '.join(bad)})", out.flags, out.detail)
    return MethodOutcome(name, values, None, frozenset(out.flags) | frozenset(flags), out.detail)


def _combine(quantity: str, spec: SchemeSpec, outcomes: list[MethodOutcome]) -> BoundResult:
    feasible = [o for o in outcomes if o.feasible]
    if not feasible:
        raise NoBoundAvailable({o.name: o.reason or "unavailable" for o in outcomes})
    per_direction: dict[Direction, float] = {}
    winners: dict[Direction, str] = {}
    for side in spec.direction.sides:
        best = None
        for o in feasible:
            v = o.values[side]
            # Strict comparison keeps the first method on ties.
            if best is None or log_of(v) < log_of(best[0]):
                best = (v, o.name)
        per_direction[side], winners[side] = best
    value = max(per_direction.values(), key=log_of)
    diagnostics = frozenset().union(*(o.flags for o in feasible))
    return BoundResult(quantity, value, spec.direction, per_direction, winners,
                       {o.name: o for o in outcomes}, diagnostics)


def _local_sigma(spec: SchemeSpec) -> float:
    return spec.sigma / math.sqrt(spec.blocks)


def _local_outcome(spec: SchemeSpec, quantity: str, target: float, name: str = "local",
                   flags: Iterable[str] = ()) -> MethodOutcome:
    sigma = _local_sigma(spec)
    if quantity == "epsilon":
        value: float = max(gaussian_epsilon(sigma, target), 0.0)
    else:
        value = gaussian_delta(sigma, target)
    return MethodOutcome(name, {s: value for s in spec.direction.sides}, flags=frozenset(flags))


def _poisson_outcome(spec: SchemeSpec, quantity: str, target: float) -> MethodOutcome:
    rate = spec.poisson_rate
    compositions = spec.t * spec.epochs
    values: dict[Direction, float] = {}
    detail: dict[str, float] = {"lambda": rate}
    for side in spec.direction.sides:
        if quantity == "epsilon":
            v, alpha = poisson_side_epsilon(spec.sigma, rate, side, target, compositions, spec.orders)
        else:
            v, alpha = poisson_side_delta(spec.sigma, rate, side, target, compositions, spec.orders)
        values[side] = v
        detail[f"alpha_{side.value}"] = alpha
    return MethodOutcome("poisson", values, detail=detail)


def _direct_outcome(spec: SchemeSpec, quantity: str, target: float) -> MethodOutcome:
    flags = {APPROXIMATE_ADD} if spec.blocks > 1 and Direction.ADD in spec.direction.sides else set()

    def run() -> ab.SideBounds:
        if quantity == "epsilon":
            res = alloc_rdp_epsilon(spec.sigma, spec.t, spec.k, spec.epochs, target,
                                    spec.direction, spec.orders)
            detail = {f"alpha_{s.value}": a for s, (_, a) in res.items() if a is not None}
            return ab.SideBounds({s: e for s, (e, _) in res.items()}, detail=detail)
        res = alloc_rdp_delta(spec.sigma, spec.t, spec.k, spec.epochs, target,
                              spec.direction, spec.orders)
        return ab.SideBounds(res)

    return _run(Method.DIRECT_RDP.value, run, flags)


def _single_outcome(spec: SchemeSpec, method: Method, quantity: str, target: float) -> MethodOutcome:
    cfg = ab.AllocConfig(spec.sigma, spec.t, direction=spec.direction)
    orders = spec.orders
    table = {
        ("epsilon", Method.DECOMPOSITION): lambda: ab.decomposition_epsilon(cfg, target, orders=orders),
        ("delta", Method.DECOMPOSITION): lambda: ab.decomposition_delta(cfg, target, orders=orders),
        ("epsilon", Method.TRUNCATED_POISSON): lambda: ab.truncated_poisson_epsilon(cfg, target, orders),
        ("delta", Method.TRUNCATED_POISSON): lambda: ab.truncated_poisson_best_delta(cfg, target, orders),
        ("epsilon", Method.RECURSIVE): lambda: ab.recursive_epsilon(cfg, target, orders=orders),
        ("delta", Method.RECURSIVE): lambda: ab.recursive_best_delta(cfg, target, orders=orders),
    }
    return _run(method.value, table[(quantity, method)])


def _allocation_outcomes(spec: SchemeSpec, quantity: str, target: float) -> list[MethodOutcome]:
    t_block, _ = multi_alloc_reduce(spec.t, spec.k)
    if t_block == 1:
        # One step per block: no amplification, every method is the local mechanism.
        return [_local_outcome(spec, quantity, target, m.value, {ab.LOCAL_PASSTHROUGH})
                for m in spec.methods]
    outcomes = []
    for m in spec.methods:
        if m is Method.DIRECT_RDP:
            outcomes.append(_direct_outcome(spec, quantity, target))
        elif spec.blocks > 1:
            outcomes.append(MethodOutcome(m.value, None, UNSUPPORTED_COMPOSITION))
        else:
            outcomes.append(_single_outcome(spec, m, quantity, target))
    return outcomes


def _outcomes(spec: SchemeSpec, quantity: str, target: float) -> list[MethodOutcome]:
    if spec.scheme is Scheme.LOCAL:
        return [_local_outcome(spec, quantity, target)]
    if spec.scheme is Scheme.POISSON:
        return [_poisson_outcome(spec, quantity, target)]
    return _allocation_outcomes(spec, quantity, target)


def epsilon(spec: SchemeSpec, delta: float | Delta) -> BoundResult:
    """Smallest certified epsilon at ``delta`` for the scheme.

    Raises:
        NoBoundAvailable: no enabled method produced a finite bound.
    """
    delta = _check_open_delta(delta)
    return _combine("epsilon", spec, _outcomes(spec, "epsilon", delta))


def delta(spec: SchemeSpec, epsilon: float) -> BoundResult:
    """Smallest certified delta at ``epsilon`` for the scheme."""
    epsilon = float(epsilon)
    if math.isnan(epsilon):
        raise ValueError("epsilon must be a number")
    if spec.scheme is Scheme.ALLOCATION and epsilon <= 0.0:
        raise ValueError("epsilon must be positive for allocation bounds")
    return _combine("delta", spec, _outcomes(spec, "delta", epsilon))


def baselines(spec: SchemeSpec, quantity: str, target: float) -> dict[str, BoundResult]:
    """Local and Poisson results at matched parameters, for side-by-side reporting."""
    out = {}
    for scheme in (Scheme.POISSON, Scheme.LOCAL):
        s = SchemeSpec(scheme, spec.sigma, spec.t, spec.k, spec.epochs, spec.lam,
                       spec.direction, orders=spec.orders)
        out[scheme.value] = epsilon(s, target) if quantity == "epsilon" else delta(s, target)
    return out
