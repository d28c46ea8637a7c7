"""RDP accounting for Poisson subsampling of the Gaussian mechanism.

Per-step Renyi divergences of the sampled-Gaussian pair
``M = lam * N(1, s^2) + (1 - lam) * N(0, s^2)`` against ``Q = N(0, s^2)``:
remove direction ``D_a(M || Q)`` (closed form at integer orders) and add
direction ``D_a(Q || M)`` (one-dimensional quadrature).

Both are computed as ``log1p(excess) / (a - 1)`` where ``excess >= 0`` is
assembled from non-negative terms only; per-step values are often ~1e-12 and
get multiplied by the number of steps, so the usual ``log(1 + tiny)`` route
would lose every significant digit.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .core_dp import (
    DEFAULT_ORDERS,
    Delta,
    Direction,
    RdpCurve,
    _check_open_delta,
    _check_sigma,
    search_delta,
    search_epsilon,
)


class QuadratureError(ArithmeticError):
    """Adaptive quadrature failed to reach the requested accuracy."""

    def __init__(self, message: str, achieved: float):
        super().__init__(f"{message} (achieved relative error {achieved:.3g})")
        self.achieved = achieved


@dataclass(frozen=True)
class PoissonConfig:
    sigma: float
    t: int
    lam: float
    direction: Direction = Direction.BOTH
    orders: tuple[int, ...] = field(default=DEFAULT_ORDERS, repr=False)

    def __post_init__(self):
        _check_sigma(self.sigma)
        if int(self.t) != self.t or self.t < 1:
            raise ValueError(f"t must be a positive integer, got {self.t!r}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam!r}")
        object.__setattr__(self, "t", int(self.t))
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "direction", Direction.parse(self.direction))


def _check_lambda(lam: float) -> float:
    lam = float(lam)
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam!r}")
    return lam


def _log_expm1(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(x > 30.0, x + np.log1p(-np.exp(-np.minimum(x, 700.0))),
                        np.log(np.expm1(np.minimum(x, 30.0))))


@functools.lru_cache(maxsize=65536)
def poisson_rdp_remove_step(sigma: float, lam: float, alpha: int) -> float:
    """Integer-order RDP of one sampled-Gaussian step, remove direction.

    ``(1/(a-1)) ln sum_j C(a, j) lam^j (1-lam)^(a-j) exp(j(j-1)/(2 s^2))``.
    """
    sigma = _check_sigma(sigma)
    lam = _check_lambda(lam)
    if int(alpha) != alpha or alpha < 2:
        raise ValueError(f"alpha must be an integer >= 2, got {alpha!r}")
    alpha = int(alpha)
    if lam == 0.0:
        return 0.0
    if lam == 1.0:
        return alpha / (2.0 * sigma * sigma)
    # sum_j binom(j) * 1 == 1 and the j = 0, 1 moments equal 1, so the excess over
    # 1 is sum_{j>=2} binom(j) * expm1(j(j-1)/(2 s^2)), every term non-negative.
    j = np.arange(2, alpha + 1, dtype=float)
    log_binom = (special.gammaln(alpha + 1.0) - special.gammaln(j + 1.0)
                 - special.gammaln(alpha - j + 1.0))
    log_terms = (log_binom + j * math.log(lam) + (alpha - j) * math.log1p(-lam)
                 + _log_expm1(j * (j - 1.0) / (2.0 * sigma * sigma)))
    log_excess = float(special.logsumexp(log_terms))
    return float(np.logaddexp(0.0, log_excess)) / (alpha - 1.0)


# Coefficients of the binomial series of (1 + z)^(-beta) are built on demand.
_SERIES_TERMS = 18
_GL_FINE = np.polynomial.legendre.leggauss(48)
_GL_COARSE = np.polynomial.legendre.leggauss(32)


def _log_excess_integrand(x: np.ndarray, sigma: float, lam: float, beta: float) -> np.ndarray:
    """Log of ``Q(x) * f(lam * u(x))`` with ``f(z) = (1+z)^-beta - 1 + beta z``.

    ``u = P/Q - 1`` has zero mean under ``Q``, so ``E_Q[(Q/M)^beta] - 1`` equals
    ``E_Q[f(lam u)]`` and ``f >= 0`` by convexity.
    """
    ell = (2.0 * x - 1.0) / (2.0 * sigma * sigma)
    if lam == 1.0:
        log_ratio = ell
    else:
        log_ratio = np.logaddexp(math.log1p(-lam), math.log(lam) + ell)
    # Beyond e^700 the ratio would overflow; there f = beta z to double precision.
    over = log_ratio > 700.0
    z = np.expm1(np.minimum(log_ratio, 700.0))
    la = -beta * log_ratio
    small = np.abs(z) * (beta + 1.0) < 0.1
    log_f = np.empty_like(x)
    if np.any(small):
        zs = z[small]
        coef = 1.0
        total = np.zeros_like(zs)
        for k in range(1, _SERIES_TERMS + 1):
            coef *= -(beta + k - 1.0) / k
            if k >= 2:
                total += coef * zs ** k
        with np.errstate(divide="ignore"):
            log_f[small] = np.log(np.maximum(total, 0.0))
    big = ~small
    if np.any(big):
        lab = la[big]
        zb = z[big]
        huge = lab > 600.0
        out = np.empty_like(lab)
        with np.errstate(divide="ignore", invalid="ignore"):
            out[~huge] = np.log(np.maximum(np.expm1(lab[~huge]) + beta * zb[~huge], 0.0))
            out[huge] = lab[huge] + np.log1p((beta * zb[huge] - 1.0) * np.exp(-lab[huge]))
        log_f[big] = out
    log_f[over] = math.log(beta) + log_ratio[over]
    log_q = -0.5 * (x / sigma) ** 2 - math.log(sigma) - 0.5 * math.log(2.0 * math.pi)
    return log_q + log_f


@functools.lru_cache(maxsize=65536)
def poisson_rdp_add_step(sigma: float, lam: float, alpha: float) -> float:
    """RDP of one sampled-Gaussian step, add direction ``D_a(Q || M)``, by quadrature.

    Raises:
        QuadratureError: the adaptive quadrature did not converge.
    """
    sigma = _check_sigma(sigma)
    lam = _check_lambda(lam)
    alpha = float(alpha)
    if not alpha > 1.0 or not math.isfinite(alpha):
        raise ValueError(f"alpha must be > 1, got {alpha!r}")
    if lam == 0.0:
        return 0.0
    beta = alpha - 1.0
    # The integrand is at most Q * (1-lam)^-beta on the left and decays like
    # beta * lam * P on the right; for lam = 1 its mass sits around x = -beta.
    lower = -beta - 40.0 * sigma - 1.0
    upper = 1.0 + 40.0 * sigma
    grid = np.linspace(lower, upper, 801)
    h = _log_excess_integrand(grid, sigma, lam, beta)
    h_max = float(np.max(h))
    if not math.isfinite(h_max):
        return 0.0
    keep = np.nonzero(h > h_max - 60.0)[0]
    step = grid[1] - grid[0]
    a = grid[keep[0]] - step
    b = grid[keep[-1]] + step
    n_panels = max(1, int(math.ceil((b - a) / (2.0 * sigma))))
    edges = np.linspace(a, b, n_panels + 1)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])

    def panels(nodes: np.ndarray, weights: np.ndarray) -> np.ndarray:
        x = mid[:, None] + half[:, None] * nodes[None, :]
        values = np.exp(_log_excess_integrand(x.ravel(), sigma, lam, beta) - h_max)
        return (values.reshape(x.shape) * weights[None, :]).sum(axis=1) * half

    fine = panels(*_GL_FINE)
    coarse = panels(*_GL_COARSE)
    total = float(fine.sum())
    if total <= 0.0:
        return 0.0
    bad = np.abs(fine - coarse) > 1e-11 * total
    for i in np.nonzero(bad)[0]:
        # Panel not resolved by the fixed rule; refine it adaptively.
        value, abserr = integrate.quad(
            lambda x: math.exp(float(_log_excess_integrand(np.array([x]), sigma, lam, beta)[0])
                               - h_max),
            edges[i], edges[i + 1], epsabs=0.0, epsrel=1e-12, limit=200)
        if abserr > 1e-8 * max(value, 1e-300) and abserr > 1e-12 * total:
            raise QuadratureError("add-direction quadrature did not converge", abserr / total)
        fine[i] = value
    total = float(fine.sum())
    if total <= 0.0:
        return 0.0
    log_excess = h_max + math.log(total)
    return float(np.logaddexp(0.0, log_excess)) / beta


def _step_rdp(side: Direction, sigma: float, lam: float):
    if side is Direction.REMOVE:
        return functools.partial(poisson_rdp_remove_step, sigma, lam)
    if side is Direction.ADD:
        return functools.partial(poisson_rdp_add_step, sigma, lam)
    raise ValueError("a single direction is required")


def poisson_curve(sigma: float, lam: float, side: Direction, compositions: int = 1,
                  orders=DEFAULT_ORDERS) -> RdpCurve:
    """Composed RDP curve ``compositions * rho_step(alpha)`` for one direction."""
    step = _step_rdp(Direction.parse(side), sigma, lam)
    return RdpCurve(tuple(orders), tuple(compositions * step(a) for a in orders))


def _check_compositions(compositions: int) -> int:
    if int(compositions) != compositions or compositions < 1:
        raise ValueError(f"compositions must be a positive integer, got {compositions!r}")
    return int(compositions)


def poisson_side_delta(sigma: float, lam: float, side: Direction, epsilon: float,
                       compositions: int, orders=DEFAULT_ORDERS) -> tuple[Delta, int]:
    """Single-direction delta and best order for ``compositions`` Poisson steps."""
    if lam == 0.0:
        return Delta(0.0), int(orders[0])
    step = _step_rdp(side, sigma, lam)
    return search_delta(lambda a: compositions * step(a), epsilon, orders)


def poisson_side_epsilon(sigma: float, lam: float, side: Direction, delta: float | Delta,
                         compositions: int, orders=DEFAULT_ORDERS) -> tuple[float, int]:
    """Single-direction epsilon and best order for ``compositions`` Poisson steps."""
    delta = _check_open_delta(delta)
    if lam == 0.0:
        return 0.0, int(orders[0])
    step = _step_rdp(side, sigma, lam)
    return search_epsilon(lambda a: compositions * step(a), delta, orders)


def poisson_delta(config: PoissonConfig, epsilon: float, compositions: int | None = None) -> Delta:
    """Delta of the Poisson scheme at ``epsilon``; BOTH takes the larger direction.

    ``compositions`` defaults to ``config.t`` (one pass over the steps).
    """
    compositions = _check_compositions(config.t if compositions is None else compositions)
    values = [poisson_side_delta(config.sigma, config.lam, side, epsilon, compositions,
                                 config.orders)[0]
              for side in config.direction.sides]
    return max(values, key=lambda d: d.log)


def poisson_epsilon(config: PoissonConfig, delta: float | Delta,
                    compositions: int | None = None) -> tuple[float, int]:
    """Epsilon of the Poisson scheme at ``delta`` and the order achieving it."""
    compositions = _check_compositions(config.t if compositions is None else compositions)
    results = [poisson_side_epsilon(config.sigma, config.lam, side, delta, compositions,
                                    config.orders)
               for side in config.direction.sides]
    return max(results, key=lambda r: r[0])
