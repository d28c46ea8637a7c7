import math

import numpy as np
import pytest

from alloc_accountant import alloc_bounds as ab
from alloc_accountant.alloc_rdp import alloc_add_delta_gauss
from alloc_accountant.core_dp import Delta, Direction, gaussian_delta, gaussian_epsilon
from alloc_accountant.poisson import poisson_side_delta, poisson_side_epsilon

REMOVE, ADD = Direction.REMOVE, Direction.ADD


def test_alloc_config_validation():
    with pytest.raises(ValueError):
        ab.AllocConfig(1.0, 5, k=6)
    with pytest.raises(ValueError):
        ab.AllocConfig(1.0, 5, epochs=0)
    with pytest.raises(ValueError):
        ab.AllocConfig(0.0, 5)
    with pytest.raises(ValueError):
        ab.decomposition_delta(ab.AllocConfig(1.0, 5, k=2), 1.0)


# ---------------------------------------------------------------- decomposition


def test_decomposition_params_examples():
    p = ab.DecompositionParams(0.1, 10)
    assert p.gamma_remove == pytest.approx(1 / (1 - 0.9 ** 10), rel=1e-14)
    assert p.gamma_remove == pytest.approx(1.53538, abs=1e-4)
    assert p.eps_remove(1.0) == pytest.approx(0.7510, abs=1e-4)
    big = ab.DecompositionParams(1e-4, 10 ** 4)
    assert abs(big.gamma_remove - math.e / (math.e - 1)) < 1e-3


def test_decomposition_params_invariants():
    p = ab.DecompositionParams(1 / 50, 50)
    for eps in (0.01, 0.5, 2.0, 10.0):
        assert 0 < p.eps_remove(eps) < eps
        assert p.eps_add(eps) > 0
        assert p.gamma_add(eps) == pytest.approx(math.exp(p.log_gamma_add(eps)), rel=1e-12)
        assert p.eps_add(eps) < p.eps_add_limit


def test_decomposition_degenerate_full_rate():
    # t = 1, lambda = 1: gamma = 1, and the bound is Poisson with rate one.
    p = ab.DecompositionParams(1.0, 1)
    assert p.gamma_remove == 1.0
    assert p.eps_remove(0.8) == pytest.approx(0.8)


def test_decomposition_delta_formula():
    cfg = ab.AllocConfig(1.0, 20, direction=REMOVE)
    p = ab.DecompositionParams(1 / 20, 20)
    d = ab.decomposition_delta(cfg, 1.5)[REMOVE]
    pois, _ = poisson_side_delta(1.0, 1 / 20, REMOVE, p.eps_remove(1.5), 20)
    assert float(d) == pytest.approx(p.gamma_remove * float(pois), rel=1e-12)


def test_decomposition_t1_is_local():
    res = ab.decomposition_delta(ab.AllocConfig(0.9, 1), 0.5)
    assert res[REMOVE] == gaussian_delta(0.9, 0.5) and res[ADD] == gaussian_delta(0.9, 0.5)
    assert ab.LOCAL_PASSTHROUGH in res.flags


def test_decomposition_epsilon_inverts_delta():
    cfg = ab.AllocConfig(2.0, 100)
    eps = ab.decomposition_epsilon(cfg, 1e-6)
    for side in (REMOVE, ADD):
        side_cfg = ab.AllocConfig(2.0, 100, direction=side)
        assert float(ab.decomposition_delta(side_cfg, eps[side])[side]) <= 1e-6 * (1 + 1e-7)
        smaller = ab.decomposition_delta(side_cfg, eps[side] * (1 - 1e-3))[side]
        assert float(smaller) > 1e-6


@pytest.mark.parametrize("sigma,t", [(1.0, 16), (0.5, 4), (2.0, 64)])
def test_decomposition_add_envelope_monotone(sigma, t):
    cfg = ab.AllocConfig(sigma, t, direction=ADD)
    values = [float(ab.decomposition_delta(cfg, e)[ADD]) for e in np.linspace(0.05, 8.0, 40)]
    assert all(b <= a for a, b in zip(values, values[1:]))


def test_decomposition_constant_factor():
    for sigma in (1.0, 2.0, 5.0):
        cfg = ab.AllocConfig(sigma, 10 ** 4, direction=REMOVE)
        e_alloc = ab.decomposition_epsilon(cfg, 1e-8)[REMOVE]
        e_pois, _ = poisson_side_epsilon(sigma, 1e-4, REMOVE, 1e-8, 10 ** 4)
        assert e_alloc <= 1.7 * e_pois


# ---------------------------------------------------------------- truncated Poisson


def test_truncated_params_worked_example():
    p = ab.TruncatedPoissonParams.build(10 ** 6, 1.0, 1e-12, 1e-10)
    expected_gamma = math.cosh(1.0) * math.sqrt(2 * math.log(1e10) / 1e6)
    assert p.gamma == pytest.approx(expected_gamma, rel=1e-12)
    assert p.gamma == pytest.approx(1.0472e-2, rel=1e-4)
    assert p.eta == pytest.approx(1.0106e-6, rel=1e-4)
    assert p.eta == pytest.approx(1 / (1e6 * (1 - p.gamma)), rel=1e-14)
    assert not p.cap_active


def test_truncated_params_cap():
    p = ab.TruncatedPoissonParams.build(100, 50.0, 1e-12, 1e-10)
    assert p.cap_active
    assert p.gamma == pytest.approx(1 - 1 / 100)
    assert p.eta == pytest.approx(1.0)


def test_truncated_split_grid():
    assert len(ab.TRUNCATED_SPLITS) == 9
    assert all(0 < q < 1 for q in ab.TRUNCATED_SPLITS)
    p = ab.truncated_poisson_params(5.0, 10 ** 6, 1e-10, 0.5)
    assert float(p.delta0) * 10 ** 6 + float(p.delta_prime) == pytest.approx(1e-10, rel=1e-12)
    assert p.eps0 == pytest.approx(gaussian_epsilon(5.0, p.delta0), rel=1e-12)


def test_truncated_delta_structure():
    cfg = ab.AllocConfig(5.0, 10 ** 6, direction=REMOVE)
    res = ab.truncated_poisson_delta(cfg, 0.05, 1e-10)
    p = ab.best_truncated_params(5.0, 10 ** 6, 1e-10)
    pois, _ = poisson_side_delta(5.0, p.eta, REMOVE, 0.05, 10 ** 6)
    assert float(res[REMOVE]) == pytest.approx(float(pois) + 1e-10, rel=1e-12)
    assert res.detail["eta"] * 10 ** 6 <= 1.05


def test_truncated_cap_flag_small_sigma():
    res = ab.truncated_poisson_delta(ab.AllocConfig(0.5, 16), 1.0, 1e-6)
    assert ab.CAP_ACTIVE in res.flags


def test_truncated_floored_at_local():
    cfg = ab.AllocConfig(1.5, 64)
    res = ab.truncated_poisson_delta(cfg, 1.0, 1e-6)
    assert ab.LOCAL_FLOOR in res.flags
    assert res[REMOVE] == gaussian_delta(1.5, 1.0)
    eps = ab.truncated_poisson_epsilon(cfg, 1e-6)
    assert eps[ADD] <= gaussian_epsilon(1.5, 1e-6)


def test_truncated_close_to_poisson_large_t():
    # Loose closeness to the rate-1/t Poisson scheme.
    cfg = ab.AllocConfig(5.0, 10 ** 6)
    eps = ab.truncated_poisson_epsilon(cfg, 1e-10).combined
    ref = max(poisson_side_epsilon(5.0, 1e-6, s, 1e-10, 10 ** 6)[0] for s in (REMOVE, ADD))
    assert eps <= 1.35 * ref


# ---------------------------------------------------------------- recursive


def test_recursive_params():
    p = ab.RecursiveParams.build(math.log(2.0), 100)
    assert p.tau == pytest.approx(0.5)
    assert p.eta == pytest.approx(4 / 100)
    with pytest.raises(ValueError):
        ab.RecursiveParams.build(3.0, 100)


def test_recursive_delta_formula():
    cfg = ab.AllocConfig(1.0, 400)
    base = lambda ep: Delta(1e-3)
    ep = math.log(2.0)
    res = ab.recursive_delta(cfg, 1.0, ep, base)
    for side, factor in ((REMOVE, 0.5), (ADD, 0.5 * 4)):
        pois, _ = poisson_side_delta(1.0, 4 / 400, side, 1.0, 400)
        assert float(res[side]) == pytest.approx(float(pois) + factor * 1e-3, rel=1e-12)


def test_recursive_correction_vanishes_for_large_eps_prime():
    cfg = ab.AllocConfig(1.0, 10 ** 6, direction=REMOVE)
    small = ab.recursive_delta(cfg, 1.0, 0.5, lambda e: Delta(1e-4))
    large = ab.recursive_delta(cfg, 1.0, 6.0, lambda e: Delta(1e-4))
    p = ab.RecursiveParams.build(6.0, 10 ** 6)
    assert p.tau * 1e-4 < 1e-8
    assert large.detail["eta"] > small.detail["eta"]


def test_eps_prime_grid_feasible():
    grid = ab.eps_prime_grid(10 ** 4)
    assert len(grid) == ab.EPS_PRIME_POINTS
    assert all(math.exp(2 * e) <= 10 ** 4 * (1 + 1e-12) for e in grid)
    assert list(grid) == sorted(grid)
    assert ab.eps_prime_grid(1) == ()


def test_optimize_eps_prime_empty_grid_falls_back():
    ep, flags = ab.optimize_eps_prime(ab.AllocConfig(1.0, 1), 1.0, lambda e: Delta(0.0))
    assert ep is None and ab.RECURSIVE_FALLBACK in flags


def test_optimize_eps_prime_matches_fine_grid():
    cfg = ab.AllocConfig(1.0, 200, direction=REMOVE)
    base = ab.default_base_add(cfg)
    ep, _ = ab.optimize_eps_prime(cfg, 1.0, base)
    chosen = float(ab.recursive_delta(cfg, 1.0, ep, base)[REMOVE])
    fine = np.linspace(0.05, ab.max_eps_prime(200), 400)
    best = min(float(ab.recursive_delta(cfg, 1.0, e, base)[REMOVE]) for e in fine)
    assert chosen <= 1.05 * best


def test_optimize_eps_prime_boundary_flag():
    # A base bound that is vacuous except at the very top of the grid.
    cfg = ab.AllocConfig(100.0, 100, direction=REMOVE)
    cap = ab.max_eps_prime(100)
    base = lambda e: Delta(0.0) if e >= cap * (1 - 1e-12) else Delta(1.0)
    ep, flags = ab.optimize_eps_prime(cfg, 0.5, base)
    assert ep == pytest.approx(cap)
    assert ab.EPS_PRIME_BOUNDARY in flags


@pytest.mark.parametrize("sigma,t", [(1.0, 64), (2.0, 16)])
def test_recursive_best_delta_monotone(sigma, t):
    for side in (REMOVE, ADD):
        cfg = ab.AllocConfig(sigma, t, direction=side)
        values = [float(ab.recursive_best_delta(cfg, e)[side]) for e in (0.25, 0.5, 1.0, 2.0)]
        assert all(b <= a for a, b in zip(values, values[1:]))


def test_recursive_beats_truncated():
    cfg = ab.AllocConfig(1.0, 10 ** 4)
    rec = ab.recursive_epsilon(cfg, 1e-8).combined
    trunc = ab.truncated_poisson_epsilon(cfg, 1e-8).combined
    assert rec <= trunc


def test_default_base_add_is_pointwise_min():
    cfg = ab.AllocConfig(1.0, 50)
    base = ab.default_base_add(cfg)
    for ep in (0.3, 1.0, 1.9):
        dec = ab.decomposition_delta(ab.AllocConfig(1.0, 50, direction=ADD), ep)[ADD]
        direct = alloc_add_delta_gauss(1.0, 50, ep)
        assert float(base(ep)) == min(float(dec), float(direct))


# ---------------------------------------------------------------- Gaussian asymptotic


def test_gauss_combined_in_regime():
    cfg = ab.AllocConfig(100.0, 10 ** 6)
    d = ab.gauss_combined_k_delta(cfg, 0.01, 1e-10)
    worst = max(float(poisson_side_delta(100.0, 2e-6, s, 0.01, 10 ** 6)[0]) for s in (REMOVE, ADD))
    assert float(d) == pytest.approx(worst + 2e-10, rel=1e-12)


def test_gauss_combined_regime_gate():
    threshold = ab.gauss_combined_regime_threshold(10 ** 6, 1, 1e-10)
    with pytest.raises(ab.RegimeError):
        ab.gauss_combined_k_delta(ab.AllocConfig(threshold * 0.999, 10 ** 6), 0.01, 1e-10)
    with pytest.raises(ab.RegimeError):
        ab.gauss_combined_k_delta(ab.AllocConfig(100.0, 10, k=10), 0.01, 1e-10)


# ---------------------------------------------------------------- monotonicity


@pytest.mark.parametrize("method", ["decomposition", "truncated", "recursive"])
def test_bounds_monotone_in_sigma_and_t(method):
    fn = {
        "decomposition": lambda c, e: ab.decomposition_delta(c, e),
        "truncated": lambda c, e: ab.truncated_poisson_delta(c, e, 1e-6),
        "recursive": lambda c, e: ab.recursive_best_delta(c, e),
    }[method]
    by_sigma = [float(fn(ab.AllocConfig(s, 32, direction=REMOVE), 1.0)[REMOVE])
                for s in (0.8, 1.0, 1.5, 3.0)]
    assert all(b <= a for a, b in zip(by_sigma, by_sigma[1:]))
    by_t = [float(fn(ab.AllocConfig(1.5, t, direction=REMOVE), 1.0)[REMOVE]) for t in (4, 16, 64)]
    assert all(b <= a for a, b in zip(by_t, by_t[1:]))
