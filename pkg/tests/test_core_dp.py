import math
import pickle

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alloc_accountant.core_dp import (
    DEFAULT_ORDERS,
    Delta,
    Direction,
    RdpCurve,
    TargetUnattainableError,
    exhaustive_rdp_to_epsilon,
    gaussian_delta,
    gaussian_epsilon,
    gaussian_log_delta,
    gaussian_rdp,
    invert_delta_fn,
    rdp_curve_delta,
    rdp_to_delta,
    rdp_to_epsilon,
    search_epsilon,
)

from . import oracles

# Reference values from the normal-CDF oracle at 50 digits.
GAUSS_REFERENCE = [
    (1.0, 1.0, 0.1269367375066439458),
    (2.0, 0.5, 0.052440323287669661712),
    (0.5, 3.0, 0.18381307654447215597),
    (1.0, 0.0, 0.38292492254802620728),
    (3.0, 10.0, 7.96234935864365424e-198),
]


@pytest.mark.parametrize("sigma,eps,expected", GAUSS_REFERENCE)
def test_gaussian_delta_frozen(sigma, eps, expected):
    assert gaussian_delta(sigma, eps) == pytest.approx(expected, rel=1e-13)


def test_gaussian_delta_deep_tail_keeps_log():
    d = gaussian_delta(1.0, 50.0)
    ref = oracles.gaussian_delta(1.0, 50.0)
    assert float(d) == 0.0
    assert d.log == pytest.approx(float(oracles.mp.log(ref)), rel=1e-12)


def test_gaussian_delta_negative_epsilon():
    # delta(-eps) = 1 - e^-eps + e^-eps * delta(eps) by symmetry of the pair.
    d = gaussian_delta(1.0, -20.0)
    assert float(d) == pytest.approx(1.0 - math.exp(-20.0), rel=1e-14)
    assert 0.0 <= float(gaussian_delta(0.3, -0.5)) <= 1.0


@settings(max_examples=60, deadline=None)
@given(sigma=st.floats(0.2, 20.0), eps=st.floats(0.0, 30.0))
def test_gaussian_delta_matches_oracle(sigma, eps):
    ref = oracles.gaussian_delta(sigma, eps)
    got = gaussian_log_delta(sigma, eps)
    if ref <= 0:
        assert got == -math.inf or got < -700
        return
    assert got == pytest.approx(float(oracles.mp.log(ref)), rel=1e-10, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(sigma=st.floats(0.2, 20.0), log10_delta=st.floats(-30.0, -0.5))
def test_gaussian_epsilon_roundtrip(sigma, log10_delta):
    delta = 10.0 ** log10_delta
    eps = gaussian_epsilon(sigma, delta)
    assert float(gaussian_delta(sigma, eps)) <= delta
    # Tight from above: a slightly smaller epsilon violates the target.
    smaller = eps - 1e-8 * max(1.0, abs(eps))
    assert float(gaussian_delta(sigma, smaller)) > delta * (1 - 1e-12)


def test_gaussian_epsilon_small_value():
    eps = gaussian_epsilon(1.0, 0.3829)
    assert 0 < eps < 1e-3


def test_gaussian_rdp():
    assert gaussian_rdp(2.0, 4) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        gaussian_rdp(-1.0, 2)


def test_delta_type():
    d = Delta.from_log(-800.0)
    assert float(d) == 0.0 and d.log == -800.0
    assert pickle.loads(pickle.dumps(d)).log == -800.0
    with pytest.raises(ValueError):
        Delta(1.5)
    with pytest.raises(ValueError):
        Delta(float("nan"))


def test_direction_parse():
    assert Direction.parse("Remove") is Direction.REMOVE
    assert Direction.BOTH.sides == (Direction.REMOVE, Direction.ADD)
    with pytest.raises(ValueError):
        Direction.parse("sideways")


def test_rdp_to_epsilon_single_order():
    # eps = 1 + (ln 1e6 + 2 ln(1/2) - ln 1) / 1
    curve = RdpCurve((2,), (1.0,))
    eps, alpha = rdp_to_epsilon(curve, 1e-6)
    assert alpha == 2
    assert eps == pytest.approx(1.0 + math.log(1e6) + 2 * math.log(0.5), rel=1e-14)


def test_rdp_to_delta_matches_conversion_formula():
    d = rdp_to_delta(0.5, 4, 2.0)
    expected = math.exp(3 * (0.5 - 2.0)) / 3 * (0.75 ** 4)
    assert float(d) == pytest.approx(expected, rel=1e-14)
    with pytest.raises(ValueError):
        rdp_to_delta(0.5, 4, 0.0)


def test_gaussian_rdp_conversion_is_sound():
    # RDP conversion never beats the exact profile.
    curve = RdpCurve.from_function(lambda a: gaussian_rdp(1.5, a))
    for eps in (0.5, 1.0, 3.0):
        d, _ = rdp_curve_delta(curve, eps)
        assert float(d) >= float(gaussian_delta(1.5, eps))


def test_rdp_curve_validation():
    with pytest.raises(ValueError):
        RdpCurve((2, 2), (0.1, 0.2))
    with pytest.raises(ValueError):
        RdpCurve((2, 3), (0.2, 0.1))
    with pytest.raises(ValueError):
        RdpCurve((1,), (0.1,))
    c = RdpCurve((2, 3), (0.1, 0.2))
    assert (c + c.scale(2)).rho == pytest.approx((0.3, 0.6))


rho_curves = st.lists(st.floats(0.0, 5.0), min_size=1, max_size=59).map(
    lambda inc: tuple(itertools_accumulate(inc)))


def itertools_accumulate(values):
    total = 0.0
    out = []
    for v in values:
        total += v
        out.append(total)
    return out


@settings(max_examples=200, deadline=None)
@given(rho=rho_curves, log10_delta=st.floats(-20.0, -0.01))
def test_early_stop_equals_exhaustive(rho, log10_delta):
    curve = RdpCurve(DEFAULT_ORDERS[: len(rho)], rho)
    delta = 10.0 ** log10_delta
    assert rdp_to_epsilon(curve, delta) == exhaustive_rdp_to_epsilon(curve, delta)
    expected = oracles.rdp_epsilon_bruteforce(curve.as_dict(), delta)
    assert rdp_to_epsilon(curve, delta)[0] == pytest.approx(expected, rel=1e-12, abs=1e-12)


def test_search_epsilon_is_lazy():
    calls = []

    def rho(a):
        calls.append(a)
        return a / 2.0

    search_epsilon(rho, 1e-5)
    assert len(calls) < len(DEFAULT_ORDERS)


def test_invert_delta_fn():
    f = lambda e: math.exp(-e)
    x = invert_delta_fn(f, 0.01, (0.0, 10.0))
    assert f(x) <= 0.01
    assert x == pytest.approx(math.log(100), rel=1e-8)
    assert invert_delta_fn(f, 2.0, (0.0, 10.0)) == 0.0
    with pytest.raises(TargetUnattainableError):
        invert_delta_fn(f, 1e-9, (0.0, 10.0))
    assert f(invert_delta_fn(f, 1e-9, (0.0, 10.0), expand=True)) <= 1e-9
