import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from steinbounds.specfun import (double_factorial, gamma, gamma_ratio_constant,
                                 gauss_legendre_sine_integral, log_gamma, normal_abs_moment,
                                 normal_moment, stein_integral_constant)

from oracles import ou_kernel_integral


def test_gamma_known_values():
    assert gamma(0.5) == pytest.approx(math.sqrt(math.pi), rel=1e-14)
    assert gamma(5) == pytest.approx(24.0, rel=1e-14)


def test_gamma_half_integer_against_quadrature():
    oracle, _ = quad(lambda t: t**1.5 * math.exp(-t), 0, np.inf, epsabs=0, epsrel=1e-13)
    assert oracle == pytest.approx(1.329340388179137, rel=1e-12)
    assert gamma(2.5) == pytest.approx(oracle, rel=1e-12)


def test_gamma_matches_stdlib_on_documented_range():
    xs = np.linspace(0.5, 170.0, 4001)
    err = max(abs(gamma(x) / math.gamma(x) - 1.0) for x in xs)
    assert err <= 1e-12


def test_log_gamma_matches_stdlib():
    for x in np.geomspace(1e-3, 1e5, 300):
        assert log_gamma(x) == pytest.approx(math.lgamma(x), abs=1e-12 * max(1.0, abs(math.lgamma(x))))


@pytest.mark.parametrize("x", [0.0, -1.0, -0.5, float("nan"), float("inf")])
def test_gamma_domain(x):
    with pytest.raises(ValueError):
        gamma(x)


def test_gamma_overflow_points_to_log_gamma():
    with pytest.raises(OverflowError):
        gamma(200.0)
    assert math.isfinite(log_gamma(200.0))


def test_gamma_recurrence_grid():
    for x in np.arange(0.5, 50.0 + 1e-9, 0.2):
        assert gamma(x + 1) == pytest.approx(x * gamma(x), rel=1e-12)


@given(st.floats(min_value=0.01, max_value=160.0))
def test_gamma_recurrence_property(x):
    assert gamma(x + 1) == pytest.approx(x * gamma(x), rel=1e-12)


@pytest.mark.parametrize("k, expected", [
    (1, math.pi / 2),
    (2, 1.0),
    # 1/2 B(1/2, 5) = 128/315; independently reproduced by quadrature below
    (10, 128 / 315),
])
def test_stein_integral_constant_values(k, expected):
    assert stein_integral_constant(k) == pytest.approx(expected, rel=1e-13)
    assert ou_kernel_integral(k) == pytest.approx(expected, rel=1e-10)


def test_stein_integral_constant_vs_both_quadratures():
    for k in range(1, 21):
        exact = stein_integral_constant(k)
        assert ou_kernel_integral(k) == pytest.approx(exact, rel=1e-8)
        assert gauss_legendre_sine_integral(k) == pytest.approx(exact, rel=1e-13)


@pytest.mark.parametrize("k", [0, -3, 1.5])
def test_integral_constant_domain(k):
    with pytest.raises(ValueError):
        stein_integral_constant(k)


def test_normal_abs_moment_values():
    assert normal_abs_moment(1) == pytest.approx(math.sqrt(2 / math.pi), rel=1e-14)
    assert normal_abs_moment(2) == 1.0
    oracle, _ = quad(lambda z: abs(z) ** 3 * math.exp(-z * z / 2) / math.sqrt(2 * math.pi),
                     -np.inf, np.inf, epsabs=0, epsrel=1e-13)
    assert normal_abs_moment(3) == pytest.approx(oracle, rel=1e-12)
    assert normal_abs_moment(3) == pytest.approx(2 * math.sqrt(2 / math.pi), rel=1e-14)


def test_even_moments_are_double_factorials():
    for m in range(11):
        expected = float(math.prod(range(2 * m - 1, 0, -2)))
        assert normal_moment(2 * m) == expected
        assert normal_abs_moment(2 * m) == expected
        assert normal_moment(2 * m + 1) == 0.0


def test_double_factorial_log_branch_is_continuous():
    for k in (41, 42, 60, 61):
        exact = float(math.prod(range(k, 0, -2)))
        assert double_factorial(k) == pytest.approx(exact, rel=1e-12)


def test_abs_moment_matches_winkelbauer_formula_for_odd_orders():
    for k in range(1, 40, 2):
        assert normal_abs_moment(k) == pytest.approx(
            2 ** (k / 2) * math.gamma((k + 1) / 2) / math.sqrt(math.pi), rel=1e-12)


@pytest.mark.parametrize("k, expected", [
    (1, math.sqrt(math.pi / 2)),
    (2, math.sqrt(2 / math.pi)),
])
def test_gamma_ratio_values(k, expected):
    assert gamma_ratio_constant(k).value == pytest.approx(expected, rel=1e-14)


def test_gamma_ratio_k100_window():
    # the sandwich at k = 100 is (0.1, 1/sqrt(99.5) = 0.100250941...)
    v = gamma_ratio_constant(100).value
    assert 0.1 < v < 1 / math.sqrt(99.5)
    assert v == pytest.approx(0.1002503086, abs=1e-10)


def test_gamma_ratio_against_product_recurrence():
    # r_k = Gamma(k/2)/Gamma((k+1)/2) obeys r_{k+2} = r_k * k/(k+1)
    r = {1: math.sqrt(math.pi), 2: 2 / math.sqrt(math.pi)}
    for k in range(3, 401):
        r[k] = r[k - 2] * (k - 2) / (k - 1)
    for k in range(1, 401):
        assert gamma_ratio_constant(k).value == pytest.approx(r[k] / math.sqrt(2), rel=1e-12)


def test_gamma_ratio_sandwich_and_monotone():
    prev = math.inf
    for k in range(1, 201):
        c = gamma_ratio_constant(k)
        assert c.lower < c.value < c.upper
        assert c.value < prev
        prev = c.value


@settings(max_examples=50)
@given(st.integers(min_value=201, max_value=5000))
def test_gamma_ratio_sandwich_large_k(k):
    c = gamma_ratio_constant(k)
    assert 1 / math.sqrt(k) < c.value < 1 / math.sqrt(k - 0.5)


def test_integral_constant_is_scaled_gamma_ratio():
    for k in range(1, 30):
        assert stein_integral_constant(k) == pytest.approx(
            math.sqrt(math.pi / 2) * gamma_ratio_constant(k).value, rel=1e-14)
