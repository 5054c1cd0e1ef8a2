import math

import numpy as np
import pytest

from steinbounds.clt_engine import (DistanceSeries, distance_series, dyadic_grid, exact_distance,
                                    exact_distance_cosine_mv, mc_distance, rate_fit)
from steinbounds.distributions import hermite_distribution, point_mass, rademacher
from steinbounds.testfuncs import constant_function, cosine_family


def test_dyadic_grid():
    assert dyadic_grid(8, 4096) == [8 * 2**i for i in range(10)]
    assert dyadic_grid(8, 7) == []


@pytest.mark.parametrize("n", [1, 4, 16, 100, 1000])
def test_exact_distance_rademacher_cos_closed_form(n):
    # E cos(W_n) = cos(n^{-1/2})^n for Rademacher summands
    ref = abs(math.cos(n**-0.5) ** n - math.exp(-0.5))
    assert exact_distance(rademacher(), cosine_family(1.0), n) == pytest.approx(ref, rel=1e-9, abs=1e-15)


def test_exact_distance_n4_value():
    assert exact_distance(rademacher(), cosine_family(1.0), 4) == pytest.approx(0.013397861, abs=1e-9)


def test_constant_test_function_gives_zero():
    assert exact_distance(hermite_distribution(4), constant_function(2.0), 20) == 0.0


def test_point_mass_distance():
    # W_n = 0 so the distance is |1 - e^{-1/2}|
    assert exact_distance(point_mass(0.0), cosine_family(1.0), 5) == pytest.approx(1 - math.exp(-0.5))


def test_multivariate_cosine_product_form():
    n = 32
    got = exact_distance_cosine_mv([rademacher(), rademacher()], 1.0, 0.0, (1.0, 1.0), n)
    assert got == pytest.approx(abs(math.cos(n**-0.5) ** (2 * n) - math.exp(-1.0)), rel=1e-9)
    with pytest.raises(ValueError):
        exact_distance_cosine_mv([rademacher()], 1.0, 0.0, (1.0, 1.0), n)


@pytest.mark.parametrize("n", [16, 64])
def test_monte_carlo_agrees_with_exact(n):
    h = cosine_family(1.0)
    est, half = mc_distance(rademacher().sampler(), h, n, reps=200_000, seed=7)
    exact = exact_distance(rademacher(), h, n)
    assert half > 0
    assert abs(est - exact) <= 4 * half


def test_monte_carlo_is_deterministic_across_workers():
    h = cosine_family(1.0)
    s = rademacher().sampler()
    one = mc_distance(s, h, 16, reps=100_000, seed=3, workers=1)
    four = mc_distance(s, h, 16, reps=100_000, seed=3, workers=4)
    again = mc_distance(s, h, 16, reps=100_000, seed=3, workers=1)
    other = mc_distance(s, h, 16, reps=100_000, seed=4, workers=1)
    assert one == four == again
    assert other != one


def test_monte_carlo_constant_has_zero_width():
    est, half = mc_distance(rademacher().sampler(), constant_function(1.0), 4, reps=5000)
    assert est == 0.0 and half == 0.0


def test_monte_carlo_rejects_few_reps():
    with pytest.raises(ValueError):
        mc_distance(rademacher().sampler(), cosine_family(1.0), 4, reps=10)


def test_rate_fit_synthetic():
    ns = [2**i for i in range(3, 12)]
    fit = rate_fit((ns, [5.0 / n for n in ns]))
    assert fit.slope == pytest.approx(-1.0, abs=1e-12)
    assert fit.intercept == pytest.approx(math.log(5.0), abs=1e-12)
    assert fit.max_abs_residual <= 1e-12
    assert rate_fit((ns, [3.0 / n**2 for n in ns])).slope == pytest.approx(-2.0, abs=1e-12)


def test_rate_fit_scale_equivariance():
    ns = [8, 16, 32, 64, 128]
    ds = [0.3 / n**1.3 * (1 + 0.1 * (-1) ** i) for i, n in enumerate(ns)]
    a = rate_fit((ns, ds))
    b = rate_fit((ns, [7.0 * d for d in ds]))
    assert b.slope == pytest.approx(a.slope, abs=1e-12)
    assert b.intercept == pytest.approx(a.intercept + math.log(7.0), abs=1e-12)


def test_rate_fit_errors():
    with pytest.raises(ValueError):
        rate_fit(([1, 2, 3], [1.0, 0.5, 0.3]))
    with pytest.raises(ValueError):
        rate_fit(([1, 2, 4, 8], [1.0, 0.5, 0.0, 0.1]))


def test_series_validation():
    with pytest.raises(ValueError):
        DistanceSeries(n=[8, 8], distances=[0.1, 0.1])
    with pytest.raises(ValueError):
        DistanceSeries(n=[8], distances=[0.1], methods=["exact"], ci=[0.5])
    with pytest.raises(ValueError):
        DistanceSeries(n=[8], distances=[0.1], methods=["guess"], ci=[0.0])


def test_series_csv_roundtrip(tmp_path):
    s = distance_series(rademacher(), cosine_family(1.0), dyadic_grid(8, 128))
    s2 = DistanceSeries(n=s.n + [256], distances=s.distances + [1.25e-4],
                        methods=s.methods + ["monte-carlo"], ci=s.ci + [3e-5])
    path = tmp_path / "d.csv"
    s2.to_csv(path)
    assert path.read_text(encoding="utf-8").splitlines()[0] == "n,distance,method,ci"
    assert DistanceSeries.from_csv(path) == s2
    assert rate_fit(s).slope == pytest.approx(-1.0, abs=0.1)
