"""Explicit normal-approximation bounds from Stein's method, with numerical checks."""

from .bounds import (BoundReport, CovarianceModel, corollary32_bound, corollary33_bound,
                     covariance_model, mvn_constant_catalog, n_k, theorem31_bound,
                     theorem34_bound, theorem35_bound)
from .clt_engine import DistanceSeries, RateFit, exact_distance, mc_distance, rate_fit
from .distributions import (DiscreteDistribution, EpsilonTable, convolve_iid,
                            hermite_distribution, moments, rademacher)
from .specfun import (gamma, gamma_ratio_constant, normal_abs_moment, normal_moment,
                      stein_integral_constant)
from .stein import SteinSolution, derivative_bounds, stein_derivative, verify_bounds
from .testfuncs import TestFunction, composite, cosine_family, sigmoid_family, tabulated_function

__version__ = "0.1.0"
