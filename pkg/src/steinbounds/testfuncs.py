"""Smooth bounded test functions h with derivative evaluators and sup-norms.

The trigonometric family has exact derivative norms and an exact normal
expectation, so bounds evaluated on it carry no norm-estimation slack.
Other families report their norms as *estimated*.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial import Polynomial
from scipy.interpolate import make_interp_spline

__all__ = [
    "CompositeFunction",
    "NORM_INFLATION",
    "TestFunction",
    "composite",
    "constant_function",
    "cosine_family",
    "gauss_hermite_expectation",
    "load_tabulated_csv",
    "sigmoid_family",
    "tabulated_function",
]

# multiplicative safety factor applied to grid-estimated sup-norms
NORM_INFLATION = 1.01

GH_NODES = 64

DerivFn = Callable[[int, np.ndarray], np.ndarray]


def gauss_hermite_expectation(fn: Callable[[np.ndarray], np.ndarray], scale: float = 1.0,
                              nodes: int = GH_NODES) -> float:
    """E fn(scale * Z) for standard normal Z by Gauss-Hermite quadrature."""
    x, w = np.polynomial.hermite_e.hermegauss(nodes)
    w = w / math.sqrt(2.0 * math.pi)
    return float(np.dot(w, fn(scale * x)))


@dataclass(frozen=True)
class TestFunction:
    """A univariate test function together with its derivatives.

    ``max_order`` of ``None`` means derivatives of every order are available.
    ``value_range`` bounds h itself and is used for centered norms
    ``||h - c||``.
    """

    __test__ = False  # not a pytest class

    name: str
    deriv: DerivFn = field(repr=False)
    norm: Callable[[int], float] = field(repr=False)
    max_order: Optional[int]
    value_range: tuple[float, float]
    phi_h: Optional[float] = None
    certified: bool = True
    scaled_expectation: Optional[Callable[[float], float]] = field(default=None, repr=False)

    def has_order(self, j: int) -> bool:
        return j >= 0 and (self.max_order is None or j <= self.max_order)

    def _require(self, j: int) -> None:
        if not self.has_order(j):
            raise ValueError(f"{self.name}: derivative of order {j} not available "
                             f"(max_order={self.max_order})")

    def evaluate(self, j: int, w):
        """h^(j)(w); scalar in, scalar out, array in, array out."""
        self._require(j)
        arr = np.asarray(w, dtype=float)
        out = self.deriv(j, arr)
        return float(out) if arr.ndim == 0 else out

    def __call__(self, w):
        return self.evaluate(0, w)

    def sup_norm(self, j: int) -> Optional[float]:
        """Upper bound on ||h^(j)||, or None if order j is unavailable."""
        if not self.has_order(j):
            return None
        return float(self.norm(j))

    def centered_norm(self, center: Optional[float] = None) -> float:
        """||h - center||, defaulting the center to Phi h."""
        if center is None:
            center = self.expectation()
        lo, hi = self.value_range
        return max(hi - center, center - lo, 0.0)

    def expectation(self, scale: float = 1.0) -> float:
        """E h(scale * Z); exact when known, Gauss-Hermite otherwise."""
        if self.scaled_expectation is not None:
            return self.scaled_expectation(scale)
        if scale == 1.0 and self.phi_h is not None:
            return self.phi_h
        return gauss_hermite_expectation(lambda x: self.deriv(0, x), scale)

    def norms(self, upto: int) -> list[Optional[float]]:
        return [self.sup_norm(j) for j in range(upto + 1)]


def cosine_family(a: float, phase: float = 0.0) -> TestFunction:
    """h(w) = cos(a w + phase); ||h^(j)|| = |a|^j and Phi h = cos(phase) exp(-a^2/2)."""
    a = float(a)
    if a == 0.0:
        raise ValueError("frequency must be non-zero; use constant_function for a = 0")
    phase = float(phase)

    def deriv(j: int, w: np.ndarray) -> np.ndarray:
        # d^j/dw^j cos(aw + phi) = a^j cos(aw + phi + j pi/2)
        return a**j * np.cos(a * w + phase + 0.5 * j * math.pi)

    def expect(scale: float) -> float:
        return math.cos(phase) * math.exp(-0.5 * (a * scale) ** 2)

    return TestFunction(
        name=f"cos({a:g}w{phase:+g})",
        deriv=deriv,
        norm=lambda j: abs(a) ** j,
        max_order=None,
        value_range=(-1.0, 1.0),
        phi_h=expect(1.0),
        scaled_expectation=expect,
    )


def constant_function(c: float = 1.0) -> TestFunction:
    c = float(c)

    def deriv(j: int, w: np.ndarray) -> np.ndarray:
        return np.full_like(w, c if j == 0 else 0.0, dtype=float)

    return TestFunction(
        name=f"const({c:g})",
        deriv=deriv,
        norm=lambda j: abs(c) if j == 0 else 0.0,
        max_order=None,
        value_range=(c, c),
        phi_h=c,
        scaled_expectation=lambda scale: c,
    )


def _sigmoid_polys(order: int) -> list[Polynomial]:
    # sigma' = sigma (1 - sigma), so sigma^(j) = P_j(sigma)
    polys = [Polynomial([0.0, 1.0])]
    logistic = Polynomial([0.0, 1.0, -1.0])
    for _ in range(order):
        polys.append(polys[-1].deriv() * logistic)
    return polys


def sigmoid_family(a: float = 1.0, max_order: int = 12) -> TestFunction:
    """Logistic h(w) = 1 / (1 + exp(-a w)) with grid-estimated derivative norms."""
    a = float(a)
    if a == 0.0:
        raise ValueError("slope must be non-zero")
    polys = _sigmoid_polys(max_order)
    s_grid = np.linspace(0.0, 1.0, 100_001)
    poly_max = [float(np.max(np.abs(P(s_grid)))) for P in polys]

    def deriv(j: int, w: np.ndarray) -> np.ndarray:
        s = 0.5 * (1.0 + np.tanh(0.5 * a * w))
        return a**j * polys[j](s)

    def norm(j: int) -> float:
        if j == 0:
            return 1.0
        return NORM_INFLATION * abs(a) ** j * poly_max[j]

    return TestFunction(
        name=f"sigmoid({a:g}w)",
        deriv=deriv,
        norm=norm,
        max_order=max_order,
        value_range=(0.0, 1.0),
        # sigma(x) + sigma(-x) = 1 and Z is symmetric
        phi_h=0.5,
        certified=False,
        scaled_expectation=lambda scale: 0.5,
    )


def tabulated_function(w: Sequence[float], h: Sequence[float], order: int) -> TestFunction:
    """Spline interpolant of sampled values, with derivatives up to ``order``.

    Outside the sampled range the function is held at its end values (and
    its derivatives are zero). Norms are grid maxima times
    :data:`NORM_INFLATION` and flagged as estimated.
    """
    w = np.asarray(w, dtype=float)
    h = np.asarray(h, dtype=float)
    if w.ndim != 1 or w.shape != h.shape:
        raise ValueError("w and h must be 1-D arrays of equal length")
    order = int(order)
    if order < 0:
        raise ValueError("order must be non-negative")
    if w.size < 4 * (order + 1):
        raise ValueError(f"need at least {4 * (order + 1)} samples for order {order}, got {w.size}")
    if not np.all(np.diff(w) > 0):
        raise ValueError("sample grid must be strictly increasing")

    spline = make_interp_spline(w, h, k=max(3, order + 1))
    derivs = [spline] + [spline.derivative(j) for j in range(1, order + 1)]
    lo_w, hi_w = w[0], w[-1]
    fine = np.linspace(lo_w, hi_w, max(4 * w.size, 10_001))
    maxima = [float(np.max(np.abs(d(fine)))) for d in derivs]
    values = derivs[0](fine)
    vmin, vmax = float(values.min()), float(values.max())

    def deriv(j: int, x: np.ndarray) -> np.ndarray:
        inside = (x >= lo_w) & (x <= hi_w)
        out = derivs[j](np.clip(x, lo_w, hi_w))
        if j > 0:
            out = np.where(inside, out, 0.0)
        return out

    slack = (NORM_INFLATION - 1.0) * max(abs(vmin), abs(vmax))
    fn = TestFunction(
        name="tabulated",
        deriv=deriv,
        norm=lambda j: NORM_INFLATION * maxima[j],
        max_order=order,
        value_range=(vmin - slack, vmax + slack),
        certified=False,
    )
    phi = gauss_hermite_expectation(lambda x: deriv(0, x))
    return TestFunction(
        name=fn.name, deriv=deriv, norm=fn.norm, max_order=order,
        value_range=fn.value_range, phi_h=phi, certified=False,
    )


def load_tabulated_csv(path, order: int) -> TestFunction:
    """Two-column CSV (w, h(w)); a non-numeric first row is taken as a header."""
    ws, hs = [], []
    with open(Path(path), newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh)):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                a, b = float(row[0]), float(row[1])
            except (ValueError, IndexError):
                if lineno == 0:
                    continue
                raise ValueError(f"{path}:{lineno + 1}: expected two numeric columns, got {row}")
            ws.append(a)
            hs.append(b)
    return tabulated_function(ws, hs, order)


@dataclass(frozen=True)
class CompositeFunction:
    """Multivariate h(w) = g(<u, w>) built from a univariate g.

    Partial derivatives factor as
    d^k h / dw_{i_1}...dw_{i_k} = u_{i_1}...u_{i_k} g^(k)(<u, w>).
    """

    g: TestFunction
    u: tuple[float, ...]

    @property
    def d(self) -> int:
        return len(self.u)

    def evaluate(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        return self.g.evaluate(0, w @ np.asarray(self.u))

    def partial(self, index: Sequence[int], w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        coef = math.prod(self.u[i] for i in index)
        return coef * self.g.evaluate(len(index), w @ np.asarray(self.u))

    def partial_norm(self, index: Sequence[int]) -> Optional[float]:
        gn = self.g.sup_norm(len(index))
        if gn is None:
            return None
        return math.prod(abs(self.u[i]) for i in index) * gn

    def pure_partial_norm(self, j: int, k: int) -> Optional[float]:
        """||d^k h / dw_j^k||."""
        return self.partial_norm((j,) * k)

    def op_norm(self, k: int) -> Optional[float]:
        """M_k(h): sup of the operator norm of D^k h, = |u|^k ||g^(k)||."""
        gn = self.g.sup_norm(k)
        if gn is None:
            return None
        return float(np.linalg.norm(self.u)) ** k * gn

    def expectation(self, sigma=None) -> float:
        """E h(Sigma^{1/2} Z); <u, Sigma^{1/2} Z> ~ N(0, u^T Sigma u)."""
        u = np.asarray(self.u)
        var = float(u @ u) if sigma is None else float(u @ np.asarray(sigma, dtype=float) @ u)
        return self.g.expectation(math.sqrt(var))

    def centered_norm(self, sigma=None) -> float:
        return self.g.centered_norm(self.expectation(sigma))


def composite(g: TestFunction, u: Sequence[float]) -> CompositeFunction:
    u = tuple(float(x) for x in u)
    if not u:
        raise ValueError("direction vector must be non-empty")
    return CompositeFunction(g=g, u=u)
