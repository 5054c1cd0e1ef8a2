"""Standard-normal Stein solution via the Ornstein-Uhlenbeck representation.

With t = exp(-s) and t = sin(theta) the OU time integrals lose their
endpoint singularity and become

    rep "A":  f^(k)(w) = -int_0^{pi/2} sin^{k-1}(th) E[Z h^(k-1)(w sin th + Z cos th)] dth
    rep "B":  f^(k)(w) = -int_0^{pi/2} sin^{k-1}(th) cos(th) E[h^(k)(w sin th + Z cos th)] dth

where f solves f'' - w f' = h - Phi h. Gauss-Legendre handles theta and
Gauss-Hermite handles the normal expectation.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .specfun import gamma_ratio_constant
from .testfuncs import TestFunction

__all__ = [
    "DerivativeBoundCatalog",
    "InsufficientSmoothness",
    "SteinSolution",
    "VerificationRecord",
    "VerificationReport",
    "W_ENVELOPE",
    "derivative_bounds",
    "stein_derivative",
    "stein_residual",
    "verify_bounds",
]

W_ENVELOPE = 20.0
DEFAULT_NODES = 64
PASS_RTOL = 1e-6
PASS_ATOL = 1e-9

_CHUNK = 256


class InsufficientSmoothness(ValueError):
    """The test function lacks the derivatives a formula needs."""


@dataclass(frozen=True)
class SteinSolution:
    h: TestFunction
    theta_nodes: int = DEFAULT_NODES
    z_nodes: int = DEFAULT_NODES

    @cached_property
    def _theta(self) -> tuple[np.ndarray, np.ndarray]:
        x, w = np.polynomial.legendre.leggauss(self.theta_nodes)
        return 0.25 * math.pi * (x + 1.0), 0.25 * math.pi * w

    @cached_property
    def _z(self) -> tuple[np.ndarray, np.ndarray]:
        x, w = np.polynomial.hermite_e.hermegauss(self.z_nodes)
        return x, w / math.sqrt(2.0 * math.pi)

    @cached_property
    def phi_h(self) -> float:
        return self.h.expectation()

    @property
    def max_derivative(self) -> Optional[int]:
        m = self.h.max_order
        return None if m is None else m + 1

    def derivative(self, k: int, w, rep: Optional[str] = None):
        """f^(k)(w) for k >= 1.

        ``rep`` defaults to "B" when h has k derivatives, else "A".
        """
        k = int(k)
        if k < 1:
            raise ValueError(f"derivative order must be >= 1, got {k}")
        if rep is None:
            rep = "B" if self.h.has_order(k) else "A"
        rep = rep.upper()
        if rep == "A":
            need = k - 1
        elif rep == "B":
            need = k
        else:
            raise ValueError(f"unknown representation {rep!r}; expected 'A' or 'B'")
        if not self.h.has_order(need):
            raise InsufficientSmoothness(
                f"rep {rep} of f^({k}) needs h^({need}); {self.h.name} has max_order {self.h.max_order}")

        arr = np.asarray(w, dtype=float)
        flat = arr.reshape(-1)
        if flat.size and np.max(np.abs(flat)) > W_ENVELOPE:
            raise ValueError(f"|w| must be <= {W_ENVELOPE} (accuracy envelope)")

        theta, wt = self._theta
        z, wz = self._z
        sin, cos = np.sin(theta), np.cos(theta)
        if rep == "A":
            theta_weight = wt * sin ** (k - 1)
            z_weight = wz * z
        else:
            theta_weight = wt * sin ** (k - 1) * cos
            z_weight = wz

        out = np.empty(flat.size)
        for start in range(0, flat.size, _CHUNK):
            ws = flat[start:start + _CHUNK]
            args = ws[:, None, None] * sin[None, :, None] + z[None, None, :] * cos[None, :, None]
            inner = self.h.evaluate(need, args) @ z_weight
            out[start:start + _CHUNK] = -(inner @ theta_weight)
        return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)


def stein_derivative(h: TestFunction, k: int, w, rep: str = "B",
                     nodes: int = DEFAULT_NODES):
    return SteinSolution(h, nodes, nodes).derivative(k, w, rep)


def stein_residual(solution: SteinSolution, w) -> np.ndarray:
    """f''(w) - w f'(w) - (h(w) - Phi h), which vanishes for the exact solution."""
    w = np.asarray(w, dtype=float)
    f1 = solution.derivative(1, w)
    f2 = solution.derivative(2, w)
    return f2 - w * f1 - (solution.h.evaluate(0, w) - solution.phi_h)


@dataclass(frozen=True)
class DerivativeBoundCatalog:
    """Alternative upper bounds on ||f^(k)||; ``None`` marks an inapplicable entry."""

    k: int
    bound_classic: Optional[float]
    bound_cheque: Optional[float]
    bound_charm: Optional[float]
    bound_asdert: Optional[float]
    min_bound: float
    branch: str

    def entries(self) -> dict[str, float]:
        out = {
            "classic": self.bound_classic,
            "h^(k)/k": self.bound_cheque,
            "gamma-ratio*h^(k-1)": self.bound_charm,
            "3*h^(k-2)": self.bound_asdert,
        }
        return {key: v for key, v in out.items() if v is not None}


def derivative_bounds(h: TestFunction, k: int) -> DerivativeBoundCatalog:
    """Collect every known bound on ||f^(k)|| that h supplies the norms for.

    classic: sqrt(pi/2)||h - Phi h|| (k=1), 2||h - Phi h|| (k=2), 2||h'|| (k=3);
    ||h^(k)||/k; Gamma-ratio(k) ||h^(k-1)|| (k >= 2); 3||h^(k-2)|| (k >= 3).
    """
    k = int(k)
    if k < 1:
        raise ValueError(f"order must be >= 1, got {k}")

    classic = None
    if k in (1, 2):
        try:
            centered = h.centered_norm()
        except (ValueError, TypeError):
            centered = None
        if centered is not None:
            classic = (math.sqrt(0.5 * math.pi) if k == 1 else 2.0) * centered
    elif k == 3 and h.sup_norm(1) is not None:
        classic = 2.0 * h.sup_norm(1)

    cheque = None
    if h.sup_norm(k) is not None:
        cheque = h.sup_norm(k) / k
    charm = None
    if k >= 2 and h.sup_norm(k - 1) is not None:
        charm = gamma_ratio_constant(k).value * h.sup_norm(k - 1)
    asdert = None
    if k >= 3 and h.sup_norm(k - 2) is not None:
        asdert = 3.0 * h.sup_norm(k - 2)

    cat = {"classic": classic, "h^(k)/k": cheque,
           "gamma-ratio*h^(k-1)": charm, "3*h^(k-2)": asdert}
    live = {key: v for key, v in cat.items() if v is not None}
    if not live:
        raise InsufficientSmoothness(f"no bound on ||f^({k})|| is available for {h.name}")
    branch = min(live, key=live.__getitem__)
    return DerivativeBoundCatalog(k, classic, cheque, charm, asdert, live[branch], branch)


@dataclass(frozen=True)
class VerificationRecord:
    k: int
    sup_f: float
    sup_wf: float
    bound: float
    branch: str
    wf_bound: float
    pass_f: bool
    pass_wf: bool

    @property
    def passed(self) -> bool:
        return self.pass_f and self.pass_wf

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = self.passed
        return d


@dataclass(frozen=True)
class VerificationReport:
    h: str
    grid: tuple[float, float, float]
    records: list[VerificationRecord] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records)

    def to_dict(self) -> dict:
        lo, hi, step = self.grid
        return {
            "h": self.h,
            "grid": {"lo": lo, "hi": hi, "step": step},
            "pass": self.passed,
            "records": [r.to_dict() for r in self.records],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "VerificationReport":
        g = data["grid"]
        recs = []
        for r in data["records"]:
            r = {key: v for key, v in r.items() if key != "pass"}
            recs.append(VerificationRecord(**r))
        return cls(h=data["h"], grid=(g["lo"], g["hi"], g["step"]), records=recs)

    @classmethod
    def from_json(cls, text: str) -> "VerificationReport":
        return cls.from_dict(json.loads(text))


def _within(value: float, bound: float) -> bool:
    return value <= bound * (1.0 + PASS_RTOL) + PASS_ATOL


def _refined_sup(fn, grid: np.ndarray, values: np.ndarray) -> float:
    """Grid maximum of |fn|, polished by a bounded search around the argmax."""
    absval = np.abs(values)
    i = int(np.argmax(absval))
    best = float(absval[i])
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, grid.size - 1)]
    if hi > lo:
        res = minimize_scalar(lambda x: -abs(float(fn(x))), bounds=(lo, hi),
                              method="bounded", options={"xatol": 1e-7})
        best = max(best, -float(res.fun))
    return best


def verify_bounds(h: TestFunction, k_max: int, lo: float = -8.0, hi: float = 8.0,
                  step: float = 0.01, solution: Optional[SteinSolution] = None) -> VerificationReport:
    """Compare grid sups of |f^(k)| and |w f^(k)(w)| against their bounds, k = 1..k_max.

    |f^(k)| is checked against the smallest catalog bound; |w f^(k)| against
    ||h - Phi h|| for k = 1 and ||h^(k-1)|| for k >= 2.
    """
    if solution is None:
        solution = SteinSolution(h)
    npts = int(round((hi - lo) / step)) + 1
    grid = np.linspace(lo, hi, npts)
    records = []
    for k in range(1, int(k_max) + 1):
        cat = derivative_bounds(h, k)
        wf_bound = h.centered_norm() if k == 1 else h.sup_norm(k - 1)
        if wf_bound is None:
            raise InsufficientSmoothness(f"||h^({k - 1})|| unavailable for {h.name}")
        vals = solution.derivative(k, grid)
        sup_f = _refined_sup(lambda x: solution.derivative(k, x), grid, vals)
        sup_wf = _refined_sup(lambda x: x * solution.derivative(k, x), grid, grid * vals)
        records.append(VerificationRecord(
            k=k, sup_f=sup_f, sup_wf=sup_wf, bound=cat.min_bound, branch=cat.branch,
            wf_bound=float(wf_bound),
            pass_f=_within(sup_f, cat.min_bound), pass_wf=_within(sup_wf, wf_bound),
        ))
    return VerificationReport(h=h.name, grid=(float(lo), float(hi), float(step)), records=records)
