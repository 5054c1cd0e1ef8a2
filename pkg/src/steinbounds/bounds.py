"""Explicit matching-moments bounds for standardised sums, and the
covariance machinery behind the multivariate Stein-solution constants.

Summand and coordinate labels inside reports (``i``, ``j``) are 1-based;
Python-level coordinate indices (``index`` arguments) are 0-based.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .distributions import EpsilonTable
from .specfun import gamma_ratio_constant
from .testfuncs import CompositeFunction, TestFunction

__all__ = [
    "BoundReport",
    "CovarianceModel",
    "InnerTerm",
    "MissingData",
    "MomentMismatch",
    "MvnBoundCatalog",
    "NotPositiveDefinite",
    "Theorem34Result",
    "corollary32_bound",
    "corollary33_bound",
    "covariance_model",
    "jacobi_eigh",
    "m_jk",
    "mvn_constant_catalog",
    "n_k",
    "synthetic_theorem34_deficits",
    "theorem31_bound",
    "theorem34_bound",
    "theorem35_bound",
]

BRANCH_THREE = "3*h^(k-1)"
BRANCH_GAMMA = "gamma-ratio*h^(k)"
BRANCH_NEXT = "h^(k+1)/(k+1)"

NormSource = Union[TestFunction, Sequence[Optional[float]], Callable[[int], Optional[float]]]


class MissingData(ValueError):
    """A bound needs a moment or a derivative norm that was not supplied."""


class MomentMismatch(ValueError):
    """Moments assumed to match the normal ones do not."""


class NotPositiveDefinite(ValueError):
    pass


def _norm_getter(source: NormSource) -> Callable[[int], Optional[float]]:
    if isinstance(source, TestFunction):
        return source.sup_norm
    if callable(source):
        return source

    def get(j: int) -> Optional[float]:
        if 0 <= j < len(source):
            v = source[j]
            return None if v is None else float(v)
        return None

    return get


def n_k(h_norms: NormSource, k: int) -> tuple[float, str]:
    """N_k = min{3||h^(k-1)||, Gamma((k+1)/2)||h^(k)|| / (sqrt2 Gamma(k/2+1)), ||h^(k+1)||/(k+1)}.

    Branches whose norm is missing drop out. Returns (value, branch label).
    """
    k = int(k)
    if k < 1:
        raise ValueError("k must be >= 1")
    norm = _norm_getter(h_norms)
    cands = {}
    if norm(k - 1) is not None:
        cands[BRANCH_THREE] = 3.0 * norm(k - 1)
    if norm(k) is not None:
        cands[BRANCH_GAMMA] = gamma_ratio_constant(k + 1).value * norm(k)
    if norm(k + 1) is not None:
        cands[BRANCH_NEXT] = norm(k + 1) / (k + 1)
    if not cands:
        raise MissingData(f"N_{k}: none of ||h^({k - 1})||, ||h^({k})||, ||h^({k + 1})|| supplied")
    # on ties, report the branch needing the most derivatives of h
    best = min(cands.values())
    branch = [b for b in (BRANCH_NEXT, BRANCH_GAMMA, BRANCH_THREE) if b in cands and cands[b] == best][0]
    return best, branch


def m_jk(h: CompositeFunction, j: int, k: int) -> tuple[float, str]:
    """Two-branch minimum M_{j,k} over pure partials in coordinate j (0-based)."""
    cands = {}
    a = h.pure_partial_norm(j, k)
    if a is not None:
        cands[BRANCH_GAMMA] = gamma_ratio_constant(k + 1).value * a
    b = h.pure_partial_norm(j, k + 1)
    if b is not None:
        cands[BRANCH_NEXT] = b / (k + 1)
    if not cands:
        raise MissingData(f"M_{{{j + 1},{k}}}: pure partials of order {k}, {k + 1} unavailable")
    best = min(cands.values())
    branch = [x for x in (BRANCH_NEXT, BRANCH_GAMMA) if x in cands and cands[x] == best][0]
    return best, branch


@dataclass(frozen=True)
class InnerTerm:
    i: int
    k: int
    value: float
    j: Optional[int] = None

    def to_dict(self) -> dict:
        d = {"i": self.i}
        if self.j is not None:
            d["j"] = self.j
        d["k"] = self.k
        d["value"] = self.value
        return d


@dataclass(frozen=True)
class BoundReport:
    """Itemised bound: total = first_moment_term + sum(inner_terms) + remainder_term."""

    total: float
    first_moment_term: float
    inner_terms: list[InnerTerm]
    remainder_term: float
    nk_branches: dict[str, str]
    nk_values: dict[str, float] = field(default_factory=dict)
    kind: str = "univariate"
    n: int = 0
    p: int = 0
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "first_moment_term": self.first_moment_term,
            "inner_terms": [t.to_dict() for t in self.inner_terms],
            "remainder_term": self.remainder_term,
            "nk_branches": dict(self.nk_branches),
            "nk_values": dict(self.nk_values),
            "kind": self.kind,
            "n": self.n,
            "p": self.p,
            "flags": list(self.flags),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "BoundReport":
        return cls(
            total=d["total"],
            first_moment_term=d["first_moment_term"],
            inner_terms=[InnerTerm(i=t["i"], k=t["k"], value=t["value"], j=t.get("j"))
                         for t in d["inner_terms"]],
            remainder_term=d["remainder_term"],
            nk_branches=dict(d["nk_branches"]),
            nk_values=dict(d.get("nk_values", {})),
            kind=d.get("kind", "univariate"),
            n=d.get("n", 0),
            p=d.get("p", 0),
            flags=list(d.get("flags", [])),
        )

    @classmethod
    def from_json(cls, text: str) -> "BoundReport":
        return cls.from_dict(json.loads(text))


def _per_summand(tables, n: int) -> list[EpsilonTable]:
    if isinstance(tables, EpsilonTable):
        return [tables] * n
    tables = list(tables)
    if len(tables) != n:
        raise ValueError(f"expected {n} moment tables, got {len(tables)}")
    return tables


def _check_table(t: EpsilonTable, p: int) -> None:
    if t.p < p or len(t.abs_moments) < p + 2:
        raise MissingData(f"moment table covers p={t.p}; need eps up to {p} and E|X|^{p + 1}")


def _remainder_factor(t: EpsilonTable, p: int) -> float:
    return t.abs_moments[p - 1] / math.factorial(p - 1) + t.abs_moments[p + 1] / math.factorial(p)


def theorem31_bound(eps, h: NormSource, n: int, p: int) -> BoundReport:
    """Bound on |E h(W_n) - Phi h| for independent summands.

    ``eps`` is one :class:`EpsilonTable` per summand, or a single table for
    i.i.d. summands. Inner terms use |k eps_{i,k-1} - eps_{i,k+1}|.
    """
    n, p = int(n), int(p)
    if n < 1 or p < 1:
        raise ValueError("n and p must be >= 1")
    tables = _per_summand(eps, n)
    for t in tables:
        _check_table(t, p)
    norm = _norm_getter(h)
    h1 = norm(1)
    if h1 is None:
        raise MissingData("||h'|| is required")

    nks = {k: n_k(norm, k) for k in range(1, p + 1)}
    sqrt_n = math.sqrt(n)
    first_parts = [h1 / sqrt_n * abs(t.eps[1]) for t in tables]
    inner = []
    for i, t in enumerate(tables, start=1):
        for k in range(1, p):
            coef = nks[k][0] / (math.factorial(k) * n ** ((k + 1) / 2))
            inner.append(InnerTerm(i=i, k=k, value=coef * abs(k * t.eps[k - 1] - t.eps[k + 1])))
    scale = nks[p][0] / n ** ((p + 1) / 2)
    rem_parts = [scale * _remainder_factor(t, p) for t in tables]

    first = math.fsum(first_parts)
    remainder = math.fsum(rem_parts)
    total = math.fsum(first_parts + [t.value for t in inner] + rem_parts)
    flags = []
    if nks[1][1] == BRANCH_THREE:
        flags.append("N_1 attained by 3||h||, a branch not covered by the k >= 3 derivative bound")
    return BoundReport(
        total=total, first_moment_term=first, inner_terms=inner, remainder_term=remainder,
        nk_branches={str(k): v[1] for k, v in nks.items()},
        nk_values={str(k): v[0] for k, v in nks.items()},
        kind="univariate", n=n, p=p, flags=flags,
    )


def corollary32_bound(eps, h: NormSource, n: int, p: int, tol: float = 1e-10) -> float:
    """N_p / n^{(p+1)/2} sum_i (E|X_i|^{p-1}/(p-1)! + E|X_i|^{p+1}/p!), for moments matching to order p."""
    n, p = int(n), int(p)
    tables = _per_summand(eps, n)
    for t in tables:
        _check_table(t, p)
        if not t.matches_normal(p, tol):
            bad = max(range(1, p + 1), key=lambda k: abs(t.eps[k]))
            raise MomentMismatch(f"moment {bad} differs from the normal one by {t.eps[bad]:.3e}")
    value, _ = n_k(_norm_getter(h), p)
    scale = value / n ** ((p + 1) / 2)
    return math.fsum(scale * _remainder_factor(t, p) for t in tables)


def corollary33_bound(eps: EpsilonTable, h: NormSource, p: int, tol: float = 1e-10) -> float:
    """Single-variable case (n = 1) of :func:`corollary32_bound`."""
    return corollary32_bound(eps, h, 1, p, tol)


@dataclass(frozen=True)
class Theorem34Result:
    bound: float
    tail: float
    K: int
    condition_checks: list[dict]

    @property
    def condition_holds(self) -> bool:
        return all(c["ok"] for c in self.condition_checks)

    def to_dict(self) -> dict:
        return {"bound": self.bound, "tail": self.tail, "total": self.bound + self.tail,
                "K": self.K, "condition_holds": self.condition_holds,
                "condition_checks": self.condition_checks}


def _log_factorial(k: int) -> float:
    return math.lgamma(k + 1)


def theorem34_bound(eps_seq, h_norms: NormSource, C: float, alpha: float, delta: float,
                    n: float, K: int = 30) -> Theorem34Result:
    """Partial sum of the moment-sequence series up to k = K plus a certified tail.

    ``eps_seq(k)`` (or ``eps_seq[k]``) gives eps_{n,k}; eps_{n,0} is taken as 0.
    The tail (2C/n^alpha) K^{-delta}/delta is valid when the caller's
    constants satisfy the growth condition for all k; that condition is
    checked here only for k <= K and reported in ``condition_checks``.
    """
    K = int(K)
    if K < 2:
        raise ValueError("truncation K must be >= 2")
    if not delta > 0:
        raise ValueError("delta must be positive")
    get_eps = eps_seq if callable(eps_seq) else (lambda k: eps_seq[k])
    norm = _norm_getter(h_norms)

    def eps(k: int) -> float:
        return 0.0 if k == 0 else float(get_eps(k))

    def need(j: int) -> float:
        v = norm(j)
        if v is None:
            raise MissingData(f"||h^({j})|| is required")
        return v

    terms = [need(1) * abs(eps(1))]
    for k in range(1, K + 1):
        combo = abs(k * eps(k - 1) - eps(k + 1))
        if combo == 0.0:
            terms.append(0.0)
            continue
        hn = need(k + 1)
        if hn == 0.0:
            terms.append(0.0)
            continue
        terms.append(math.exp(math.log(hn) + math.log(combo) - _log_factorial(k + 1)))
    scale = C / n**alpha
    tail = 2.0 * scale * K ** (-delta) / delta

    checks = []
    for k in range(1, K + 1):
        rhs = scale * k ** (-delta) * math.factorial(k - 1)
        e = abs(eps(k))
        lhs1 = need(k) * e
        lhs2 = need(k + 2) * e
        ok = lhs1 <= rhs * (1 + 1e-12) and lhs2 <= rhs * (1 + 1e-12)
        checks.append({"k": k, "lhs_h_k": lhs1, "lhs_h_k2": lhs2, "rhs": rhs, "ok": ok})
    return Theorem34Result(bound=math.fsum(terms), tail=tail, K=K, condition_checks=checks)


def synthetic_theorem34_deficits(h_norms: NormSource, n: float, delta: float = 2.0,
                                 alpha: float = 1.0, C: float = 1.0) -> Callable[[int], float]:
    """eps_{n,k} = C n^{-alpha} k^{-delta} (k-1)! / max(||h^(k)||, ||h^(k+2)||).

    The extremal sequence that meets the growth condition with equality.
    """
    norm = _norm_getter(h_norms)

    def eps(k: int) -> float:
        if k == 0:
            return 0.0
        m = max(norm(k), norm(k + 2))
        if m == 0:
            return 0.0
        return math.exp(math.log(C) - alpha * math.log(n) - delta * math.log(k)
                        + math.lgamma(k) - math.log(m))

    return eps


def jacobi_eigh(a, tol: float = 1e-12, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns (eigenvalues, eigenvectors) with ``a = V diag(w) V^T``. An entry
    is zeroed without rotating once it is below rounding level relative to
    its two diagonal entries; sweeps run until the off-diagonal part is zero,
    which is stricter than the absolute ``tol`` that is checked on exit.
    """
    a = np.array(a, dtype=float)
    d = a.shape[0]
    v = np.eye(d)
    tiny = np.finfo(float).eps * 0.5
    for _ in range(max_sweeps):
        if not np.any(a[~np.eye(d, dtype=bool)]):
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                if abs(apq) <= tiny * math.sqrt(abs(a[p, p] * a[q, q])):
                    a[p, q] = a[q, p] = 0.0
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(d)
                rot[p, p] = rot[q, q] = c
                rot[p, q], rot[q, p] = s, -s
                a = rot.T @ a @ rot
                a[p, q] = a[q, p] = 0.0
                v = v @ rot
    else:
        raise ArithmeticError("Jacobi iteration did not converge")
    off = math.sqrt(max(float(np.sum(a * a) - np.sum(np.diag(a) ** 2)), 0.0))
    if off > tol:
        raise ArithmeticError(f"Jacobi off-diagonal norm {off:.3e} exceeds {tol:.0e}")
    return np.diag(a).copy(), v


@dataclass(frozen=True, eq=False)
class CovarianceModel:
    sigma: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    inv_sqrt: np.ndarray
    row_norms: np.ndarray
    op_norm: float

    @property
    def d(self) -> int:
        return self.sigma.shape[0]

    @property
    def sqrt(self) -> np.ndarray:
        v, lam = self.eigenvectors, self.eigenvalues
        return (v * np.sqrt(lam)) @ v.T


def covariance_model(sigma) -> CovarianceModel:
    """Sigma^{-1/2}, its row norms sqrt(sum_j s~_ij^2) and its operator norm."""
    sigma = np.array(sigma, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1] or sigma.shape[0] == 0:
        raise ValueError("sigma must be a non-empty square matrix")
    if not np.all(np.isfinite(sigma)):
        raise ValueError("sigma must be finite")
    scale = max(1.0, float(np.max(np.abs(sigma))))
    if np.max(np.abs(sigma - sigma.T)) > 1e-12 * scale:
        raise NotPositiveDefinite("sigma is not symmetric")
    sym = 0.5 * (sigma + sigma.T)
    lam, vec = jacobi_eigh(sym)
    if np.any(lam <= 0):
        raise NotPositiveDefinite(f"sigma has non-positive eigenvalue {lam.min():.3e}")
    order = np.argsort(lam)
    lam, vec = lam[order], vec[:, order]
    inv_sqrt = (vec / np.sqrt(lam)) @ vec.T
    inv_sqrt = 0.5 * (inv_sqrt + inv_sqrt.T)
    row_norms = np.sqrt(np.sum(inv_sqrt**2, axis=1))
    op_norm = 1.0 / math.sqrt(float(lam[0]))
    return CovarianceModel(sigma=sym, eigenvalues=lam, eigenvectors=vec, inv_sqrt=inv_sqrt,
                           row_norms=row_norms, op_norm=op_norm)


@dataclass(frozen=True)
class MvnBoundCatalog:
    """Bounds on one partial derivative of the multivariate solution and on M_k(f)."""

    k: int
    index: tuple[int, ...]
    per_coordinate: dict[str, float]
    operator: dict[str, float]


def mvn_constant_catalog(model: CovarianceModel, k: int, index: Optional[Sequence[int]] = None,
                         h: Optional[CompositeFunction] = None,
                         partial_norm: Optional[Callable[[tuple], Optional[float]]] = None,
                         op_norm: Optional[Callable[[int], Optional[float]]] = None,
                         centered_norm: Optional[float] = None) -> MvnBoundCatalog:
    """Evaluate the partial-derivative and operator-norm bound families at order k.

    Norm data comes from ``h`` (a composite function) or from the explicit
    callables; ``centered_norm`` is ||h - E h(Sigma^{1/2} Z)||. Families
    whose norm is missing are omitted.
    """
    k = int(k)
    if k < 1:
        raise ValueError("k must be >= 1")
    index = tuple(int(i) for i in (index if index is not None else (0,) * k))
    if len(index) != k or any(not 0 <= i < model.d for i in index):
        raise ValueError(f"index must hold {k} coordinates in [0, {model.d})")
    if h is not None:
        partial_norm = partial_norm or h.partial_norm
        op_norm = op_norm or h.op_norm
        if centered_norm is None:
            centered_norm = h.centered_norm(model.sigma)

    per, op = {}, {}
    if partial_norm is not None and partial_norm(index) is not None:
        per["cheque"] = partial_norm(index) / k
    if op_norm is not None and op_norm(k) is not None:
        op["meckes"] = op_norm(k) / k
    if k == 1:
        if centered_norm is not None:
            root = math.sqrt(0.5 * math.pi)
            per["usthem"] = root * float(model.row_norms[index[0]]) * centered_norm
            op["m1f"] = root * model.op_norm * centered_norm
    else:
        g = gamma_ratio_constant(k).value
        if partial_norm is not None:
            vals = []
            for l in range(k):
                rest = index[:l] + index[l + 1:]
                pn = partial_norm(rest)
                if pn is not None:
                    vals.append(float(model.row_norms[index[l]]) * pn)
            if vals:
                per["charm"] = g * min(vals)
        if op_norm is not None and op_norm(k - 1) is not None:
            op["mkf"] = g * model.op_norm * op_norm(k - 1)
    if not per and not op:
        raise MissingData(f"no norm data for order {k}")
    return MvnBoundCatalog(k=k, index=index, per_coordinate=per, operator=op)


def theorem35_bound(eps, h: CompositeFunction, n: int, p: int) -> BoundReport:
    """Bound on |E h(W_n) - E h(Z)| for vectors with independent coordinates.

    ``eps`` is either d tables (coordinate j shared by all summands) or an
    n-by-d nested sequence of tables.
    """
    n, p = int(n), int(p)
    if n < 1 or p < 1:
        raise ValueError("n and p must be >= 1")
    d = h.d
    eps = list(eps)
    if eps and isinstance(eps[0], EpsilonTable):
        if len(eps) != d:
            raise ValueError(f"expected {d} coordinate tables, got {len(eps)}")
        grid = [eps] * n
    else:
        if len(eps) != n or any(len(row) != d for row in eps):
            raise ValueError(f"expected an {n} x {d} table grid")
        grid = eps
    for row in grid:
        for t in row:
            _check_table(t, p)

    ms = {(j, k): m_jk(h, j, k) for j in range(d) for k in range(1, p + 1)}
    first_norms = []
    for j in range(d):
        v = h.pure_partial_norm(j, 1)
        if v is None:
            raise MissingData(f"||dh/dw_{j + 1}|| is required")
        first_norms.append(v)

    sqrt_n = math.sqrt(n)
    first_parts, inner, rem_parts = [], [], []
    for i, row in enumerate(grid, start=1):
        for j, t in enumerate(row):
            first_parts.append(abs(t.eps[1]) / sqrt_n * first_norms[j])
            for k in range(1, p):
                coef = ms[j, k][0] / (math.factorial(k) * n ** ((k + 1) / 2))
                inner.append(InnerTerm(i=i, j=j + 1, k=k,
                                       value=coef * abs(k * t.eps[k - 1] - t.eps[k + 1])))
            rem_parts.append(ms[j, p][0] / n ** ((p + 1) / 2) * _remainder_factor(t, p))

    return BoundReport(
        total=math.fsum(first_parts + [t.value for t in inner] + rem_parts),
        first_moment_term=math.fsum(first_parts),
        inner_terms=inner,
        remainder_term=math.fsum(rem_parts),
        nk_branches={f"{j + 1},{k}": v[1] for (j, k), v in ms.items()},
        nk_values={f"{j + 1},{k}": v[0] for (j, k), v in ms.items()},
        kind="multivariate", n=n, p=p,
    )
