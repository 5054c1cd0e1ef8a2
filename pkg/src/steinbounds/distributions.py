"""Finite-atom distributions, normal-moment deficits and exact i.i.d. sum laws."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .specfun import normal_moment

__all__ = [
    "DEFAULT_SUPPORT_CAP",
    "DiscreteDistribution",
    "EpsilonTable",
    "SupportCapExceeded",
    "convolve_iid",
    "hermite_distribution",
    "hermite_nodes",
    "moments",
    "point_mass",
    "rademacher",
]

DEFAULT_SUPPORT_CAP = 5_000_000
MERGE_RTOL = 1e-12
PROB_ATOL = 1e-12


class SupportCapExceeded(RuntimeError):
    """The exact sum law would exceed the support cap; fall back to Monte Carlo."""


def _merge(atoms: np.ndarray, probs: np.ndarray, rtol: float = MERGE_RTOL):
    """Sort atoms and pool those closer than rtol * max|atom|."""
    order = np.argsort(atoms, kind="stable")
    atoms, probs = atoms[order], probs[order]
    if atoms.size <= 1:
        return atoms, probs
    scale = max(float(np.max(np.abs(atoms))), 1.0)
    starts = np.concatenate(([True], np.diff(atoms) > rtol * scale))
    idx = np.flatnonzero(starts)
    return atoms[idx], np.add.reduceat(probs, idx)


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    """Probability law on finitely many atoms (sorted, merged, probs summing to 1)."""

    atoms: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float).reshape(-1)
        probs = np.asarray(self.probs, dtype=float).reshape(-1)
        if atoms.shape != probs.shape or atoms.size == 0:
            raise ValueError("atoms and probs must be non-empty and of equal length")
        if not (np.all(np.isfinite(atoms)) and np.all(np.isfinite(probs))):
            raise ValueError("atoms and probs must be finite")
        if np.any(probs < 0):
            raise ValueError("probabilities must be non-negative")
        if abs(math.fsum(probs) - 1.0) > PROB_ATOL:
            raise ValueError(f"probabilities sum to {math.fsum(probs)!r}, not 1")
        atoms, probs = _merge(atoms, probs)
        atoms.flags.writeable = False
        probs.flags.writeable = False
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "probs", probs)

    def __len__(self) -> int:
        return self.atoms.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, DiscreteDistribution):
            return NotImplemented
        return np.array_equal(self.atoms, other.atoms) and np.array_equal(self.probs, other.probs)

    def expect(self, fn: Callable[[np.ndarray], np.ndarray]) -> float:
        return math.fsum(self.probs * fn(self.atoms))

    def raw_moment(self, k: int) -> float:
        return math.fsum(self.probs * self.atoms**k)

    def abs_moment(self, k: int) -> float:
        return math.fsum(self.probs * np.abs(self.atoms) ** k)

    def scaled(self, c: float) -> "DiscreteDistribution":
        return DiscreteDistribution(self.atoms * c, self.probs)

    def sampler(self) -> Callable[[np.random.Generator, tuple], np.ndarray]:
        """Inverse-CDF sampler ``(rng, shape) -> draws``."""
        cdf = np.cumsum(self.probs)
        cdf[-1] = 1.0
        atoms = self.atoms.copy()

        def draw(rng: np.random.Generator, shape) -> np.ndarray:
            u = rng.random(shape)
            return atoms[np.minimum(np.searchsorted(cdf, u, side="right"), atoms.size - 1)]

        return draw

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["atom", "prob"])
            for a, p in zip(self.atoms, self.probs):
                writer.writerow([repr(float(a)), repr(float(p))])

    @classmethod
    def from_csv(cls, path) -> "DiscreteDistribution":
        """Read ``atom,prob`` rows; a non-numeric first row is a header."""
        atoms, probs = [], []
        with open(Path(path), newline="", encoding="utf-8") as fh:
            for lineno, row in enumerate(csv.reader(fh)):
                if not row or all(not c.strip() for c in row):
                    continue
                try:
                    a, p = float(row[0]), float(row[1])
                except (ValueError, IndexError):
                    if lineno == 0:
                        continue
                    raise ValueError(f"{path}:{lineno + 1}: expected 'atom,prob', got {row}")
                atoms.append(a)
                probs.append(p)
        return cls(np.array(atoms), np.array(probs))


def rademacher() -> DiscreteDistribution:
    return DiscreteDistribution(np.array([-1.0, 1.0]), np.array([0.5, 0.5]))


def point_mass(x: float = 0.0) -> DiscreteDistribution:
    return DiscreteDistribution(np.array([float(x)]), np.array([1.0]))


@dataclass(frozen=True)
class EpsilonTable:
    """Moment deficits eps_k = E X^k - E Z^k (k = 0..p) and E|X|^k (k = 0..p+1)."""

    p: int
    raw: tuple[float, ...]
    eps: tuple[float, ...]
    abs_moments: tuple[float, ...]

    def matches_normal(self, upto: Optional[int] = None, tol: float = 1e-10) -> bool:
        upto = self.p if upto is None else upto
        return all(abs(e) <= tol for e in self.eps[1:upto + 1])

    @classmethod
    def from_deficits(cls, eps, abs_moments) -> "EpsilonTable":
        """Table built from given deficits (eps[0] is forced to 0)."""
        eps = (0.0,) + tuple(float(e) for e in eps[1:])
        p = len(eps) - 1
        if len(abs_moments) < p + 2:
            raise ValueError(f"need absolute moments up to order {p + 1}")
        raw = tuple(e + normal_moment(k) for k, e in enumerate(eps))
        return cls(p=p, raw=raw, eps=eps, abs_moments=tuple(float(m) for m in abs_moments[:p + 2]))


def moments(dist: DiscreteDistribution, p: int) -> EpsilonTable:
    p = int(p)
    if p < 1:
        raise ValueError("p must be >= 1")
    raw = tuple(dist.raw_moment(k) for k in range(p + 1))
    eps = (0.0,) + tuple(raw[k] - normal_moment(k) for k in range(1, p + 1))
    absm = tuple(dist.abs_moment(k) for k in range(p + 2))
    return EpsilonTable(p=p, raw=raw, eps=eps, abs_moments=absm)


def _hermite_eval(m: int, x: float) -> tuple[float, float]:
    """He_m(x) and He_{m-1}(x) by He_{j+1} = x He_j - j He_{j-1}."""
    prev, cur = 1.0, x
    if m == 0:
        return 1.0, 0.0
    for j in range(1, m):
        prev, cur = cur, x * cur - j * prev
    return cur, prev


def hermite_nodes(m: int, max_iter: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Roots of the probabilists' Hermite polynomial He_m and normalised weights.

    Roots come from Newton's method with Maehly deflation, walking down from
    an upper bound on the largest root, then one undeflated polishing pass.
    Weights are m! / (m He_{m-1}(x))^2, which sum to 1.
    """
    m = int(m)
    if m < 1:
        raise ValueError("m must be >= 1")
    roots: list[float] = []
    x = math.sqrt(4.0 * m + 2.0)
    for _ in range(m):
        for _ in range(max_iter):
            p, pm1 = _hermite_eval(m, x)
            dp = m * pm1  # He_m' = m He_{m-1}
            corr = dp / p - sum(1.0 / (x - r) for r in roots) if p != 0.0 else math.inf
            if corr == math.inf:
                break
            step = 1.0 / corr
            x -= step
            if abs(step) <= 1e-15 * max(1.0, abs(x)):
                break
        roots.append(x)
        # restart just below the root found; the next root is strictly smaller
        x = x - 1e-6 * max(1.0, abs(x))
    polished = []
    for r in roots:
        for _ in range(3):
            p, pm1 = _hermite_eval(m, r)
            if p == 0.0:
                break
            r -= p / (m * pm1)
        polished.append(r)
    nodes = np.array(sorted(polished))
    # exact symmetry of He_m roots
    nodes = 0.5 * (nodes - nodes[::-1])
    log_mfact = math.lgamma(m + 1)
    weights = np.array([math.exp(log_mfact - 2.0 * math.log(abs(m * _hermite_eval(m, r)[1])))
                        for r in nodes])
    weights = 0.5 * (weights + weights[::-1])
    return nodes, weights


def hermite_distribution(m: int) -> DiscreteDistribution:
    """Law on the m Gauss-Hermite nodes; matches E Z^k for every k <= 2m - 1."""
    m = int(m)
    if not 2 <= m <= 16:
        raise ValueError(f"atom count must be in [2, 16], got {m}")
    nodes, weights = hermite_nodes(m)
    weights = weights / math.fsum(weights)
    dist = DiscreteDistribution(nodes, weights)
    for k in range(1, 2 * m):
        target = normal_moment(k)
        got = dist.raw_moment(k)
        if abs(got - target) > 1e-9 * max(1.0, dist.abs_moment(k)):
            raise ArithmeticError(f"Gauss-Hermite weights fail moment {k}: {got} vs {target}")
    return dist


def _convolve_pair(a: DiscreteDistribution | tuple, b: tuple, cap: int):
    a_atoms, a_probs = a
    b_atoms, b_probs = b
    size = a_atoms.size * b_atoms.size
    if size > cap:
        raise SupportCapExceeded(f"pairwise support {size} exceeds cap {cap}")
    atoms = (a_atoms[:, None] + b_atoms[None, :]).reshape(-1)
    probs = (a_probs[:, None] * b_probs[None, :]).reshape(-1)
    return _merge(atoms, probs)


def convolve_iid(dist: DiscreteDistribution, n: int, cap: int = DEFAULT_SUPPORT_CAP) -> DiscreteDistribution:
    """Exact law of n^{-1/2} (X_1 + ... + X_n) for i.i.d. X_i ~ dist.

    Sums are built unscaled by binary powering of pairwise convolutions,
    with atoms pooled within 1e-12 relative; the 1/sqrt(n) scale is applied
    once at the end.
    """
    n = int(n)
    if n < 1:
        raise ValueError("n must be >= 1")
    base = (dist.atoms.copy(), dist.probs.copy())
    result = None
    k = n
    while True:
        if k & 1:
            result = base if result is None else _convolve_pair(result, base, cap)
        k >>= 1
        if not k:
            break
        base = _convolve_pair(base, base, cap)
    atoms, probs = result
    probs = probs / math.fsum(probs)
    return DiscreteDistribution(atoms / math.sqrt(n), probs)
