"""Distances |E h(W_n) - Phi h| (exact or Monte Carlo) and log-log rate fits."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .distributions import DEFAULT_SUPPORT_CAP, DiscreteDistribution, convolve_iid
from .testfuncs import TestFunction

__all__ = [
    "CI_MULTIPLIER",
    "DistanceSeries",
    "MC_BLOCK",
    "RateFit",
    "distance_series",
    "dyadic_grid",
    "exact_distance",
    "exact_distance_cosine_mv",
    "mc_distance",
    "rate_fit",
]

CI_MULTIPLIER = 3.0
# replications per RNG stream; fixed so results do not depend on worker count
MC_BLOCK = 1 << 14

Sampler = Callable[[np.random.Generator, tuple], np.ndarray]


def dyadic_grid(n_min: int, n_max: int) -> list[int]:
    out, n = [], int(n_min)
    while n <= n_max:
        out.append(n)
        n *= 2
    return out


def exact_distance(dist: DiscreteDistribution, h: TestFunction, n: int,
                   cap: int = DEFAULT_SUPPORT_CAP) -> float:
    """|E h(W_n) - Phi h| over the exact law of W_n = n^{-1/2} sum X_i."""
    if h.phi_h is None:
        raise ValueError(f"{h.name} has no normal expectation")
    law = convolve_iid(dist, n, cap=cap)
    return abs(law.expect(lambda x: h.evaluate(0, x)) - h.phi_h)


def exact_distance_cosine_mv(dists: Sequence[DiscreteDistribution], a: float, phase: float,
                             u: Sequence[float], n: int, cap: int = DEFAULT_SUPPORT_CAP) -> float:
    """|E h(W_n) - E h(Z)| for h(w) = cos(a <u, w> + phase) and independent coordinates.

    Uses E exp(i a <u, W_n>) = prod_j E exp(i a u_j W_{n,j}) over the exact
    coordinate laws, so no d-dimensional convolution is needed.
    """
    if len(dists) != len(u):
        raise ValueError("need one coordinate law per entry of u")
    char = complex(math.cos(phase), math.sin(phase))
    for dist, uj in zip(dists, u):
        law = convolve_iid(dist, n, cap=cap)
        t = a * uj
        char *= complex(law.expect(lambda x: np.cos(t * x)), law.expect(lambda x: np.sin(t * x)))
    uu = math.fsum(x * x for x in u)
    return abs(char.real - math.cos(phase) * math.exp(-0.5 * a * a * uu))


def _block_stats(sampler: Sampler, h: TestFunction, n: int, seed: int,
                 block: int, size: int) -> tuple[float, float]:
    # one Philox stream per block, keyed by (seed, block index)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, block])))
    w = sampler(rng, (size, n)).sum(axis=1) / math.sqrt(n)
    vals = h.evaluate(0, w)
    return math.fsum(vals), math.fsum(vals * vals)


def mc_distance(sampler: Sampler, h: TestFunction, n: int, reps: int = 10**6,
                seed: int = 0, workers: int = 1) -> tuple[float, float]:
    """Monte Carlo estimate of |E h(W_n) - Phi h| with a 3-sigma half-width.

    Replications are cut into fixed blocks of :data:`MC_BLOCK`, each drawn
    from its own counter-based stream, and block sums are combined in block
    order, so the estimate is bit-identical for any ``workers``.
    """
    if reps < 1000:
        raise ValueError("reps must be >= 1000")
    if h.phi_h is None:
        raise ValueError(f"{h.name} has no normal expectation")
    n, reps, seed = int(n), int(reps), int(seed)
    blocks = [(b, min(MC_BLOCK, reps - b * MC_BLOCK)) for b in range(-(-reps // MC_BLOCK))]

    def run(item):
        b, size = item
        return _block_stats(sampler, h, n, seed, b, size)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, blocks))
    else:
        parts = [run(item) for item in blocks]

    total = math.fsum(p[0] for p in parts)
    total_sq = math.fsum(p[1] for p in parts)
    mean = total / reps
    var = max(total_sq / reps - mean * mean, 0.0) * reps / (reps - 1)
    half_width = CI_MULTIPLIER * math.sqrt(var / reps)
    if var <= 1e-300:
        half_width = 0.0
    return abs(mean - h.phi_h), half_width


@dataclass
class DistanceSeries:
    n: list[int]
    distances: list[float]
    methods: list[str] = field(default_factory=list)
    ci: list[float] = field(default_factory=list)

    def __post_init__(self):
        if not self.methods:
            self.methods = ["exact"] * len(self.n)
        if not self.ci:
            self.ci = [0.0] * len(self.n)
        if not (len(self.n) == len(self.distances) == len(self.methods) == len(self.ci)):
            raise ValueError("series columns differ in length")
        if any(b <= a for a, b in zip(self.n, self.n[1:])):
            raise ValueError("n values must be strictly increasing")
        for m, c in zip(self.methods, self.ci):
            if m == "exact" and c != 0.0:
                raise ValueError("exact entries carry zero CI")
            if m == "monte-carlo" and c < 0.0:
                raise ValueError("negative CI half-width")
            if m not in ("exact", "monte-carlo"):
                raise ValueError(f"unknown method tag {m!r}")

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["n", "distance", "method", "ci"])
            for row in zip(self.n, self.distances, self.methods, self.ci):
                writer.writerow([row[0], repr(float(row[1])), row[2], repr(float(row[3]))])

    @classmethod
    def from_csv(cls, path) -> "DistanceSeries":
        with open(Path(path), newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        return cls(
            n=[int(r["n"]) for r in rows],
            distances=[float(r["distance"]) for r in rows],
            methods=[r["method"] for r in rows],
            ci=[float(r["ci"]) for r in rows],
        )


def distance_series(dist: DiscreteDistribution, h: TestFunction, ns: Sequence[int],
                    cap: int = DEFAULT_SUPPORT_CAP) -> DistanceSeries:
    return DistanceSeries(n=list(ns), distances=[exact_distance(dist, h, n, cap) for n in ns])


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    max_abs_residual: float
    points: int

    def to_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept,
                "max_abs_residual": self.max_abs_residual, "points": self.points}


def rate_fit(series: DistanceSeries | tuple[Sequence[float], Sequence[float]]) -> RateFit:
    """Least-squares line through (log n, log d_n)."""
    if isinstance(series, DistanceSeries):
        ns, ds = series.n, series.distances
    else:
        ns, ds = series
    x = np.log(np.asarray(ns, dtype=float))
    d = np.asarray(ds, dtype=float)
    if x.size < 4:
        raise ValueError("need at least 4 points for a rate fit")
    if np.any(d <= 0) or not np.all(np.isfinite(d)):
        raise ValueError("distances must be positive and finite to take logs")
    y = np.log(d)
    xc = x - x.mean()
    slope = float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (intercept + slope * x)
    return RateFit(slope=slope, intercept=intercept,
                   max_abs_residual=float(np.max(np.abs(resid))), points=int(x.size))
