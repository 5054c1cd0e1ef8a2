"""Batch front end: ``steinbounds --config experiment.toml --out results/``.

Exit status: 0 all gates pass, 1 a gate failed, 2 config error,
3 precondition violated, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .bounds import (MissingData, MomentMismatch, theorem31_bound, theorem34_bound,
                     theorem35_bound, synthetic_theorem34_deficits)
from .clt_engine import (DistanceSeries, dyadic_grid, exact_distance, exact_distance_cosine_mv,
                         mc_distance, rate_fit)
from .distributions import (DiscreteDistribution, SupportCapExceeded, hermite_distribution,
                            moments, point_mass, rademacher)
from .stein import InsufficientSmoothness, SteinSolution, verify_bounds
from .testfuncs import (TestFunction, composite, constant_function, cosine_family,
                        load_tabulated_csv, sigmoid_family)

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("steinbounds")

COMMANDS = ("bound", "verify-stein", "rate", "mvn-bound", "thm34")

EXIT_OK, EXIT_GATE, EXIT_CONFIG, EXIT_PRECONDITION, EXIT_NUMERICAL = 0, 1, 2, 3, 4


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    command: str
    distribution: dict
    test_function: dict
    n: list[int]
    p: int
    d: int = 1
    seed: int = 0
    threads: int = 1
    quadrature_order: int = 64
    out: Path = Path(".")
    k_max: int = 6
    method: str = "auto"
    reps: int = 1_000_000
    grid: dict = field(default_factory=dict)
    thm34: dict = field(default_factory=dict)
    u: Optional[list[float]] = None
    base_dir: Path = Path(".")


def _require(raw: dict, key: str) -> Any:
    if key not in raw:
        raise ConfigError(f"missing required key '{key}'")
    return raw[key]


def _int(raw: dict, key: str, default=None) -> int:
    v = raw.get(key, default) if default is not None else _require(raw, key)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"key '{key}' must be an integer, got {v!r}")
    return v


def _n_grid(raw: dict) -> list[int]:
    if "n" in raw:
        v = raw["n"]
        ns = [v] if isinstance(v, int) else v
        if not isinstance(ns, list) or not ns or not all(isinstance(x, int) and not isinstance(x, bool) for x in ns):
            raise ConfigError("key 'n' must be an integer or a list of integers")
    elif "n_min" in raw and "n_max" in raw:
        ns = dyadic_grid(_int(raw, "n_min"), _int(raw, "n_max"))
    else:
        raise ConfigError("missing required key 'n' (or 'n_min' and 'n_max')")
    if any(x < 1 for x in ns) or any(b <= a for a, b in zip(ns, ns[1:])):
        raise ConfigError("n grid must be positive and strictly increasing")
    return ns


def load_config(path, overrides: Optional[dict] = None) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}")
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    raw.update(overrides)

    command = _require(raw, "command")
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}; expected one of {', '.join(COMMANDS)}")
    needs_dist = command in ("bound", "rate", "mvn-bound")
    needs_n = command in ("bound", "rate", "mvn-bound", "thm34")
    cfg = ExperimentConfig(
        command=command,
        distribution=_require(raw, "distribution") if needs_dist else raw.get("distribution", {}),
        test_function=raw.get("test_function", {"family": "cos", "a": 1.0}),
        n=_n_grid(raw) if needs_n else [],
        p=_int(raw, "p") if command in ("bound", "rate", "mvn-bound") else _int(raw, "p", 1),
        d=_int(raw, "d", 1),
        seed=_int(raw, "seed", 0),
        threads=_int(raw, "threads", int(os.environ.get("STEIN_BOUNDS_THREADS", "1"))),
        quadrature_order=_int(raw, "quadrature_order", 64),
        out=Path(raw.get("out", ".")),
        k_max=_int(raw, "k_max", 6),
        method=raw.get("method", "auto"),
        reps=_int(raw, "reps", 1_000_000),
        grid=raw.get("grid", {}),
        thm34=raw.get("thm34", {}),
        u=raw.get("u"),
        base_dir=path.parent,
    )
    if cfg.p < 1:
        raise ConfigError("p must be >= 1")
    if cfg.d < 1:
        raise ConfigError("d must be >= 1")
    if cfg.method not in ("auto", "exact", "mc"):
        raise ConfigError(f"method must be auto, exact or mc, got {cfg.method!r}")
    for section in (cfg.distribution, cfg.test_function):
        if not isinstance(section, dict):
            raise ConfigError("distribution and test_function must be tables")
        if "path" in section and not (cfg.base_dir / section["path"]).exists():
            raise ConfigError(f"referenced file {section['path']} does not exist")
    return cfg


def build_distribution(spec: dict, base_dir: Path = Path(".")) -> DiscreteDistribution:
    name = spec.get("name")
    if name == "rademacher":
        return rademacher()
    if name == "hermite":
        return hermite_distribution(int(spec.get("m", 3)))
    if name == "point":
        return point_mass(float(spec.get("x", 0.0)))
    if name == "csv":
        return DiscreteDistribution.from_csv(base_dir / _require(spec, "path"))
    raise ConfigError(f"unknown distribution {name!r}")


def build_test_function(spec: dict, base_dir: Path = Path(".")) -> TestFunction:
    family = spec.get("family", "cos")
    if family == "cos":
        return cosine_family(float(spec.get("a", 1.0)), float(spec.get("phase", 0.0)))
    if family == "sigmoid":
        return sigmoid_family(float(spec.get("a", 1.0)))
    if family == "const":
        return constant_function(float(spec.get("c", 1.0)))
    if family == "csv":
        return load_tabulated_csv(base_dir / _require(spec, "path"), int(spec.get("order", 2)))
    raise ConfigError(f"unknown test-function family {family!r}")


def _write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")


def _run_bound(cfg: ExperimentConfig, out: Path) -> bool:
    dist = build_distribution(cfg.distribution, cfg.base_dir)
    h = build_test_function(cfg.test_function, cfg.base_dir)
    table = moments(dist, cfg.p)
    for n in cfg.n:
        report = theorem31_bound(table, h, n, cfg.p)
        name = "bound_report.json" if len(cfg.n) == 1 else f"bound_report_n{n}.json"
        _write_json(out / name, report.to_dict())
        log.info("n=%d bound=%.6e", n, report.total)
    return True


def _run_verify(cfg: ExperimentConfig, out: Path) -> bool:
    h = build_test_function(cfg.test_function, cfg.base_dir)
    q = cfg.quadrature_order
    g = cfg.grid
    report = verify_bounds(h, cfg.k_max, float(g.get("lo", -8.0)), float(g.get("hi", 8.0)),
                           float(g.get("step", 0.01)), solution=SteinSolution(h, q, q))
    _write_json(out / "verification.json", report.to_dict())
    for r in report.records:
        log.info("k=%d sup|f|=%.6g <= %.6g (%s): %s; sup|wf|=%.6g <= %.6g: %s", r.k, r.sup_f,
                 r.bound, r.branch, r.pass_f, r.sup_wf, r.wf_bound, r.pass_wf)
    return report.passed


def _distance(cfg: ExperimentConfig, dist, h, n) -> tuple[float, str, float]:
    if cfg.method != "mc":
        try:
            return exact_distance(dist, h, n), "exact", 0.0
        except SupportCapExceeded:
            if cfg.method == "exact":
                raise
            log.warning("n=%d: support cap exceeded, using Monte Carlo", n)
    est, ci = mc_distance(dist.sampler(), h, n, cfg.reps, cfg.seed, cfg.threads)
    return est, "monte-carlo", ci


def _run_rate(cfg: ExperimentConfig, out: Path) -> bool:
    dist = build_distribution(cfg.distribution, cfg.base_dir)
    h = build_test_function(cfg.test_function, cfg.base_dir)
    table = moments(dist, cfg.p)
    rows = [_distance(cfg, dist, h, n) for n in cfg.n]
    series = DistanceSeries(n=list(cfg.n), distances=[r[0] for r in rows],
                            methods=[r[1] for r in rows], ci=[r[2] for r in rows])
    series.to_csv(out / "distances.csv")
    bounds = [theorem31_bound(table, h, n, cfg.p).total for n in cfg.n]
    # a Monte Carlo row refutes the bound only if the whole interval lies above it
    dominates = [b >= d - ci for b, d, ci in zip(bounds, series.distances, series.ci)]
    with open(out / "bound_series.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["n", "bound", "distance", "dominates"])
        for n, b, d, ok in zip(cfg.n, bounds, series.distances, dominates):
            writer.writerow([n, repr(b), repr(d), "PASS" if ok else "FAIL"])
    fit = rate_fit(series) if len(cfg.n) >= 4 and min(series.distances) > 0 else None
    summary = {
        "rate_fit": fit.to_dict() if fit else None,
        "bound_order": -(cfg.p - 1) / 2,
        "dominance": "PASS" if all(dominates) else "FAIL",
    }
    _write_json(out / "rate_fit.json", summary)
    if fit:
        log.info("slope %.4f (bound order %.1f)", fit.slope, summary["bound_order"])
    return all(dominates)


def _run_mvn(cfg: ExperimentConfig, out: Path) -> bool:
    dist = build_distribution(cfg.distribution, cfg.base_dir)
    g = build_test_function(cfg.test_function, cfg.base_dir)
    u = cfg.u if cfg.u is not None else [1.0] * cfg.d
    if len(u) != cfg.d:
        raise ConfigError(f"'u' has {len(u)} entries but d = {cfg.d}")
    h = composite(g, u)
    tables = [moments(dist, cfg.p)] * cfg.d
    rows, ok = [], True
    for n in cfg.n:
        report = theorem35_bound(tables, h, n, cfg.p)
        name = "mvn_report.json" if len(cfg.n) == 1 else f"mvn_report_n{n}.json"
        _write_json(out / name, report.to_dict())
        distance = None
        if cfg.test_function.get("family", "cos") == "cos":
            a = float(cfg.test_function.get("a", 1.0))
            phase = float(cfg.test_function.get("phase", 0.0))
            distance = exact_distance_cosine_mv([dist] * cfg.d, a, phase, u, n)
            ok &= report.total >= distance
        rows.append((n, report.total, distance))
    with open(out / "mvn_series.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["n", "bound", "distance"])
        for n, b, d in rows:
            writer.writerow([n, repr(b), "" if d is None else repr(d)])
    return ok


def _run_thm34(cfg: ExperimentConfig, out: Path) -> bool:
    h = build_test_function(cfg.test_function, cfg.base_dir)
    t = cfg.thm34
    C = float(t.get("C", 1.0))
    alpha = float(t.get("alpha", 1.0))
    delta = float(t.get("delta", 2.0))
    K = int(t.get("K", 30))
    results, ok = [], True
    for n in cfg.n:
        eps = t.get("eps", "synthetic")
        if eps == "synthetic":
            eps = synthetic_theorem34_deficits(h, n, delta, alpha, C)
        elif isinstance(eps, list):
            if len(eps) < K + 2:
                raise MissingData(f"thm34.eps needs entries for k = 0..{K + 1}")
        else:
            raise ConfigError("thm34.eps must be 'synthetic' or a list of deficits")
        res = theorem34_bound(eps, h, C, alpha, delta, n, K)
        ok &= res.condition_holds
        results.append({"n": n, **res.to_dict()})
    _write_json(out / "thm34.json", {"C": C, "alpha": alpha, "delta": delta, "results": results})
    return ok


_RUNNERS = {"bound": _run_bound, "verify-stein": _run_verify, "rate": _run_rate,
            "mvn-bound": _run_mvn, "thm34": _run_thm34}


def run(cfg: ExperimentConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        passed = _RUNNERS[cfg.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MissingData, MomentMismatch, InsufficientSmoothness, SupportCapExceeded) as exc:
        print(f"precondition violated: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (ArithmeticError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"precondition violated: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    return EXIT_OK if passed else EXIT_GATE


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="steinbounds", description=__doc__.splitlines()[0])
    parser.add_argument("--config", required=True, help="experiment config (TOML)")
    parser.add_argument("--out", help="output directory (overrides config 'out')")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--threads", type=int)
    parser.add_argument("--quadrature-order", type=int, dest="quadrature_order")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, {"out": args.out, "seed": args.seed, "threads": args.threads,
                                        "quadrature_order": args.quadrature_order})
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
