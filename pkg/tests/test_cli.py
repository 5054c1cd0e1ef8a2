import json
import math
import os
import subprocess
import sys

import pytest

from steinbounds.bounds import BoundReport
from steinbounds.cli import (EXIT_CONFIG, EXIT_GATE, EXIT_OK, EXIT_PRECONDITION, ConfigError,
                             load_config, main)
from steinbounds.clt_engine import DistanceSeries
from steinbounds.stein import VerificationReport


def _config(tmp_path, text, name="cfg.toml"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def _run(cfg, out, *extra):
    return main(["--config", str(cfg), "--out", str(out), *extra])


def test_bound_command(tmp_path):
    cfg = _config(tmp_path, 'command = "bound"\nn = 100\np = 3\n'
                            '[distribution]\nname = "rademacher"\n[test_function]\nfamily = "cos"\na = 1.0\n')
    assert _run(cfg, tmp_path / "out") == EXIT_OK
    text = (tmp_path / "out" / "bound_report.json").read_text(encoding="utf-8")
    report = BoundReport.from_json(text)
    assert report.total == pytest.approx(1 / 600, rel=1e-12)
    assert json.dumps(report.to_dict(), indent=2) + "\n" == text


def test_bound_command_several_n(tmp_path):
    cfg = _config(tmp_path, 'command = "bound"\nn = [10, 20]\np = 3\n[distribution]\nname = "rademacher"\n')
    assert _run(cfg, tmp_path / "o") == EXIT_OK
    assert sorted(p.name for p in (tmp_path / "o").iterdir()) == ["bound_report_n10.json",
                                                                    "bound_report_n20.json"]


def test_rate_command(tmp_path):
    cfg = _config(tmp_path, 'command = "rate"\nn_min = 8\nn_max = 4096\np = 3\n'
                            '[distribution]\nname = "rademacher"\n[test_function]\nfamily = "cos"\n')
    out = tmp_path / "out"
    assert _run(cfg, out) == EXIT_OK
    series = DistanceSeries.from_csv(out / "distances.csv")
    assert len(series.n) == 10
    summary = json.loads((out / "rate_fit.json").read_text(encoding="utf-8"))
    assert -1.1 <= summary["rate_fit"]["slope"] <= -0.9
    assert summary["dominance"] == "PASS"
    rows = (out / "bound_series.csv").read_text(encoding="utf-8").splitlines()
    assert rows[0] == "n,bound,distance,dominates" and len(rows) == 11


def test_rate_with_monte_carlo_is_deterministic_across_threads(tmp_path):
    text = ('command = "rate"\nn = [4, 8, 16, 32]\np = 3\nmethod = "mc"\nreps = 50000\nseed = 11\n'
            '[distribution]\nname = "rademacher"\n')
    cfg = _config(tmp_path, text)
    assert _run(cfg, tmp_path / "a", "--threads", "1") == EXIT_OK
    assert _run(cfg, tmp_path / "b", "--threads", "4") == EXIT_OK
    for name in ("distances.csv", "bound_series.csv", "rate_fit.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert _run(cfg, tmp_path / "c", "--seed", "12") == EXIT_OK
    assert (tmp_path / "a" / "distances.csv").read_bytes() != (tmp_path / "c" / "distances.csv").read_bytes()
    series = DistanceSeries.from_csv(tmp_path / "a" / "distances.csv")
    assert set(series.methods) == {"monte-carlo"}


def test_verify_command_reports_the_failing_weighted_check(tmp_path):
    cfg = _config(tmp_path, 'command = "verify-stein"\nk_max = 3\n[grid]\nlo = -6.0\nhi = 6.0\nstep = 0.05\n'
                            '[test_function]\nfamily = "cos"\n')
    assert _run(cfg, tmp_path / "out") == EXIT_GATE
    data = json.loads((tmp_path / "out" / "verification.json").read_text(encoding="utf-8"))
    report = VerificationReport.from_dict(data)
    assert [r.passed for r in report.records] == [True, False, True]


def test_mvn_command(tmp_path):
    cfg = _config(tmp_path, 'command = "mvn-bound"\nd = 2\nn = [8, 16, 32]\np = 3\n'
                            '[distribution]\nname = "rademacher"\n')
    assert _run(cfg, tmp_path / "out") == EXIT_OK
    rep = BoundReport.from_json((tmp_path / "out" / "mvn_report_n8.json").read_text(encoding="utf-8"))
    assert rep.total == pytest.approx(1 / 24, rel=1e-12)
    rows = (tmp_path / "out" / "mvn_series.csv").read_text(encoding="utf-8").splitlines()
    assert rows[0] == "n,bound,distance"
    n, b, d = rows[1].split(",")
    assert float(d) == pytest.approx(abs(math.cos(8**-0.5) ** 16 - math.exp(-1)), rel=1e-9)


def test_thm34_command(tmp_path):
    cfg = _config(tmp_path, 'command = "thm34"\nn = [10, 100]\n[thm34]\nC = 1.0\nalpha = 1.0\ndelta = 2.0\n')
    assert _run(cfg, tmp_path / "out") == EXIT_OK
    data = json.loads((tmp_path / "out" / "thm34.json").read_text(encoding="utf-8"))
    assert [r["n"] for r in data["results"]] == [10, 100]
    assert all(r["condition_holds"] for r in data["results"])


def test_missing_key_exits_with_config_status(tmp_path, capsys):
    cfg = _config(tmp_path, 'command = "bound"\nn = 100\n[distribution]\nname = "rademacher"\n')
    assert _run(cfg, tmp_path / "out") == EXIT_CONFIG
    assert "'p'" in capsys.readouterr().err


@pytest.mark.parametrize("text", [
    'command = "nope"\n',
    'command = "bound"\nn = [10, 5]\np = 3\n[distribution]\nname = "rademacher"\n',
    'command = "bound"\nn = 10\np = 0\n[distribution]\nname = "rademacher"\n',
    'command = "bound"\nn = 10\np = 3\n[distribution]\nname = "csv"\npath = "missing.csv"\n',
    'command = "bound"\nn = 10\np = 3\n[distribution]\nname = "weird"\n',
    'command = = 1\n',
])
def test_config_errors(tmp_path, text):
    assert _run(_config(tmp_path, text), tmp_path / "out") == EXIT_CONFIG


def test_missing_config_file(tmp_path):
    assert _run(tmp_path / "absent.toml", tmp_path / "out") == EXIT_CONFIG


def test_precondition_violation(tmp_path):
    # hermite atom counts stop at 16
    cfg = _config(tmp_path, 'command = "bound"\nn = 10\np = 3\n[distribution]\nname = "hermite"\nm = 20\n')
    assert _run(cfg, tmp_path / "out") == EXIT_PRECONDITION


def test_csv_inputs(tmp_path):
    (tmp_path / "d.csv").write_text("atom,prob\n-1,0.5\n1,0.5\n", encoding="utf-8")
    cfg = _config(tmp_path, 'command = "bound"\nn = 100\np = 3\n[distribution]\nname = "csv"\npath = "d.csv"\n')
    assert _run(cfg, tmp_path / "out") == EXIT_OK
    rep = BoundReport.from_json((tmp_path / "out" / "bound_report.json").read_text(encoding="utf-8"))
    assert rep.total == pytest.approx(1 / 600, rel=1e-12)


def test_flags_override_config_and_env_default(tmp_path, monkeypatch):
    cfg = _config(tmp_path, 'command = "bound"\nn = 10\np = 3\nseed = 1\nthreads = 2\n'
                            '[distribution]\nname = "rademacher"\n')
    c = load_config(cfg, {"seed": 9, "threads": None})
    assert c.seed == 9 and c.threads == 2
    cfg2 = _config(tmp_path, 'command = "bound"\nn = 10\np = 3\n[distribution]\nname = "rademacher"\n', "b.toml")
    monkeypatch.setenv("STEIN_BOUNDS_THREADS", "5")
    assert load_config(cfg2).threads == 5
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nothing.toml")


def test_module_entry_point(tmp_path):
    cfg = _config(tmp_path, 'command = "bound"\nn = 100\np = 3\n[distribution]\nname = "rademacher"\n')
    proc = subprocess.run([sys.executable, "-m", "steinbounds", "--config", str(cfg), "--out",
                           str(tmp_path / "o")], capture_output=True, text=True,
                          env={**os.environ, "STEIN_BOUNDS_THREADS": "1"})
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "o" / "bound_report.json").exists()
