from __future__ import annotations

import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from debtsched import cli, traces
from debtsched.engine import RunConfig, run
from debtsched.experiment import load_config, parse_config
from debtsched.model import ConfigError, SystemConfig
from debtsched.policies import PolicySpec

UNIT = """
[system]
n_clients = 2
period = 1
reliabilities = [0.5, 0.5]
throughputs = [0.25, 0.25]

[[policies]]
kind = "mwdf"

[[policies]]
kind = "fixed_order"
order = [1, 2]

[run]
frames = 10
seeds = [0]
t_min = 16
"""


def write(tmp_path: Path, text: str, name: str = "exp.toml") -> str:
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_feasibility_exit_codes(tmp_path, capsys):
    path = write(tmp_path, UNIT)
    assert cli.main(["feasibility", "--config", path]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["report"]["tight_subsets"] == [[1, 2]]
    assert doc["config_hash"] and doc["rng_algorithm"]
    scaled = UNIT.replace("[0.25, 0.25]", "[0.3, 0.3]")
    assert cli.main(["feasibility", "--config", write(tmp_path, scaled, "s.toml")]) == 2


def test_feasibility_split_weights(tmp_path, capsys):
    text = """
[system]
n_clients = 2
period = 2
reliabilities = [0.5, 0.5]
split_weights = [0.5, 0.5]
"""
    assert cli.main(["feasibility", "--config", write(tmp_path, text), "--table"]) == 0
    assert "tight" in capsys.readouterr().out


def test_too_many_clients(tmp_path, capsys):
    text = f"""
[system]
n_clients = 21
period = 4
reliabilities = {[0.9] * 21}
throughputs = {[0.01] * 21}
"""
    assert cli.main(["feasibility", "--config", write(tmp_path, text)]) == 1
    assert "20 clients" in capsys.readouterr().err


@pytest.mark.parametrize(
    "mutation,needle",
    [
        (lambda t: t.replace("period = 1", "period = 1\nperiods = 2"), "unknown key(s) periods"),
        (lambda t: t.replace("throughputs = [0.25, 0.25]", "throughputs = [0.25, 0.25]\nsplit_weights = [0.5, 0.5]"), "exactly one"),
        (lambda t: t.replace("[0.5, 0.5]", "[0.5, 1.5]"), "reliabilities"),
        (lambda t: t.replace('kind = "mwdf"', 'kind = "mwdf"\ncolour = 1'), "[[policies]] #1"),
        (lambda t: t.replace("frames = 10", "frames = 'ten'"), "[run].frames"),
        (lambda t: t.replace("[system]", "[system"), "line"),
        (lambda t: t + "\n[extra]\n", "top level"),
    ],
)
def test_malformed_configs(tmp_path, capsys, mutation, needle):
    assert cli.main(["feasibility", "--config", write(tmp_path, mutation(UNIT))]) == 1
    assert needle in capsys.readouterr().err


def test_usage_errors_exit_one(tmp_path):
    with pytest.raises(SystemExit) as exc:
        cli.main(["simulate"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        cli.main(["simulate", "--config", write(tmp_path, UNIT), "--seeds", "x"])
    assert exc.value.code == 1
    assert cli.main(["simulate", "--config", str(tmp_path / "missing.toml")]) == 1


def test_simulate_writes_files(tmp_path):
    out = tmp_path / "out"
    assert cli.main(["simulate", "--config", write(tmp_path, UNIT), "--out", str(out)]) == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == ["fixed_order-0.csv", "fixed_order-0.json", "mwdf-0.csv", "mwdf-0.json"]
    lines = (out / "mwdf-0.csv").read_text().splitlines()
    assert lines[0] == "t,d_1,d_2,u_1,u_2,g_1,g_2,idle,phi,M_1,M_2,scaled_d_1,scaled_d_2"
    assert len(lines) == 11
    doc = json.loads((out / "mwdf-0.json").read_text())
    assert doc["config_hash"] == load_config(tmp_path / "exp.toml").config_hash()
    assert doc["rng_algorithm"].startswith("numpy.PCG64")
    assert {"run", "lil", "ssc"} <= set(doc)


def test_simulate_is_byte_identical(tmp_path):
    path = write(tmp_path, UNIT)
    for d in ("a", "b"):
        assert cli.main(["simulate", "--config", path, "--out", str(tmp_path / d), "--frames", "5000", "--seeds", "3"]) == 0
    for name in ("mwdf-3.csv", "fixed_order-3.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_output_root_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "envout"))
    assert cli.main(["simulate", "--config", write(tmp_path, UNIT), "--policy", "mdf"]) == 0
    assert (tmp_path / "envout" / "mdf-0.csv").exists()


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert cli.main(["simulate", "--config", write(tmp_path, UNIT), "--out", str(blocker / "sub")]) == 1


def test_csv_round_trip(tmp_path):
    cfg = SystemConfig(3, 2, (0.3, 0.6, 0.9), (0.1, 0.2, 0.3))
    res = run(RunConfig(cfg, PolicySpec.mwdf(), 3000, seed=2, record_stride=7))
    path = tmp_path / "t.csv"
    traces.write_trace(res, path)
    table = traces.read_trace(path)
    assert table.t.tolist() == res.series.t.tolist()
    assert table.d.tolist() == res.series.debts(cfg).tolist()
    assert table.M.tolist() == res.series.martingale(cfg).tolist()
    assert table.phi.tolist() == res.series.phi().tolist()
    assert table.u.tolist() == res.series.attempts.tolist()
    assert table.g.tolist() == res.series.deliveries.tolist()
    assert table.idle.tolist() == res.series.idle.tolist()
    assert table.scaled_d.tolist() == (res.series.debts(cfg) / res.series.phi()[:, None]).tolist()


def test_sweep_aggregates(tmp_path):
    out = tmp_path / "sw"
    path = write(tmp_path, UNIT)
    assert cli.main(["sweep", "--config", path, "--out", str(out), "--frames", "3000", "--seeds", "0-2", "--t-min", "100"]) == 0
    doc = json.loads((out / "sweep.json").read_text())
    assert doc["runs"] == 6 and doc["failures"] == []
    assert doc["policies"]["mwdf"]["runs"] == 3
    assert doc["policy_cost"]["floor"] == pytest.approx(0.5)
    labels = [row["policy"] for row in doc["policy_cost"]["table"]]
    assert labels == ["mwdf", "fixed_order"]
    assert "drift" in doc["policies"]["mwdf"]


def test_sweep_single_seed_quantiles_collapse(tmp_path):
    out = tmp_path / "one"
    assert cli.main(["sweep", "--config", write(tmp_path, UNIT), "--out", str(out), "--frames", "2000", "--t-min", "100"]) == 0
    q = json.loads((out / "sweep.json").read_text())["policies"]["mwdf"]["lil"]["sum_max"]
    assert q["min"] == q["median"] == q["max"]


def test_sweep_parallel_matches_serial(tmp_path):
    path = write(tmp_path, UNIT)
    for d, jobs in (("s", "1"), ("p", "2")):
        assert cli.main(["sweep", "--config", path, "--out", str(tmp_path / d), "--frames", "2000", "--seeds", "0-1", "--t-min", "100", "--jobs", jobs]) == 0
    a = json.loads((tmp_path / "s" / "sweep.json").read_text())
    b = json.loads((tmp_path / "p" / "sweep.json").read_text())
    assert a["policies"] == b["policies"]


def test_sweep_partial_failure(tmp_path, monkeypatch):
    real = cli._sweep_one

    def flaky(cfg, policy, seed, *rest):
        if seed == 1:
            raise RuntimeError("boom")
        return real(cfg, policy, seed, *rest)

    monkeypatch.setattr(cli, "_sweep_one", flaky)
    path = write(tmp_path, UNIT)
    out = tmp_path / "pf"
    assert cli.main(["sweep", "--config", path, "--out", str(out), "--frames", "500", "--seeds", "0-1", "--t-min", "100"]) == 0
    doc = json.loads((out / "sweep.json").read_text())
    assert len(doc["failures"]) == 2
    assert cli.main(["sweep", "--config", path, "--out", str(out), "--frames", "500", "--seeds", "1", "--t-min", "100"]) == 1


def test_analyze_reads_csv(tmp_path, capsys):
    path = write(tmp_path, UNIT)
    out = tmp_path / "o"
    cli.main(["simulate", "--config", path, "--out", str(out), "--frames", "4000", "--policy", "mwdf"])
    capsys.readouterr()
    assert cli.main(["analyze", "--config", path, str(out / "mwdf-0.csv"), "--t-min", "100"]) == 0
    doc = json.loads(capsys.readouterr().out)
    entry = doc["traces"][str(out / "mwdf-0.csv")]
    assert entry["rows"] == 4000 and not entry["decimated"]
    assert entry["spread_max"] <= 1.0


def test_config_hash_tracks_content(tmp_path):
    a = load_config(write(tmp_path, UNIT, "a.toml"))
    b = load_config(write(tmp_path, UNIT.replace("frames = 10", "frames = 11"), "b.toml"))
    c = load_config(write(tmp_path, UNIT + "\n[output]\ndirectory = 'x'\n", "c.toml"))
    assert a.config_hash() != b.config_hash()
    assert a.config_hash() == c.config_hash()


def test_experiment_validation():
    base = {"system": {"n_clients": 2, "period": 1, "reliabilities": [0.5, 0.5], "throughputs": [0.25, 0.25]}}
    cfg = parse_config({**base, "run": {"seed_count": 4}})
    assert cfg.seeds == (0, 1, 2, 3) and cfg.policies == ()
    with pytest.raises(ConfigError):
        cfg.require_policies()
    with pytest.raises(ConfigError):
        parse_config({**base, "run": {"seed_count": 2, "seeds": [1]}})
    with pytest.raises(ConfigError):
        parse_config({**base, "policies": [{"kind": "mwdf"}, {"kind": "mwdf"}]})
    with pytest.raises(ConfigError):
        parse_config({**base, "run": {"initial_frame": 10}})
    with pytest.raises(ConfigError):
        parse_config({**base, "run": {"initial_frame": 10, "initial_delivered": [11, 0]}})
    shifted = parse_config({**base, "run": {"initial_frame": 10, "initial_delivered": [5, 0]}})
    assert shifted.initial_state().delivered_counts == (5, 0)


def test_console_script_entry_point(tmp_path):
    out = subprocess.run(
        [sys.executable, "-m", "debtsched.cli", "feasibility", "--config", write(tmp_path, UNIT)],
        capture_output=True, text=True,
    )
    assert out.returncode == 0 and '"feasible": true' in out.stdout
