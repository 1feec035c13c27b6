# command-line behaviour: subcommands, CSV format, seeds, exit codes

import os
import subprocess
import sys

import numpy as np
import pytest

from flowsim.cli import emit_csv, main

CBI_CFG = """
kind = cbi
sigma = 0.6
b = 0.4
label = 0.5
label = 1.0
horizon = 0.1
dt = 0.01
replicas = 40
seed = 5
output_time = 0.05
output_time = 0.1
"""


@pytest.fixture
def cfg(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text(CBI_CFG)
    return str(p)


def run_cli(args, env_extra=None):
    env = dict(os.environ)
    env.pop("FLOWSIM_SEED", None)
    if env_extra:
        env.update(env_extra)
    return subprocess.run(
        [sys.executable, "-m", "flowsim.cli", *args],
        capture_output=True,
        text=True,
        env=env,
    )


def test_emit_csv_round_trip(tmp_path):
    path = tmp_path / "x.csv"
    emit_csv([(0.1, 1, "a", True)], ("t", "n", "s", "ok"), str(path), comment="note")
    text = path.read_text()
    lines = text.splitlines()
    assert lines[0] == "# note"
    assert lines[1] == "t,n,s,ok"
    assert lines[2] == "0.10000000000000001,1,a,True"
    # 17 significant digits recover the double exactly
    assert float(lines[2].split(",")[0]) == 0.1


def test_emit_csv_empty_rows(tmp_path):
    path = tmp_path / "x.csv"
    emit_csv([], ("a", "b"), str(path))
    assert path.read_text() == "a,b\n"


def test_simulate_writes_paths(cfg, tmp_path):
    out = str(tmp_path / "paths.csv")
    assert main(["simulate", "--scenario", cfg, "--out", out]) == 0
    lines = open(out).read().splitlines()
    assert lines[0].startswith("# flowsim scenario=run.cfg seed=5 overrides=none")
    assert lines[1] == "time,replica,label,value"
    # 2 times x 40 replicas x 2 labels
    assert len(lines) == 2 + 2 * 40 * 2
    first = lines[2].split(",")
    assert float(first[0]) == 0.05 and first[1] == "0"


def test_simulate_reruns_identical(cfg, tmp_path):
    a, b = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
    assert main(["simulate", "--scenario", cfg, "--out", a]) == 0
    assert main(["simulate", "--scenario", cfg, "--out", b]) == 0
    assert open(a, "rb").read() == open(b, "rb").read()


def test_simulate_workers_identical(cfg, tmp_path):
    a, b = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
    assert main(["simulate", "--scenario", cfg, "--out", a, "--workers", "1"]) == 0
    assert main(["simulate", "--scenario", cfg, "--out", b, "--workers", "3"]) == 0
    assert open(a, "rb").read() == open(b, "rb").read()


def test_overrides_recorded_and_applied(cfg, tmp_path):
    out = str(tmp_path / "o.csv")
    assert main(["simulate", "--scenario", cfg, "--set", "replicas=5", "--out", out]) == 0
    lines = open(out).read().splitlines()
    assert "overrides=replicas=5" in lines[0]
    assert len(lines) == 2 + 2 * 5 * 2


def test_env_seed_override(cfg, tmp_path):
    out1 = str(tmp_path / "s1.csv")
    out2 = str(tmp_path / "s2.csv")
    r = run_cli(["simulate", "--scenario", cfg, "--out", out1], {"FLOWSIM_SEED": "99"})
    assert r.returncode == 0
    header = open(out1).read().splitlines()[0]
    assert "seed=99" in header and "env_seed=99" in header
    r2 = run_cli(["simulate", "--scenario", cfg, "--set", "seed=99", "--out", out2])
    assert r2.returncode == 0
    body1 = open(out1).read().splitlines()[1:]
    body2 = open(out2).read().splitlines()[1:]
    assert body1 == body2


def test_env_seed_must_be_integer(cfg):
    r = run_cli(["simulate", "--scenario", cfg], {"FLOWSIM_SEED": "abc"})
    assert r.returncode == 2
    assert "FLOWSIM_SEED" in r.stderr


def test_stdout_default(cfg):
    r = run_cli(["simulate", "--scenario", cfg, "--set", "replicas=2"])
    assert r.returncode == 0
    assert r.stdout.splitlines()[1] == "time,replica,label,value"


def test_list_checks():
    r = run_cli(["list-checks"])
    assert r.returncode == 0
    names = [line.split(":")[0] for line in r.stdout.splitlines()]
    assert "duality" in names and "scaling" in names
    assert len(names) == 8


def test_verify_writes_report(cfg, tmp_path):
    out = str(tmp_path / "v.csv")
    code = main([
        "verify", "--scenario", cfg, "--set", "check=moments-cbi",
        "--set", "replicas=2000", "--set", "dt=0.005", "--set", "pmax=1",
        "--set", "extra=0.05", "--out", out,
    ])
    lines = open(out).read().splitlines()
    assert lines[1] == "suite,check,statistic,target,stderr,tolerance,pass"
    assert code == 0
    assert all(line.endswith("True") for line in lines[2:])


def test_verify_failure_exit_code(tmp_path):
    # noise-free drift: zero stderr, so the Euler gap fails the band
    p = tmp_path / "drift.cfg"
    p.write_text(
        "kind = cbi\nb = 0.4\nlabel = 1.0\nhorizon = 1.0\ndt = 0.1\n"
        "replicas = 2\nseed = 1\ncheck = moments-cbi\npmax = 1\n"
    )
    out = str(tmp_path / "v.csv")
    code = main(["verify", "--scenario", str(p), "--out", out])
    assert code == 1
    lines = open(out).read().splitlines()
    assert any(line.endswith("False") for line in lines[2:])


def test_missing_scenario_file():
    r = run_cli(["simulate", "--scenario", "/nonexistent/x.cfg"])
    assert r.returncode == 2
    assert "flowsim: error:" in r.stderr


def test_bad_override_exit_code(cfg):
    r = run_cli(["simulate", "--scenario", cfg, "--set", "nope=1"])
    assert r.returncode == 2


def test_bad_workers(cfg):
    r = run_cli(["simulate", "--scenario", cfg, "--workers", "0"])
    assert r.returncode == 2


def test_simulate_rejects_scaling(tmp_path):
    p = tmp_path / "s.cfg"
    p.write_text(
        "kind = scaling\nsigma = 0.5\nb = 0.3\nlabel = 0.5\nhorizon = 1\ndt = 0.01\n"
        "replicas = 10\nseed = 1\nwindow = 2\nk = 2\ngamma_knot = 0:0\ngamma_knot = 2:0.3\n"
    )
    r = run_cli(["simulate", "--scenario", str(p)])
    assert r.returncode == 2
