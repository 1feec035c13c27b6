# check suite registry, row structure, and the step-halving escape

import pytest

from flowsim import ConfigError, halving_escape, parse_scenario, run_checks
from flowsim.checks import SUITES, run_suite

DRIFT_TEXT = (
    "kind = cbi\nb = 0.4\nlabel = 1.0\nhorizon = 1.0\ndt = 0.1\n"
    "replicas = 2\nseed = 1\ncheck = moments-cbi\npmax = 1\n"
)


def test_suite_registry():
    assert set(SUITES) == {
        "duality",
        "laplace",
        "moments-cbi",
        "moments-fv",
        "flow-properties",
        "generator",
        "martingale",
        "scaling",
    }
    for fn, description in SUITES.values():
        assert callable(fn) and description


def test_unknown_suite_listed():
    sc = parse_scenario(DRIFT_TEXT)
    with pytest.raises(ConfigError, match="known checks"):
        run_suite("momentz", sc)


def test_row_structure():
    rows = run_checks(parse_scenario(DRIFT_TEXT))
    assert rows
    for r in rows:
        assert r.suite == "moments-cbi"
        assert isinstance(r.check, str)
        assert isinstance(r.passed, bool)
        assert r.tolerance >= 0.0


def test_deterministic_drift_gap_fails_plain_run():
    # no noise: stderr 0, so the Euler gap lands outside the band
    rows = run_checks(parse_scenario(DRIFT_TEXT))
    assert not all(r.passed for r in rows)


def test_halving_escape_forgives_first_order_bias():
    # the same gap halves with the step, comfortably past the 1.5 factor
    rows, consulted, verdict = halving_escape(parse_scenario(DRIFT_TEXT))
    assert verdict
    assert not all(r.passed for r in rows)
    assert consulted
    gap0 = abs(rows[0].statistic - rows[0].target)
    gap1 = abs(consulted[0].statistic - consulted[0].target)
    assert 1.5 * gap1 <= gap0


def test_halving_escape_skips_clean_runs():
    clean = (
        "kind = fv\nsigma = 1.0\nlabel = 0.5\nhorizon = 1.0\ndt = 0.001\n"
        "replicas = 1\nseed = 1\ncheck = duality\npmax = 2\noutput_time = 0.5\n"
    )
    rows, consulted, verdict = halving_escape(parse_scenario(clean))
    assert verdict and all(r.passed for r in rows) and consulted == []


def test_halving_escape_rejects_structural_defect():
    # jumps folded below the cutoff keep the first two moments but not the
    # third; that defect does not shrink with the step, so no forgiveness
    text = (
        "kind = cbi\nsigma = 0\natom = 3.0:0.2\neps = 5.0\nlabel = 1.0\nhorizon = 0.5\n"
        "dt = 0.02\nreplicas = 4000\nseed = 2\ncheck = moments-cbi\npmax = 3\n"
    )
    rows, consulted, verdict = halving_escape(parse_scenario(text))
    assert not verdict
    assert any(not r.passed for r in rows)


def test_missing_check_list_rejected():
    sc = parse_scenario(
        "kind = cbi\nsigma = 0.5\nlabel = 0.5\nhorizon = 0.2\ndt = 0.02\nreplicas = 64\nseed = 1\n"
    )
    with pytest.raises(ConfigError, match="no checks"):
        run_checks(sc)


def test_scaling_suite_rows():
    sc = parse_scenario(
        "kind = scaling\nsigma = 0.5\nb = 0.3\nlabel = 0.5\nhorizon = 0.2\ndt = 0.02\n"
        "replicas = 64\nseed = 1\nwindow = 1\nk = 1\nk = 2\ngamma_knot = 0:0\n"
        "gamma_knot = 1:0.15\nextra = 0.1\ncheck = scaling\n"
    )
    rows = run_checks(sc)
    assert {r.suite for r in rows} == {"scaling"}
    names = [r.check for r in rows]
    assert any(n.startswith("embed_") for n in names)
    assert any(n.startswith("ladder_") for n in names)
