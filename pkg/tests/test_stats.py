# Monte Carlo summaries, KS distance and tolerance gating

import numpy as np
import pytest

from flowsim.stats import ks_critical, ks_two_sample, mc_estimate, tolerance_check


def test_mc_estimate_basic():
    est = mc_estimate([1.0, 1.0, 1.0, 1.0])
    assert est.mean == 1.0
    assert est.stderr == 0.0
    assert est.n == 4


def test_mc_estimate_two_values():
    est = mc_estimate([0.0, 2.0])
    assert est.mean == pytest.approx(1.0)
    # sample sd sqrt(2), stderr sd/sqrt(2) = 1
    assert est.stderr == pytest.approx(1.0)


def test_mc_estimate_uniform():
    rng = np.random.default_rng(0)
    x = rng.random(100_000)
    est = mc_estimate(x)
    assert est.mean == pytest.approx(0.5, abs=3.0 * est.stderr)
    assert est.stderr == pytest.approx(0.2886751345948129 / np.sqrt(100_000), rel=0.02)


def test_mc_estimate_needs_two():
    with pytest.raises(ValueError):
        mc_estimate([1.0])


def test_ks_critical_values():
    # c(alpha) * sqrt((n+m)/(n*m)) with c = sqrt(-log(alpha/2)/2)
    assert ks_critical(100, 100, 0.01) == pytest.approx(
        1.6276236307187293 * np.sqrt(0.02), rel=1e-12
    )
    assert ks_critical(400, 100, 0.05) == pytest.approx(
        1.3581015157406195 * np.sqrt(500.0 / 40_000.0), rel=1e-12
    )


def test_ks_identical_samples():
    x = np.linspace(0.0, 1.0, 500)
    res = ks_two_sample(x, x.copy())
    assert res.statistic == 0.0
    assert res.passed


def test_ks_disjoint_samples():
    res = ks_two_sample(np.zeros(200), np.ones(200))
    assert res.statistic == pytest.approx(1.0)
    assert not res.passed


def test_ks_same_distribution_passes():
    rng = np.random.default_rng(3)
    res = ks_two_sample(rng.standard_normal(5000), rng.standard_normal(5000), alpha=0.01)
    assert res.alpha == 0.01
    assert res.statistic <= res.critical
    assert res.passed


def test_ks_shifted_fails():
    rng = np.random.default_rng(4)
    res = ks_two_sample(rng.standard_normal(5000), rng.standard_normal(5000) + 0.2)
    assert not res.passed


def test_tolerance_check_pass_fail():
    est = mc_estimate([0.9, 1.0, 1.1, 1.0])
    ok = tolerance_check(est, 1.0)
    assert ok.passed and ok.tolerance == pytest.approx(3.0 * est.stderr)
    far = tolerance_check(est, 2.0)
    assert not far.passed
    widened = tolerance_check(est, 2.0, extra=2.0)
    assert widened.passed
    assert widened.tolerance == pytest.approx(3.0 * est.stderr + 2.0)


def test_tolerance_check_k_sigma():
    est = mc_estimate([0.0, 1.0, 0.0, 1.0, 0.0, 1.0])
    res = tolerance_check(est, 0.5, k_sigma=1.0)
    assert res.tolerance == pytest.approx(est.stderr)
