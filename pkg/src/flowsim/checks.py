"""Named verification suites over a scenario.

Each suite turns one scenario into rows (suite, check, statistic, target,
stderr, tolerance, pass).  Moment-style rows pass iff
|statistic - target| <= 3 stderr + extra; KS rows compare against the
critical value at alpha = 0.01; structural rows count violations and
tolerate none.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import cbi as cbi_mod
from . import fv as fv_mod
from .cbi import CbiParams, cbi_ensemble, cbi_moment_ode
from .coalescent import duality_moment
from .fv import apply_fv_jump, fv_ensemble, fv_moment_ode, invert_flow
from .laplace import cbi_laplace, cbi_mean
from .measures import ImmigrationFunction
from .noise import derive_substream
from .scaling import embed_prelimit, limit_eta, scaling_report
from .scenario import ConfigError, Scenario, build_params, initial_values, output_times
from .stats import ks_two_sample, mc_estimate, tolerance_check

__all__ = ["CheckRow", "SUITES", "run_suite", "run_checks", "halving_escape"]

DUALITY_TOL = 1e-8
# leading constant of the O(delta) allowance for the inverse-flow drift
DRIFT_ALLOWANCE = 2.0


@dataclass(frozen=True)
class CheckRow:
    suite: str
    check: str
    statistic: float
    target: float
    stderr: float
    tolerance: float
    passed: bool


def _moment_row(suite, check, est, target, extra=0.0):
    res = tolerance_check(est, target, 3.0, extra)
    return CheckRow(suite, check, est.mean, res.target, est.stderr, res.tolerance, res.passed)


def _ks_row(suite, check, a, b):
    res = ks_two_sample(a, b, alpha=0.01)
    return CheckRow(suite, check, res.statistic, 0.0, 0.0, res.critical, res.passed)


def _exact_row(suite, check, value, target, tol=0.0):
    return CheckRow(suite, check, float(value), float(target), 0.0, tol, abs(value - target) <= tol)


def _need_kind(sc: Scenario, kind, suite):
    if sc.kind != kind:
        raise ConfigError(f"{sc.source}: suite {suite!r} needs a {kind} scenario, got {sc.kind}")


def _starts(sc: Scenario, labels):
    x0 = initial_values(sc)
    return labels.copy() if x0 is None else np.asarray(x0, dtype=float)


def moments_cbi(sc: Scenario, workers=1):
    _need_kind(sc, "cbi", "moments-cbi")
    params = build_params(sc)
    labels = np.asarray(sc.labels, dtype=float)
    x0 = _starts(sc, labels)
    mech = params.mechanism
    vals = cbi_ensemble(
        params, labels, sc.horizon, sc.dt, sc.replicas, eps=sc.eps, x0=x0, seed=sc.seed, workers=workers
    )[0]
    rows = []
    for i, v in enumerate(labels):
        rate = params.immigration.value(v)
        est = mc_estimate(vals[:, i])
        rows.append(_moment_row("moments-cbi", f"mean_v{v:g}", est, cbi_mean(mech.b, rate, x0[i], sc.horizon), sc.extra))
        if sc.pmax >= 2:
            moments = cbi_moment_ode(mech, rate, x0[i], sc.pmax, [sc.horizon])[0]
            for p in range(2, sc.pmax + 1):
                rows.append(_moment_row("moments-cbi", f"p{p}_v{v:g}", mc_estimate(vals[:, i] ** p), moments[p], sc.extra))
    return rows


def moments_fv(sc: Scenario, workers=1):
    _need_kind(sc, "fv", "moments-fv")
    if sc.x0 is not None:
        raise ConfigError(f"{sc.source}: moments-fv targets assume the bridge start, drop x0")
    params = build_params(sc)
    labels = np.asarray(sc.labels, dtype=float)
    vals = fv_ensemble(params, labels, sc.horizon, sc.dt, sc.replicas, eps=sc.eps, seed=sc.seed, workers=workers)[0]
    decayed = math.exp(-params.b * sc.horizon)
    rows = []
    for i, v in enumerate(labels):
        gamma_v = params.immigration.value(v)
        mean_target = v * decayed + gamma_v * (1.0 - decayed)
        rows.append(_moment_row("moments-fv", f"mean_v{v:g}", mc_estimate(vals[:, i]), mean_target, sc.extra))
        if sc.pmax >= 2:
            moments = fv_moment_ode(params, float(v), sc.pmax, [sc.horizon])[0]
            for p in range(2, sc.pmax + 1):
                rows.append(_moment_row("moments-fv", f"p{p}_v{v:g}", mc_estimate(vals[:, i] ** p), moments[p], sc.extra))
    return rows


def laplace_suite(sc: Scenario, workers=1):
    _need_kind(sc, "cbi", "laplace")
    params = build_params(sc)
    labels = np.asarray(sc.labels, dtype=float)
    x0 = _starts(sc, labels)
    vals = cbi_ensemble(
        params, labels, sc.horizon, sc.dt, sc.replicas, eps=sc.eps, x0=x0, seed=sc.seed, workers=workers
    )[0]
    rows = []
    for i, v in enumerate(labels):
        rate = params.immigration.value(v)
        for lam in sc.lambdas:
            target = cbi_laplace(params.mechanism, rate, x0[i], lam, sc.horizon)
            est = mc_estimate(np.exp(-lam * vals[:, i]))
            rows.append(_moment_row("laplace", f"lam{lam:g}_v{v:g}", est, target, sc.extra))
    return rows


def duality_suite(sc: Scenario, workers=1):
    _need_kind(sc, "fv", "duality")
    params = build_params(sc)
    if params.b != 0:
        raise ConfigError(f"{sc.source}: the moment duality holds for b = 0 only")
    ts = [float(t) for t in output_times(sc)]
    rows = []
    for v in sc.labels:
        moments = fv_moment_ode(params, float(v), sc.pmax, ts)
        for p in range(1, sc.pmax + 1):
            for j, t in enumerate(ts):
                dual = duality_moment(params.sigma, params.nu, float(v), p, t)
                rows.append(_exact_row("duality", f"p{p}_v{v:g}_t{t:g}", moments[j, p], dual, DUALITY_TOL))
    return rows


def _violation_count(values, unit):
    bad = int((np.diff(values, axis=-1) < 0).sum()) + int((values[..., 0] < 0).sum())
    if unit:
        bad += int((values[..., -1] > 1).sum())
    return bad


def flow_properties(sc: Scenario, workers=1):
    if sc.kind not in ("cbi", "fv"):
        raise ConfigError(f"{sc.source}: suite 'flow-properties' needs a cbi or fv scenario")
    params = build_params(sc)
    ensemble = cbi_ensemble if sc.kind == "cbi" else fv_ensemble
    labels = np.asarray(sc.labels, dtype=float)
    x0 = _starts(sc, labels)
    n_steps = int(round(sc.horizon / sc.dt))
    if n_steps < 2:
        raise ConfigError(f"{sc.source}: restart check needs horizon >= 2 dt")
    tmid = (n_steps // 2) * sc.dt

    first = ensemble(
        params, labels, sc.horizon, sc.dt, sc.replicas, eps=sc.eps, x0=x0, seed=sc.seed,
        times=[tmid, sc.horizon], workers=workers,
    )
    restarted = ensemble(
        params, labels, sc.horizon - tmid, sc.dt, sc.replicas, eps=sc.eps, x0=first[0],
        seed=sc.seed + 1, workers=workers,
    )[0]
    fresh = ensemble(
        params, labels, sc.horizon, sc.dt, sc.replicas, eps=sc.eps, x0=x0, seed=sc.seed + 2, workers=workers,
    )[0]

    unit = sc.kind == "fv"
    bad = sum(_violation_count(a, unit) for a in (first[0], first[1], restarted, fresh))
    rows = [_exact_row("flow-properties", "state_monotone_range", bad, 0)]
    for i, v in enumerate(labels):
        rows.append(_ks_row("flow-properties", f"restart_ks_v{v:g}", fresh[:, i], restarted[:, i]))

    if sc.kind == "cbi" and labels.size >= 2:
        base = fresh[:, 0]
        inc = fresh[:, -1] - fresh[:, 0]
        corr = float(np.corrcoef(base, inc)[0, 1])
        bound = 3.0 / math.sqrt(sc.replicas)
        rows.append(
            CheckRow("flow-properties", "increment_base_corr", corr, 0.0,
                     1.0 / math.sqrt(sc.replicas), bound, abs(corr) <= bound)
        )
        rate_gap = params.immigration.value(labels[-1]) - params.immigration.value(labels[0])
        indep = CbiParams(params.mechanism, ImmigrationFunction.constant(float(rate_gap)))
        span = float(labels[-1] - labels[0])
        ind_vals = cbi_ensemble(
            indep, [span], sc.horizon, sc.dt, sc.replicas, eps=sc.eps,
            x0=[float(x0[-1] - x0[0])], seed=sc.seed + 3, workers=workers,
        )[0][:, 0]
        rows.append(_ks_row("flow-properties", "increment_indep_ks", inc, ind_vals))

    if sc.kind == "fv":
        rng = derive_substream(sc.seed, 0, "jump-map-cases").generator
        remaining = sc.property_cases
        bad_cases = 0
        width = 8
        while remaining > 0:
            m = min(remaining, 1 << 17)
            x = np.sort(rng.random((m, width)), axis=1)
            z = 1.0 - rng.random((m, 1))
            u = rng.random((m, 1))
            y = apply_fv_jump(x, z, u)
            bad_cases += int(np.any((np.diff(y, axis=1) < 0) | (y[:, :1] < 0) | (y[:, -1:] > 1), axis=1).sum())
            remaining -= m
        rows.append(_exact_row("flow-properties", "jump_map_cases", bad_cases, 0))
    return rows


def generator_suite(sc: Scenario, workers=1):
    _need_kind(sc, "fv", "generator")
    params = build_params(sc)
    if not params.nu.is_zero or params.b != 0:
        raise ConfigError(f"{sc.source}: the generator suite needs b = 0 and no jumps")
    labels = np.asarray(sc.labels, dtype=float)
    sig2 = params.sigma**2
    vals = fv_ensemble(params, labels, sc.dt, sc.dt, sc.replicas, eps=sc.eps, seed=sc.seed, workers=workers)[0]
    inc = vals - labels[None, :]
    rows = []
    for i in range(labels.size):
        for j in range(i, labels.size):
            est = mc_estimate(inc[:, i] * inc[:, j] / sc.dt)
            target = sig2 * labels[i] * (1.0 - labels[j])
            rows.append(_moment_row("generator", f"cov_v{labels[i]:g}_v{labels[j]:g}", est, target, sc.extra))

    grid = np.linspace(0.0, 1.0, sc.grid)
    dense_r = sc.drift_replicas if sc.drift_replicas is not None else sc.replicas
    dense = fv_ensemble(params, grid, sc.delta, sc.dt, dense_r, eps=sc.eps, seed=sc.seed + 4, workers=workers)[0]
    for r in sc.queries:
        back = invert_flow(grid, dense, float(r))
        est = mc_estimate((back - r) / sc.delta)
        rows.append(_moment_row("generator", f"inverse_drift_r{r:g}", est, sig2 * (0.5 - r), DRIFT_ALLOWANCE * sc.delta))
    return rows


def martingale_suite(sc: Scenario, workers=1):
    if sc.kind not in ("cbi", "fv"):
        raise ConfigError(f"{sc.source}: suite 'martingale' needs a cbi or fv scenario")
    if len(sc.labels) < 2:
        raise ConfigError(f"{sc.source}: martingale suite needs at least two labels")
    params = build_params(sc)
    ensemble = cbi_ensemble if sc.kind == "cbi" else fv_ensemble
    labels = np.asarray(sc.labels, dtype=float)
    x0 = _starts(sc, labels)
    ens = ensemble(
        params, labels, sc.horizon + sc.delta, sc.dt, sc.replicas, eps=sc.eps, x0=x0,
        seed=sc.seed, times=[sc.horizon, sc.horizon + sc.delta], workers=workers,
    )
    before = ens[0][:, -1] - ens[0][:, 0]
    after = ens[1][:, -1] - ens[1][:, 0]
    imm = params.immigration
    gamma_pair = float(imm.value(labels[-1]) - imm.value(labels[0]))
    # indicator integrand: the squared pairing equals the pairing itself
    if sc.kind == "cbi":
        resid = cbi_mod.martingale_residual(params.mechanism, before, before, after, gamma_pair, sc.delta)
    else:
        resid = fv_mod.martingale_residual(params, before, before, after, gamma_pair, sc.delta)
    return [_moment_row("martingale", "quadratic_residual", mc_estimate(resid), 0.0, sc.extra)]


def scaling_suite(sc: Scenario, workers=1):
    _need_kind(sc, "scaling", "scaling")
    family = build_params(sc)
    mech = family.limit.mechanism
    rows = []
    for k in sc.ks:
        pk = embed_prelimit(family.limit, sc.window, k)
        reach = min(sc.window, float(k))
        rows.append(_exact_row("scaling", f"embed_sigma_k{k}", pk.sigma * k, mech.sigma))
        rows.append(_exact_row("scaling", f"embed_drift_k{k}", pk.b * k, mech.b))
        kept = [(z, w) for z, w in mech.measure.atoms if z <= k]
        mass_gap = abs(sum(w for _, w in pk.nu.atoms) - sum(w for _, w in kept))
        size_gap = max((abs(zk * k - z) for (zk, _), (z, _) in zip(pk.nu.atoms, kept)), default=0.0)
        rows.append(_exact_row("scaling", f"embed_atom_mass_k{k}", mass_gap, 0.0))
        rows.append(_exact_row("scaling", f"embed_atom_size_k{k}", size_gap, 0.0))
        rows.append(_exact_row("scaling", f"embed_rate_k{k}", pk.immigration.value(reach / k) * k, limit_eta(family.limit, reach)))
    report = scaling_report(
        family, sc.labels, sc.horizon, sc.dt, sc.replicas, sc.seed, eps=sc.eps, extra=sc.extra, workers=workers
    )
    for r in report:
        name = f"k{r.k}_v{r.label:g}_{r.metric}" if r.k else f"ladder_v{r.label:g}_{r.metric}"
        rows.append(CheckRow("scaling", name, r.value, r.target, r.stderr, r.tolerance, r.passed))
    return rows


SUITES = {
    "moments-cbi": (moments_cbi, "half-line flow moments against the closed mean and the moment system"),
    "moments-fv": (moments_fv, "unit-interval flow moments against the closed mean and the moment system"),
    "laplace": (laplace_suite, "empirical Laplace transform against the cumulant solution"),
    "duality": (duality_suite, "deterministic moment identity against the block-counting chain"),
    "flow-properties": (flow_properties, "path structure: monotone states, jump map, restarts, increment independence"),
    "generator": (generator_suite, "small-time covariance and inverse-flow drift of the diffusion bridge"),
    "martingale": (martingale_suite, "compensated quadratic increments average to zero"),
    "scaling": (scaling_suite, "embedding identities and the convergence ladder to the half-line limit"),
}


def run_suite(name, sc: Scenario, workers=1):
    if name not in SUITES:
        known = ", ".join(sorted(SUITES))
        raise ConfigError(f"{sc.source}: unknown check {name!r}; known checks: {known}")
    return SUITES[name][0](sc, workers)


def run_checks(sc: Scenario, workers=1):
    if not sc.checks:
        raise ConfigError(f"{sc.source}: scenario lists no checks (add `check = <suite>` lines)")
    rows = []
    for name in sc.checks:
        rows.extend(run_suite(name, sc, workers))
    return rows


def halving_escape(sc: Scenario, workers=1):
    """Discretization escape hatch over run_checks: when a row fails, the
    scenario reruns at dt/2 and the row is forgiven only if it then passes
    or its defect shrank by at least 1.5x (a defect that survives halving
    is a real one, not discretization error).

    Returns (rows, halved_rows, passed): the first-run rows, the dt/2 rows
    consulted for the failing ones (empty when nothing failed), and the
    overall verdict.
    """
    rows = run_checks(sc, workers=workers)
    if all(r.passed for r in rows):
        return rows, [], True
    halved = run_checks(replace(sc, dt=sc.dt / 2.0), workers=workers)
    by_name = {(r.suite, r.check): r for r in halved}
    consulted = []
    verdict = True
    for r in rows:
        if r.passed:
            continue
        r2 = by_name.get((r.suite, r.check))
        if r2 is None:
            verdict = False
            continue
        consulted.append(r2)
        defect = abs(r.statistic - r.target)
        defect2 = abs(r2.statistic - r2.target)
        if not (r2.passed or 1.5 * defect2 <= defect):
            verdict = False
    return rows, consulted, verdict
