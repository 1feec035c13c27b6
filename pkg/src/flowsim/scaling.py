"""Embedding a half-line limit model into unit-interval prelimits.

The k-th prelimit shrinks space by k and stretches time by k: simulating
the embedded unit-interval flow to horizon k*T at labels a_i/k and
multiplying by k should reproduce the limit flow at time T, with error
vanishing along the k ladder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cbi import CbiParams, cbi_ensemble, cbi_moment_ode
from .fv import FvParams, fv_ensemble
from .laplace import cbi_mean
from .measures import ImmigrationFunction, JumpMeasure, PowerPart, integrate_measure
from .stats import ks_two_sample, mc_estimate

__all__ = ["ScalingFamily", "embed_prelimit", "limit_eta", "scaling_report", "ScalingRow"]


def limit_eta(limit: CbiParams, v):
    """Drift profile of the limit: the prelimit mean-reversion pulls
    toward eta = gamma / b, since the immigration rate enters the limit
    flow only through the product b * eta."""
    mech = limit.mechanism
    if mech.b == 0.0:
        if any(g != 0.0 for _, g in limit.immigration.knots):
            raise ValueError("a limit with b = 0 cannot carry immigration in this family")
        return 0.0 * np.asarray(v, dtype=float) if np.ndim(v) else 0.0
    return limit.immigration.value(v) / mech.b


def embed_prelimit(limit: CbiParams, a, k) -> FvParams:
    """Canonical prelimit: sigma/k diffusion, b/k drift, the jump measure
    pushed forward by z -> z/k and truncated to (0, k], and the schedule
    eta(min(kv, a))/k with eta = gamma/b.  Exact hypotheses by
    construction; the only loss is jump mass beyond k.
    """
    if a <= 0:
        raise ValueError("window must be positive")
    k = int(k)
    if k < 1:
        raise ValueError("k must be a positive integer")
    eta_top = float(limit_eta(limit, a))
    if k < eta_top:
        raise ValueError(f"k={k} below the drift profile top {eta_top}; embedded values would leave [0, 1]")
    mech = limit.mechanism
    atoms = tuple((z / k, w) for z, w in mech.measure.atoms if z <= k)
    power = None
    if mech.measure.power is not None:
        part = mech.measure.power
        power = PowerPart(part.c * k ** (part.exponent + 1.0), part.exponent, min(part.cutoff / k, 1.0))
    nu_k = JumpMeasure(atoms, power, unit_interval=True)
    # knots land at a_j/k; the window edge always becomes a knot so the
    # constant extension beyond it sits at eta(min(a, k))/k
    reach = min(a, float(k))
    knots = [(v / k, float(limit_eta(limit, v)) / k) for v, _ in limit.immigration.knots if v < reach]
    knots.append((reach / k, float(limit_eta(limit, reach)) / k))
    if knots[0][0] > 0.0:
        knots.insert(0, (0.0, float(limit_eta(limit, 0.0)) / k))
    gamma_k = ImmigrationFunction(tuple(knots), unit_interval=True)
    return FvParams(sigma=mech.sigma / k, b=mech.b / k, immigration=gamma_k, nu=nu_k)


@dataclass(frozen=True)
class ScalingFamily:
    limit: CbiParams
    window: float
    ks: tuple

    def __post_init__(self):
        object.__setattr__(self, "ks", tuple(int(k) for k in self.ks))
        if any(k < 1 for k in self.ks):
            raise ValueError("ladder entries must be positive integers")
        for k in self.ks:
            embed_prelimit(self.limit, self.window, k)

    def prelimit(self, k) -> FvParams:
        return embed_prelimit(self.limit, self.window, k)


@dataclass(frozen=True)
class ScalingRow:
    k: int
    label: float
    metric: str
    value: float
    target: float
    stderr: float
    tolerance: float
    passed: bool


def _limit_targets(limit: CbiParams, labels, horizon):
    rows = {}
    for v in labels:
        rate = float(limit.immigration.value(v))
        mean = cbi_mean(limit.mechanism.b, rate, v, horizon)
        m2 = cbi_moment_ode(limit.mechanism, rate, v, 2, [horizon])[0, 2]
        rows[v] = (mean, float(m2))
    return rows


def scaling_report(family: ScalingFamily, labels, horizon, dt, replicas, seed, eps=None, extra=0.0, workers=1):
    """Convergence ladder: per-(k, label) moment and KS rows plus the
    nonincreasing-error rows across the ladder.

    Only the last rung is held to a tolerance (3 SE + extra for moments,
    the KS critical value for distances); earlier rungs are informational
    and the ladder rows enforce the nonincreasing trend with 1 SE slack.
    replicas may be an integer (same count per rung) or one count per k.
    The direct limit simulation supplies the KS reference sample.
    """
    labels = [float(v) for v in labels]
    ks = family.ks
    if np.ndim(replicas) == 0:
        reps = {k: int(replicas) for k in ks}
    else:
        reps = dict(zip(ks, (int(r) for r in replicas)))
    targets = _limit_targets(family.limit, labels, horizon)
    limit_n = max(reps.values())
    limit_sample = cbi_ensemble(family.limit, labels, horizon, dt, limit_n, seed=seed, workers=workers)[0]
    rows = []
    mean_err = {v: [] for v in labels}
    ks_stat = {v: [] for v in labels}
    last = ks[-1]
    for i, k in enumerate(ks):
        params = family.prelimit(k)
        scaled_labels = np.asarray(labels) / k
        sample = fv_ensemble(
            params, scaled_labels, horizon * k, dt / k, reps[k], eps=eps, seed=seed + 1 + i, workers=workers
        )[0]
        sample = sample * k
        for j, v in enumerate(labels):
            mean_target, m2_target = targets[v]
            est = mc_estimate(sample[:, j])
            gap = abs(est.mean - mean_target)
            tol = 3.0 * est.stderr + extra if k == last else math.inf
            rows.append(ScalingRow(k, v, "mean", est.mean, mean_target, est.stderr, tol, bool(gap <= tol)))
            est2 = mc_estimate(sample[:, j] ** 2)
            gap2 = abs(est2.mean - m2_target)
            tol2 = 3.0 * est2.stderr + extra if k == last else math.inf
            rows.append(ScalingRow(k, v, "second_moment", est2.mean, m2_target, est2.stderr, tol2, bool(gap2 <= tol2)))
            ks_res = ks_two_sample(sample[:, j], limit_sample[:, j], alpha=0.01)
            ks_tol = ks_res.critical if k == last else math.inf
            rows.append(ScalingRow(k, v, "ks_distance", ks_res.statistic, 0.0, 0.0, ks_tol, bool(ks_res.statistic <= ks_tol)))
            mean_err[v].append((gap, est.stderr))
            ks_stat[v].append((ks_res.statistic, ks_res.critical / 1.628))
    for v in labels:
        for name, seq in (("mean_error_ladder", mean_err[v]), ("ks_ladder", ks_stat[v])):
            ok = all(math.isfinite(e) for e, _ in seq)
            value = 0.0
            slack_at = 0.0
            margin = -math.inf
            for (e_prev, s_prev), (e_next, s_next) in zip(seq, seq[1:]):
                slack = s_prev + s_next
                m = (e_next - e_prev) - slack
                if m > margin:
                    margin = m
                    value = e_next - e_prev
                    slack_at = slack
            if margin > 0.0:
                ok = False
            rows.append(ScalingRow(0, v, name, value, 0.0, 0.0, slack_at, ok))
    return rows
