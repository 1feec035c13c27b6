"""Coupled simulation of the half-line (branching-with-immigration) flow.

A flow state tracks one path of Y_t(v) at finitely many labels v_1 < ... <
v_p.  Coupling across labels comes from shared noise: nested Gaussian
partition cells for the diffusion and shared jump atoms thinned by their
uniform level.  Small jumps below the truncation level are folded into the
diffusion variance; their mean is carried by a compensating drift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .measures import (
    BranchingMechanism,
    ImmigrationFunction,
    default_eps,
    integrate_measure,
    sample_jump,
)
from .noise import derive_substream, gaussian_partition_increments, sample_atoms
from .odes import integrate

__all__ = [
    "CbiParams",
    "FlowState",
    "step_cbi_coupled",
    "simulate_cbi_flow",
    "cbi_ensemble",
    "cbi_moment_ode",
    "pair_step_function",
]


@dataclass(frozen=True)
class CbiParams:
    mechanism: BranchingMechanism
    immigration: ImmigrationFunction

    def __post_init__(self):
        if self.immigration.unit_interval:
            raise ValueError("half-line flow needs a half-line immigration schedule")


@dataclass
class FlowState:
    """Values of one path at increasing labels; ordered and nonnegative."""

    labels: np.ndarray
    values: np.ndarray
    clock: float = 0.0

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.labels.ndim != 1 or self.labels.size == 0:
            raise ValueError("need at least one label")
        if np.any(np.diff(self.labels) <= 0):
            raise ValueError("labels must strictly increase")
        if self.values.shape != self.labels.shape:
            raise ValueError("values must match labels")
        if self.values.size and self.values[0] < 0:
            raise ValueError("values must be nonnegative")
        if np.any(np.diff(self.values) < 0):
            raise ValueError("values must be nondecreasing across labels")


def _sigma_eff(mech: BranchingMechanism, eps):
    return math.sqrt(mech.sigma**2 + integrate_measure(mech.measure, 2, 0.0, eps))


def _drift_rate(mech: BranchingMechanism, eps):
    # linear decay plus the compensator of the jumps that are simulated
    return mech.b + integrate_measure(mech.measure, 1, lo=eps)


def step_cbi_coupled(state: FlowState, params: CbiParams, dt, eps, diffusion_rng, atoms=None, jump_rng=None):
    """One explicit step; all coefficients use the pre-step values.

    atoms may be passed explicitly (they are then applied as-is); otherwise
    they are sampled from jump_rng over levels (0, y_p].
    """
    y = state.values
    mech = params.mechanism
    cells = gaussian_partition_increments(diffusion_rng, dt, np.concatenate([[0.0], y]))
    diffusion = np.cumsum(cells) * _sigma_eff(mech, eps)
    gamma_vals = params.immigration.value(state.labels)
    drift = dt * (gamma_vals - _drift_rate(mech, eps) * y)
    if atoms is None:
        atoms = sample_atoms(mech.measure, eps, dt, float(y[-1]), jump_rng)
    jump_add = np.zeros_like(y)
    for atom in atoms:
        jump_add += atom.size * (atom.level <= y)
    new = np.maximum(y + diffusion + drift + jump_add, 0.0)
    np.maximum.accumulate(new, out=new)
    return FlowState(state.labels, new, state.clock + dt)


def _steps_for(horizon, dt):
    n = int(round(horizon / dt))
    if abs(n * dt - horizon) > 1e-9 * max(1.0, horizon):
        raise ValueError("horizon must be an integer number of steps")
    return n


def simulate_cbi_flow(
    params: CbiParams,
    labels,
    horizon,
    dt,
    x0=None,
    eps=None,
    mode="coupled",
    seed=0,
    replica=0,
    times=None,
):
    """Simulate one path, returning states at the requested times.

    mode="coupled" runs all labels under shared noise; mode="independent"
    builds the path from independent label-increment processes and prefix
    sums (the two agree in law).
    """
    labels = np.asarray(labels, dtype=float)
    x0 = labels.copy() if x0 is None else np.asarray(x0, dtype=float)
    if eps is None:
        eps = default_eps(params.mechanism.measure)
    times = [horizon] if times is None else list(times)
    snap = {_steps_for(t, dt): i for i, t in enumerate(times)}
    n_steps = max(snap) if snap else 0
    out = [None] * len(times)

    if mode == "coupled":
        state = FlowState(labels, x0)
        if 0 in snap:
            out[snap[0]] = state
        d_rng = derive_substream(seed, replica, "diffusion").generator
        j_rng = derive_substream(seed, replica, "jumps").generator
        for k in range(1, n_steps + 1):
            state = step_cbi_coupled(state, params, dt, eps, d_rng, jump_rng=j_rng)
            if k in snap:
                out[snap[k]] = state
        return out

    if mode != "independent":
        raise ValueError(f"unknown mode {mode!r}")
    gamma0 = params.immigration.value(0.0)
    gamma_vals = params.immigration.value(labels)
    # label increments are independent one-point processes; the base
    # component carries the mass below the first label
    starts = np.concatenate([[0.0], np.diff(x0, prepend=0.0)])
    rates = np.concatenate([[gamma0], np.diff(gamma_vals, prepend=gamma0)])
    if np.any(starts < 0) or np.any(rates < 0):
        raise ValueError("initial values and immigration must be nondecreasing across labels")
    paths = np.zeros((len(times), starts.size))
    for i in range(starts.size):
        paths[:, i] = _simulate_increment(
            params.mechanism, float(rates[i]), float(starts[i]), dt, eps, seed, replica, f"inc{i}", snap
        )
    totals = np.cumsum(paths, axis=1)[:, 1:]
    for k, i in snap.items():
        out[i] = FlowState(labels, totals[i], k * dt)
    return out


def _simulate_increment(mech, rate, start, dt, eps, seed, replica, tag, snap):
    """Single-coordinate run used by the independent-increments mode."""
    d_rng = derive_substream(seed, replica, f"{tag}:diffusion").generator
    j_rng = derive_substream(seed, replica, f"{tag}:jumps").generator
    sig = _sigma_eff(mech, eps)
    decay = _drift_rate(mech, eps)
    y = start
    out = np.zeros(len(snap))
    order = {k: i for i, k in enumerate(sorted(snap))}
    if 0 in snap:
        out[order[0]] = y
    n_steps = max(snap) if snap else 0
    for k in range(1, n_steps + 1):
        g = d_rng.standard_normal() * math.sqrt(dt * y) * sig
        atoms = sample_atoms(mech.measure, eps, dt, y, j_rng)
        jump = sum(a.size for a in atoms)
        y = max(y + g + dt * (rate - decay * y) + jump, 0.0)
        if k in snap:
            out[order[k]] = y
    reorder = np.empty_like(out)
    for k, i in snap.items():
        reorder[i] = out[order[k]]
    return reorder


def cbi_ensemble(params: CbiParams, labels, horizon, dt, replicas, eps=None, x0=None, seed=0, times=None, workers=1):
    """Terminal values for many replicas: array (n_times, replicas, p).

    Replicas are simulated in fixed-size blocks; each block owns derived
    substreams keyed by its index, so results do not depend on how blocks
    are scheduled or how many workers run them.  x0 may be one vector or
    one row per replica (restarts).
    """
    from .parallel import run_blocks

    labels = np.asarray(labels, dtype=float)
    x0 = labels.copy() if x0 is None else np.asarray(x0, dtype=float)
    if eps is None:
        eps = default_eps(params.mechanism.measure)
    times = [horizon] if times is None else list(times)
    snap = {_steps_for(t, dt): i for i, t in enumerate(times)}
    return run_blocks(_cbi_block, (params, labels, dt, eps, seed, snap), x0, replicas, len(times), workers)


def _cbi_block(args, x0, r, block):
    params, labels, dt, eps, seed, snap = args
    mech = params.mechanism
    gd = derive_substream(seed, block, "diffusion").generator
    gj = derive_substream(seed, block, "jumps").generator
    sig = _sigma_eff(mech, eps)
    decay = _drift_rate(mech, eps)
    gamma_vals = params.immigration.value(labels)[None, :]
    mass = integrate_measure(mech.measure, 0, lo=eps) if not mech.measure.is_zero else 0.0
    y = np.tile(x0, (r, 1)) if x0.ndim == 1 else x0.copy()
    p = labels.size
    out = np.empty((len(snap), r, p))
    if 0 in snap:
        out[snap[0]] = y
    n_steps = max(snap) if snap else 0
    for k in range(1, n_steps + 1):
        w = np.diff(y, axis=1, prepend=0.0)
        g = gd.standard_normal((r, p)) * np.sqrt(dt * np.maximum(w, 0.0)) * sig
        diffusion = np.cumsum(g, axis=1)
        ypre = y
        y = y + diffusion + dt * (gamma_vals - decay * y)
        if mass > 0.0:
            top = ypre[:, -1]
            counts = gj.poisson(dt * mass * top)
            # round-by-round over replicas; marks are iid given the count,
            # so draw order matches time order in law
            for j in range(int(counts.max(initial=0))):
                mask = counts > j
                n = int(mask.sum())
                z = np.atleast_1d(sample_jump(mech.measure, eps, gj, size=n))
                u = (1.0 - gj.random(n)) * top[mask]
                y[mask] += z[:, None] * (u[:, None] <= ypre[mask])
        np.maximum(y, 0.0, out=y)
        np.maximum.accumulate(y, axis=1, out=y)
        if k in snap:
            out[snap[k]] = y
    return out


def _moment_matrix(mech: BranchingMechanism, beta, cap):
    """Closed linear system for moments 0..cap; needs finite jump moments."""
    mu = {j: integrate_measure(mech.measure, j) for j in range(2, cap + 1)}
    a = np.zeros((cap + 1, cap + 1))
    for p in range(1, cap + 1):
        a[p, p - 1] += p * beta + 0.5 * mech.sigma**2 * p * (p - 1)
        a[p, p] -= p * mech.b
        for j in range(2, p + 1):
            a[p, p - j + 1] += math.comb(p, j) * mu[j]
    return a


def cbi_moment_ode(mech: BranchingMechanism, beta, x0, cap, t_grid, atol=1e-12):
    """Moments E[Y_t^p], p = 0..cap, one row per requested time."""
    if beta < 0:
        raise ValueError("immigration rate must be nonnegative")
    a = _moment_matrix(mech, beta, cap)
    m0 = np.array([x0**p for p in range(cap + 1)], dtype=float)
    return integrate(lambda t, m: a @ m, 0.0, m0, t_grid, atol=atol)


def pair_step_function(state: FlowState, c0, coeffs, points):
    """Pair the state measure with the step function
    c0 at {0} plus sum_i coeffs[i] on (points[i-1], points[i]].

    Every jump point must be one of the state labels (the state carries no
    information between labels).
    """
    points = np.asarray(points, dtype=float)
    coeffs = np.asarray(coeffs, dtype=float)
    if points.shape != coeffs.shape:
        raise ValueError("need one coefficient per interval")
    if np.any(np.diff(points) <= 0):
        raise ValueError("jump points must strictly increase")
    labels = state.labels
    idx = np.searchsorted(labels, points)
    bad = (idx >= labels.size) | (labels[np.minimum(idx, labels.size - 1)] != points)
    if np.any(bad):
        raise ValueError(f"jump points {points[bad]} are not state labels")
    vals = state.values[idx]
    base = state.values[np.searchsorted(labels, 0.0)] if labels[0] == 0.0 else 0.0
    increments = np.diff(vals, prepend=base)
    return float(c0 * base + np.sum(coeffs * increments))


def quadratic_generator(mech: BranchingMechanism, pair, pair_sq, gamma_pair):
    """Generator value at one state for G(x) = x^2 composed with a step
    function: (sigma^2 + mu_2) <Y, f^2> + 2 <Y, f> (<gamma, f> - b <Y, f>)."""
    mu2 = integrate_measure(mech.measure, 2)
    pair = np.asarray(pair, dtype=float)
    return (mech.sigma**2 + mu2) * np.asarray(pair_sq, dtype=float) + 2.0 * pair * (gamma_pair - mech.b * pair)


def martingale_residual(mech: BranchingMechanism, pair_before, pair_sq_before, pair_after, gamma_pair, delta):
    """Per-replica compensated increments of G(<Y, f>) over one macro-step;
    their mean vanishing is the martingale property for quadratic G."""
    before = np.asarray(pair_before, dtype=float)
    after = np.asarray(pair_after, dtype=float)
    lg = quadratic_generator(mech, before, pair_sq_before, gamma_pair)
    return after**2 - before**2 - delta * lg
