"""Coupled simulation of the unit-interval (resampling) flow.

States are p-point evaluations of a random nondecreasing map of [0, 1].
The diffusion shares nested partition cells across labels, recentred so
every increment has the x_{i^j}(1 - x_{ivj}) covariance; reproduction
events move all labels through the same (size, level) pair.  Jumps are
not compensated: their level integral already vanishes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .measures import (
    ImmigrationFunction,
    JumpMeasure,
    beta_coeff,
    default_eps,
    integrate_measure,
    sample_jump,
)
from .noise import derive_substream, gaussian_partition_increments, sample_atoms
from .odes import integrate

__all__ = [
    "FvParams",
    "PPointState",
    "apply_fv_jump",
    "fv_covariance",
    "step_fv",
    "simulate_fv_flow",
    "fv_ensemble",
    "invert_flow",
    "fv_moment_ode",
    "quadratic_generator",
    "martingale_residual",
]


@dataclass(frozen=True)
class FvParams:
    sigma: float = 0.0
    b: float = 0.0
    immigration: ImmigrationFunction = ImmigrationFunction.linear(unit_interval=True)
    nu: JumpMeasure = JumpMeasure(unit_interval=True)

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if self.b < 0:
            raise ValueError("the unit-interval flow needs b >= 0")
        if not self.immigration.unit_interval:
            raise ValueError("immigration schedule must live on [0, 1]")
        if not (self.nu.unit_interval or self.nu.is_zero):
            raise ValueError("reproduction measure must live on (0, 1]")


@dataclass
class PPointState:
    """Values of one path at increasing labels inside [0, 1]."""

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
        if self.labels[0] < 0 or self.labels[-1] > 1:
            raise ValueError("labels must lie in [0, 1]")
        if self.values.shape != self.labels.shape:
            raise ValueError("values must match labels")
        if self.values[0] < 0 or self.values[-1] > 1 or np.any(np.diff(self.values) < 0):
            raise ValueError("values must be nondecreasing inside [0, 1]")


def apply_fv_jump(values, z, u):
    """Reproduction event: x -> (1 - z) x + z [u <= x].

    Exactly preserves ordering and the unit interval for z in (0, 1].
    """
    x = np.asarray(values, dtype=float)
    return (1.0 - z) * x + z * (u <= x)


def fv_covariance(values, sigma_sq=1.0):
    """Diffusion covariance matrix sigma_sq * x_min (1 - x_max) per unit time."""
    x = np.asarray(values, dtype=float)
    lo = np.minimum.outer(x, x)
    hi = np.maximum.outer(x, x)
    return sigma_sq * lo * (1.0 - hi)


def _sigma_eff(params: FvParams, eps):
    return math.sqrt(params.sigma**2 + integrate_measure(params.nu, 2, 0.0, eps))


def step_fv(state: PPointState, params: FvParams, dt, eps, diffusion_rng, atoms=None, jump_rng=None):
    """One explicit step: recentred partition diffusion, mean-reversion
    toward the immigration schedule, then the jump maps in time order."""
    x = state.values
    bounds = np.concatenate([[0.0], x, [1.0]])
    cells = gaussian_partition_increments(diffusion_rng, dt, bounds) * _sigma_eff(params, eps)
    prefix = np.cumsum(cells)
    diffusion = prefix[:-1] - x * prefix[-1]
    gamma_vals = params.immigration.value(state.labels)
    new = x + diffusion + dt * params.b * (gamma_vals - x)
    if atoms is None:
        atoms = sample_atoms(params.nu, eps, dt, 1.0, jump_rng)
    for atom in atoms:
        new = apply_fv_jump(new, atom.size, atom.level)
    new = np.clip(new, 0.0, 1.0)
    np.maximum.accumulate(new, out=new)
    return PPointState(state.labels, new, state.clock + dt)


def _steps_for(horizon, dt):
    n = int(round(horizon / dt))
    if abs(n * dt - horizon) > 1e-9 * max(1.0, horizon):
        raise ValueError("horizon must be an integer number of steps")
    return n


def simulate_fv_flow(params: FvParams, labels, horizon, dt, x0=None, eps=None, seed=0, replica=0, times=None):
    """Simulate one path, returning states at the requested times."""
    labels = np.asarray(labels, dtype=float)
    x0 = labels.copy() if x0 is None else np.asarray(x0, dtype=float)
    if eps is None:
        eps = default_eps(params.nu)
    times = [horizon] if times is None else list(times)
    snap = {_steps_for(t, dt): i for i, t in enumerate(times)}
    n_steps = max(snap) if snap else 0
    out = [None] * len(times)
    state = PPointState(labels, x0)
    if 0 in snap:
        out[snap[0]] = state
    d_rng = derive_substream(seed, replica, "diffusion").generator
    j_rng = derive_substream(seed, replica, "jumps").generator
    for k in range(1, n_steps + 1):
        state = step_fv(state, params, dt, eps, d_rng, jump_rng=j_rng)
        if k in snap:
            out[snap[k]] = state
    return out


def fv_ensemble(params: FvParams, labels, horizon, dt, replicas, eps=None, x0=None, seed=0, times=None, workers=1):
    """Terminal values for many replicas: array (n_times, replicas, p).

    Same fixed-block substream layout as the half-line ensemble, so the
    result is independent of scheduling.  x0 may be one vector or one row
    per replica (restarts).
    """
    from .parallel import run_blocks

    labels = np.asarray(labels, dtype=float)
    x0 = labels.copy() if x0 is None else np.asarray(x0, dtype=float)
    if eps is None:
        eps = default_eps(params.nu)
    times = [horizon] if times is None else list(times)
    snap = {_steps_for(t, dt): i for i, t in enumerate(times)}
    return run_blocks(_fv_block, (params, labels, dt, eps, seed, snap), x0, replicas, len(times), workers)


def _fv_block(args, x0, r, block):
    params, labels, dt, eps, seed, snap = args
    gd = derive_substream(seed, block, "diffusion").generator
    gj = derive_substream(seed, block, "jumps").generator
    sig = _sigma_eff(params, eps)
    gamma_vals = params.immigration.value(labels)[None, :]
    mass = integrate_measure(params.nu, 0, lo=eps) if not params.nu.is_zero else 0.0
    p = labels.size
    x = np.tile(x0, (r, 1)) if x0.ndim == 1 else x0.copy()
    bounds = np.empty((r, p + 2))
    bounds[:, 0] = 0.0
    bounds[:, -1] = 1.0
    out = np.empty((len(snap), r, p))
    if 0 in snap:
        out[snap[0]] = x
    n_steps = max(snap) if snap else 0
    for k in range(1, n_steps + 1):
        bounds[:, 1:-1] = x
        w = np.diff(bounds, axis=1)
        g = gd.standard_normal((r, p + 1)) * np.sqrt(dt * np.maximum(w, 0.0)) * sig
        prefix = np.cumsum(g, axis=1)
        x = x + (prefix[:, :-1] - x * prefix[:, -1:]) + dt * params.b * (gamma_vals - x)
        if mass > 0.0:
            counts = gj.poisson(dt * mass, size=r)
            for j in range(int(counts.max(initial=0))):
                mask = counts > j
                n = int(mask.sum())
                z = np.atleast_1d(sample_jump(params.nu, eps, gj, size=n))[:, None]
                u = (1.0 - gj.random(n))[:, None]
                x[mask] = (1.0 - z) * x[mask] + z * (u <= x[mask])
        np.clip(x, 0.0, 1.0, out=x)
        np.maximum.accumulate(x, axis=1, out=x)
        if k in snap:
            out[snap[k]] = x
    return out


def invert_flow(labels, values, queries):
    """Right-continuous generalized inverse on a grid.

    Returns the first grid label whose value reaches the query (>= on grid
    samples: exact for continuous flows, and the querying-at-1 case is the
    left limit by the same rule).  Queries no value reaches map to 1.
    """
    labels = np.asarray(labels, dtype=float)
    values = np.asarray(values, dtype=float)
    if values.ndim == 2:
        # row-wise inverse of many paths at one query point
        reach = values >= float(queries)
        idx = reach.argmax(axis=1)
        return np.where(reach.any(axis=1), labels[idx], 1.0)
    scalar = np.ndim(queries) == 0
    q = np.atleast_1d(np.asarray(queries, dtype=float))
    idx = np.searchsorted(values, q, side="left")
    out = np.where(idx < labels.size, labels[np.minimum(idx, labels.size - 1)], 1.0)
    return float(out[0]) if scalar else out


def _fv_moment_matrix(params: FvParams, gamma_v, cap):
    a = np.zeros((cap + 1, cap + 1))
    for p in range(1, cap + 1):
        if p >= 2:
            a[p, p - 1] += params.sigma**2 * math.comb(p, 2)
            a[p, p] -= params.sigma**2 * math.comb(p, 2)
            for k in range(2, p + 1):
                rate = math.comb(p, k) * beta_coeff(params.nu, p, k)
                a[p, p - k + 1] += rate
                a[p, p] -= rate
        a[p, p - 1] += params.b * p * gamma_v
        a[p, p] -= params.b * p
    return a


def fv_moment_ode(params: FvParams, v, cap, t_grid, atol=1e-12):
    """Moments E[X_t(v)^p], p = 0..cap, one row per requested time.

    The indicator test functions close the hierarchy: each moment couples
    only to lower ones, so the system is triangular.
    """
    gamma_v = float(params.immigration.value(v))
    a = _fv_moment_matrix(params, gamma_v, cap)
    m0 = np.array([v**p for p in range(cap + 1)], dtype=float)
    return integrate(lambda t, m: a @ m, 0.0, m0, t_grid, atol=atol)


def quadratic_generator(params: FvParams, pair, pair_sq, gamma_pair):
    """Generator value at one state for G(x) = x^2 composed with a step
    function: (sigma^2 + beta_22)(<X, f^2> - <X, f>^2) + 2b(<gamma, f><X, f> - <X, f>^2)."""
    forward = params.sigma**2 + beta_coeff(params.nu, 2, 2)
    return forward * (pair_sq - pair**2) + 2.0 * params.b * (gamma_pair * pair - pair**2)


def martingale_residual(params: FvParams, pair_before, pair_sq_before, pair_after, gamma_pair, delta):
    """Per-replica compensated increments of G(<X, f>) over one macro-step.

    The caller supplies <X, f> and <X, f^2> at the step start and <X, f>
    at the step end; the mean of the result should vanish at rate
    O(delta^2) when the simulated flow matches the generator.
    """
    before = np.asarray(pair_before, dtype=float)
    after = np.asarray(pair_after, dtype=float)
    lg = quadratic_generator(params, before, np.asarray(pair_sq_before, dtype=float), gamma_pair)
    return after**2 - before**2 - delta * lg
