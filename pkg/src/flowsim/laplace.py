"""Cumulant equation and transform identities for the half-line flow.

The cumulant v_t(lambda) solves dv/dt = -phi(v), v_0 = lambda; its running
integral feeds the immigration factor of the transform.  These values are
the deterministic targets the simulators are checked against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .measures import BranchingMechanism, phi
from .odes import integrate

__all__ = ["CumulantSolution", "solve_v", "cbi_laplace", "cbi_mean"]


@dataclass(frozen=True)
class CumulantSolution:
    """Cumulant value and its accumulated time integral at one time."""

    lam: float
    t: float
    value: float
    integral: float


def solve_v(mech: BranchingMechanism, lam, t_grid, atol=1e-10):
    """Solve the cumulant equation jointly with its running integral.

    Returns one CumulantSolution per requested time.  The state is pinned
    at zero from below after every accepted step (zero is absorbing and
    the equation is not defined for negative arguments).
    """
    if lam < 0:
        raise ValueError("transform argument must be nonnegative")
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))

    def rhs(t, y):
        return np.array([-phi(mech, max(y[0], 0.0)), max(y[0], 0.0)])

    def pin(y):
        y[0] = max(y[0], 0.0)
        return y

    rows = integrate(rhs, 0.0, [lam, 0.0], t_grid, atol=atol, project=pin)
    return [CumulantSolution(lam, float(t), float(r[0]), float(r[1])) for t, r in zip(t_grid, rows)]


def solve_v_single(mech, lam, t, atol=1e-10):
    return solve_v(mech, lam, [t], atol=atol)[0]


def cbi_laplace(mech: BranchingMechanism, beta, x0, lam, t, atol=1e-10):
    """E[exp(-lam * Y_t)] for the immigration process: exp(-x0 v_t - beta V_t)."""
    if beta < 0:
        raise ValueError("immigration rate must be nonnegative")
    sol = solve_v_single(mech, lam, t, atol=atol)
    return math.exp(-x0 * sol.value - beta * sol.integral)


def cbi_mean(b, beta, x0, t):
    """First moment x0 e^{-bt} + beta (1 - e^{-bt})/b, with (1-e^0)/0 read as t."""
    decay = math.exp(-b * t)
    if b == 0.0:
        ramp = t
    else:
        ramp = -math.expm1(-b * t) / b
    return x0 * decay + beta * ramp
