"""Adaptive Runge-Kutta-Fehlberg integration with dense output times.

One solver serves every deterministic route in the package (cumulant
equation, moment systems, block-count forward equations) so their
cross-checks share a single audited error control.
"""

from __future__ import annotations

import numpy as np

__all__ = ["SolverFailure", "integrate"]


class SolverFailure(RuntimeError):
    """Step size underflowed or the step budget ran out."""


# Fehlberg 4(5) tableau
_A = (
    (),
    (1 / 4,),
    (3 / 32, 9 / 32),
    (1932 / 2197, -7200 / 2197, 7296 / 2197),
    (439 / 216, -8.0, 3680 / 513, -845 / 4104),
    (-8 / 27, 2.0, -3544 / 2565, 1859 / 4104, -11 / 40),
)
_C = (0.0, 1 / 4, 3 / 8, 12 / 13, 1.0, 1 / 2)
_B5 = (16 / 135, 0.0, 6656 / 12825, 28561 / 56430, -9 / 50, 2 / 55)
_B4 = (25 / 216, 0.0, 1408 / 2565, 2197 / 4104, -1 / 5, 0.0)

_MIN_STEP_FACTOR = 1e-14
_MAX_STEPS = 1_000_000


def _rkf_step(f, t, y, h):
    k = []
    for a_row, c in zip(_A, _C):
        yi = y
        for a, ki in zip(a_row, k):
            yi = yi + h * a * ki
        k.append(np.asarray(f(t + c * h, yi)))
    y5 = y + h * sum(b * ki for b, ki in zip(_B5, k))
    y4 = y + h * sum(b * ki for b, ki in zip(_B4, k))
    return y5, float(np.max(np.abs(y5 - y4)))


def integrate(f, t0, y0, t_out, atol=1e-10, project=None):
    """Integrate y' = f(t, y) from t0, returning rows at the times in t_out.

    t_out must be nondecreasing and start at or after t0.  project, when
    given, is applied to the state after every accepted step (used to pin
    nonnegative components to their admissible range).  Raises
    SolverFailure when the controller cannot proceed.
    """
    t_out = np.atleast_1d(np.asarray(t_out, dtype=float))
    if t_out.size and (np.any(np.diff(t_out) < 0) or t_out[0] < t0):
        raise ValueError("output times must be nondecreasing and >= t0")
    y = np.atleast_1d(np.asarray(y0, dtype=float)).copy()
    out = np.empty((t_out.size, y.size))
    t = t0
    span = max(t_out[-1] - t0, 0.0) if t_out.size else 0.0
    h = span / 64.0 if span > 0 else 0.0
    next_i = 0
    while next_i < t_out.size and t_out[next_i] <= t0:
        out[next_i] = y
        next_i += 1
    steps = 0
    while next_i < t_out.size:
        target = t_out[next_i]
        h = min(h if h > 0 else (target - t), target - t)
        while t < target:
            if h < _MIN_STEP_FACTOR * max(1.0, abs(t)):
                raise SolverFailure(f"step size underflow at t={t}")
            if steps > _MAX_STEPS:
                raise SolverFailure("step budget exhausted")
            steps += 1
            trial = min(h, target - t)
            y_new, err = _rkf_step(f, t, y, trial)
            if err <= atol or trial < _MIN_STEP_FACTOR * max(1.0, abs(t)) * 4.0:
                t = t + trial
                y = y_new if project is None else np.asarray(project(y_new))
                if err > 0:
                    h = trial * min(5.0, 0.9 * (atol / err) ** 0.2)
                else:
                    h = trial * 5.0
            else:
                h = trial * max(0.2, 0.9 * (atol / err) ** 0.2)
        while next_i < t_out.size and t_out[next_i] <= t:
            out[next_i] = y
            next_i += 1
    return out
