"""Jump measures, branching mechanisms and immigration schedules.

A jump measure is a finite list of atoms plus an optional power-law density
slice c*z**beta on (0, zeta].  Everything downstream (branching mechanism
values, merge rates, jump samplers, small-jump folding) reduces to the
closed-form moments computed here; quadrature only ever touches the smooth
exp(-w)*w**beta integrand.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PowerPart",
    "JumpMeasure",
    "BranchingMechanism",
    "ImmigrationFunction",
    "phi",
    "integrate_measure",
    "beta_coeff",
    "sample_jump",
    "default_eps",
]

# Folded small-jump second moment may be at most this fraction of the
# total min(z, z^2) mass when the truncation level is chosen automatically.
SMALL_JUMP_FRACTION = 1e-3

QUAD_TOL = 1e-12


@dataclass(frozen=True)
class PowerPart:
    """Density c * z**exponent on (0, cutoff]."""

    c: float
    exponent: float
    cutoff: float

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("power density scale must be positive")
        if not self.exponent > -3:
            raise ValueError("power exponent must exceed -3 or min(z, z^2) mass diverges")
        if not self.cutoff > 0:
            raise ValueError("power cutoff must be positive")


@dataclass(frozen=True)
class JumpMeasure:
    """Atoms [(z, weight), ...] plus an optional power-law part.

    With unit_interval=True the support must sit inside (0, 1] (the
    reproduction-event regime); otherwise the support is (0, inf).
    """

    atoms: tuple = ()
    power: PowerPart | None = None
    unit_interval: bool = False

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple((float(z), float(w)) for z, w in self.atoms))
        for z, w in self.atoms:
            if not z > 0:
                raise ValueError("atom location must be positive")
            if not w > 0:
                raise ValueError("atom weight must be positive")
            if self.unit_interval and z > 1:
                raise ValueError("unit-interval measure has an atom above 1")
        if self.unit_interval and self.power is not None and self.power.cutoff > 1:
            raise ValueError("unit-interval measure has density mass above 1")

    @property
    def is_zero(self):
        return not self.atoms and self.power is None

    def min_atom(self):
        return min(z for z, _ in self.atoms) if self.atoms else None


ZERO_MEASURE = JumpMeasure()


def _power_moment(part: PowerPart, k, lo, hi):
    """integral of z**k * c*z**exponent over (lo, hi] ∩ (0, cutoff]."""
    a = max(lo, 0.0)
    b = min(hi, part.cutoff)
    if b <= a:
        return 0.0
    q = k + part.exponent
    if a == 0.0 and q <= -1.0:
        raise ValueError(f"measure integral z^{k} diverges at the origin (exponent {part.exponent})")
    if q == -1.0:
        return part.c * math.log(b / a)
    return part.c * (b ** (q + 1.0) - a ** (q + 1.0)) / (q + 1.0)


def integrate_measure(measure: JumpMeasure, kind, lo=0.0, hi=math.inf):
    """Integrate z**k (kind=k) or min(z, z^2) (kind="min") over (lo, hi].

    Closed form throughout: atoms are summed, the power part uses the
    antiderivative.  Raises ValueError when the requested integral diverges.
    """
    if kind == "min":
        split = max(min(hi, 1.0), lo)
        return integrate_measure(measure, 2, lo, split) + integrate_measure(measure, 1, split, hi)
    k = int(kind)
    total = 0.0
    for z, w in measure.atoms:
        if lo < z <= hi:
            total += w * z ** k
    if measure.power is not None:
        total += _power_moment(measure.power, k, lo, hi)
    return total


def beta_coeff(nu: JumpMeasure, p, k):
    """integral of z^k (1-z)^(p-k) nu(dz), expanded binomially into power moments."""
    if not (0 <= k <= p):
        raise ValueError("need 0 <= k <= p")
    if not nu.unit_interval and not nu.is_zero:
        raise ValueError("reproduction coefficients need a unit-interval measure")
    total = 0.0
    for j in range(p - k + 1):
        sign = -1.0 if j % 2 else 1.0
        total += sign * math.comb(p - k, j) * integrate_measure(nu, k + j)
    # alternating sum; clip the negative dust it can leave behind
    return max(total, 0.0)


def _simpson(f, a, fa, b, fb, fm, tol, depth):
    m = 0.5 * (a + b)
    lm, rm = 0.5 * (a + m), 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    if depth <= 0 or abs(left + right - whole) <= 15.0 * tol:
        return left + right + (left + right - whole) / 15.0
    return _simpson(f, a, fa, m, fm, flm, tol / 2.0, depth - 1) + _simpson(
        f, m, fm, b, fb, frm, tol / 2.0, depth - 1
    )


def adaptive_simpson(f, a, b, tol=QUAD_TOL):
    if b <= a:
        return 0.0
    fa, fb = f(a), f(b)
    fm = f(0.5 * (a + b))
    return _simpson(f, a, fa, b, fb, fm, tol, 48)


def _phi_series(beta, s):
    # sum_{n>=2} (-1)^n/n! * s^(n+beta+1)/(n+beta+1), s <= 1 so terms fall
    # like 1/n! and there is no cancellation blow-up
    total = 0.0
    term_pow = s ** (beta + 1.0)
    fact = 1.0
    for n in range(2, 80):
        fact *= n
        p = n + beta + 1.0
        term = (-1.0) ** n / fact * s ** n * term_pow / p
        total += term
        if abs(term) < 1e-18 * max(abs(total), 1e-30):
            break
    return total


def _phi_power_integral(part: PowerPart, z):
    """integral of (exp(-z*u) - 1 + z*u) * c*u^beta over (0, cutoff]."""
    if z == 0.0:
        return 0.0
    beta = part.exponent
    y = z * part.cutoff
    scale = part.c * z ** (-beta - 1.0)
    s = min(y, 1.0)
    total = _phi_series(beta, s)
    if y > 1.0:
        # (w - 1) * w^beta in closed form, exp(-w) * w^beta by quadrature
        top = min(y, 60.0)  # exp(-60) is far below tolerance
        for k, sign in ((1, 1.0), (0, -1.0)):
            q = k + beta
            if q == -1.0:
                total += sign * math.log(y)
            else:
                total += sign * (y ** (q + 1.0) - 1.0) / (q + 1.0)
        total += adaptive_simpson(lambda w: math.exp(-w) * w ** beta, 1.0, top, QUAD_TOL / max(scale, 1.0))
    return scale * total


@dataclass(frozen=True)
class BranchingMechanism:
    """phi(z) = b z + sigma^2 z^2 / 2 + integral of (e^{-zu} - 1 + zu) m(du).

    b may take either sign (the drift direction is a modelling choice); the
    diffusion coefficient may not be negative.
    """

    sigma: float = 0.0
    b: float = 0.0
    measure: JumpMeasure = ZERO_MEASURE

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        # guarantees the mechanism is finite for every z >= 0
        integrate_measure(self.measure, "min")


def phi(mech: BranchingMechanism, z):
    """Branching-mechanism value at z >= 0."""
    if z < 0:
        raise ValueError("phi is defined on [0, inf)")
    total = mech.b * z + 0.5 * mech.sigma ** 2 * z * z
    for u, w in mech.measure.atoms:
        zu = u * z
        if zu < 1e-4:
            # series for e^-x - 1 + x, avoids cancellation at tiny x
            total += w * (zu * zu / 2.0 - zu ** 3 / 6.0 + zu ** 4 / 24.0)
        else:
            total += w * (math.exp(-zu) - 1.0 + zu)
    if mech.measure.power is not None:
        total += _phi_power_integral(mech.measure.power, z)
    return total


def sample_jump(measure: JumpMeasure, eps, rng, size=None):
    """Draw jump sizes conditioned on z > eps.

    Atoms are a weighted choice; the power slice uses the truncated
    power-law inverse CDF.  Raises when nothing sits above eps.
    """
    n = 1 if size is None else int(size)
    weights = []
    kinds = []
    for z, w in measure.atoms:
        if z > eps:
            weights.append(w)
            kinds.append(z)
    p_lo = p_hi = None
    if measure.power is not None and eps < measure.power.cutoff:
        p_lo, p_hi = max(eps, 0.0), measure.power.cutoff
        weights.append(_power_moment(measure.power, 0, p_lo, p_hi))
        kinds.append(None)
    total = sum(weights)
    if total <= 0.0:
        raise ValueError(f"no jump mass above eps={eps}")
    probs = np.asarray(weights) / total
    idx = rng.choice(len(kinds), size=n, p=probs)
    # power-slice draws are flagged with nan and filled vectorized
    out = np.asarray([np.nan if z is None else z for z in kinds])[idx]
    mask = np.isnan(out)
    if mask.any():
        out[mask] = _power_inverse_cdf(measure.power, p_lo, p_hi, rng.random(int(mask.sum())))
    return float(out[0]) if size is None else out


def _power_inverse_cdf(part: PowerPart, lo, hi, u):
    q = part.exponent + 1.0
    if q == 0.0:
        return lo * (hi / lo) ** u
    return (lo ** q + u * (hi ** q - lo ** q)) ** (1.0 / q)


def default_eps(measure: JumpMeasure):
    """Truncation level: folded z^2 mass at most SMALL_JUMP_FRACTION of
    the min(z, z^2) mass, and strictly below every atom."""
    if measure.is_zero:
        return 1.0
    caps = [1.0]
    m = measure.min_atom()
    if m is not None:
        caps.append(0.5 * m)
    if measure.power is not None:
        part = measure.power
        budget = SMALL_JUMP_FRACTION * integrate_measure(measure, "min")
        # closed-form inverse of e -> c * e^(exponent+3)/(exponent+3)
        e_pow = (budget * (part.exponent + 3.0) / part.c) ** (1.0 / (part.exponent + 3.0))
        caps.append(e_pow)
        caps.append(0.5 * part.cutoff)
    return min(caps)


@dataclass(frozen=True)
class ImmigrationFunction:
    """Nondecreasing piecewise-linear schedule given by (point, value) knots.

    unit_interval=True restricts the domain to [0, 1] with values in [0, 1]
    (the measure-reweighting regime); otherwise the domain is [0, inf).
    Beyond the last knot the value continues constantly.
    """

    knots: tuple
    unit_interval: bool = False

    def __post_init__(self):
        knots = tuple((float(v), float(g)) for v, g in self.knots)
        if not knots:
            raise ValueError("need at least one knot")
        object.__setattr__(self, "knots", knots)
        pts = [v for v, _ in knots]
        vals = [g for _, g in knots]
        if any(b <= a for a, b in zip(pts, pts[1:])):
            raise ValueError("knot points must strictly increase")
        if any(b < a for a, b in zip(vals, vals[1:])):
            raise ValueError("immigration values must be nondecreasing")
        if vals[0] < 0:
            raise ValueError("immigration values must be nonnegative")
        if self.unit_interval:
            if pts[0] < 0 or pts[-1] > 1:
                raise ValueError("unit-interval schedule needs knots inside [0, 1]")
            if vals[-1] > 1:
                raise ValueError("unit-interval schedule needs values inside [0, 1]")
        object.__setattr__(self, "_pts", np.asarray(pts))
        object.__setattr__(self, "_vals", np.asarray(vals))

    def value(self, v):
        """Schedule value, constant beyond the knot range."""
        out = np.interp(np.asarray(v, dtype=float), self._pts, self._vals)
        return float(out) if np.isscalar(v) or np.ndim(v) == 0 else out

    @classmethod
    def linear(cls, slope=1.0, until=1.0, unit_interval=False):
        return cls(((0.0, 0.0), (until, slope * until)), unit_interval=unit_interval)

    @classmethod
    def constant(cls, level, unit_interval=False):
        return cls(((0.0, level),), unit_interval=unit_interval)


def pair_schedule(schedule: ImmigrationFunction, c0, coeffs, points):
    """Pair a schedule, read as a measure, with the step function
    c0 at {0} plus sum_i coeffs[i] on (points[i-1], points[i]]."""
    points = np.asarray(points, dtype=float)
    coeffs = np.asarray(coeffs, dtype=float)
    base = schedule.value(0.0)
    vals = schedule.value(points)
    return float(c0 * base + np.sum(coeffs * np.diff(np.atleast_1d(vals), prepend=base)))
