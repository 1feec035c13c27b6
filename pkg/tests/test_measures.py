# mechanism values, measure moments and jump sampling

import math

import numpy as np
import pytest

from flowsim import (
    BranchingMechanism,
    ImmigrationFunction,
    JumpMeasure,
    PowerPart,
    beta_coeff,
    default_eps,
    integrate_measure,
    phi,
    sample_jump,
)
from flowsim.noise import derive_substream


def test_phi_linear_quadratic():
    mech = BranchingMechanism(sigma=2.0, b=1.0)
    assert phi(mech, 1.0) == pytest.approx(3.0, abs=1e-15)


def test_phi_zero_at_zero():
    for mech in (
        BranchingMechanism(),
        BranchingMechanism(sigma=1.5, b=-0.7),
        BranchingMechanism(0.3, 0.1, JumpMeasure(((0.5, 2.0), (2.0, 0.1)))),
    ):
        assert phi(mech, 0.0) == 0.0


def test_phi_single_atom():
    mech = BranchingMechanism(measure=JumpMeasure(((1.0, 1.0),)))
    assert phi(mech, 1.0) == pytest.approx(math.exp(-1.0), rel=1e-14)


def test_phi_power_part_matches_quadrature():
    # midpoint-rule cross-check of the series + closed-form route
    part = PowerPart(0.8, -0.5, 2.0)
    mech = BranchingMechanism(measure=JumpMeasure((), part))
    for z in (0.3, 1.0, 4.0):
        grid = np.linspace(0.0, part.cutoff, 200001)[1:]
        mids = grid - 0.5 * (grid[1] - grid[0])
        f = (np.exp(-z * mids) - 1.0 + z * mids) * part.c * mids**part.exponent
        ref = float(np.sum(f) * (grid[1] - grid[0]))
        assert phi(mech, z) == pytest.approx(ref, rel=1e-6)


def test_phi_convex_nondecreasing_slope():
    rng = np.random.default_rng(7)
    for _ in range(25):
        mech = BranchingMechanism(
            sigma=rng.uniform(0, 2),
            b=rng.uniform(-1, 1),
            measure=JumpMeasure(((rng.uniform(0.1, 3), rng.uniform(0.1, 2)),)),
        )
        z = np.linspace(0.0, 5.0, 101)
        vals = np.array([phi(mech, s) for s in z])
        slopes = np.diff(vals) / np.diff(z)
        assert np.all(np.diff(slopes) > -1e-9)


def test_phi_negative_argument_rejected():
    with pytest.raises(ValueError):
        phi(BranchingMechanism(), -0.1)


def test_integrate_atom_second_moment():
    m = JumpMeasure(((0.5, 2.0),))
    assert integrate_measure(m, 2, 0.0, 1.0) == pytest.approx(0.5, abs=1e-15)


def test_integrate_density_first_moment():
    m = JumpMeasure((), PowerPart(1.0, 0.0, 1.0))
    assert integrate_measure(m, 1, 0.0, 1.0) == pytest.approx(0.5, rel=1e-14)


def test_integrate_min_kind():
    m = JumpMeasure(((0.5, 2.0),))
    assert integrate_measure(m, "min") == pytest.approx(0.5, abs=1e-15)
    # min(z, z^2) = z above 1
    big = JumpMeasure(((2.0, 3.0),))
    assert integrate_measure(big, "min") == pytest.approx(6.0, abs=1e-14)


def test_integrate_divergent_raises():
    m = JumpMeasure((), PowerPart(1.0, -2.0, 1.0))
    with pytest.raises(ValueError):
        integrate_measure(m, 0)  # mass at the origin diverges


def test_beta_coeff_total_merge_atom():
    nu = JumpMeasure(((1.0, 1.0),), unit_interval=True)
    assert beta_coeff(nu, 4, 4) == pytest.approx(1.0, abs=1e-12)
    assert beta_coeff(nu, 4, 2) == pytest.approx(0.0, abs=1e-12)
    assert beta_coeff(nu, 4, 3) == pytest.approx(0.0, abs=1e-12)


def test_beta_coeff_half_atom():
    for c in (1.0, 2.5):
        nu = JumpMeasure(((0.5, c),), unit_interval=True)
        for p in range(2, 7):
            for k in range(2, p + 1):
                assert beta_coeff(nu, p, k) == pytest.approx(c * 2.0**-p, rel=1e-12)


def test_beta_coeff_density():
    nu = JumpMeasure((), PowerPart(1.0, -1.0, 1.0), unit_interval=True)
    assert beta_coeff(nu, 2, 2) == pytest.approx(0.5, rel=1e-12)


def test_beta_coeff_needs_unit_interval():
    with pytest.raises(ValueError):
        beta_coeff(JumpMeasure(((2.0, 1.0),)), 3, 2)


def test_sample_jump_single_atom():
    rng = derive_substream(3, 0, "draws").generator
    m = JumpMeasure(((0.5, 3.0),))
    draws = sample_jump(m, 0.1, rng, size=100)
    assert np.all(draws == 0.5)


def test_sample_jump_respects_eps():
    rng = derive_substream(4, 0, "draws").generator
    m = JumpMeasure(((0.2, 1.0), (0.8, 3.0)))
    draws = sample_jump(m, 0.5, rng, size=200)
    assert np.all(draws == 0.8)


def test_sample_jump_density_conditional_mean():
    # mean of z above 0.5 under z^-2 dz is ln 2 / 1
    rng = derive_substream(5, 0, "draws").generator
    m = JumpMeasure((), PowerPart(1.0, -2.0, 1.0))
    draws = sample_jump(m, 0.5, rng, size=1_000_000)
    se = draws.std(ddof=1) / math.sqrt(draws.size)
    assert abs(draws.mean() - math.log(2.0)) <= 3.0 * se


def test_sample_jump_empty_above_eps():
    rng = derive_substream(6, 0, "draws").generator
    with pytest.raises(ValueError):
        sample_jump(JumpMeasure(((0.1, 1.0),)), 0.5, rng)


def test_default_eps_below_atoms():
    m = JumpMeasure(((0.3, 1.0), (0.9, 2.0)))
    assert 0.0 < default_eps(m) <= 0.15


def test_default_eps_power_budget():
    m = JumpMeasure((), PowerPart(2.0, -1.5, 1.0))
    eps = default_eps(m)
    folded = integrate_measure(m, 2, 0.0, eps)
    assert folded <= 1e-3 * integrate_measure(m, "min") + 1e-15


def test_measure_validation():
    with pytest.raises(ValueError):
        JumpMeasure(((-0.5, 1.0),))
    with pytest.raises(ValueError):
        JumpMeasure(((0.5, -1.0),))
    with pytest.raises(ValueError):
        JumpMeasure(((1.5, 1.0),), unit_interval=True)
    with pytest.raises(ValueError):
        JumpMeasure((), PowerPart(1.0, 0.0, 2.0), unit_interval=True)


def test_immigration_interpolation_and_extension():
    g = ImmigrationFunction(((0.0, 0.1), (2.0, 0.5)))
    assert g.value(0.0) == pytest.approx(0.1)
    assert g.value(1.0) == pytest.approx(0.3)
    # constant beyond the last knot
    assert g.value(5.0) == pytest.approx(0.5)
    arr = g.value(np.array([0.0, 2.0, 3.0]))
    assert arr == pytest.approx([0.1, 0.5, 0.5])


def test_immigration_validation():
    with pytest.raises(ValueError):
        ImmigrationFunction(())
    with pytest.raises(ValueError):
        ImmigrationFunction(((0.0, 0.5), (1.0, 0.2)))  # decreasing
    with pytest.raises(ValueError):
        ImmigrationFunction(((0.0, -0.1),))
    with pytest.raises(ValueError):
        ImmigrationFunction(((0.0, 0.0), (2.0, 1.0)), unit_interval=True)
    with pytest.raises(ValueError):
        ImmigrationFunction(((0.0, 0.0), (1.0, 1.5)), unit_interval=True)


def test_immigration_constructors():
    lin = ImmigrationFunction.linear(slope=0.4, until=2.0)
    assert lin.value(1.5) == pytest.approx(0.6)
    const = ImmigrationFunction.constant(0.7)
    assert const.value(100.0) == pytest.approx(0.7)
