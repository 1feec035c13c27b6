"""Simulation and cross-verification of coupled stochastic flows.

Two families of flows are simulated under shared noise: a half-line
branching flow with immigration and a unit-interval resampling flow.
Deterministic routes (cumulant equation, moment systems, a block-counting
dual) provide the targets every simulator is checked against.
"""

from .cbi import CbiParams, FlowState, cbi_ensemble, cbi_moment_ode, pair_step_function, simulate_cbi_flow, step_cbi_coupled
from .coalescent import BlockChain, block_distribution, duality_moment, merge_rates
from .fv import (
    FvParams,
    PPointState,
    apply_fv_jump,
    fv_covariance,
    fv_ensemble,
    fv_moment_ode,
    invert_flow,
    simulate_fv_flow,
    step_fv,
)
from .laplace import CumulantSolution, cbi_laplace, cbi_mean, solve_v
from .measures import (
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
from .checks import SUITES, CheckRow, halving_escape, run_checks, run_suite
from .noise import PoissonAtom, RandomStream, derive_substream, gaussian_partition_increments, sample_atoms
from .odes import SolverFailure, integrate
from .scaling import ScalingFamily, ScalingRow, embed_prelimit, limit_eta, scaling_report
from .scenario import ConfigError, Scenario, load_scenario, parse_scenario
from .stats import McEstimate, ks_two_sample, mc_estimate, tolerance_check

__version__ = "0.1.0"
