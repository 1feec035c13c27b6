# block scheduling: worker count must never change the numbers

import numpy as np
import pytest

from flowsim import (
    BranchingMechanism,
    CbiParams,
    FvParams,
    ImmigrationFunction,
    JumpMeasure,
    cbi_ensemble,
    fv_ensemble,
)
from flowsim.parallel import BLOCK, _block_spans, run_blocks


def test_block_spans_cover_exactly():
    spans = _block_spans(2 * BLOCK + 17)
    assert spans[0] == (0, 0, BLOCK)
    assert spans[-1] == (2, 2 * BLOCK, 2 * BLOCK + 17)
    total = sum(hi - lo for _, lo, hi in spans)
    assert total == 2 * BLOCK + 17


def test_run_blocks_requires_replicas():
    with pytest.raises(ValueError):
        run_blocks(lambda *a: None, (), np.array([1.0]), 0, 1)


def test_run_blocks_row_count_checked():
    with pytest.raises(ValueError):
        run_blocks(lambda *a: None, (), np.zeros((5, 2)), 6, 1)


def test_cbi_ensemble_worker_invariance():
    params = CbiParams(
        BranchingMechanism(sigma=0.7, b=0.4, measure=JumpMeasure(((0.8, 0.3),))),
        ImmigrationFunction.constant(0.2),
    )
    r = BLOCK * 2 + 100  # forces three blocks
    serial = cbi_ensemble(params, [1.0], 0.05, 0.01, r, seed=8)
    parallel = cbi_ensemble(params, [1.0], 0.05, 0.01, r, seed=8, workers=3)
    assert np.array_equal(serial, parallel)


def test_fv_ensemble_worker_invariance():
    params = FvParams(sigma=0.9, nu=JumpMeasure(((0.5, 0.5),), unit_interval=True))
    r = BLOCK + 50
    serial = fv_ensemble(params, [0.3, 0.7], 0.05, 0.01, r, seed=9)
    parallel = fv_ensemble(params, [0.3, 0.7], 0.05, 0.01, r, seed=9, workers=4)
    assert np.array_equal(serial, parallel)


def test_block_layout_pins_replica_values():
    # extending the replica count must not change earlier replicas
    params = CbiParams(BranchingMechanism(sigma=0.5, b=0.3), ImmigrationFunction.constant(0.1))
    small = cbi_ensemble(params, [1.0], 0.05, 0.01, BLOCK, seed=10)
    large = cbi_ensemble(params, [1.0], 0.05, 0.01, BLOCK + 200, seed=10)
    assert np.array_equal(small, large[:, :BLOCK, :])
