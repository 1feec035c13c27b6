"""Replica-block scheduling shared by both ensemble simulators.

Blocks have a fixed size and own their noise substreams, so the assembled
result is a pure function of the scenario and seed: worker count changes
scheduling only, never bytes.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor

import numpy as np

BLOCK = 4096


def _block_spans(replicas):
    return [(b, lo, min(lo + BLOCK, replicas)) for b, lo in enumerate(range(0, replicas, BLOCK))]


def run_blocks(block_fn, args, x0, replicas, n_times, workers=1):
    if replicas < 1:
        raise ValueError("need at least one replica")
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim == 2 and x0.shape[0] != replicas:
        raise ValueError("per-replica initial values must have one row per replica")
    spans = _block_spans(replicas)
    p = x0.shape[-1]
    out = np.empty((n_times, replicas, p))
    if workers <= 1 or len(spans) == 1:
        for b, lo, hi in spans:
            out[:, lo:hi, :] = block_fn(args, x0 if x0.ndim == 1 else x0[lo:hi], hi - lo, b)
        return out
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(block_fn, args, x0 if x0.ndim == 1 else x0[lo:hi], hi - lo, b)
            for b, lo, hi in spans
        ]
        for (b, lo, hi), fut in zip(spans, futures):
            out[:, lo:hi, :] = fut.result()
    return out
