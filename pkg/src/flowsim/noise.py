"""Reproducible noise sources for the flow simulators.

Streams are counter-based (Philox): a stream is addressed by
(seed, replica, channel) and never overlaps another address, so replicas
can run in any order or in parallel and still reproduce bit for bit.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

__all__ = [
    "RandomStream",
    "derive_substream",
    "gaussian_partition_increments",
    "PoissonAtom",
    "sample_atoms",
]

# refuse to materialize more atoms than this in a single call
ATOM_CAP = 1e7


def _channel_code(channel: str) -> int:
    digest = hashlib.blake2b(channel.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class RandomStream:
    """One addressed Philox stream.

    Distinct (seed, replica, channel) addresses start 2^128 draws apart in
    the counter space, so streams are non-overlapping by construction.
    """

    def __init__(self, seed: int, replica: int = 0, channel: str = ""):
        if replica < 0:
            raise ValueError("replica index must be nonnegative")
        self.seed = int(seed)
        self.replica = int(replica)
        self.channel = channel
        bg = np.random.Philox(
            key=np.array([self.seed & 0xFFFFFFFFFFFFFFFF, 0x9E3779B97F4A7C15], dtype=np.uint64),
            counter=np.array([0, 0, self.replica, _channel_code(channel)], dtype=np.uint64),
        )
        self.generator = np.random.Generator(bg)

    def __repr__(self):
        return f"RandomStream(seed={self.seed}, replica={self.replica}, channel={self.channel!r})"


def derive_substream(seed, replica, channel) -> RandomStream:
    """Fresh stream for the given address; collision-free across addresses."""
    return RandomStream(seed, replica, channel)


def gaussian_partition_increments(rng, dt, boundaries):
    """One centred Gaussian per partition cell, variance dt * cell width.

    boundaries must be nondecreasing.  A zero-width cell contributes
    exactly 0.0 (its draw is still consumed, keeping the stream position
    independent of the state that produced the partition).
    """
    b = np.asarray(boundaries, dtype=float)
    widths = np.diff(b)
    if widths.size and widths.min() < 0:
        raise ValueError("partition boundaries must be nondecreasing")
    return rng.standard_normal(widths.size) * np.sqrt(dt * widths)


@dataclass(frozen=True)
class PoissonAtom:
    """One jump mark: offset inside the step, jump size, uniform level."""

    time: float
    size: float
    level: float


def sample_atoms(measure, eps, dt, u_range, rng, cap=ATOM_CAP):
    """Atoms of the driving point process on one step, sorted by offset.

    Counts are Poisson with rate dt * u_range * measure((eps, inf));
    sizes follow the truncated measure, levels are uniform on (0, u_range].
    """
    from .measures import integrate_measure, sample_jump

    if dt < 0 or u_range < 0:
        raise ValueError("dt and u_range must be nonnegative")
    rate = dt * u_range * integrate_measure(measure, 0, lo=eps)
    if rate > cap:
        raise ValueError(f"expected atom count {rate:.3g} exceeds cap {cap:.3g}")
    n = int(rng.poisson(rate)) if rate > 0 else 0
    if n == 0:
        return []
    times = np.sort(rng.random(n) * dt)
    sizes = np.atleast_1d(sample_jump(measure, eps, rng, size=n))
    levels = (1.0 - rng.random(n)) * u_range
    return [PoissonAtom(float(t), float(z), float(u)) for t, z, u in zip(times, sizes, levels)]
