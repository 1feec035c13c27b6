"""Block-counting dual of the unit-interval flow.

The merge rate of a specific k-subset of n lineages is read off the
p-point generator's coefficient structure: sigma^2 for pairs plus the
z^k (1-z)^(n-k) reproduction moment.  Solving the block-count chain
forward and pairing with v^n reproduces the flow's moments through an
entirely separate route, which is the point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .measures import JumpMeasure, beta_coeff
from .odes import integrate

__all__ = ["BlockChain", "merge_rates", "block_distribution", "duality_moment"]


@dataclass(frozen=True)
class BlockChain:
    """Finite continuous-time chain on block counts {1, ..., p}; 1 absorbs."""

    sigma: float
    nu: JumpMeasure
    p: int
    rates: dict = field(compare=False)
    generator: np.ndarray = field(compare=False)

    def total_rate(self, n):
        return sum(math.comb(n, k) * r for (m, k), r in self.rates.items() if m == n)


def merge_rates(sigma, nu: JumpMeasure, p) -> BlockChain:
    """Chain with r_{n,k} = sigma^2 [k=2] + integral z^k (1-z)^(n-k) nu(dz)."""
    if p < 1:
        raise ValueError("need at least one block")
    rates = {}
    q = np.zeros((p, p))
    for n in range(2, p + 1):
        for k in range(2, n + 1):
            r = (sigma**2 if k == 2 else 0.0) + beta_coeff(nu, n, k)
            rates[(n, k)] = r
            flow = math.comb(n, k) * r
            q[n - 1, n - k] += flow
            q[n - 1, n - 1] -= flow
    return BlockChain(float(sigma), nu, int(p), rates, q)


@lru_cache(maxsize=256)
def _forward_solution(sigma, nu, p, t_tuple, atol):
    chain = merge_rates(sigma, nu, p)
    qt = chain.generator.T.copy()
    y0 = np.zeros(p)
    y0[p - 1] = 1.0
    return integrate(lambda t, y: qt @ y, 0.0, y0, np.asarray(t_tuple), atol=atol)


def block_distribution(chain: BlockChain, t, atol=1e-12):
    """P(N_t = n), n = 1..p, starting from p blocks.

    Kolmogorov forward equations under the shared solver; accepts a single
    time or a grid (one row per time).
    """
    scalar = np.ndim(t) == 0
    t_tuple = (float(t),) if scalar else tuple(float(s) for s in t)
    if any(s < 0 for s in t_tuple):
        raise ValueError("time must be nonnegative")
    rows = _forward_solution(chain.sigma, chain.nu, chain.p, t_tuple, atol)
    return rows[0] if scalar else rows


def duality_moment(sigma, nu: JumpMeasure, v, p, t, atol=1e-12):
    """Dual moment prediction sum_n P(N_t = n) v^n for E[X_t(v)^p]."""
    if not 0.0 <= v <= 1.0:
        raise ValueError("v must lie in [0, 1]")
    chain = merge_rates(sigma, nu, p)
    dist = block_distribution(chain, t, atol=atol)
    powers = v ** np.arange(1, p + 1)
    return float(dist @ powers)
