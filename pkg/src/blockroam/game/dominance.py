"""Randomized checks that a follower does best by staking its whole budget one way.

Three comparisons per sample, each evaluated from the payoff functions
themselves and cross-checked against its closed-form gap:

* pool, full budget ``p`` vs partial ``p' < p``:
  gap = (p - p')(1 - alpha)R/T + c(e^{-p'} - e^{-p})
* self-mining, full ``m`` vs partial ``m' < m``: gap = (m - m')R/T
* pure self-mining ``B`` vs a mixed split ``p + m = B``:
  gap = p*alpha*R/T + c*e^{-p}
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..rng import substream


def pool_payoff(p, alpha, c, reward, total):
    return p * (1 - alpha) * reward / total - c * np.exp(-p)


def solo_payoff(m, cost, reward, total):
    return m * reward / total - cost


def mixed_payoff(p, m, alpha, c, cost, reward, total):
    # the follower pays the pool on p and runs its own node for m
    return pool_payoff(p, alpha, c, reward, total) + solo_payoff(m, cost, reward, total)


@dataclass
class DominanceReport:
    samples: int
    violations: dict = field(default_factory=dict)
    min_gap: dict = field(default_factory=dict)
    formula_mismatch: int = 0

    @property
    def ok(self) -> bool:
        return not any(self.violations.values()) and self.formula_mismatch == 0

    def to_dict(self) -> dict:
        return {"samples": self.samples, "ok": self.ok, "violations": self.violations,
                "min_gap": self.min_gap, "formula_mismatch": self.formula_mismatch}


def dominance_checks(samples: int = 10_000, seed: int = 0, max_budget: float = 20.0) -> DominanceReport:
    """Sample instances, policies and splits; count non-positive payoff gaps."""
    rng = substream(seed, "game/dominance")
    n = samples
    budget = rng.uniform(1.0, max_budget, n)
    others = rng.uniform(1.0, max_budget, n) * rng.integers(1, 50, n)  # rest of the stake
    sigma = rng.uniform(0.0, 100.0, n)
    reward = rng.uniform(1.0, 1000.0, n)
    total = budget + others + sigma
    alpha = rng.uniform(0.0, 0.999, n)
    c = np.exp(rng.uniform(-3.0, math.log(10.0) + max_budget / 2, n))   # c > 0
    cost = rng.uniform(0.0, 1.0, n)
    part = rng.uniform(0.0, 1.0, n) * budget * 0.999       # p' or m' < B
    split = rng.uniform(0.01, 0.99, n) * budget            # mixed: p in (0, B)

    gaps = {
        "partial_pool": pool_payoff(budget, alpha, c, reward, total)
        - pool_payoff(part, alpha, c, reward, total),
        "partial_solo": solo_payoff(budget, cost, reward, total)
        - solo_payoff(part, cost, reward, total),
        "mixed": solo_payoff(budget, cost, reward, total)
        - mixed_payoff(split, budget - split, alpha, c, cost, reward, total),
    }
    closed = {
        "partial_pool": (budget - part) * (1 - alpha) * reward / total
        + c * (np.exp(-part) - np.exp(-budget)),
        "partial_solo": (budget - part) * reward / total,
        "mixed": split * alpha * reward / total + c * np.exp(-split),
    }
    report = DominanceReport(samples=n)
    for name, gap in gaps.items():
        report.violations[name] = int(np.count_nonzero(~(gap > 0)))
        report.min_gap[name] = float(gap.min())
        # payoffs are differences of O(R) terms, so compare at that scale
        tol = 1e-9 * (np.abs(closed[name]) + reward + c * np.exp(-np.minimum(part, split)))
        report.formula_mismatch += int(np.count_nonzero(np.abs(gap - closed[name]) > tol))
    return report
