"""Instance generators, the thirteen large reference rows and bundled fixtures."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from typing import Optional

import numpy as np

from ..rng import substream
from .model import GameError, GameInstance


def truncated_normal(rng: np.random.Generator, lo: float, hi: float, n: int) -> np.ndarray:
    """Normal draws centred in [lo, hi] with sd = width/6, redrawn until inside."""
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
        raise GameError(f"invalid range [{lo}, {hi}]")
    if lo == hi:
        return np.full(n, float(lo))
    mid, sd = (lo + hi) / 2, (hi - lo) / 6
    out = rng.normal(mid, sd, n)
    bad = (out < lo) | (out > hi)
    while bad.any():
        out[bad] = rng.normal(mid, sd, int(bad.sum()))
        bad = (out < lo) | (out > hi)
    return out


def generate_instance(budget_range, cost_range, n: int, sigma: float, reward: float,
                      seed: int) -> GameInstance:
    if n < 1:
        raise GameError("n must be at least 1")
    blo, bhi = budget_range
    clo, chi = cost_range
    if blo <= 0:
        raise GameError("budgets must be positive, so the budget range must start above 0")
    if clo < 0:
        raise GameError("costs must be non-negative")
    B = truncated_normal(substream(seed, "game/budgets"), blo, bhi, n)
    C = truncated_normal(substream(seed, "game/costs"), clo, chi, n)
    return GameInstance(tuple(B), tuple(C), float(sigma), float(reward))


@dataclass(frozen=True)
class Table3Row:
    name: str
    reward: float
    budget_range: tuple
    cost_range: tuple
    sigma: float
    based_on: str
    # published equilibrium, for side-by-side display only
    c_star: float
    alpha_percent: float
    profit: float
    pool_stake_percent: float
    n: int = 1000

    def instance(self, seed: int) -> GameInstance:
        # each row draws from its own sub-seed so rows never share draws
        return generate_instance(self.budget_range, self.cost_range, self.n, self.sigma,
                                 self.reward, seed)

    def to_dict(self) -> dict:
        return {"name": self.name, "reward": self.reward, "budget_range": list(self.budget_range),
                "cost_range": list(self.cost_range), "sigma": self.sigma, "n": self.n,
                "based_on": self.based_on}


TABLE3_ROWS = {r.name: r for r in [
    Table3Row("G4", 1000, (1, 250), (0.05, 0.1), 1000, "Cardano", 3.2, 4.0, 28.95, 69.5),
    Table3Row("G5", 200, (1, 1000), (0.0001, 0.15), 1000, "Algorand", 0.06, 1.6, 1.81, 56.6),
    Table3Row("G6", 3.81, (1, 400), (0.0001, 0.002), 1000, "Cosmos", 0.1, 14.4, 0.35, 61.2),
    Table3Row("G7", 78, (80, 160), (0.0001, 0.02), 1000, "Tezos", 40.1, 6.1, 2.29, 48.9),
    Table3Row("G8", 500, (1, 5000), (0.001, 0.3), 1000, "NEM", 0.003, 13.01, 40.92, 62.9),
    Table3Row("G9", 100, (1, 250), (0.05, 0.1), 1000, "Cardano", 0.003, 40.4, 28.08, 69.5),
    Table3Row("G10", 10000, (1, 250), (0.05, 0.1), 1000, "Cardano", 0.207, 0.4, 29.13, 69.5),
    Table3Row("G11", 1000, (1, 250), (0.01, 0.02), 1000, "Cardano", 0.04, 0.8, 5.82, 69.5),
    Table3Row("G12", 1000, (1, 250), (0.25, 0.5), 1000, "Cardano", 0.04, 20.5, 140.54, 69.5),
    Table3Row("G13", 1000, (1, 25), (0.05, 0.1), 1000, "Cardano", 0.2, 4.7, 36.51, 72.1),
    Table3Row("G14", 1000, (1, 2500), (0.05, 0.1), 1000, "Cardano", 356.1, 4.0, 28.21, 70.1),
    Table3Row("G15", 1000, (1, 250), (0.05, 0.1), 1, "Cardano", 0.04, 4.0, 28.31, 69.5),
    Table3Row("G16", 1000, (1, 250), (0.05, 0.1), 100000, "Cardano", 0.02, 10.9, 28.15, 69.5),
]}


def table3(seed: int, rows: Optional[list] = None, solver=None) -> list:
    """Regenerate and solve reference rows; returns (row, instance, equilibrium) triples."""
    from .solver import solve_leader
    solver = solver or solve_leader
    names = rows or list(TABLE3_ROWS)
    out = []
    for name in names:
        if name not in TABLE3_ROWS:
            raise GameError(f"unknown row {name!r}; choose from {', '.join(TABLE3_ROWS)}")
        row = TABLE3_ROWS[name]
        inst = row.instance(seed)
        out.append((row, inst, solver(inst)))
    return out


FIXTURES = ("g1", "g2", "g3")


def load_fixture(name: str) -> GameInstance:
    key = name.lower()
    if key not in FIXTURES:
        raise GameError(f"unknown fixture {name!r}; choose from {', '.join(FIXTURES)}")
    text = resources.files("blockroam").joinpath("data", f"{key}.json").read_text()
    return GameInstance.from_dict(json.loads(text))
