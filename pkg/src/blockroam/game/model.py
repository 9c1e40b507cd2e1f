"""Stake-pool game: instances, policies, follower responses and profits.

A pool announces a fee ``alpha`` (share of rewards) and a cost ``c`` that
decays as ``c * exp(-p)`` in the invested stake ``p``.  Each follower either
puts its whole budget ``B_i`` in the pool or mines alone at cost ``C_i``.
The denominator ``sigma + sum(B)`` never changes because every follower
stakes its full budget one way or the other.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class GameError(ValueError):
    """Invalid game instance, policy or solver request."""


class DegenerateInstance(GameError):
    """No follower budget at all, so there is nothing to optimize."""


def _exp_neg(c: float, budget) -> np.ndarray | float:
    # c * exp(-B) without overflow for large c or underflow surprises for large B
    if c == 0:
        return np.zeros_like(budget, dtype=float) if isinstance(budget, np.ndarray) else 0.0
    return np.exp(math.log(c) - budget)


@dataclass(frozen=True)
class GameInstance:
    budgets: tuple
    costs: tuple
    sigma: float
    reward: float

    def __post_init__(self):
        object.__setattr__(self, "budgets", tuple(float(b) for b in self.budgets))
        object.__setattr__(self, "costs", tuple(float(c) for c in self.costs))
        if len(self.budgets) != len(self.costs):
            raise GameError("budgets and costs must have the same length")
        if any(not math.isfinite(b) or b <= 0 for b in self.budgets):
            raise GameError("every budget must be a positive finite number")
        if any(not math.isfinite(c) or c < 0 for c in self.costs):
            raise GameError("every operational cost must be a non-negative finite number")
        if not math.isfinite(self.sigma) or self.sigma < 0:
            raise GameError("pool stake sigma must be non-negative")
        if not math.isfinite(self.reward) or self.reward <= 0:
            raise GameError("block reward must be positive")
        if self.total_stake <= 0:
            raise GameError("total stake sigma + sum(B) must be positive")

    @property
    def n(self) -> int:
        return len(self.budgets)

    @property
    def total_stake(self) -> float:
        return math.fsum((self.sigma,) + self.budgets)

    @property
    def B(self) -> np.ndarray:
        return np.asarray(self.budgets, dtype=float)

    @property
    def C(self) -> np.ndarray:
        return np.asarray(self.costs, dtype=float)

    def fee_slopes(self) -> np.ndarray:
        """Charge per unit of fee for each follower: B_i * R / total."""
        return self.B * self.reward / self.total_stake

    def to_dict(self) -> dict:
        return {"n": self.n, "budgets": list(self.budgets), "costs": list(self.costs),
                "sigma": self.sigma, "reward": self.reward}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "GameInstance":
        if not isinstance(d, dict):
            raise GameError("instance must be a JSON object")
        missing = {"budgets", "costs", "sigma", "reward"} - set(d)
        if missing:
            raise GameError(f"instance is missing {sorted(missing)}")
        unknown = set(d) - {"n", "budgets", "costs", "sigma", "reward", "name"}
        if unknown:
            raise GameError(f"unknown instance keys {sorted(unknown)}")
        try:
            inst = cls(tuple(d["budgets"]), tuple(d["costs"]), float(d["sigma"]),
                       float(d["reward"]))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, GameError):
                raise
            raise GameError(f"malformed instance: {exc}") from None
        if "n" in d and d["n"] != inst.n:
            raise GameError(f"n = {d['n']} but {inst.n} budgets were given")
        return inst

    @classmethod
    def from_json(cls, text: str) -> "GameInstance":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise GameError(f"instance JSON line {exc.lineno} column {exc.colno}: {exc.msg}") from None


@dataclass(frozen=True)
class PoolPolicy:
    alpha: float
    c: float

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0):
            raise GameError(f"fee alpha must lie in [0, 1], got {self.alpha}")
        if not (self.c >= 0.0) or math.isinf(self.c):
            raise GameError(f"cost c must be finite and non-negative, got {self.c}")


def _charges(instance: GameInstance, policy: PoolPolicy) -> np.ndarray:
    return instance.fee_slopes() * policy.alpha + _exp_neg(policy.c, instance.B)


def charge(i: int, policy: PoolPolicy, instance: GameInstance) -> float:
    """What the pool takes from follower ``i`` if it invests."""
    b = instance.budgets[i]
    # same operation order as the vectorized form, so both agree to the last bit
    return (b * instance.reward / instance.total_stake) * policy.alpha + float(_exp_neg(policy.c, b))


def best_response(i: int, policy: PoolPolicy, instance: GameInstance) -> float:
    """Stake follower ``i`` puts in the pool: all of it when the charge is no
    more than its own cost, otherwise nothing."""
    return instance.budgets[i] if instance.costs[i] >= charge(i, policy, instance) else 0.0


def responses_at(policy: PoolPolicy, instance: GameInstance) -> "ResponseProfile":
    invest = tuple(bool(instance.costs[i] >= charge(i, policy, instance))
                   for i in range(instance.n))
    return ResponseProfile.from_invest(invest, instance)


@dataclass(frozen=True)
class ResponseProfile:
    invest: tuple
    pool_stakes: tuple
    self_stakes: tuple

    @classmethod
    def from_invest(cls, invest: Sequence[bool], instance: GameInstance) -> "ResponseProfile":
        invest = tuple(bool(x) for x in invest)
        if len(invest) != instance.n:
            raise GameError("one response per follower is required")
        pool = tuple(b if x else 0.0 for b, x in zip(instance.budgets, invest))
        own = tuple(0.0 if x else b for b, x in zip(instance.budgets, invest))
        return cls(invest, pool, own)

    @property
    def members(self) -> tuple:
        """0-based indices of investing followers."""
        return tuple(i for i, x in enumerate(self.invest) if x)

    def denominator(self, sigma: float) -> float:
        """sigma plus every staked token, pooled or not."""
        return math.fsum((sigma,) + self.pool_stakes + self.self_stakes)


def follower_profit(i: int, policy: PoolPolicy, responses: ResponseProfile,
                    instance: GameInstance) -> float:
    total = instance.total_stake
    if responses.invest[i]:
        p = responses.pool_stakes[i]
        return p * (1 - policy.alpha) * instance.reward / total - float(_exp_neg(policy.c, p))
    m = responses.self_stakes[i]
    return m * instance.reward / total - instance.costs[i]


def pool_profit(policy: PoolPolicy, responses: ResponseProfile, instance: GameInstance,
                mode: str = "opt") -> float:
    """Pool revenue from investing followers; ``full`` adds the owner's own share."""
    if mode not in ("opt", "full"):
        raise GameError(f"mode must be 'opt' or 'full', not {mode!r}")
    ch = _charges(instance, policy)
    opt = math.fsum(float(ch[i]) for i in responses.members)
    if mode == "opt":
        return opt
    return opt + instance.sigma * instance.reward / instance.total_stake


@dataclass(frozen=True)
class SolverConfig:
    eps: float = 1e-9               # relative profit tie tolerance
    big_m: Optional[float] = None   # None: 2 * (max C + R + c_max)
    grid: float = 1e-3              # brute-force step as a fraction of each axis
    subset_cap: int = 12

    def __post_init__(self):
        if not self.eps > 0:
            raise GameError("eps must be positive")
        if not self.grid > 0 or self.grid > 1:
            raise GameError("grid resolution must lie in (0, 1]")
        if self.subset_cap < 0:
            raise GameError("subset_cap must be non-negative")

    def big_m_for(self, instance: GameInstance) -> float:
        default = 2 * (max(instance.costs, default=0.0) + instance.reward + c_max(instance))
        if self.big_m is None:
            return default
        if self.big_m <= max(instance.costs, default=0.0) + instance.reward + c_max(instance):
            raise GameError("big_m must exceed max C + R + c_max")
        return self.big_m


def c_max(instance: GameInstance) -> float:
    """Largest cost any follower can accept: max C_i * exp(max B)."""
    if instance.n == 0:
        return 0.0
    top = max(instance.costs)
    return top * math.exp(max(instance.budgets)) if top > 0 else 0.0


@dataclass(frozen=True)
class Equilibrium:
    policy: PoolPolicy
    responses: ResponseProfile
    pool_profit_opt: float
    pool_profit_full: float
    follower_profits: tuple
    solver: str = "sweep"
    details: dict = field(default_factory=dict, compare=False)

    @classmethod
    def at(cls, policy: PoolPolicy, instance: GameInstance, responses=None,
           solver: str = "sweep", **details) -> "Equilibrium":
        if responses is None:
            responses = responses_at(policy, instance)
        opt = pool_profit(policy, responses, instance, "opt")
        full = opt + instance.sigma * instance.reward / instance.total_stake
        profits = tuple(follower_profit(i, policy, responses, instance)
                        for i in range(instance.n))
        return cls(policy, responses, opt, full, profits, solver, dict(details))

    def pool_stake_fraction(self, instance: GameInstance) -> float:
        return (instance.sigma + math.fsum(self.responses.pool_stakes)) / instance.total_stake

    def to_dict(self, instance: Optional[GameInstance] = None) -> dict:
        d = {
            "solver": self.solver,
            "alpha": self.policy.alpha,
            "c": self.policy.c,
            "pool_profit_opt": self.pool_profit_opt,
            "pool_profit_full": self.pool_profit_full,
            "investing": [i + 1 for i in self.responses.members],   # 1-based follower labels
            "investing_count": len(self.responses.members),
        }
        if instance is not None:
            d["pool_stake_percent"] = 100 * self.pool_stake_fraction(instance)
        if len(self.follower_profits) <= 50:
            d["follower_profits"] = list(self.follower_profits)
        return d

    CSV_HEADER = ("c_star", "alpha_star_percent", "U_star_p", "pool_stake_percent")

    def csv_row(self, instance: GameInstance) -> tuple:
        """Four significant digits, in the column order of the published table."""
        vals = (self.policy.c, 100 * self.policy.alpha, self.pool_profit_opt,
                100 * self.pool_stake_fraction(instance))
        return tuple(f"{v:.4g}" for v in vals)
