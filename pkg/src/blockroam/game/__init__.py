"""Stake-pool Stackelberg game: model, exact solver, oracles and instance generators."""

from .model import (
    DegenerateInstance,
    Equilibrium,
    GameError,
    GameInstance,
    PoolPolicy,
    ResponseProfile,
    SolverConfig,
    best_response,
    charge,
    follower_profit,
    pool_profit,
    responses_at,
)
from .solver import solve_fixed_set, solve_leader
from .oracles import brute_force_oracle, milp_oracle, subset_lp_oracle
from .dominance import DominanceReport, dominance_checks
from .instances import TABLE3_ROWS, Table3Row, generate_instance, load_fixture, table3

__all__ = [
    "DegenerateInstance", "Equilibrium", "GameError", "GameInstance", "PoolPolicy",
    "ResponseProfile", "SolverConfig", "best_response", "charge", "follower_profit",
    "pool_profit", "responses_at", "solve_fixed_set", "solve_leader",
    "brute_force_oracle", "milp_oracle", "subset_lp_oracle", "DominanceReport",
    "dominance_checks", "TABLE3_ROWS", "Table3Row", "generate_instance",
    "load_fixture", "table3",
]
