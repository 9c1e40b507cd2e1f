import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from blockroam.game import (
    DegenerateInstance, GameError, GameInstance, PoolPolicy, ResponseProfile, SolverConfig,
    TABLE3_ROWS, best_response, brute_force_oracle, charge, dominance_checks, follower_profit,
    generate_instance, load_fixture, milp_oracle, pool_profit, responses_at, solve_fixed_set,
    solve_leader, subset_lp_oracle,
)
from blockroam.game.dominance import mixed_payoff, pool_payoff, solo_payoff


def random_instance(seed: int) -> GameInstance:
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 9))
    return GameInstance([float(x) for x in rng.uniform(1, 20, n)],
                        [float(x) for x in rng.uniform(0.01, 1, n)],
                        float(rng.uniform(0, 20)), float(rng.uniform(1, 100)))


instances = st.builds(
    lambda b, c, s, r: GameInstance(b, c[:len(b)] + [0.5] * (len(b) - len(c)), s, r),
    st.lists(st.floats(1, 20), min_size=1, max_size=7),
    st.lists(st.floats(0.01, 1), min_size=1, max_size=7),
    st.floats(0, 20), st.floats(1, 100))


def same_policy(a, b, tol=1e-9):
    return (abs(a.policy.alpha - b.policy.alpha) <= tol
            and abs(a.policy.c - b.policy.c) <= tol * max(1.0, abs(b.policy.c)))


# -- model -------------------------------------------------------------------

def test_charge_examples():
    g1, g3 = load_fixture("g1"), load_fixture("g3")
    assert charge(0, PoolPolicy(0, 14.84), g1) == pytest.approx(14.84 * math.exp(-5), abs=1e-12)
    assert charge(0, PoolPolicy(0, 14.84), g1) == pytest.approx(0.1, abs=1e-4)
    assert all(charge(i, PoolPolicy(0, 0), g3) == 0 for i in range(5))
    c2 = charge(1, PoolPolicy(0.03, 171.3), g3)
    assert c2 == pytest.approx(10 * 50 * 0.03 / 52 + 171.3 * math.exp(-10), abs=1e-12)
    assert c2 == pytest.approx(0.2962, abs=1e-4) and c2 < 0.3


def test_best_response_examples():
    g3 = load_fixture("g3")
    p = PoolPolicy(0.03, 171.3)
    assert charge(2, p, g3) == pytest.approx(0.375, abs=1e-3)
    assert best_response(2, p, g3) == 0
    assert all(best_response(i, PoolPolicy(0, 0), g3) == g3.budgets[i] for i in range(5))
    tight = GameInstance([2.0], [0.25], 2.0, 1.0)      # charge = 0.5 * 0.5 = 0.25
    assert charge(0, PoolPolicy(0.5, 0), tight) == 0.25
    assert best_response(0, PoolPolicy(0.5, 0), tight) == 2.0


def test_follower_profit_examples():
    g1 = load_fixture("g1")
    p = PoolPolicy(0, 14.84)
    r = responses_at(p, g1)
    assert follower_profit(0, p, r, g1) == pytest.approx(5 * 10 / 15 - 14.84 * math.exp(-5))
    assert follower_profit(0, p, r, g1) == pytest.approx(3.233, abs=1e-3)
    solo = ResponseProfile.from_invest([False], g1)
    assert follower_profit(0, p, solo, g1) == pytest.approx(5 * 10 / 15 - 0.1)
    assert follower_profit(0, PoolPolicy(1, 0), ResponseProfile.from_invest([True], g1), g1) == 0


def test_pool_profit_examples():
    g1, g3 = load_fixture("g1"), load_fixture("g3")
    nobody = ResponseProfile.from_invest([False] * 5, g3)
    assert pool_profit(PoolPolicy(0.03, 171.3), nobody, g3) == 0
    p = PoolPolicy(0, 14.84)
    r = responses_at(p, g1)
    assert pool_profit(p, r, g1, "full") - pool_profit(p, r, g1, "opt") == \
        pytest.approx(10 * 10 / 15, rel=1e-12)
    with pytest.raises(GameError):
        pool_profit(p, r, g1, "gross")


def test_instance_validation_and_json():
    g3 = load_fixture("g3")
    assert GameInstance.from_json(g3.to_json()) == g3
    with pytest.raises(GameError):
        GameInstance([0.0], [0.1], 1, 1)
    with pytest.raises(GameError):
        GameInstance.from_dict({"n": 2, "budgets": [1], "costs": [1], "sigma": 0, "reward": 1})
    with pytest.raises(GameError):
        GameInstance.from_json('{"n": 1, "budgets": [1], "costs": [0.1], "sigma": 0,\n "reward": }')
    with pytest.raises(GameError):
        PoolPolicy(1.5, 0)
    with pytest.raises(DegenerateInstance):
        solve_leader(GameInstance([], [], 1.0, 1.0))


# -- fixtures ----------------------------------------------------------------

def test_g1_and_g2():
    for name, profit in (("g1", 0.1), ("g2", 0.5)):
        eq = solve_leader(load_fixture(name))
        assert eq.policy.alpha == 0
        assert eq.policy.c == pytest.approx(0.1 * math.exp(5), abs=1e-9)
        assert eq.pool_profit_opt == pytest.approx(profit, abs=1e-9)


def test_g3_equilibrium_values():
    eq = solve_leader(load_fixture("g3"))
    assert eq.policy.alpha == pytest.approx(0.0304, abs=2e-4)
    assert eq.policy.c == pytest.approx(171.3, abs=0.1)
    assert eq.pool_profit_opt == pytest.approx(1.19, abs=0.01)


def test_g3_investing_set_is_two_four_five():
    # the exact optimum leaves follower 1 out; its three charges sum to the profit
    eq = solve_leader(load_fixture("g3"))
    assert eq.to_dict()["investing"] == [2, 4, 5]


def test_g3_restricted_all_invest():
    eq = solve_fixed_set(load_fixture("g3"), range(5))
    assert eq.pool_profit_opt == pytest.approx(0.679, abs=1e-3)
    assert all(eq.responses.invest)


@pytest.mark.parametrize("name", ["g1", "g2", "g3"])
def test_oracles_agree_on_fixtures(name):
    inst = load_fixture(name)
    eq = solve_leader(inst)
    for other in (subset_lp_oracle(inst), milp_oracle(inst)):
        assert other.pool_profit_opt == pytest.approx(eq.pool_profit_opt, rel=1e-7)
        assert other.responses.invest == eq.responses.invest
    grid = brute_force_oracle(inst)
    assert grid.pool_profit_opt <= eq.pool_profit_opt * (1 + 1e-12)


def test_grid_oracle_fixture_neighbourhoods():
    g1 = solve_leader(load_fixture("g1"))
    grid = brute_force_oracle(load_fixture("g1"))
    assert g1.pool_profit_opt - grid.pool_profit_opt < 1e-3 * g1.pool_profit_opt + 1e-9
    g2 = brute_force_oracle(load_fixture("g2"))
    assert g2.pool_profit_opt == pytest.approx(0.5, rel=2e-3)
    zero = GameInstance([3.0, 4.0], [0.0, 0.0], 1.0, 5.0)
    assert brute_force_oracle(zero).pool_profit_opt == 0
    assert solve_leader(zero).policy == PoolPolicy(0.0, 0.0)


@pytest.mark.parametrize("seed", range(40))
def test_sweep_matches_subset_oracle(seed):
    inst = random_instance(seed)
    eq, ref = solve_leader(inst), subset_lp_oracle(inst)
    assert math.isclose(eq.pool_profit_opt, ref.pool_profit_opt, rel_tol=1e-9, abs_tol=1e-15)
    assert same_policy(eq, ref)
    assert eq.pool_profit_opt >= brute_force_oracle(inst).pool_profit_opt * (1 - 1e-12)


def test_milp_matches_on_random_instances():
    for seed in range(5):
        inst = random_instance(1000 + seed)
        assert milp_oracle(inst).pool_profit_opt == \
            pytest.approx(solve_leader(inst).pool_profit_opt, rel=1e-6)


def test_big_m_must_dominate():
    g3 = load_fixture("g3")
    with pytest.raises(GameError):
        SolverConfig(big_m=1.0).big_m_for(g3)


# -- properties --------------------------------------------------------------

@settings(max_examples=60, deadline=None)
@given(instances, st.lists(st.booleans(), min_size=7, max_size=7))
def test_constant_denominator(inst, picks):
    r = ResponseProfile.from_invest(picks[:inst.n], inst)
    assert r.denominator(inst.sigma) == inst.total_stake
    assert all(p + m == b for p, m, b in zip(r.pool_stakes, r.self_stakes, inst.budgets))


@settings(max_examples=80, deadline=None)
@given(instances, st.floats(0, 1), st.floats(0, 1e4), st.floats(0, 1), st.floats(0, 1e4))
def test_threshold_monotone(inst, a1, c1, da, dc):
    lo = PoolPolicy(a1, c1)
    hi = PoolPolicy(min(1.0, a1 + da), c1 + dc)
    for i in range(inst.n):
        if best_response(i, lo, inst) == 0:
            assert best_response(i, hi, inst) == 0


@settings(max_examples=40, deadline=None)
@given(instances)
def test_solver_stable_and_self_consistent(inst):
    a, b = solve_leader(inst), solve_leader(inst)
    assert a == b
    assert responses_at(a.policy, inst) == a.responses
    assert a.pool_profit_full - a.pool_profit_opt == \
        pytest.approx(inst.sigma * inst.reward / inst.total_stake, rel=1e-12, abs=1e-15)


@settings(max_examples=30, deadline=None)
@given(instances)
def test_solver_never_below_subset_oracle(inst):
    eq, ref = solve_leader(inst), subset_lp_oracle(inst)
    assert eq.pool_profit_opt >= ref.pool_profit_opt * (1 - 1e-9)


# -- dominance ---------------------------------------------------------------

def test_dominance_random_samples():
    rep = dominance_checks(samples=10_000, seed=0)
    assert rep.ok and rep.samples == 10_000
    assert all(g > 0 for g in rep.min_gap.values())


def test_dominance_examples():
    a, c, R, T = 0.05, 3.0, 10.0, 30.0
    assert pool_payoff(5, a, c, R, T) > pool_payoff(3, a, c, R, T)
    assert solo_payoff(5, 0.1, R, T) > solo_payoff(3, 0.1, R, T)
    gap = solo_payoff(5, 0.1, R, T) - mixed_payoff(2, 3, a, c, 0.1, R, T)
    assert gap == pytest.approx(2 * a * R / T + c * math.exp(-2))


# -- generation --------------------------------------------------------------

def test_generate_inside_ranges_and_deterministic():
    row = TABLE3_ROWS["G4"]
    inst = row.instance(3)
    assert inst.n == 1000 and inst.sigma == 1000 and inst.reward == 1000
    assert min(inst.budgets) >= 1 and max(inst.budgets) <= 250
    assert min(inst.costs) >= 0.05 and max(inst.costs) <= 0.1
    assert row.instance(3) == inst and row.instance(4) != inst
    assert generate_instance((1, 2), (0.1, 0.2), 5, 1, 1, seed=9) == \
        generate_instance((1, 2), (0.1, 0.2), 5, 1, 1, seed=9)


def test_g4_solution_shape():
    inst = TABLE3_ROWS["G4"].instance(0)
    eq = solve_leader(inst)
    assert 0.005 <= eq.policy.alpha <= 0.10
    assert responses_at(eq.policy, inst) == eq.responses
    assert len(eq.csv_row(inst)) == 4
