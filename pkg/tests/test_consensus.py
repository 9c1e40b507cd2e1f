import math
from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from blockroam.consensus import (
    AllMembersFailed, Behavior, ConsensusParams, EmptyDistribution, InsufficientStakeholders,
    InvalidEvidence, StakeDistribution, StrategyKind, build_schedule, coin_toss, commitment,
    equivocation_tx, events_to_jsonl, fts_select, run_epoch, simulate, slash_equivocation,
)
from blockroam.ledger import BURN, Chain, KeyRing, Transaction, TxKind, chain_is_valid
from blockroam.rng import derive_bytes

SEED = bytes(range(32))
STAKERS = ["v1", "v2", "v3", "v4"]


def setup(rho=30, deposit=100, stakes=None):
    stakes = stakes or {"v1": 400, "v2": 300, "v3": 200, "v4": 100}
    keys = KeyRing.derive(list(stakes), seed=3)
    chain = Chain.genesis(stakes)
    params = ConsensusParams(epoch_length=rho, deposit=deposit)
    sched = build_schedule(StakeDistribution(dict(stakes)), SEED, params)
    return keys, chain, params, sched


# -- coin toss ---------------------------------------------------------------

def test_coin_toss_single_member_is_identity():
    s = bytes(range(1, 33))
    assert coin_toss(["a"], {"a": s}).seed == s


def test_coin_toss_identical_secrets_cancel():
    s = b"\x5a" * 32
    assert coin_toss(["a", "b"], {"a": s, "b": s}).seed == bytes(32)


def test_coin_toss_excludes_mismatched_reveal():
    sec = {m: derive_bytes(1, m, 32) for m in "abc"}
    out = coin_toss(list("abc"), sec, reveals={"a": sec["a"], "b": b"\x00" * 32, "c": sec["c"]})
    assert out.flagged == ("b",)
    assert out.seed == bytes(x ^ y for x, y in zip(sec["a"], sec["c"]))
    with pytest.raises(AllMembersFailed):
        coin_toss(["a"], sec, reveals={"a": None})


def test_commitment_binds_member():
    assert commitment(b"x" * 32, "a") != commitment(b"x" * 32, "b")


# -- follow the satoshi -------------------------------------------------------

def test_fts_degenerate_distributions():
    assert {fts_select(StakeDistribution({"A": 100}), SEED, k) for k in range(50)} == {"A"}
    assert {fts_select(StakeDistribution({"A": 1, "B": 0}), SEED, k) for k in range(50)} == {"A"}
    with pytest.raises(EmptyDistribution):
        fts_select(StakeDistribution({"A": 0}), SEED, 0)


def test_fts_two_account_frequency():
    dist = StakeDistribution({"A": 30, "B": 70})
    m = 100_000
    hits = sum(fts_select(dist, SEED, k) == "A" for k in range(m))
    assert abs(hits / m - 0.3) < 3 * math.sqrt(0.3 * 0.7 / m)


def test_fts_chi_square_ten_accounts():
    stakes = {f"acct{k:02d}": int.from_bytes(derive_bytes(5, f"stake{k}", 2), "big") % 500 + 1
              for k in range(10)}
    dist = StakeDistribution(stakes)
    m = 50_000
    counts = Counter(fts_select(dist, SEED, k) for k in range(m))
    obs = [counts[a] for a in sorted(stakes)]
    exp = [m * stakes[a] / dist.total for a in sorted(stakes)]
    assert stats.chisquare(obs, exp).pvalue > 0.001


# -- schedules ---------------------------------------------------------------

def test_single_stakeholder_schedule():
    sched = build_schedule(StakeDistribution({"solo": 9}), SEED,
                           ConsensusParams(epoch_length=5, committee_size=3))
    assert sched.leaders == ("solo",) * 5 and sched.committee == ("solo",)
    with pytest.raises(InsufficientStakeholders):
        build_schedule(StakeDistribution({"solo": 9}), SEED,
                       ConsensusParams(epoch_length=5), require_full_committee=True)


def test_schedule_is_deterministic():
    dist = StakeDistribution({"A": 5, "B": 7, "C": 11})
    p = ConsensusParams(epoch_length=200)
    assert build_schedule(dist, SEED, p).to_dict() == build_schedule(dist, SEED, p).to_dict()
    assert build_schedule(dist, SEED, p).leaders != build_schedule(dist, bytes(32), p).leaders


def test_equal_stake_slot_shares():
    sched = build_schedule(StakeDistribution({"A": 50, "B": 50}), SEED,
                           ConsensusParams(epoch_length=10_000, committee_size=2))
    a = sched.leaders.count("A")
    assert abs(a - 5000) < 3 * math.sqrt(10_000 * 0.25)
    assert sorted(sched.committee) == ["A", "B"]


@settings(max_examples=30, deadline=None)
@given(st.dictionaries(st.sampled_from("ABCDEFG"), st.integers(0, 50), min_size=1),
       st.binary(min_size=32, max_size=32))
def test_schedule_only_picks_stakeholders(stakes, seed):
    dist = StakeDistribution(stakes)
    if dist.total == 0:
        return
    sched = build_schedule(dist, seed, ConsensusParams(epoch_length=20))
    assert all(stakes[a] > 0 for a in sched.leaders + sched.committee)
    assert len(set(sched.committee)) == len(sched.committee)


def test_params_validation():
    with pytest.raises(ValueError):
        ConsensusParams(slot_time=0)
    with pytest.raises(ValueError):
        ConsensusParams(epoch_length=2, committee_size=3)
    with pytest.raises(ValueError):
        ConsensusParams.from_dict({"epoch_len": 3})


# -- epochs ------------------------------------------------------------------

def test_honest_epoch_grows_by_rho():
    keys, chain, params, sched = setup()
    final, events = run_epoch(chain, sched, {}, keys, params)
    assert final.height == chain.height + 30
    assert chain_is_valid(final, sched, keys)
    rewards = Counter(e["leader"] for e in events if e["event"] == "reward")
    assert rewards == Counter(sched.leaders)     # one block per owned slot


def test_withholding_leader_skips_its_slot():
    keys, chain, params, sched = setup()
    slot = sched.first_slot + 4
    who = sched.leader_for(slot)
    final, _ = run_epoch(chain, sched, {who: Behavior(StrategyKind.WITHHOLD, slots={slot})},
                         keys, params)
    assert final.height == chain.height + 29
    assert all(n.block.slot != slot for n in final.nodes())


def test_equivocation_confiscates_deposit():
    keys, chain, params, sched = setup()
    slot = sched.first_slot + 2
    who = sched.leader_for(slot)
    before = chain.state.balance(who)
    final, events = run_epoch(chain, sched,
                              {who: Behavior(StrategyKind.EQUIVOCATE, slots={slot})}, keys, params)
    slashes = [e for e in events if e["event"] == "slash"]
    assert [(e["leader"], e["amount"]) for e in slashes] == [(who, 100)]
    assert final.state.balance(BURN) == 100
    earned = 1000 * sum(1 for n in final.nodes() if n.parent and n.block.leader == who)
    assert final.state.balance(who) == before + earned - 100
    assert final.state.locked_amount(who) == 0


def test_direct_slash_and_invalid_evidence():
    keys, chain, params, sched = setup()
    slot = sched.first_slot
    who = sched.leader_for(slot)
    state = chain.with_state(chain.state.lock(who, 100)).state
    from blockroam.ledger import Block
    a = keys.sign(Block(slot, who, chain.tip_hash, ()))
    b = keys.sign(Block(slot, who, chain.tip_hash,
                        (Transaction("x", TxKind.BLOCK_REWARD, "mint", who, 1000),)))
    new, event = slash_equivocation((a, b), state, sched, keys)
    assert new.locked_amount(who) == 0 and new.balance(BURN) == 100 and event["amount"] == 100
    with pytest.raises(InvalidEvidence):
        slash_equivocation((a, a), state, sched, keys)
    later = keys.sign(Block(slot + 1, who, chain.tip_hash, ()))
    with pytest.raises(InvalidEvidence):
        equivocation_tx(a, later, sched, keys)


def test_locked_stake_cannot_move_mid_epoch():
    keys, chain, params, sched = setup()
    member = sched.committee[0]
    stake = chain.state.balance(member)
    spend = Transaction("escape", TxKind.TRANSFER, member, "elsewhere", stake)
    final, events = run_epoch(chain, sched, {}, keys, params, submissions={1: [spend]})
    # the lock holds for the whole epoch; only freshly earned rewards are spendable
    for node in final.nodes():
        if node.parent is None or node.block.slot < sched.first_slot:
            break
        assert node.parent.state.locked_amount(member) == sched.locked[member]
    assert final.state.locked_amount(member) == 0     # released at epoch end


def test_locked_transfer_is_rejected_while_locked():
    keys, chain, params, sched = setup()
    member = sched.committee[0]
    state = chain.with_state(chain.state.lock(member, sched.locked[member])).state
    from blockroam.ledger import LockedFunds, apply_transaction
    with pytest.raises(LockedFunds):
        apply_transaction(state, Transaction("escape", TxKind.TRANSFER, member, "x", 1))


def test_all_submitted_valid_transactions_land():
    keys, chain, params, sched = setup(deposit=10)
    txs = {s: [Transaction(f"pay{s}", TxKind.TRANSFER, "v4", "v1", 1)] for s in range(1, 25, 3)}
    final, events = run_epoch(chain, sched, {}, keys, params, submissions=txs)
    assert all(f"pay{s}" in final.state.applied for s in txs)
    assert [e for e in events if e["event"] == "epoch-end"][0]["pending"] == []


def test_run_epoch_is_deterministic():
    def once():
        keys, chain, params, sched = setup()
        behaviors = {sched.leaders[3]: Behavior(StrategyKind.EQUIVOCATE, slots={4})}
        _, events = run_epoch(chain, sched, behaviors, keys, params)
        return events_to_jsonl(events)
    assert once() == once()


def test_simulate_chains_epochs_with_fresh_seeds():
    stakes = {"v1": 400, "v2": 300, "v3": 200, "v4": 100}
    keys = KeyRing.derive(list(stakes), seed=3)
    res = simulate(Chain.genesis(stakes), list(stakes), ConsensusParams(epoch_length=20), keys,
                   SEED, epochs=3)
    assert res.chain.height == 60
    assert len(set(res.seeds)) == 4
    assert [s.first_slot for s in res.schedules] == [1, 21, 41]
