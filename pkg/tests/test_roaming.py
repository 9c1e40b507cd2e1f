import itertools
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from blockroam.ledger import Chain, KeyRing, Transaction, TxKind
from blockroam.roaming import (
    CDR, DuplicatePact, InsufficientDeposit, InvalidPact, InvalidTransition, RoamingEngine,
    RoamingPact, RoamingScenario, RoamingSession, ScenarioError, SessionNotSettled, SessionState,
    UnconfirmedDeposit, fraud_timeline, run_roaming_demo, split_payment, usage_fee,
)

from helpers import FixedSchedule, grow, signed_block

SUB, HOME, AWAY = "sub", "home", "away"


def engine_with_pact(kappa=3, share="0.5", tariff=None, timeout=None):
    eng = RoamingEngine(kappa, timeout_slots=timeout)
    pact, _ = eng.deploy_pact(HOME, AWAY, tariff or {"voice": 2}, share)
    return eng, pact


def chain_with_deposit(tx: Transaction, blocks_on_top: int):
    keys = KeyRing.derive(["L"], seed=0)
    sched = FixedSchedule({s: "L" for s in range(1, 50)})
    chain = Chain.genesis({SUB: 1000, HOME: 50, AWAY: 50})
    chain = chain.append(signed_block(keys, chain, 1, "L", [tx]))
    return grow(keys, chain, sched, range(2, 2 + blocks_on_top))


def active_session(eng, pact, amount=30, sid="s1"):
    session, tx = eng.deposit(SUB, pact.address, sid, amount)
    eng.open_session(SUB, pact, tx, chain_with_deposit(tx, eng.kappa))
    return session


# -- pacts -------------------------------------------------------------------

def test_pact_address_is_content_hash():
    eng, pact = engine_with_pact(share="0.6")
    assert pact.address.startswith("pact-") and len(pact.address) == 5 + 64
    assert RoamingPact(HOME, AWAY, {"voice": 2}, Fraction(3, 5)).address == pact.address
    assert eng.query_tariff(pact.address, "voice") == 2


def test_pact_errors():
    eng, _ = engine_with_pact()
    with pytest.raises(DuplicatePact):
        eng.deploy_pact(HOME, AWAY, {"voice": 2}, "0.5")
    with pytest.raises(InvalidPact):
        eng.deploy_pact(HOME, AWAY, {}, "0.5")
    with pytest.raises(InvalidPact):
        eng.deploy_pact(HOME, AWAY, {"voice": 2}, "1.5")
    with pytest.raises(InvalidPact):
        eng.deploy_pact(HOME, HOME, {"voice": 2}, "0.5")


def test_pact_round_trip():
    _, pact = engine_with_pact(share="1/3")
    assert RoamingPact.from_dict(pact.to_dict()) == pact


# -- sessions ----------------------------------------------------------------

def test_open_session_after_kappa_blocks():
    eng, pact = engine_with_pact()
    session = active_session(eng, pact)
    assert session.state is SessionState.ACTIVE
    assert session.opened_at - session.deposit_slot >= 3


def test_open_session_too_shallow():
    eng, pact = engine_with_pact()
    _, tx = eng.deposit(SUB, pact.address, "s1", 30)
    with pytest.raises(UnconfirmedDeposit):
        eng.open_session(SUB, pact, tx, chain_with_deposit(tx, 1))


def test_open_session_deposit_below_one_unit():
    eng, pact = engine_with_pact()
    _, tx = eng.deposit(SUB, pact.address, "s1", 1)
    with pytest.raises(InsufficientDeposit):
        eng.open_session(SUB, pact, tx, chain_with_deposit(tx, 5))


# -- settlement --------------------------------------------------------------

def test_settle_normal():
    eng, pact = engine_with_pact()
    s = active_session(eng, pact)
    rec = eng.settle(s, CDR("s1", "voice", 10, 4, 10))
    assert (rec.vpmn_amount, rec.hpmn_amount, rec.refund, rec.underfunded) == (10, 10, 10, False)
    assert s.state is SessionState.REFUNDED


def test_settle_zero_units_refunds_everything():
    eng, pact = engine_with_pact()
    rec = eng.settle(active_session(eng, pact), CDR("s1", "voice", 0, 4, 4))
    assert (rec.charged, rec.refund) == (0, 30)


def test_settle_underfunded_takes_whole_escrow():
    eng, pact = engine_with_pact()
    rec = eng.settle(active_session(eng, pact), CDR("s1", "voice", 20, 4, 30))
    assert rec.fee == 40 and rec.charged == 30 and rec.underfunded
    assert rec.vpmn_amount + rec.hpmn_amount == 30 and rec.refund == 0


def test_settle_requires_active_session():
    eng, pact = engine_with_pact()
    session, _ = eng.deposit(SUB, pact.address, "s1", 30)
    with pytest.raises(InvalidTransition):
        eng.settle(session, CDR("s1", "voice", 1, 0, 1))


def test_timeout_extension_refunds():
    eng, pact = engine_with_pact(timeout=10)
    s = active_session(eng, pact)
    assert eng.expire(s, s.opened_at + 9) is None
    rec = eng.expire(s, s.opened_at + 10)
    assert rec.refund == 30 and s.timed_out


@settings(max_examples=200)
@given(st.integers(1, 500), st.fractions(0, 1))
def test_split_is_exact(amount, share):
    v, h = split_payment(amount, share)
    assert v + h == amount and v >= 0 and h >= 0


@given(st.fractions(0, 50), st.fractions(0, 50), st.integers(1, 9))
def test_fee_monotone_in_units(u1, u2, rate):
    pact = RoamingPact(HOME, AWAY, {"data": rate}, "0.5")
    lo, hi = sorted((u1, u2))
    assert usage_fee(pact, "data", lo) <= usage_fee(pact, "data", hi)


@settings(max_examples=100)
@given(st.integers(2, 200), st.fractions(0, 120), st.fractions(0, 1))
def test_escrow_conservation(deposit, units, share):
    eng, pact = engine_with_pact(share=share)
    rec = eng.settle(active_session(eng, pact, deposit), CDR("s1", "voice", units, 3, 9))
    assert rec.vpmn_amount + rec.hpmn_amount + rec.refund == deposit


# -- state machine -----------------------------------------------------------

ORDER = [SessionState.DEPOSITED, SessionState.ACTIVE, SessionState.SETTLED, SessionState.REFUNDED]


def test_state_machine_exhaustive():
    # every sequence of up to five requested transitions
    for n in range(6):
        for seq in itertools.product(ORDER, repeat=n):
            s = RoamingSession("x", "p", SUB, 10)
            for target in seq:
                before = s.state
                try:
                    s.advance(target)
                except InvalidTransition:
                    assert s.state is before
                    continue
                assert ORDER.index(s.state) == ORDER.index(before) + 1
            visited = [ORDER[0]] + [SessionState(b) for _, b in s.history]
            assert visited == ORDER[:len(visited)]


def test_engine_operations_never_skip_states():
    ops = ["open", "settle", "expire"]
    for seq in itertools.product(ops, repeat=4):
        eng, pact = engine_with_pact(timeout=0)
        session, tx = eng.deposit(SUB, pact.address, "s1", 30)
        for op in seq:
            try:
                if op == "open":
                    eng.open_session(SUB, pact, tx, chain_with_deposit(tx, 3))
                elif op == "settle":
                    eng.settle(session, CDR("s1", "voice", 3, 0, 1))
                else:
                    eng.expire(session, 99)
            except (InvalidTransition, UnconfirmedDeposit):
                pass
        visited = [ORDER[0]] + [SessionState(b) for _, b in session.history]
        assert visited == ORDER[:len(visited)]


# -- timeline and demo -------------------------------------------------------

def test_fraud_timeline_examples():
    s = RoamingSession("x", "p", SUB, 10, cdr=CDR("x", "voice", 1, 0, 10), confirmed_at=19)
    t = fraud_timeline(s, 20.0)
    assert t.total_min == 3.0 and t.legacy_total_min == 240 and t.saving_min == 237
    z = RoamingSession("x", "p", SUB, 10, cdr=CDR("x", "voice", 1, 0, 10), confirmed_at=10)
    assert fraud_timeline(z, 20.0).total_min == 0
    with pytest.raises(SessionNotSettled):
        fraud_timeline(RoamingSession("y", "p", SUB, 10), 20.0)


def test_default_demo():
    res = run_roaming_demo(RoamingScenario())
    assert [s["step"] for s in res.steps] == list(range(7))
    assert res.conservation == "exact"
    assert res.timeline.t_confirm_min == 3.0
    assert res.session.opened_at - res.session.deposit_slot >= 9


def test_underfunded_demo_flags():
    res = run_roaming_demo(RoamingScenario(units="20"))
    assert res.steps[5]["underfunded"] is True and res.record.charged == 30
    assert res.conservation == "exact"


def test_scenario_validation():
    with pytest.raises(ScenarioError):
        RoamingScenario(deposit=500).check()
    with pytest.raises(ScenarioError):
        RoamingScenario.from_dict({"colour": "red"})
    with pytest.raises(ScenarioError):
        run_roaming_demo(RoamingScenario(epoch_length=10))


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 100), st.integers(0, 60), st.sampled_from(["0", "0.25", "0.5", "1"]),
       st.integers(1, 6))
def test_demo_invariants(deposit, units, share, kappa):
    res = run_roaming_demo(RoamingScenario(deposit=deposit, units=str(units), hpmn_share=share,
                                           kappa=kappa))
    assert res.conservation == "exact"
    r = res.record
    assert r.vpmn_amount + r.hpmn_amount + r.refund == deposit
    assert res.session.opened_at - res.session.deposit_slot >= kappa
