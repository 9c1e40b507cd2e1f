"""Scripted attack scenarios run against the consensus simulator.

Each scenario builds a small validator set in which the adversary (and any
accounts it bribes) hold ``adversary_ratio`` of the stake, runs one epoch
with the adversarial strategy, and reports whether the attack achieved its
goal and what it cost in confiscated deposits.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Optional

from .consensus import (
    Behavior,
    ConsensusParams,
    EpochRunner,
    EpochSchedule,
    StakeDistribution,
    StrategyKind,
    build_schedule,
    coin_toss,
    committee_secrets,
)
from .ledger import Chain, KeyRing, LockedFunds, Transaction, TxKind, apply_transaction
from .rng import derive_bytes
from .security import min_kappa

ADVERSARY = "mallory"
ACCOMPLICE = "mallory-2"
MERCHANT = "merchant"
VICTIM = "victim-msp"
SPENDABLE = 500      # unstaked tokens each validator holds on top of its stake


class AttackKind(str, enum.Enum):
    DOUBLE_SPEND = "double-spend"
    NOTHING_AT_STAKE = "nothing-at-stake"
    LONG_RANGE = "long-range"
    TRANSACTION_DENIAL = "transaction-denial"
    BRIBE_DENIAL = "bribe-supported-denial"
    GRINDING = "grinding"


class UnknownAttack(ValueError):
    pass


@dataclass
class AttackOutcome:
    kind: str
    succeeded: bool
    cost: int
    log: list[str] = field(default_factory=list)
    adversary_ratio: float = 0.0
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "succeeded": self.succeeded, "cost": self.cost,
                "adversary_ratio": self.adversary_ratio, "log": self.log,
                "details": self.details}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


@dataclass
class AttackFixture:
    adversary_ratio: float = 0.3
    total_stake: int = 1000
    honest_validators: int = 7
    epoch_length: int = 1000
    kappa: int = field(default_factory=lambda: min_kappa(0.3, 0.001))
    seed: int = 0
    coalition: tuple[str, ...] = (ADVERSARY,)

    def stakes(self) -> dict[str, int]:
        bad = round(self.adversary_ratio * self.total_stake)
        good = self.total_stake - bad
        out = {}
        n = len(self.coalition)
        for k, acct in enumerate(self.coalition):
            out[acct] = bad // n + (1 if k < bad % n else 0)
        for k in range(self.honest_validators):
            share = good // self.honest_validators + (1 if k < good % self.honest_validators else 0)
            out[f"honest-{k}"] = share
        return out

    def params(self) -> ConsensusParams:
        return ConsensusParams(epoch_length=self.epoch_length, committee_size=3)

    def setup(self, attempt: int = 0) -> tuple[Chain, EpochSchedule, KeyRing]:
        stakes = self.stakes()
        balances = {a: s + SPENDABLE for a, s in stakes.items()}
        balances.update({ACCOMPLICE: 0, MERCHANT: 0, VICTIM: SPENDABLE})
        keys = KeyRing.derive(sorted(balances), seed=self.seed)
        dist = StakeDistribution({a: s for a, s in stakes.items() if s > 0})
        seed = derive_bytes(self.seed, f"attack/schedule/{attempt}")
        schedule = build_schedule(dist, seed, self.params())
        return Chain.genesis(balances), schedule, keys

    def setup_with_committee_seat(self, account: str, tries: int = 100):
        """First schedule in which ``account`` sits on the committee."""
        for attempt in range(tries):
            chain, schedule, keys = self.setup(attempt)
            if account in schedule.committee:
                return chain, schedule, keys
        raise RuntimeError(f"{account} never drew a committee seat")


def _longest_run(schedule: EpochSchedule, accounts: set) -> tuple[int, int]:
    """(first slot, length) of the longest stretch led only by ``accounts``."""
    best = (schedule.first_slot, 0)
    start, length = None, 0
    for slot in schedule.slots():
        if schedule.leader_for(slot) in accounts:
            if length == 0:
                start = slot
            length += 1
            if length > best[1]:
                best = (start, length)
        else:
            length = 0
    return best


def _confiscated(chain: Chain, accounts) -> int:
    return sum(e.amount for e in chain.state.audit
               if e.kind == "confiscate" and e.account in accounts)


def _double_spend(fx: AttackFixture) -> AttackOutcome:
    chain, schedule, keys = fx.setup()
    start, length = _longest_run(schedule, {ADVERSARY})
    needed = fx.kappa + 2
    log = [f"adversary leads {len(schedule.slots_led_by(ADVERSARY))} of {len(schedule.leaders)} slots",
           f"longest adversarial run: {length} slots from slot {start}; "
           f"a reversible payment needs {needed}"]
    pay = Transaction("pay-merchant", TxKind.TRANSFER, ADVERSARY, MERCHANT, SPENDABLE)
    steal = Transaction("pay-self", TxKind.TRANSFER, ADVERSARY, ACCOMPLICE, SPENDABLE)
    behavior = Behavior(StrategyKind.PRIVATE_FORK, fork_start=start, fork_length=length,
                        public_txs=(pay,), private_txs=(steal,), watch_tx=pay.id,
                        hold_depth=fx.kappa)
    deepest = {"depth": -1, "slot": None}

    def watch(slot, adopted):
        d = adopted.depth(pay.id)
        if d is not None and d > deepest["depth"]:
            deepest.update(depth=d, slot=slot)
        return ()

    runner = EpochRunner(chain, schedule, keys, {ADVERSARY: behavior}, fx.params(), on_slot=watch)
    final, events = runner.run()
    delivered = deepest["depth"] >= fx.kappa
    reverted = final.find_transaction(pay.id) is None
    log.append(f"payment reached depth {deepest['depth']} (merchant waits for {fx.kappa})")
    if any(e["event"] == "fork-release" for e in events):
        log.append("private fork released and adopted")
    log.append("payment reverted" if reverted else "payment stays in the adopted chain")
    cost = _confiscated(final, {ADVERSARY})
    if cost:
        log.append(f"double-signed slots detected, {cost} tokens confiscated")
    return AttackOutcome(AttackKind.DOUBLE_SPEND.value, delivered and reverted, cost, log,
                         fx.adversary_ratio,
                         {"run_length": length, "required_run": needed,
                          "max_payment_depth": deepest["depth"], "reverted": reverted})


def _nothing_at_stake(fx: AttackFixture) -> AttackOutcome:
    chain, schedule, keys = fx.setup()
    runner = EpochRunner(chain, schedule, keys, {ADVERSARY: Behavior(StrategyKind.EQUIVOCATE)},
                         fx.params())
    final, events = runner.run()
    forks = sum(e["event"] == "equivocation" for e in events)
    deepest_reorg = max([e["dropped"] for e in events if e["event"] == "reorg"], default=0)
    cost = _confiscated(final, {ADVERSARY})
    log = [f"adversary signed two blocks in each of its {forks} slots",
           f"deepest reorganisation: {deepest_reorg} block(s); confirmation depth {fx.kappa}",
           f"confiscated deposit: {cost}"]
    succeeded = deepest_reorg >= fx.kappa or cost == 0
    return AttackOutcome(AttackKind.NOTHING_AT_STAKE.value, succeeded, cost, log,
                         fx.adversary_ratio, {"forks": forks, "deepest_reorg": deepest_reorg})


def _long_range(fx: AttackFixture) -> AttackOutcome:
    chain, schedule, keys = fx.setup_with_committee_seat(ADVERSARY)
    stake = fx.stakes()[ADVERSARY]
    locked = schedule.locked[ADVERSARY]
    # sell everything at the very start of the epoch, then misbehave freely
    sale = Transaction("sell-stake", TxKind.TRANSFER, ADVERSARY, ACCOMPLICE, stake + SPENDABLE)
    first = schedule.first_slot
    lowest = {"locked": locked}

    def watch(slot, adopted):
        lowest["locked"] = min(lowest["locked"], adopted.state.locked_amount(ADVERSARY))
        return ()

    runner = EpochRunner(chain, schedule, keys, {}, fx.params(), submissions={first: [sale]},
                         on_slot=watch)
    log = [f"committee member {ADVERSARY} has {locked} tokens locked for the epoch",
           f"sale of {sale.amount} tokens submitted at slot {first}"]
    try:
        apply_transaction(runner.adopted.state, sale)
        log.append("sale applies to the opening state")
    except LockedFunds as exc:
        log.append(f"rejected: {exc}")
    final, events = runner.run()
    holder = final.find_transaction(sale.id)
    if holder is not None:
        log.append(f"sale included at slot {holder.block.slot}, paid from block rewards")
    log.append(f"lowest locked amount during the epoch: {lowest['locked']}")
    succeeded = lowest["locked"] < locked
    return AttackOutcome(AttackKind.LONG_RANGE.value, succeeded, 0, log, fx.adversary_ratio,
                         {"locked": locked, "lowest_locked": lowest["locked"],
                          "sale_included": holder is not None})


def _denial(fx: AttackFixture, kind: AttackKind, coalition: tuple[str, ...]) -> AttackOutcome:
    chain, schedule, keys = fx.setup()
    submissions, victim_txs = {}, []
    for member in coalition:
        slots = schedule.slots_led_by(member)
        if not slots:
            continue
        tx = Transaction(f"victim-{member}", TxKind.TRANSFER, VICTIM, MERCHANT, 10)
        submissions.setdefault(slots[0], []).append(tx)
        victim_txs.append(tx)
    log = []
    if kind is AttackKind.BRIBE_DENIAL:
        bribes = [Transaction(f"bribe-{m}", TxKind.TRANSFER, ADVERSARY, m, 50)
                  for m in coalition if m != ADVERSARY]
        submissions.setdefault(schedule.first_slot, []).extend(bribes)
        log.append(f"{ADVERSARY} bribes {len(bribes)} leader(s) with 50 tokens each")
    behaviors = {m: Behavior(StrategyKind.CENSOR, target=VICTIM) for m in coalition}
    runner = EpochRunner(chain, schedule, keys, behaviors, fx.params(), submissions=submissions)
    final, events = runner.run()
    censored = sum(e["event"] == "censored" for e in events)
    denied = [tx.id for tx in victim_txs if final.find_transaction(tx.id) is None]
    cost = _confiscated(final, set(coalition))
    log += [f"{censored} censorship event(s) by the coalition",
            f"{len(victim_txs) - len(denied)} of {len(victim_txs)} victim transactions included",
            f"confiscated deposits: {cost}"]
    return AttackOutcome(kind.value, bool(denied) or not victim_txs, cost, log,
                         fx.adversary_ratio, {"censored": censored, "denied": denied})


def _grinding(fx: AttackFixture) -> AttackOutcome:
    chain, schedule, keys = fx.setup_with_committee_seat(ADVERSARY)
    secrets = committee_secrets(keys, schedule.committee, schedule.epoch)
    honest = coin_toss(schedule.committee, secrets)
    dist = StakeDistribution(fx.stakes())
    rho = len(schedule.leaders)

    def share(seed):
        return build_schedule(dist, seed, fx.params(), epoch=1).leaders.count(ADVERSARY) / rho

    baseline = share(honest.seed)
    log = [f"honest next-epoch share for {ADVERSARY}: {baseline:.3f}"]
    # grinding block contents is pointless: the next seed reads only committee reveals
    # reveal grinding: swap in other values after seeing everyone's commitment
    gains = 0
    for k in range(32):
        reveals = dict(secrets)
        reveals[ADVERSARY] = derive_bytes(fx.seed, f"attack/grind/{k}")
        toss = coin_toss(schedule.committee, secrets, reveals)
        if ADVERSARY not in toss.flagged and share(toss.seed) > baseline:
            gains += 1
    withheld = coin_toss(schedule.committee, secrets, {**secrets, ADVERSARY: None})
    log.append(f"32 substituted reveals: {gains} accepted with a better share")
    log.append(f"withholding the reveal is flagged: {ADVERSARY in withheld.flagged}")
    succeeded = gains > 0 or ADVERSARY not in withheld.flagged
    return AttackOutcome(AttackKind.GRINDING.value, succeeded, 0, log, fx.adversary_ratio,
                         {"baseline_share": baseline})


def run_attack(kind, adversary_ratio: float = 0.3, seed: int = 0,
               fixture: Optional[AttackFixture] = None) -> AttackOutcome:
    """Execute one scripted scenario and report its outcome."""
    try:
        kind = AttackKind(kind)
    except ValueError:
        raise UnknownAttack(f"unknown attack kind {kind!r}") from None
    if fixture is None:
        coalition = (ADVERSARY,)
        if kind is AttackKind.BRIBE_DENIAL:
            coalition = (ADVERSARY, "bribed-1", "bribed-2")
        fixture = AttackFixture(adversary_ratio=adversary_ratio, seed=seed, coalition=coalition)
    if kind is AttackKind.DOUBLE_SPEND:
        return _double_spend(fixture)
    if kind is AttackKind.NOTHING_AT_STAKE:
        return _nothing_at_stake(fixture)
    if kind is AttackKind.LONG_RANGE:
        return _long_range(fixture)
    if kind is AttackKind.TRANSACTION_DENIAL:
        return _denial(fixture, kind, fixture.coalition)
    if kind is AttackKind.BRIBE_DENIAL:
        return _denial(fixture, kind, fixture.coalition)
    return _grinding(fixture)


CORE_ATTACKS = (AttackKind.DOUBLE_SPEND, AttackKind.NOTHING_AT_STAKE, AttackKind.LONG_RANGE,
                   AttackKind.TRANSACTION_DENIAL, AttackKind.BRIBE_DENIAL)
