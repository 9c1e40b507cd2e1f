"""Roaming pact contract: deployment, escrowed sessions, CDR settlement, refunds.

The engine keeps the contract's view of pacts and sessions and plugs into
the epoch runner through three hooks: it reacts to CDR submissions inside
block assembly (so payouts share the CDR's block), it watches the adopted
chain for confirmation depth, and it lets a scripted scenario submit the
CDR once usage ends.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Optional, Sequence

from .ledger import Chain, ChainState, Transaction, TxKind


class RoamingError(Exception):
    pass


class InvalidPact(RoamingError):
    pass


class DuplicatePact(RoamingError):
    pass


class UnknownPact(RoamingError):
    pass


class UnconfirmedDeposit(RoamingError):
    pass


class InsufficientDeposit(RoamingError):
    pass


class SessionMismatch(RoamingError):
    pass


class InvalidTransition(RoamingError):
    pass


class SessionNotSettled(RoamingError):
    pass


def _fraction(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(str(x))


@dataclass(frozen=True)
class RoamingPact:
    hpmn: str
    vpmn: str
    tariff: Mapping[str, int]       # tokens per unit of each service
    hpmn_share: Fraction            # part of each fee the home network keeps

    def __post_init__(self):
        object.__setattr__(self, "tariff", dict(sorted(self.tariff.items())))
        object.__setattr__(self, "hpmn_share", _fraction(self.hpmn_share))
        if self.hpmn == self.vpmn:
            raise InvalidPact("home and visited network must differ")
        if not self.tariff:
            raise InvalidPact("tariff must list at least one service")
        for service, rate in self.tariff.items():
            if not isinstance(rate, int) or rate <= 0:
                raise InvalidPact(f"rate for {service!r} must be a positive integer")
        if not 0 <= self.hpmn_share <= 1:
            raise InvalidPact("hpmn_share must lie in [0, 1]")

    def content(self) -> bytes:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()

    @property
    def address(self) -> str:
        return "pact-" + hashlib.sha256(self.content()).hexdigest()

    @property
    def cheapest_unit(self) -> int:
        return min(self.tariff.values())

    def to_dict(self) -> dict:
        return {"hpmn": self.hpmn, "vpmn": self.vpmn, "tariff": dict(self.tariff),
                "hpmn_share": str(self.hpmn_share)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "RoamingPact":
        return cls(d["hpmn"], d["vpmn"], {k: int(v) for k, v in d["tariff"].items()},
                   _fraction(d["hpmn_share"]))


class SessionState(str, enum.Enum):
    DEPOSITED = "Deposited"
    ACTIVE = "Active"
    SETTLED = "Settled"
    REFUNDED = "Refunded"


_NEXT = {SessionState.DEPOSITED: SessionState.ACTIVE,
         SessionState.ACTIVE: SessionState.SETTLED,
         SessionState.SETTLED: SessionState.REFUNDED}


@dataclass(frozen=True)
class CDR:
    session_id: str
    service: str
    units: Fraction
    start_slot: int
    end_slot: int

    def __post_init__(self):
        object.__setattr__(self, "units", _fraction(self.units))
        if self.units < 0:
            raise ValueError("units must be non-negative")
        if self.end_slot < self.start_slot:
            raise ValueError("end_slot must not precede start_slot")

    def to_dict(self) -> dict:
        return {"session_id": self.session_id, "service": self.service, "units": str(self.units),
                "start_slot": self.start_slot, "end_slot": self.end_slot}

    @classmethod
    def from_dict(cls, d: Mapping) -> "CDR":
        return cls(d["session_id"], d["service"], _fraction(d["units"]),
                   int(d["start_slot"]), int(d["end_slot"]))

    def to_bytes(self) -> bytes:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()


@dataclass(frozen=True)
class SettlementRecord:
    session_id: str
    fee: int              # what the usage costs
    charged: int          # what the escrow actually pays (fee capped at escrow)
    vpmn_amount: int
    hpmn_amount: int
    refund: int
    underfunded: bool
    transactions: tuple[Transaction, ...] = ()

    def to_dict(self) -> dict:
        return {"session_id": self.session_id, "fee": self.fee, "charged": self.charged,
                "vpmn_amount": self.vpmn_amount, "hpmn_amount": self.hpmn_amount,
                "refund": self.refund, "underfunded": self.underfunded,
                "transactions": [tx.to_dict() for tx in self.transactions]}


@dataclass
class RoamingSession:
    session_id: str
    pact_address: str
    subscriber: str
    escrow: int
    state: SessionState = SessionState.DEPOSITED
    deposit_tx: Optional[str] = None
    deposit_slot: Optional[int] = None
    opened_at: Optional[int] = None       # slot from which access is granted
    settled_at: Optional[int] = None
    confirmed_at: Optional[int] = None    # slot at which the settlement is kappa deep
    cdr: Optional[CDR] = None
    cdr_tx: Optional[str] = None
    timed_out: bool = False
    history: list = field(default_factory=list)

    @property
    def escrow_address(self) -> str:
        return f"{self.pact_address}/{self.session_id}"

    def advance(self, to: SessionState) -> None:
        to = SessionState(to)
        if _NEXT.get(self.state) is not to:
            raise InvalidTransition(f"{self.session_id}: {self.state.value} -> {to.value}")
        self.history.append((self.state.value, to.value))
        self.state = to

    def to_dict(self) -> dict:
        return {"session_id": self.session_id, "pact_address": self.pact_address,
                "subscriber": self.subscriber, "escrow": self.escrow, "state": self.state.value,
                "deposit_tx": self.deposit_tx, "deposit_slot": self.deposit_slot,
                "opened_at": self.opened_at, "settled_at": self.settled_at,
                "confirmed_at": self.confirmed_at,
                "cdr": self.cdr.to_dict() if self.cdr else None, "cdr_tx": self.cdr_tx,
                "timed_out": self.timed_out}

    @classmethod
    def from_dict(cls, d: Mapping) -> "RoamingSession":
        d = dict(d)
        d["state"] = SessionState(d["state"])
        d["cdr"] = CDR.from_dict(d["cdr"]) if d.get("cdr") else None
        return cls(**d)


def usage_fee(pact: RoamingPact, service: str, units) -> int:
    """Whole tokens owed for ``units`` of ``service``; part-tokens round up."""
    if service not in pact.tariff:
        raise RoamingError(f"pact has no tariff for {service!r}")
    return math.ceil(_fraction(units) * pact.tariff[service])


def split_payment(amount: int, hpmn_share: Fraction) -> tuple[int, int]:
    """(visited network part, home network part); the home side takes the remainder."""
    vpmn = math.floor(amount * (1 - _fraction(hpmn_share)))
    return vpmn, amount - vpmn


class RoamingEngine:
    """Contract state for pacts and sessions."""

    def __init__(self, kappa: int, slot_time: float = 20.0, timeout_slots: Optional[int] = None):
        self.kappa = kappa
        self.slot_time = slot_time
        # extension: refund the subscriber if no CDR arrives within this many slots
        self.timeout_slots = timeout_slots
        self.pacts: dict[str, RoamingPact] = {}
        self.sessions: dict[str, RoamingSession] = {}
        self.records: dict[str, SettlementRecord] = {}
        self._by_deposit: dict[str, str] = {}
        self._by_cdr_tx: dict[str, str] = {}
        self.log: list[dict] = []

    # -- step 0 and 1
    def deploy_pact(self, hpmn: str, vpmn: str, tariff: Mapping[str, int],
                    hpmn_share) -> tuple[RoamingPact, Transaction]:
        pact = RoamingPact(hpmn, vpmn, tariff, _fraction(hpmn_share))
        if pact.address in self.pacts:
            raise DuplicatePact(f"pact between {hpmn} and {vpmn} with this tariff already exists")
        self.pacts[pact.address] = pact
        tx = Transaction(f"deploy/{pact.address}", TxKind.CONTRACT_DEPOSIT, hpmn, pact.address, 0,
                         pact.content())
        return pact, tx

    def pact(self, address: str) -> RoamingPact:
        try:
            return self.pacts[address]
        except KeyError:
            raise UnknownPact(address) from None

    def query_tariff(self, address: str, service: Optional[str] = None):
        pact = self.pact(address)
        if service is None:
            return dict(pact.tariff)
        if service not in pact.tariff:
            raise RoamingError(f"pact has no tariff for {service!r}")
        return pact.tariff[service]

    # -- step 2 and 3
    def deposit(self, subscriber: str, address: str, session_id: str,
                amount: int) -> tuple[RoamingSession, Transaction]:
        self.pact(address)
        if session_id in self.sessions:
            raise RoamingError(f"session {session_id} already exists")
        session = RoamingSession(session_id, address, subscriber, amount)
        tx = Transaction(f"deposit/{session_id}", TxKind.CONTRACT_DEPOSIT, subscriber,
                         session.escrow_address, amount)
        session.deposit_tx = tx.id
        self.sessions[session_id] = session
        self._by_deposit[tx.id] = session_id
        return session, tx

    def open_session(self, subscriber: str, pact: RoamingPact, deposit_tx: Transaction,
                     chain: Chain) -> RoamingSession:
        """Grant access once the deposit is buried ``kappa`` blocks deep."""
        if deposit_tx.amount < pact.cheapest_unit:
            raise InsufficientDeposit(
                f"deposit {deposit_tx.amount} is below one tariff unit ({pact.cheapest_unit})")
        node = chain.find_transaction(deposit_tx.id)
        depth = None if node is None else chain.height - node.height
        if depth is None or depth < self.kappa:
            raise UnconfirmedDeposit(f"deposit depth {depth}, need {self.kappa}")
        sid = self._by_deposit.get(deposit_tx.id)
        if sid is None:
            prefix = f"{pact.address}/"
            if not deposit_tx.recipient.startswith(prefix):
                raise SessionMismatch("deposit was not sent to this pact")
            sid = deposit_tx.recipient[len(prefix):]
            self.pacts.setdefault(pact.address, pact)
            self.sessions[sid] = RoamingSession(sid, pact.address, subscriber, deposit_tx.amount,
                                                deposit_tx=deposit_tx.id)
            self._by_deposit[deposit_tx.id] = sid
        session = self.sessions[sid]
        if session.subscriber != subscriber:
            raise SessionMismatch("deposit belongs to another subscriber")
        session.deposit_slot = node.block.slot
        session.opened_at = chain.tip_slot
        session.advance(SessionState.ACTIVE)
        self._note("access", chain.tip_slot, session=sid, depth=depth)
        return session

    # -- step 4 to 6
    def cdr_tx(self, cdr: CDR) -> Transaction:
        session = self.sessions[cdr.session_id]
        pact = self.pact(session.pact_address)
        return Transaction(f"cdr/{cdr.session_id}", TxKind.CDR_SUBMISSION, pact.vpmn,
                           session.pact_address, 0, cdr.to_bytes())

    def settle(self, session: RoamingSession, cdr: CDR, slot: Optional[int] = None) -> SettlementRecord:
        """Charge the usage, pay both networks, refund the rest (or flag a shortfall)."""
        if cdr.session_id != session.session_id:
            raise SessionMismatch(f"CDR for {cdr.session_id} presented to {session.session_id}")
        if session.session_id in self.records:
            return self.records[session.session_id]
        if session.state is not SessionState.ACTIVE:
            raise InvalidTransition(f"{session.session_id} is {session.state.value}, not Active")
        pact = self.pact(session.pact_address)
        fee = usage_fee(pact, cdr.service, cdr.units)
        charged = min(fee, session.escrow)
        vpmn_amount, hpmn_amount = split_payment(charged, pact.hpmn_share)
        refund = session.escrow - charged
        sid = session.session_id
        txs = []
        if charged:
            txs.append(Transaction(f"settle/{sid}", TxKind.SETTLEMENT, session.escrow_address,
                                   pact.hpmn, charged))
        if vpmn_amount:
            txs.append(Transaction(f"pay-vpmn/{sid}", TxKind.TRANSFER, pact.hpmn, pact.vpmn,
                                   vpmn_amount))
        if refund:
            txs.append(Transaction(f"refund/{sid}", TxKind.REFUND, session.escrow_address,
                                   session.subscriber, refund))
        record = SettlementRecord(sid, fee, charged, vpmn_amount, hpmn_amount, refund,
                                  fee > session.escrow, tuple(txs))
        session.cdr = cdr
        session.settled_at = slot
        session.advance(SessionState.SETTLED)
        session.advance(SessionState.REFUNDED)
        self.records[sid] = record
        self._note("settle", slot, session=sid, fee=fee, charged=charged,
                   underfunded=record.underfunded)
        return record

    def expire(self, session: RoamingSession, slot: int) -> Optional[SettlementRecord]:
        """Refund the whole escrow when no CDR arrived in time (extension)."""
        if self.timeout_slots is None or session.state is not SessionState.ACTIVE:
            return None
        if slot - session.opened_at < self.timeout_slots:
            return None
        pact = self.pact(session.pact_address)
        service = next(iter(pact.tariff))
        record = self.settle(session, CDR(session.session_id, service, 0, session.opened_at, slot),
                             slot)
        session.timed_out = True
        return record

    # -- hooks for the epoch runner
    def on_transaction(self, tx: Transaction, state: ChainState, slot: int) -> Sequence[Transaction]:
        """Contract execution for a transaction a leader just included."""
        if tx.kind is not TxKind.CDR_SUBMISSION or tx.recipient not in self.pacts:
            return ()
        cdr = CDR.from_dict(json.loads(tx.payload))
        session = self.sessions.get(cdr.session_id)
        if session is None or session.pact_address != tx.recipient:
            return ()
        if tx.sender != self.pacts[tx.recipient].vpmn:
            return ()
        if session.session_id in self.records:
            return self.records[session.session_id].transactions
        if session.state is not SessionState.ACTIVE:
            return ()
        session.cdr_tx = tx.id
        self._by_cdr_tx[tx.id] = session.session_id
        return self.settle(session, cdr, slot).transactions

    def observe(self, slot: int, chain: Chain) -> Sequence[Transaction]:
        """After each slot: grant access to buried deposits, stamp confirmations."""
        out = []
        for session in self.sessions.values():
            if session.state is SessionState.DEPOSITED and session.deposit_tx:
                pact = self.pacts[session.pact_address]
                node = chain.find_transaction(session.deposit_tx)
                if node is not None and chain.height - node.height >= self.kappa \
                        and session.escrow >= pact.cheapest_unit:
                    session.deposit_slot = node.block.slot
                    session.opened_at = chain.tip_slot
                    session.advance(SessionState.ACTIVE)
                    self._note("access", chain.tip_slot, session=session.session_id,
                               depth=chain.height - node.height)
            elif session.state is SessionState.ACTIVE:
                record = self.expire(session, chain.tip_slot)
                if record is not None:
                    out.extend(record.transactions)
            elif session.state is SessionState.REFUNDED and session.confirmed_at is None:
                trigger = session.cdr_tx or self._last_tx(session)
                if trigger is None:
                    continue
                depth = chain.depth(trigger)
                if depth is not None and depth >= self.kappa:
                    session.confirmed_at = chain.tip_slot
                    self._note("confirmed", chain.tip_slot, session=session.session_id)
        return out

    def _last_tx(self, session: RoamingSession) -> Optional[str]:
        record = self.records.get(session.session_id)
        if record is None or not record.transactions:
            return None
        return record.transactions[-1].id

    def _note(self, event: str, slot, **data) -> None:
        self.log.append({"event": event, "slot": slot, **data})

    def to_json(self) -> str:
        return json.dumps({"kappa": self.kappa, "slot_time": self.slot_time,
                           "pacts": [p.to_dict() for p in self.pacts.values()],
                           "sessions": [s.to_dict() for s in self.sessions.values()]},
                          indent=2, sort_keys=True)


@dataclass(frozen=True)
class FraudTimeline:
    t_confirm_min: float
    t_detect_min: float
    t_supervise_min: float
    t_respond_min: float
    total_min: float
    legacy_total_min: float
    saving_min: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def fraud_timeline(session: RoamingSession, slot_time: float, t_detect: float = 0.0,
                   t_supervise: float = 0.0, t_respond: float = 0.0) -> FraudTimeline:
    """Resolution time for a settled session against the legacy clearing delay (minutes)."""
    from .security import LEGACY_CONFIRMATION_MINUTES, resolution_time

    if session.cdr is None or session.confirmed_at is None:
        raise SessionNotSettled(f"{session.session_id} has no confirmed settlement yet")
    t_confirm = (session.confirmed_at - session.cdr.end_slot) * slot_time / 60
    total = resolution_time(t_confirm, t_detect, t_supervise, t_respond)
    legacy = resolution_time(LEGACY_CONFIRMATION_MINUTES, t_detect, t_supervise, t_respond)
    return FraudTimeline(t_confirm, t_detect, t_supervise, t_respond, total, legacy, legacy - total)


# -- scripted end-to-end scenario --------------------------------------------

class ScenarioError(RoamingError):
    pass


@dataclass
class RoamingScenario:
    hpmn: str = "hpmn-home"
    vpmn: str = "vpmn-visited"
    subscriber: str = "roamer-1"
    subscriber_balance: int = 100
    operator_balance: int = 50
    validators: dict = field(default_factory=lambda: {f"validator-{k}": 100 for k in range(4)})
    tariff: dict = field(default_factory=lambda: {"voice": 2})
    hpmn_share: str = "0.5"
    deposit: int = 30
    service: str = "voice"
    units: str = "10"
    usage_slots: int = 5
    kappa: int = 9
    slot_time: float = 20.0
    epoch_length: int = 40
    timeout_slots: Optional[int] = None
    session_id: str = "session-1"
    seed: int = 0

    @classmethod
    def from_dict(cls, d: Mapping) -> "RoamingScenario":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ScenarioError(f"unknown scenario fields: {sorted(unknown)}")
        return cls(**d)

    def check(self) -> None:
        if self.deposit <= 0:
            raise ScenarioError("the subscriber must deposit a positive amount")
        if self.deposit > self.subscriber_balance:
            raise ScenarioError("deposit exceeds the subscriber's balance")
        if self.usage_slots < 0:
            raise ScenarioError("usage cannot end before it starts")
        needed = 2 + 2 * self.kappa + self.usage_slots
        if self.epoch_length < needed:
            raise ScenarioError(f"epoch of {self.epoch_length} slots is too short; need {needed}")


@dataclass
class DemoResult:
    steps: list[dict]
    record: Optional[SettlementRecord]
    session: RoamingSession
    conservation: str
    timeline: Optional[FraudTimeline]
    chain: Chain

    def to_dict(self) -> dict:
        return {"steps": self.steps, "conservation": self.conservation,
                "settlement": self.record.to_dict() if self.record else None,
                "session": self.session.to_dict(),
                "fraud_timeline": self.timeline.to_dict() if self.timeline else None}


def run_roaming_demo(scenario: RoamingScenario) -> DemoResult:
    """Run the full roaming procedure on a simulated chain and trace each step."""
    from .consensus import ConsensusParams, EpochRunner, StakeDistribution, build_schedule
    from .ledger import KeyRing
    from .rng import derive_bytes

    scenario.check()
    params = ConsensusParams(slot_time=scenario.slot_time, epoch_length=scenario.epoch_length,
                             committee_size=min(3, len(scenario.validators)))
    balances = dict(scenario.validators)
    balances.update({scenario.hpmn: scenario.operator_balance,
                     scenario.vpmn: scenario.operator_balance,
                     scenario.subscriber: scenario.subscriber_balance})
    keys = KeyRing.derive(sorted(balances), seed=scenario.seed)
    schedule = build_schedule(StakeDistribution(dict(scenario.validators)),
                              derive_bytes(scenario.seed, "roaming/schedule"), params)
    engine = RoamingEngine(scenario.kappa, scenario.slot_time, scenario.timeout_slots)
    pact, deploy_tx = engine.deploy_pact(scenario.hpmn, scenario.vpmn, scenario.tariff,
                                         scenario.hpmn_share)
    first = schedule.first_slot
    tariff_seen = engine.query_tariff(pact.address)
    session, deposit_tx = engine.deposit(scenario.subscriber, pact.address, scenario.session_id,
                                         scenario.deposit)

    def before(slot, chain):
        if session.state is SessionState.ACTIVE and session.cdr_tx is None \
                and slot >= session.opened_at + scenario.usage_slots:
            cdr = CDR(session.session_id, scenario.service, scenario.units, session.opened_at, slot)
            return [engine.cdr_tx(cdr)]
        return ()

    runner = EpochRunner(Chain.genesis(balances), schedule, keys, {}, params,
                         submissions={first: [deploy_tx], first + 1: [deposit_tx]},
                         on_slot=engine.observe, before_slot=before,
                         contract=engine.on_transaction)
    final, _ = runner.run()

    def slot_of(tx_id):
        node = final.find_transaction(tx_id)
        return None if node is None else node.block.slot

    def stamp(slot):
        return None if slot is None else slot * scenario.slot_time

    record = engine.records.get(session.session_id)
    steps = [
        {"step": 0, "label": "roaming pact deployed", "slot": slot_of(deploy_tx.id),
         "address": pact.address},
        {"step": 1, "label": "subscriber queries tariff", "slot": first + 1, "tariff": tariff_seen},
        {"step": 2, "label": "deposit sent to contract", "slot": slot_of(deposit_tx.id),
         "amount": scenario.deposit},
        {"step": 3, "label": "access granted", "slot": session.opened_at,
         "confirmation_depth": scenario.kappa},
        {"step": 4, "label": "CDR submitted", "slot": slot_of(session.cdr_tx) if session.cdr_tx
         else None, "cdr": session.cdr.to_dict() if session.cdr else None},
        {"step": 5, "label": "fee paid to HPMN, HPMN pays VPMN", "slot": session.settled_at,
         "fee": record.fee if record else None, "charged": record.charged if record else None,
         "hpmn": record.hpmn_amount if record else None,
         "vpmn": record.vpmn_amount if record else None,
         "underfunded": record.underfunded if record else None},
        {"step": 6, "label": "unused tokens refunded", "slot": session.settled_at,
         "refund": record.refund if record else None, "confirmed_at": session.confirmed_at},
    ]
    for step in steps:
        step["time_s"] = stamp(step["slot"])
    exact = (record is not None
             and record.vpmn_amount + record.hpmn_amount + record.refund == scenario.deposit
             and final.state.total_supply() == final.state.minted())
    timeline = fraud_timeline(session, scenario.slot_time) if session.confirmed_at else None
    return DemoResult(steps, record, session, "exact" if exact else "violated", timeline, final)
