"""Epoch scheduling, commit-reveal seeds, follow-the-satoshi election and slashing.

Slots are numbered globally.  The genesis block sits in slot 0 and epoch
``e`` covers slots ``1 + e*rho`` through ``(e+1)*rho``; slot ``k`` of an
epoch (counting from 0) is elected with draw index ``k``.
"""

from __future__ import annotations

import bisect
import enum
import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence

from .ledger import (
    BURN,
    MINT,
    Block,
    Chain,
    ChainState,
    KeyRing,
    LedgerError,
    Transaction,
    TxKind,
    apply_transaction,
    censorship_payload,
    equivocation_payload,
    equivocation_problem,
    parse_censorship,
    parse_equivocation,
    resolve_forks,
)

SEED_BYTES = 32


class ConsensusError(Exception):
    pass


class EmptyDistribution(ConsensusError):
    pass


class InsufficientStakeholders(ConsensusError):
    pass


class AllMembersFailed(ConsensusError):
    pass


class InvalidEvidence(ConsensusError):
    pass


# -- stake and parameters ----------------------------------------------------

@dataclass(frozen=True)
class StakeDistribution:
    stakes: Mapping[str, int]

    def __post_init__(self):
        for acct, s in self.stakes.items():
            if not isinstance(s, int) or s < 0:
                raise ValueError(f"stake of {acct!r} must be a non-negative integer")
        owners = sorted(a for a, s in self.stakes.items() if s > 0)
        cumulative, running = [], 0
        for a in owners:
            running += self.stakes[a]
            cumulative.append(running)
        object.__setattr__(self, "_owners", owners)
        object.__setattr__(self, "_cumulative", cumulative)

    @property
    def total(self) -> int:
        return self._cumulative[-1] if self._cumulative else 0

    @property
    def holders(self) -> list[str]:
        """Accounts with positive stake, in token order."""
        return list(self._owners)

    def owner_of(self, token: int) -> str:
        """Account owning token index ``token`` (accounts sorted by id)."""
        if not 0 <= token < self.total:
            raise IndexError(token)
        return self._owners[bisect.bisect_right(self._cumulative, token)]

    @classmethod
    def from_state(cls, state: ChainState, accounts: Iterable[str]) -> "StakeDistribution":
        return cls({a: state.balance(a) + state.locked_amount(a) for a in accounts})


@dataclass
class ConsensusParams:
    slot_time: float = 20.0
    epoch_length: int = 2160
    committee_size: int = 3
    block_reward: int = 1000
    deposit: int = 100
    # honest nodes refuse forks that drop an uncontested block they have seen
    reject_omissions: bool = True

    def __post_init__(self):
        if not self.slot_time > 0:
            raise ValueError("slot_time must be positive")
        if not self.epoch_length >= self.committee_size >= 1:
            raise ValueError("need epoch_length >= committee_size >= 1")
        if self.block_reward < 0 or self.deposit < 0:
            raise ValueError("block_reward and deposit must be non-negative")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: Mapping) -> "ConsensusParams":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown consensus parameters: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "ConsensusParams":
        return cls.from_dict(json.loads(text))


# -- coin tossing ------------------------------------------------------------

def commitment(secret: bytes, member: str) -> bytes:
    return hashlib.sha256(secret + member.encode("utf-8")).digest()


@dataclass(frozen=True)
class CoinToss:
    seed: bytes
    included: tuple[str, ...]
    flagged: tuple[str, ...]   # members that did not reveal or revealed a mismatch


def coin_toss(committee: Sequence[str], secrets: Mapping[str, bytes],
              reveals: Optional[Mapping[str, Optional[bytes]]] = None) -> CoinToss:
    """Commit, reveal, then XOR every reveal that opens its commitment.

    ``secrets`` are what each member committed to.  ``reveals`` overrides what
    a member actually discloses (``None`` means it stays silent); by default
    everyone reveals honestly.
    """
    if not committee:
        raise ValueError("committee must be non-empty")
    commits = {m: commitment(secrets[m], m) for m in committee}
    reveals = dict(secrets) if reveals is None else reveals
    seed = bytearray(SEED_BYTES)
    included, flagged = [], []
    for m in committee:
        r = reveals.get(m)
        if r is None or len(r) != SEED_BYTES or commitment(r, m) != commits[m]:
            flagged.append(m)
            continue
        included.append(m)
        for k in range(SEED_BYTES):
            seed[k] ^= r[k]
    if not included:
        raise AllMembersFailed("no committee member produced a valid reveal")
    return CoinToss(bytes(seed), tuple(included), tuple(flagged))


# -- follow the satoshi ------------------------------------------------------

def _hash_draw(seed: bytes, draw_index: int, counter: int) -> int:
    h = hashlib.sha256(seed + struct.pack(">QQ", draw_index, counter)).digest()
    return int.from_bytes(h, "big")


def fts_token(total: int, seed: bytes, draw_index: int, counter: int = 0) -> tuple[int, int]:
    """Uniform token index in ``[0, total)`` and the counter value that produced it."""
    if total <= 0:
        raise EmptyDistribution("total stake must be positive")
    span = 1 << 256
    limit = span - span % total
    while True:
        v = _hash_draw(seed, draw_index, counter)
        if v < limit:
            return v % total, counter
        counter += 1


def fts_select(dist: StakeDistribution, seed: bytes, draw_index: int, counter: int = 0) -> str:
    token, _ = fts_token(dist.total, seed, draw_index, counter)
    return dist.owner_of(token)


# -- schedules ---------------------------------------------------------------

def slash_tx_id(epoch: int, leader: str) -> str:
    return f"slash/{epoch}/{leader}"


@dataclass
class EpochSchedule:
    epoch: int
    first_slot: int
    leaders: tuple[str, ...]
    committee: tuple[str, ...]
    locked: dict[str, int]
    deposits: dict[str, int]
    block_reward: int
    seed: bytes
    # findings of the simulator's censorship detector: (leader, slot, tx id)
    detected_censorship: set = field(default_factory=set)

    @property
    def last_slot(self) -> int:
        return self.first_slot + len(self.leaders) - 1

    def slots(self) -> range:
        return range(self.first_slot, self.last_slot + 1)

    def leader_for(self, slot: int) -> Optional[str]:
        k = slot - self.first_slot
        return self.leaders[k] if 0 <= k < len(self.leaders) else None

    def slots_led_by(self, account: str) -> list[int]:
        return [self.first_slot + k for k, a in enumerate(self.leaders) if a == account]

    def _check_slash(self, tx: Transaction, block: Block, keys: KeyRing) -> bool:
        return (tx.id == slash_tx_id(self.epoch, tx.sender)
                and block.leader == tx.sender
                and self.leader_for(block.slot) == block.leader
                and tx.amount == self.deposits.get(tx.sender))

    def check_evidence(self, tx: Transaction, keys: KeyRing) -> bool:
        """Whether a SlashEvidence transaction proves misbehaviour in this epoch."""
        try:
            if tx.payload[:1] == b"E":
                a, b = parse_equivocation(tx.payload)
                return equivocation_problem(a, b, keys) is None and self._check_slash(tx, a, keys)
            if tx.payload[:1] == b"C":
                block, omitted = parse_censorship(tx.payload)
                return (keys.verify(block) and self._check_slash(tx, block, keys)
                        and (block.leader, block.slot, omitted.id) in self.detected_censorship)
        except ValueError:
            return False
        return False

    def to_dict(self) -> dict:
        return {"epoch": self.epoch, "first_slot": self.first_slot, "leaders": list(self.leaders),
                "committee": list(self.committee), "locked": dict(sorted(self.locked.items())),
                "deposits": dict(sorted(self.deposits.items())),
                "block_reward": self.block_reward, "seed": self.seed.hex()}


def build_schedule(dist: StakeDistribution, seed: bytes, params: ConsensusParams,
                   epoch: int = 0, require_full_committee: bool = False) -> EpochSchedule:
    """Leaders for every slot of ``epoch`` plus a committee of distinct stakeholders.

    When fewer stakeholders exist than ``committee_size`` the committee holds
    all of them, unless ``require_full_committee`` asks for an error instead.
    """
    if dist.total <= 0:
        raise EmptyDistribution("cannot schedule an epoch without stake")
    rho = params.epoch_length
    leaders = tuple(fts_select(dist, seed, k) for k in range(rho))
    holders = dist.holders
    size = params.committee_size
    if len(holders) < size:
        if require_full_committee:
            raise InsufficientStakeholders(
                f"committee needs {size} distinct members, only {len(holders)} hold stake")
        size = len(holders)
    committee: list[str] = []
    for k in range(size):
        counter = 0
        while True:
            token, used = fts_token(dist.total, seed, rho + k, counter)
            member = dist.owner_of(token)
            if member not in committee:
                committee.append(member)
                break
            counter = used + 1
    deposits = {a: min(params.deposit, dist.stakes[a]) for a in sorted(set(leaders))}
    locked = dict(deposits)
    for m in committee:
        locked[m] = max(locked.get(m, 0), dist.stakes[m])
    return EpochSchedule(epoch, 1 + epoch * rho, leaders, tuple(committee),
                         dict(sorted(locked.items())), deposits, params.block_reward, seed)


def apply_locks(state: ChainState, schedule: EpochSchedule) -> ChainState:
    for acct, amount in schedule.locked.items():
        if amount:
            state = state.lock(acct, amount)
    return state


def committee_secrets(keys: KeyRing, committee: Iterable[str], epoch: int) -> dict[str, bytes]:
    """Each member's coin-toss secret for ``epoch``, derived from its own key."""
    return {m: keys.sign_bytes(m, b"coin-toss" + struct.pack(">Q", epoch)) for m in committee}


# -- slashing ----------------------------------------------------------------

def equivocation_tx(first: Block, second: Block, schedule: EpochSchedule,
                    keys: KeyRing) -> Transaction:
    """Build the SlashEvidence transaction for a double-signed slot."""
    problem = equivocation_problem(first, second, keys)
    if problem is None and schedule.leader_for(first.slot) != first.leader:
        problem = "the signer was not the scheduled leader"
    if problem is not None:
        raise InvalidEvidence(problem)
    leader = first.leader
    return Transaction(slash_tx_id(schedule.epoch, leader), TxKind.SLASH_EVIDENCE, leader, BURN,
                       schedule.deposits.get(leader, 0), equivocation_payload(first, second))


def slash_equivocation(evidence: tuple[Block, Block], state: ChainState,
                       schedule: EpochSchedule, keys: KeyRing) -> tuple[ChainState, dict]:
    """Confiscate the double-signer's deposit into the burn account."""
    tx = equivocation_tx(evidence[0], evidence[1], schedule, keys)
    try:
        new_state = apply_transaction(state, tx)
    except LedgerError as exc:
        raise InvalidEvidence(str(exc)) from exc
    event = {"event": "slash", "slot": evidence[0].slot, "leader": tx.sender,
             "amount": tx.amount, "reason": "equivocation"}
    return new_state, event


# -- behaviours --------------------------------------------------------------

class StrategyKind(str, enum.Enum):
    HONEST = "honest"
    WITHHOLD = "withhold"
    PRIVATE_FORK = "private-fork"
    EQUIVOCATE = "equivocate"
    CENSOR = "censor"


@dataclass(frozen=True)
class Behavior:
    kind: StrategyKind = StrategyKind.HONEST
    # restrict the strategy to these slots; elsewhere the account acts honestly
    slots: Optional[frozenset] = None
    target: Optional[str] = None                 # CENSOR
    fork_start: Optional[int] = None             # PRIVATE_FORK window
    fork_length: int = 0
    public_txs: tuple[Transaction, ...] = ()     # shown on the public branch
    private_txs: tuple[Transaction, ...] = ()    # placed on the hidden branch instead
    watch_tx: Optional[str] = None               # release only once this is buried ...
    hold_depth: int = 0                          # ... at least this deep

    def __post_init__(self):
        object.__setattr__(self, "kind", StrategyKind(self.kind))
        if self.slots is not None:
            object.__setattr__(self, "slots", frozenset(self.slots))

    def active_at(self, slot: int) -> bool:
        if self.kind is StrategyKind.PRIVATE_FORK:
            start = self.fork_start or 0
            return start <= slot < start + self.fork_length
        return self.slots is None or slot in self.slots

    @classmethod
    def from_dict(cls, d: Mapping) -> "Behavior":
        d = dict(d)
        for key in ("public_txs", "private_txs"):
            d[key] = tuple(Transaction.from_dict(t) for t in d.get(key, ()))
        if d.get("slots") is not None:
            d["slots"] = frozenset(d["slots"])
        return cls(**d)


HONEST = Behavior()


def _touches(tx: Transaction, account: str) -> bool:
    return tx.sender == account or tx.recipient == account


# -- epoch execution ---------------------------------------------------------

SlotHook = Callable[[int, Chain], Iterable[Transaction]]
# called for every transaction a leader includes; returns follow-ups for the same block
ContractHook = Callable[[Transaction, ChainState, int], Sequence[Transaction]]


class EpochRunner:
    """Slot-by-slot execution of one epoch over a shared network view.

    ``tips`` holds the published chain heads that can still win; after each
    slot the honest view is re-resolved over them, and ``published`` keeps
    every block ever shown so dropped forks still count as observed.

    Hooks: ``before_slot`` runs before the slot's leader acts and may submit
    transactions it will see; ``on_slot`` runs after fork resolution and its
    transactions wait for the next slot; ``contract`` executes inside block
    assembly so contract payouts land in the same block as their trigger.
    """

    def __init__(self, chain: Chain, schedule: EpochSchedule, keys: KeyRing,
                 behaviors: Optional[Mapping[str, Behavior]] = None,
                 params: Optional[ConsensusParams] = None,
                 submissions: Optional[Mapping[int, Sequence[Transaction]]] = None,
                 on_slot: Optional[SlotHook] = None, before_slot: Optional[SlotHook] = None,
                 contract: Optional[ContractHook] = None):
        self.schedule = schedule
        self.keys = keys
        self.behaviors = dict(behaviors or {})
        self.params = params or ConsensusParams(epoch_length=len(schedule.leaders))
        self.submissions = {int(k): list(v) for k, v in (submissions or {}).items()}
        self.on_slot = on_slot
        self.before_slot = before_slot
        self.contract = contract
        self.events: list[dict] = []
        self.mempool: list[Transaction] = []
        self._mempool_ids: set[str] = set()
        self.cache: dict = {}
        self.published: dict[int, list[Block]] = {}
        self.evidence: dict[str, Transaction] = {}
        self._private: dict[str, Optional[Chain]] = {}
        self._fork_base: dict[str, Chain] = {}
        self._fork_done: set[str] = set()
        start = chain.with_state(apply_locks(chain.state, schedule))
        self.start_height = start.height
        self.adopted = start
        self.tips: list[Chain] = [start]
        self._log("epoch-start", schedule.first_slot, epoch=schedule.epoch,
                  committee=list(schedule.committee), locked=dict(schedule.locked))

    # -- helpers
    def _log(self, event: str, slot: int, **data) -> None:
        self.events.append({"event": event, "slot": slot, **data})

    def submit(self, tx: Transaction) -> None:
        if tx.id not in self._mempool_ids:
            self._mempool_ids.add(tx.id)
            self.mempool.append(tx)

    def _reward(self, slot: int, leader: str, tag: str = "") -> Transaction:
        return Transaction(f"reward/{slot}{tag}", TxKind.BLOCK_REWARD, MINT, leader,
                           self.schedule.block_reward)

    def _assemble(self, parent: Chain, slot: int, leader: str, extra: Sequence[Transaction] = (),
                  skip: Optional[Callable[[Transaction], bool]] = None,
                  include_pool: bool = True, tag: str = "") -> tuple[Block, list[Transaction]]:
        """Greedy block body: reward, evidence, extras, then mempool order."""
        state = parent.state
        txs, skipped = [], []
        pool = list(self.evidence.values()) + list(extra)
        if include_pool:
            pool += self.mempool
        for tx in [self._reward(slot, leader, tag)] + pool:
            if tx.id in state.applied:
                continue
            if skip is not None and skip(tx):
                try:
                    apply_transaction(state, tx)
                    skipped.append(tx)
                except LedgerError:
                    pass
                continue
            try:
                state = apply_transaction(state, tx)
            except LedgerError:
                continue
            txs.append(tx)
            if self.contract is not None and include_pool:
                follow = list(self.contract(tx, state, slot))
                try:
                    after = state
                    for f in follow:
                        after = apply_transaction(after, f)
                except LedgerError:
                    continue
                state = after
                txs.extend(follow)
        block = self.keys.sign(Block(slot, leader, parent.tip_hash, tuple(txs)))
        return block, skipped

    def _publish(self, chain: Chain) -> None:
        node = chain
        while (node is not None and node.block.slot >= self.schedule.first_slot
               and not any(t is node for t in self.tips)):
            blocks = self.published.setdefault(node.block.slot, [])
            if all(b.hash != node.tip_hash for b in blocks):
                blocks.append(node.block)
            node = node.parent
        self.tips = [t for t in self.tips if not chain.contains(t)] + [chain]

    def _emit(self, parent: Chain, block: Block, publish: bool = True) -> Chain:
        chain = parent.append(block)
        self._log("reward", block.slot, leader=block.leader, amount=self.schedule.block_reward,
                  hash=block.hash.hex(), published=publish)
        if publish:
            self._publish(chain)
        return chain

    # -- strategies
    def _honest(self, slot: int, leader: str) -> None:
        block, _ = self._assemble(self.adopted, slot, leader)
        self._emit(self.adopted, block)

    def _censor(self, slot: int, leader: str, target: str) -> None:
        block, skipped = self._assemble(self.adopted, slot, leader,
                                        skip=lambda tx: _touches(tx, target))
        self._emit(self.adopted, block)
        for tx in skipped:
            self.schedule.detected_censorship.add((leader, slot, tx.id))
            self._log("censored", slot, leader=leader, tx=tx.id, target=target)
            if leader not in self.evidence:
                self.evidence[leader] = Transaction(
                    slash_tx_id(self.schedule.epoch, leader), TxKind.SLASH_EVIDENCE, leader, BURN,
                    self.schedule.deposits.get(leader, 0), censorship_payload(block, tx))

    def _equivocate(self, slot: int, leader: str) -> None:
        first, _ = self._assemble(self.adopted, slot, leader)
        second, _ = self._assemble(self.adopted, slot, leader, include_pool=False, tag="/alt")
        self._emit(self.adopted, first)
        self._emit(self.adopted, second)
        self._log("equivocation", slot, leader=leader,
                  hashes=sorted([first.hash.hex(), second.hash.hex()]))

    def _private_fork(self, slot: int, leader: str, b: Behavior) -> None:
        if leader in self._fork_done:
            return self._honest(slot, leader)
        if leader not in self._fork_base:
            self._fork_base[leader] = self.adopted
            self._private[leader] = None
            self._log("fork-start", slot, leader=leader, base_height=self.adopted.height)
        private = self._private[leader] or self._fork_base[leader]
        first = self._private[leader] is None
        block, _ = self._assemble(private, slot, leader, extra=b.private_txs if first else (),
                                  include_pool=False, tag="/private")
        candidate = self._emit(private, block, publish=False)
        buried = b.watch_tx is None or (self.adopted.depth(b.watch_tx) or -1) >= b.hold_depth
        if buried:
            winner = resolve_forks(self.tips + [candidate], self.schedule, self.keys, self.cache,
                                   self.params.reject_omissions, self._observed())
            if winner is candidate:
                self._publish(candidate)
                self._fork_done.add(leader)
                self._log("fork-release", slot, leader=leader, length=candidate.height
                          - self._fork_base[leader].height)
                return
        self._private[leader] = candidate
        public, _ = self._assemble(self.adopted, slot, leader, extra=b.public_txs)
        self._emit(self.adopted, public)

    # -- main loop
    def step(self, slot: int) -> None:
        for tx in self.submissions.get(slot, ()):
            self.submit(tx)
        if self.before_slot is not None:
            for tx in self.before_slot(slot, self.adopted):
                self.submit(tx)
        leader = self.schedule.leader_for(slot)
        b = self.behaviors.get(leader, HONEST)
        if not b.active_at(slot) or b.kind is StrategyKind.HONEST:
            self._honest(slot, leader)
        elif b.kind is StrategyKind.WITHHOLD:
            self._log("withhold", slot, leader=leader)
        elif b.kind is StrategyKind.CENSOR:
            self._censor(slot, leader, b.target)
        elif b.kind is StrategyKind.EQUIVOCATE:
            self._equivocate(slot, leader)
        elif b.kind is StrategyKind.PRIVATE_FORK:
            self._private_fork(slot, leader, b)
        self._resolve(slot)
        self._collect_equivocations(slot)
        if self.on_slot is not None:
            for tx in self.on_slot(slot, self.adopted):
                self.submit(tx)

    def _observed(self) -> dict[int, set]:
        return {s: {b.hash for b in blocks if self.cache.get(b.hash)}
                for s, blocks in self.published.items() if len(blocks) > 1}

    def _resolve(self, slot: int) -> None:
        before = self.adopted
        self.adopted = resolve_forks(self.tips, self.schedule, self.keys, self.cache,
                                     self.params.reject_omissions, self._observed())
        # nobody honest extends a shorter head again, so it cannot win back
        self.tips = [t for t in self.tips if t.height >= self.adopted.height]
        if not self.adopted.contains(before):
            common = before
            while not self.adopted.contains(common):
                common = common.parent
            self._log("reorg", slot, dropped=before.height - common.height,
                      new_tip=self.adopted.tip_hash.hex())

    def _collect_equivocations(self, slot: int) -> None:
        for s, blocks in self.published.items():
            if len(blocks) < 2:
                continue
            leader = blocks[0].leader
            if leader in self.evidence:
                continue
            self.evidence[leader] = equivocation_tx(blocks[0], blocks[1], self.schedule, self.keys)
            self._log("evidence", slot, leader=leader, offence_slot=s, kind="equivocation")

    def finish(self) -> Chain:
        """Close the epoch: log confiscations on the adopted chain and release locks."""
        final = self.adopted
        last = self.schedule.last_slot
        slashes = []
        for node in final.nodes():
            if node.height <= self.start_height:
                break
            for tx in node.block.transactions:
                if tx.kind is TxKind.SLASH_EVIDENCE:
                    reason = "equivocation" if tx.payload[:1] == b"E" else "censorship"
                    slashes.append((node.block.slot, tx.sender, tx.amount, reason))
        for slot, leader, amount, reason in reversed(slashes):
            self._log("slash", slot, leader=leader, amount=amount, reason=reason)
        pending = [tx.id for tx in self.mempool if tx.id not in final.state.applied]
        final = final.with_state(final.state.release_all())
        self._log("epoch-end", last, height=final.height, tip=final.tip_hash.hex(),
                  blocks=final.height - self.start_height, pending=pending)
        return final

    def run(self) -> tuple[Chain, list[dict]]:
        for slot in self.schedule.slots():
            self.step(slot)
        return self.finish(), self.events


def run_epoch(chain: Chain, schedule: EpochSchedule, behaviors: Mapping[str, Behavior],
              keys: KeyRing, params: Optional[ConsensusParams] = None,
              submissions: Optional[Mapping[int, Sequence[Transaction]]] = None,
              on_slot: Optional[SlotHook] = None, before_slot: Optional[SlotHook] = None,
              contract: Optional[ContractHook] = None) -> tuple[Chain, list[dict]]:
    runner = EpochRunner(chain, schedule, keys, behaviors, params, submissions, on_slot,
                         before_slot, contract)
    return runner.run()


def events_to_jsonl(events: Iterable[dict]) -> str:
    return "".join(json.dumps(e, sort_keys=True) + "\n" for e in events)


@dataclass
class SimulationResult:
    chain: Chain
    events: list[dict]
    schedules: list[EpochSchedule]
    seeds: list[bytes]


def simulate(chain: Chain, stakers: Sequence[str], params: ConsensusParams, keys: KeyRing,
             seed: bytes, epochs: int = 1, behaviors: Optional[Mapping[str, Behavior]] = None,
             submissions: Optional[Mapping[int, Sequence[Transaction]]] = None) -> SimulationResult:
    """Run consecutive epochs; each epoch's committee tosses the next epoch's seed."""
    events, schedules, seeds = [], [], [seed]
    for e in range(epochs):
        dist = StakeDistribution.from_state(chain.state, stakers)
        schedule = build_schedule(dist, seeds[-1], params, epoch=e)
        chain, log = run_epoch(chain, schedule, behaviors or {}, keys, params, submissions)
        toss = coin_toss(schedule.committee, committee_secrets(keys, schedule.committee, e))
        log.append({"event": "coin-toss", "slot": schedule.last_slot, "seed": toss.seed.hex(),
                    "flagged": list(toss.flagged)})
        events.extend({"epoch": e, **ev} for ev in log)
        schedules.append(schedule)
        seeds.append(toss.seed)
    return SimulationResult(chain, events, schedules, seeds)
