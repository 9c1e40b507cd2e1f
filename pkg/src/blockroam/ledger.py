"""Hash-linked ledger: transactions, blocks, chains and fork resolution.

The byte layout used for hashing and signing is documented field by field in
``docs/serialization.md``.  Signatures are simulated: a signature is
``SHA-256(secret_key || unsigned block bytes)`` and verification recomputes it
with the signer's key from a :class:`KeyRing`.
"""

from __future__ import annotations

import enum
import hashlib
import json
import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator, Mapping, Optional, Protocol

MINT = "mint"
BURN = "burn"
GENESIS_LEADER = "genesis"
ZERO_HASH = bytes(32)

# Non-negative integer count of network tokens.
TokenAmount = int


class LedgerError(Exception):
    """Base class for ledger rule violations."""


class MalformedTransaction(LedgerError):
    pass


class InsufficientFunds(LedgerError):
    pass


class LockedFunds(InsufficientFunds):
    """The sender holds enough tokens, but part of them is locked for the epoch."""


class UnknownAccount(LedgerError):
    pass


class DoubleApply(LedgerError):
    pass


class NoValidCandidate(LedgerError):
    pass


class TxKind(str, enum.Enum):
    TRANSFER = "Transfer"
    CONTRACT_DEPOSIT = "ContractDeposit"
    CDR_SUBMISSION = "CdrSubmission"
    SETTLEMENT = "Settlement"
    REFUND = "Refund"
    BLOCK_REWARD = "BlockReward"
    SLASH_EVIDENCE = "SlashEvidence"


ZERO_AMOUNT_KINDS = {TxKind.CDR_SUBMISSION, TxKind.SLASH_EVIDENCE}


class Validity(str, enum.Enum):
    VALID = "valid"
    WRONG_LEADER = "wrong-leader"
    BAD_SIGNATURE = "bad-signature"
    BAD_LINK = "bad-link"
    INVALID_TX = "invalid-tx"


# -- canonical serialization -------------------------------------------------

def _u64(n: int) -> bytes:
    return struct.pack(">Q", n)


def _field(data: bytes) -> bytes:
    return struct.pack(">I", len(data)) + data


def _text(s: str) -> bytes:
    return _field(s.encode("utf-8"))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ValueError("truncated serialization")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack(">I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self.take(8))[0]

    def field(self) -> bytes:
        return self.take(self.u32())

    def text(self) -> str:
        return self.field().decode("utf-8")

    def done(self) -> bool:
        return self.pos == len(self.data)


@dataclass(frozen=True)
class Transaction:
    id: str
    kind: TxKind
    sender: str
    recipient: str
    amount: TokenAmount
    payload: bytes = b""

    def __post_init__(self):
        object.__setattr__(self, "kind", TxKind(self.kind))

    def to_bytes(self) -> bytes:
        return (_text(self.id) + _text(self.kind.value) + _text(self.sender)
                + _text(self.recipient) + _u64(self.amount) + _field(self.payload))

    @classmethod
    def from_bytes(cls, data: bytes) -> "Transaction":
        r = _Reader(data)
        tx = cls(r.text(), TxKind(r.text()), r.text(), r.text(), r.u64(), r.field())
        if not r.done():
            raise ValueError("trailing bytes after transaction")
        return tx

    def to_dict(self) -> dict:
        return {"id": self.id, "kind": self.kind.value, "from": self.sender,
                "to": self.recipient, "amount": self.amount, "payload": self.payload.hex()}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Transaction":
        return cls(d["id"], TxKind(d["kind"]), d["from"], d["to"], int(d["amount"]),
                   bytes.fromhex(d.get("payload", "")))


def check_well_formed(tx: Transaction) -> None:
    if not tx.id:
        raise MalformedTransaction("empty transaction id")
    if not isinstance(tx.amount, int) or isinstance(tx.amount, bool) or tx.amount < 0:
        raise MalformedTransaction(f"{tx.id}: amount must be a non-negative integer")
    if tx.amount >= 2 ** 64:
        raise MalformedTransaction(f"{tx.id}: amount exceeds 64 bits")
    if tx.amount == 0 and tx.kind not in ZERO_AMOUNT_KINDS:
        # a zero-value ContractDeposit is a contract deployment and must carry code
        if not (tx.kind is TxKind.CONTRACT_DEPOSIT and tx.payload):
            raise MalformedTransaction(f"{tx.id}: {tx.kind.value} must move a positive amount")
    if tx.kind is TxKind.CDR_SUBMISSION and tx.amount != 0:
        raise MalformedTransaction(f"{tx.id}: CDR submissions carry no value")
    if tx.kind is TxKind.SLASH_EVIDENCE and tx.recipient != BURN:
        raise MalformedTransaction(f"{tx.id}: confiscations are paid to {BURN!r}")
    if tx.kind is TxKind.BLOCK_REWARD and tx.sender != MINT:
        raise MalformedTransaction(f"{tx.id}: block rewards are issued by {MINT!r}")


@dataclass(frozen=True)
class Block:
    slot: int
    leader: str
    prev_hash: bytes
    transactions: tuple[Transaction, ...] = ()
    signature: bytes = b""

    def __post_init__(self):
        object.__setattr__(self, "transactions", tuple(self.transactions))

    def unsigned_bytes(self) -> bytes:
        parts = [_u64(self.slot), _text(self.leader), _field(self.prev_hash),
                 struct.pack(">I", len(self.transactions))]
        parts.extend(_field(tx.to_bytes()) for tx in self.transactions)
        return b"".join(parts)

    def to_bytes(self) -> bytes:
        return self.unsigned_bytes() + _field(self.signature)

    @cached_property
    def hash(self) -> bytes:
        return hash_block(self)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Block":
        r = _Reader(data)
        slot, leader, prev = r.u64(), r.text(), r.field()
        txs = tuple(Transaction.from_bytes(r.field()) for _ in range(r.u32()))
        sig = r.field()
        if not r.done():
            raise ValueError("trailing bytes after block")
        return cls(slot, leader, prev, txs, sig)

    def to_dict(self) -> dict:
        return {"slot": self.slot, "leader": self.leader, "prev_hash": self.prev_hash.hex(),
                "transactions": [tx.to_dict() for tx in self.transactions],
                "signature": self.signature.hex(), "hash": self.hash.hex()}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Block":
        block = cls(int(d["slot"]), d["leader"], bytes.fromhex(d["prev_hash"]),
                    tuple(Transaction.from_dict(t) for t in d["transactions"]),
                    bytes.fromhex(d["signature"]))
        if "hash" in d and block.hash.hex() != d["hash"]:
            raise ValueError(f"stored hash does not match block at slot {block.slot}")
        return block


def hash_block(block: Block) -> bytes:
    """SHA-256 of the canonical serialization, signature included."""
    return hashlib.sha256(block.to_bytes()).digest()


class KeyRing:
    """Simulated per-account secret keys."""

    def __init__(self, secrets: Mapping[str, bytes]):
        self._secrets = dict(secrets)

    @classmethod
    def derive(cls, accounts: Iterable[str], seed: int = 0) -> "KeyRing":
        from .rng import derive_bytes
        return cls({a: derive_bytes(seed, f"key/{a}") for a in accounts})

    def __contains__(self, account: str) -> bool:
        return account in self._secrets

    def add(self, account: str, secret: bytes) -> None:
        self._secrets[account] = secret

    def secret(self, account: str) -> bytes:
        return self._secrets[account]

    def sign_bytes(self, account: str, data: bytes) -> bytes:
        return hashlib.sha256(self._secrets[account] + data).digest()

    def verify_bytes(self, account: str, data: bytes, signature: bytes) -> bool:
        if account not in self._secrets:
            return False
        return self.sign_bytes(account, data) == signature

    def sign(self, block: Block) -> Block:
        sig = self.sign_bytes(block.leader, block.unsigned_bytes())
        return Block(block.slot, block.leader, block.prev_hash, block.transactions, sig)

    def verify(self, block: Block) -> bool:
        return self.verify_bytes(block.leader, block.unsigned_bytes(), block.signature)


# -- account state -----------------------------------------------------------

@dataclass(frozen=True)
class AuditEvent:
    kind: str  # "mint" | "confiscate"
    tx_id: str
    account: str
    amount: int


@dataclass
class ChainState:
    """Balances, epoch locks and contract escrows after some prefix of blocks.

    Treated as an immutable value: every operation returns a new state.
    """

    balances: dict[str, int] = field(default_factory=dict)
    locked: dict[str, int] = field(default_factory=dict)
    escrow: dict[str, int] = field(default_factory=dict)
    applied: frozenset = frozenset()
    audit: tuple[AuditEvent, ...] = ()

    def copy(self) -> "ChainState":
        return ChainState(dict(self.balances), dict(self.locked), dict(self.escrow),
                          self.applied, self.audit)

    def balance(self, account: str) -> int:
        return self.balances.get(account, 0)

    def locked_amount(self, account: str) -> int:
        return self.locked.get(account, 0)

    def knows(self, account: str) -> bool:
        return account in self.balances or account in self.locked

    def total_supply(self) -> int:
        return sum(self.balances.values()) + sum(self.locked.values()) + sum(self.escrow.values())

    def minted(self) -> int:
        return sum(e.amount for e in self.audit if e.kind == "mint")

    def confiscated(self) -> int:
        return sum(e.amount for e in self.audit if e.kind == "confiscate")

    def lock(self, account: str, amount: int) -> "ChainState":
        """Move ``amount`` from spendable balance into the epoch lock."""
        if amount < 0 or self.balance(account) < amount:
            raise InsufficientFunds(f"cannot lock {amount} for {account}")
        s = self.copy()
        s.balances[account] -= amount
        s.locked[account] = s.locked.get(account, 0) + amount
        return s

    def release_all(self) -> "ChainState":
        s = self.copy()
        for account, amount in self.locked.items():
            if amount:
                s.balances[account] = s.balances.get(account, 0) + amount
        s.locked = {}
        return s


def _debit(s: ChainState, account: str, amount: int, tx_id: str) -> None:
    if not s.knows(account):
        raise UnknownAccount(f"{tx_id}: unknown account {account!r}")
    have = s.balances.get(account, 0)
    if have < amount:
        if have + s.locked.get(account, 0) >= amount:
            raise LockedFunds(f"{tx_id}: {account} has {have} spendable, the rest is locked")
        raise InsufficientFunds(f"{tx_id}: {account} has {have}, needs {amount}")
    s.balances[account] = have - amount


def _credit(s: ChainState, account: str, amount: int) -> None:
    s.balances[account] = s.balances.get(account, 0) + amount


def _apply_in_place(s: ChainState, tx: Transaction) -> None:
    check_well_formed(tx)
    if tx.id in s.applied:
        raise DoubleApply(f"transaction {tx.id} already applied")
    kind = tx.kind
    if kind is TxKind.TRANSFER:
        _debit(s, tx.sender, tx.amount, tx.id)
        _credit(s, tx.recipient, tx.amount)
    elif kind is TxKind.CONTRACT_DEPOSIT:
        if tx.amount:
            _debit(s, tx.sender, tx.amount, tx.id)
        s.escrow[tx.recipient] = s.escrow.get(tx.recipient, 0) + tx.amount
    elif kind is TxKind.CDR_SUBMISSION:
        if not s.knows(tx.sender):
            raise UnknownAccount(f"{tx.id}: unknown account {tx.sender!r}")
    elif kind in (TxKind.SETTLEMENT, TxKind.REFUND):
        held = s.escrow.get(tx.sender)
        if held is None:
            raise UnknownAccount(f"{tx.id}: no contract escrow at {tx.sender!r}")
        if held < tx.amount:
            raise InsufficientFunds(f"{tx.id}: escrow {tx.sender} holds {held}")
        s.escrow[tx.sender] = held - tx.amount
        _credit(s, tx.recipient, tx.amount)
    elif kind is TxKind.BLOCK_REWARD:
        _credit(s, tx.recipient, tx.amount)
        s.audit = s.audit + (AuditEvent("mint", tx.id, tx.recipient, tx.amount),)
    elif kind is TxKind.SLASH_EVIDENCE:
        # the offender's locked deposit moves to the burn account
        held = s.locked.get(tx.sender, 0)
        if held < tx.amount:
            raise InsufficientFunds(f"{tx.id}: {tx.sender} has only {held} locked")
        s.locked[tx.sender] = held - tx.amount
        _credit(s, BURN, tx.amount)
        s.audit = s.audit + (AuditEvent("confiscate", tx.id, tx.sender, tx.amount),)
    s.applied = s.applied | {tx.id}


def apply_transaction(state: ChainState, tx: Transaction) -> ChainState:
    """Return the state after ``tx``; ``state`` itself is never modified."""
    s = state.copy()
    _apply_in_place(s, tx)
    return s


def apply_transactions(state: ChainState, txs: Iterable[Transaction]) -> ChainState:
    s = state.copy()
    for tx in txs:
        _apply_in_place(s, tx)
    return s


# -- chains ------------------------------------------------------------------

class LeaderSchedule(Protocol):
    first_slot: int
    block_reward: int

    def leader_for(self, slot: int) -> Optional[str]: ...

    def check_evidence(self, tx: Transaction, keys: "KeyRing") -> bool: ...


# -- slashing evidence -------------------------------------------------------

EVIDENCE_EQUIVOCATION = b"E"
EVIDENCE_CENSORSHIP = b"C"


def equivocation_payload(first: Block, second: Block) -> bytes:
    """Evidence bytes carrying both signed blocks, ordered by hash."""
    a, b = sorted((first, second), key=lambda blk: blk.hash)
    return EVIDENCE_EQUIVOCATION + _field(a.to_bytes()) + _field(b.to_bytes())


def parse_equivocation(payload: bytes) -> tuple[Block, Block]:
    if not payload.startswith(EVIDENCE_EQUIVOCATION):
        raise ValueError("not equivocation evidence")
    r = _Reader(payload[1:])
    a, b = Block.from_bytes(r.field()), Block.from_bytes(r.field())
    if not r.done():
        raise ValueError("trailing bytes after evidence")
    return a, b


def equivocation_problem(first: Block, second: Block, keys: KeyRing) -> Optional[str]:
    """Why the pair is not a double-sign, or ``None`` if it is valid evidence."""
    if first.hash == second.hash:
        return "blocks are identical"
    if first.slot != second.slot:
        return "blocks are from different slots"
    if first.leader != second.leader:
        return "blocks have different leaders"
    if not (keys.verify(first) and keys.verify(second)):
        return "a signature does not verify"
    return None


def censorship_payload(block: Block, omitted: Transaction) -> bytes:
    return EVIDENCE_CENSORSHIP + _field(block.to_bytes()) + _field(omitted.to_bytes())


def parse_censorship(payload: bytes) -> tuple[Block, Transaction]:
    if not payload.startswith(EVIDENCE_CENSORSHIP):
        raise ValueError("not censorship evidence")
    r = _Reader(payload[1:])
    block, tx = Block.from_bytes(r.field()), Transaction.from_bytes(r.field())
    if not r.done():
        raise ValueError("trailing bytes after evidence")
    return block, tx


@dataclass(frozen=True, eq=False)
class Chain:
    """Persistent chain node: the tip block, the state after it, and its parent."""

    block: Block
    state: ChainState
    parent: Optional["Chain"] = None

    @cached_property
    def height(self) -> int:
        return 0 if self.parent is None else self.parent.height + 1

    def __len__(self) -> int:
        return self.height + 1

    @property
    def tip_hash(self) -> bytes:
        return self.block.hash

    @property
    def tip_slot(self) -> int:
        return self.block.slot

    @classmethod
    def genesis(cls, allocations: Mapping[str, int]) -> "Chain":
        txs = tuple(Transaction(f"genesis-{acct}", TxKind.BLOCK_REWARD, MINT, acct, amount)
                    for acct, amount in sorted(allocations.items()) if amount > 0)
        block = Block(0, GENESIS_LEADER, ZERO_HASH, txs)
        return cls(block, apply_transactions(ChainState(), txs))

    def append(self, block: Block) -> "Chain":
        """Extend with ``block`` after applying its transactions (no leader checks)."""
        if block.prev_hash != self.tip_hash:
            raise LedgerError("block does not link to this chain's tip")
        return Chain(block, apply_transactions(self.state, block.transactions), self)

    def with_state(self, state: ChainState) -> "Chain":
        """Same blocks, adjusted state (epoch-boundary locks and releases)."""
        return Chain(self.block, state, self.parent)

    def nodes(self) -> Iterator["Chain"]:
        """Walk from the tip back to genesis."""
        node: Optional[Chain] = self
        while node is not None:
            yield node
            node = node.parent

    @property
    def blocks(self) -> list[Block]:
        return [n.block for n in self.nodes()][::-1]

    def at_height(self, height: int) -> "Chain":
        if not 0 <= height <= self.height:
            raise IndexError(height)
        for node in self.nodes():
            if node.height == height:
                return node
        raise AssertionError("unreachable")

    def contains(self, other: "Chain") -> bool:
        """True if ``other`` is a prefix of this chain."""
        if other.height > self.height:
            return False
        return self.at_height(other.height).tip_hash == other.tip_hash

    def find_transaction(self, tx_id: str) -> Optional["Chain"]:
        """The node whose block carries ``tx_id``, if any."""
        if tx_id not in self.state.applied:
            return None
        for node in self.nodes():
            if any(tx.id == tx_id for tx in node.block.transactions):
                return node
        return None

    def depth(self, tx_id: str) -> Optional[int]:
        """Number of blocks built on top of the block carrying ``tx_id``."""
        node = self.find_transaction(tx_id)
        return None if node is None else self.height - node.height

    def to_json(self) -> str:
        return json.dumps([b.to_dict() for b in self.blocks], indent=2)

    @classmethod
    def from_json(cls, text: str) -> "Chain":
        blocks = [Block.from_dict(d) for d in json.loads(text)]
        if not blocks or blocks[0].prev_hash != ZERO_HASH:
            raise ValueError("fixture must start with a genesis block")
        chain = cls(blocks[0], apply_transactions(ChainState(), blocks[0].transactions))
        for b in blocks[1:]:
            chain = chain.append(b)
        return chain


def _block_reward_ok(block: Block, schedule: LeaderSchedule) -> bool:
    rewards = [tx for tx in block.transactions if tx.kind is TxKind.BLOCK_REWARD]
    if len(rewards) > 1:
        return False
    return all(tx.recipient == block.leader and tx.amount == schedule.block_reward
               for tx in rewards)


def validate_block(block: Block, schedule: LeaderSchedule, chain: Chain,
                   keys: KeyRing) -> Validity:
    """Check ``block`` as the next block on ``chain``; returns the first failed check."""
    if schedule.leader_for(block.slot) != block.leader:
        return Validity.WRONG_LEADER
    if not keys.verify(block):
        return Validity.BAD_SIGNATURE
    if block.prev_hash != chain.tip_hash or block.slot <= chain.tip_slot:
        return Validity.BAD_LINK
    if not _block_reward_ok(block, schedule):
        return Validity.INVALID_TX
    for tx in block.transactions:
        if tx.kind is TxKind.SLASH_EVIDENCE and not schedule.check_evidence(tx, keys):
            return Validity.INVALID_TX
    try:
        apply_transactions(chain.state, block.transactions)
    except LedgerError:
        return Validity.INVALID_TX
    return Validity.VALID


def chain_is_valid(chain: Chain, schedule: LeaderSchedule, keys: KeyRing,
                   cache: Optional[dict] = None) -> bool:
    """Validate every block from ``schedule.first_slot`` on.

    Blocks before the schedule's first slot form the agreed prefix the
    schedule was derived from and are not re-checked.  ``cache`` maps block
    hash to validity; a hash commits to the whole ancestry, so entries are
    reusable across candidates.
    """
    cache = {} if cache is None else cache
    pending = []
    for node in chain.nodes():
        if node.parent is None:
            break
        if node.block.slot < schedule.first_slot:
            # the prefix boundary must still be ordered and signed by its leader
            if node.block.slot <= node.parent.block.slot or not keys.verify(node.block):
                return False
            break
        known = cache.get(node.tip_hash)
        if known is not None:
            if not known:
                return False
            break
        pending.append(node)
    ok = True
    for node in reversed(pending):
        if ok:
            ok = validate_block(node.block, schedule, node.parent, keys) is Validity.VALID
        cache[node.tip_hash] = ok
    return ok


def _epoch_blocks(chain: Chain, first_slot: int) -> dict[int, bytes]:
    out = {}
    for node in chain.nodes():
        if node.parent is None or node.block.slot < first_slot:
            break
        out[node.block.slot] = node.tip_hash
    return out


def _drop_omitting(valid: list[Chain], first_slot: int,
                   observed: Optional[Mapping[int, Iterable[bytes]]] = None) -> list[Chain]:
    """Remove candidates that leave out a block every honest node has seen.

    A slot counts as settled when exactly one valid block for it has been
    observed.  A candidate whose tip lies past a settled slot must carry that
    block; slots with two blocks from the same leader (equivocation) are not
    settled and do not constrain anyone.
    """
    per_chain = [_epoch_blocks(c, first_slot) for c in valid]
    seen: dict[int, set] = {s: set(hs) for s, hs in (observed or {}).items()}
    for blocks in per_chain:
        for slot, h in blocks.items():
            seen.setdefault(slot, set()).add(h)
    settled = {slot: next(iter(hs)) for slot, hs in seen.items() if len(hs) == 1}
    keep = []
    for chain, blocks in zip(valid, per_chain):
        if all(blocks.get(slot) == h for slot, h in settled.items() if slot < chain.tip_slot):
            keep.append(chain)
    return keep


def resolve_forks(candidates: Iterable[Chain], schedule: LeaderSchedule, keys: KeyRing,
                  cache: Optional[dict] = None, reject_omissions: bool = False,
                  observed: Optional[Mapping[int, Iterable[bytes]]] = None) -> Chain:
    """Adopt the longest fully valid candidate; equal lengths go to the smaller tip hash.

    With ``reject_omissions`` a fork that drops an uncontested block is
    conflicting and discarded before the length comparison.  The blocks that
    count as seen are those on the valid candidates plus ``observed`` (slot to
    hashes of valid blocks seen earlier, e.g. on forks no longer tracked).
    """
    valid = [c for c in candidates if chain_is_valid(c, schedule, keys, cache)]
    # a lone candidate can only omit something when an uncontested block was seen elsewhere
    lone_ok = len(valid) <= 1 and all(len(set(hs)) > 1 for hs in (observed or {}).values())
    if reject_omissions and not lone_ok:
        valid = _drop_omitting(valid, schedule.first_slot, observed)
    if not valid:
        raise NoValidCandidate("every candidate contains an invalid block")
    return min(valid, key=lambda c: (-c.height, c.tip_hash))


def conservation_gap(state: ChainState) -> int:
    """Supply not explained by logged mints; zero on every reachable state."""
    return state.total_supply() - state.minted()

