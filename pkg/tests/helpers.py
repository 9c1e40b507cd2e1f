"""Small builders shared by the test modules."""

from __future__ import annotations

from dataclasses import dataclass, field

from blockroam.ledger import Block, Chain, KeyRing, Transaction, TxKind


@dataclass
class FixedSchedule:
    """Slot -> leader table standing in for an epoch schedule."""
    leaders: dict
    first_slot: int = 1
    block_reward: int = 1000
    evidence_ok: bool = False
    seen: list = field(default_factory=list)

    def leader_for(self, slot):
        return self.leaders.get(slot)

    def check_evidence(self, tx, keys):
        self.seen.append(tx.id)
        return self.evidence_ok


def reward(slot, leader, amount=1000, tag=""):
    return Transaction(f"reward/{slot}/{leader}{tag}", TxKind.BLOCK_REWARD, "mint", leader, amount)


def signed_block(keys: KeyRing, chain: Chain, slot: int, leader: str, txs=(), with_reward=True,
                 tag=""):
    body = ((reward(slot, leader, tag=tag),) if with_reward else ()) + tuple(txs)
    return keys.sign(Block(slot, leader, chain.tip_hash, body))


def grow(keys, chain, schedule, slots, tag=""):
    for s in slots:
        chain = chain.append(signed_block(keys, chain, s, schedule.leader_for(s), tag=tag))
    return chain
