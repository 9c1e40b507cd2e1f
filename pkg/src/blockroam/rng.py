"""Labeled random sub-streams derived from one master seed.

Every stochastic consumer asks for its own stream by label (e.g.
``"game/budgets"``), so adding a new consumer never shifts the draws of an
existing one.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _label_words(label: str) -> tuple[int, ...]:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return tuple(int.from_bytes(digest[k:k + 4], "big") for k in range(0, 16, 4))


def substream(seed: int, label: str) -> np.random.Generator:
    """Return an independent generator for ``(seed, label)``."""
    if seed is None:
        raise ValueError("a master seed is required; there is no wall-clock default")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=_label_words(label))
    return np.random.default_rng(ss)


def derive_bytes(seed: int, label: str, size: int = 32) -> bytes:
    """Deterministic pseudo-random bytes for ``(seed, label)``."""
    out = b""
    counter = 0
    while len(out) < size:
        h = hashlib.sha256()
        h.update(b"blockroam/derive")
        h.update(int(seed).to_bytes(8, "big", signed=True))
        h.update(counter.to_bytes(4, "big"))
        h.update(label.encode("utf-8"))
        out += h.digest()
        counter += 1
    return out[:size]
