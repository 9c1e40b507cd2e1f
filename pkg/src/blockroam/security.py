"""Common-prefix bounds, confirmation times, Monte Carlo checks and fraud timing."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Real
from typing import Optional, Sequence

import numpy as np

from .rng import substream

DEFAULT_TARGET = 0.001
DEFAULT_SLOT_TIME = 20.0
LEGACY_CONFIRMATION_MINUTES = 240.0   # clearing-house TAP pipeline delay
TABLE_RATIOS = (0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45)

# Published reference figures (minutes), not computed here.
REFERENCE_MINUTES = {
    "bitcoin": (50, 80, 110, 150, 240, 410, 890, 3400),
    "cardano": (5, 8, 12, 18, 31, 60, 148, 663),
}

# Chain growth and chain quality are only known up to hidden constants.
PREFIX_EPOCH_BOUND = "exp(-Omega(sqrt(kappa)) + ln rho)"
GROWTH_BOUND = "exp(-Omega(eps^2 * varsigma) + ln rho)"
QUALITY_BOUND = "exp(-Omega(eps^2 * gamma * l) + ln rho)"


class AdversaryMajority(ValueError):
    """No confirmation depth helps once the adversary's share reaches 1."""


def _exact(x) -> Fraction:
    # decimal literals such as 0.1 are meant as the decimal, not the binary float
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    return Fraction(str(x))


@dataclass(frozen=True)
class SecurityParams:
    honest_ratio: float
    cp_depth: int
    epoch_slots: int
    target_violation: float = DEFAULT_TARGET
    slot_time: float = DEFAULT_SLOT_TIME

    def __post_init__(self):
        if not 0 < self.target_violation < 1:
            raise ValueError("target_violation must lie in (0, 1)")
        if not 0 < self.honest_ratio <= 1:
            raise ValueError("honest_ratio must lie in (0, 1]")
        if self.cp_depth < 1 or self.epoch_slots < 1:
            raise ValueError("cp_depth and epoch_slots must be positive")

    @property
    def adversarial_ratio(self) -> float:
        return 1.0 - self.honest_ratio


def cp_violation_prob(honest_ratio, depth: int):
    """Chance the adversary leads ``depth`` consecutive slots: (1 - gamma)^depth.

    Fractions in give an exact Fraction out; floats give a float.
    """
    if not 0 <= honest_ratio <= 1:
        raise ValueError("honest_ratio must lie in [0, 1]")
    if depth < 1:
        raise ValueError("depth must be at least 1")
    return (1 - honest_ratio) ** depth


def min_kappa(adversarial_ratio, target=DEFAULT_TARGET) -> int:
    """Smallest depth with ratio^depth <= target, decided in exact arithmetic."""
    a, t = _exact(adversarial_ratio), _exact(target)
    if a >= 1:
        raise AdversaryMajority("adversary holds all stake; the bound is not guaranteed")
    if a <= 0:
        if a < 0:
            raise ValueError("adversarial_ratio must be non-negative")
        return 1
    if not 0 < t < 1:
        raise ValueError("target must lie in (0, 1)")
    k = max(1, math.ceil(math.log(t) / math.log(a)) - 1)
    while a ** k > t:
        k += 1
    while k > 1 and a ** (k - 1) <= t:
        k -= 1
    return k


def confirmation_time(adversarial_ratio, target=DEFAULT_TARGET,
                      slot_time: float = DEFAULT_SLOT_TIME) -> float:
    """Seconds until a transaction reaches the target violation probability."""
    if not slot_time > 0:
        raise ValueError("slot_time must be positive")
    return min_kappa(adversarial_ratio, target) * slot_time


def minutes_one_decimal(seconds: float) -> str:
    """Minutes cut (not rounded) to one decimal, the way the table reports them.

    Exact thirds such as 80 s = 1.333 min read 1.3, and 100 s = 1.667 min
    reads 1.6.
    """
    tenths = math.floor(Fraction(str(seconds)) / 6)   # 6 s per tenth of a minute
    return f"{tenths // 10}.{tenths % 10}"


@dataclass(frozen=True)
class TableRow:
    adversarial_ratio: float
    kappa: int
    minutes: str
    bitcoin: Optional[int] = None
    cardano: Optional[int] = None


def confirmation_table(target=DEFAULT_TARGET, slot_time: float = DEFAULT_SLOT_TIME,
                       ratios: Sequence[float] = TABLE_RATIOS) -> list[TableRow]:
    rows = []
    for k, a in enumerate(ratios):
        kappa = min_kappa(a, target)
        ref = {name: vals[k] for name, vals in REFERENCE_MINUTES.items()} \
            if tuple(ratios) == TABLE_RATIOS else {}
        rows.append(TableRow(a, kappa, minutes_one_decimal(kappa * slot_time), **ref))
    return rows


# -- epoch-wide run probability ----------------------------------------------

def run_probability(p, kappa: int, rho: int):
    """Probability of at least ``kappa`` consecutive successes in ``rho`` trials.

    Dynamic programme over the length of the current trailing run.  Pass a
    Fraction for an exact answer.
    """
    if kappa < 1 or rho < 0:
        raise ValueError("need kappa >= 1 and rho >= 0")
    if kappa > rho:
        return 0 * p
    q = 1 - p
    # state[j] = P(no run yet, trailing run length j)
    state = [1 + 0 * p] + [0 * p] * (kappa - 1)
    hit = 0 * p
    for _ in range(rho):
        nxt = [0 * p] * kappa
        nxt[0] = q * sum(state)
        for j in range(kappa - 1):
            nxt[j + 1] = p * state[j]
        hit += p * state[kappa - 1]
        state = nxt
    return hit


@dataclass(frozen=True)
class MonteCarloResult:
    probability: float
    stderr: float
    hits: int
    trials: int

    def within(self, reference: float, sigmas: float = 3.0) -> bool:
        """Whether ``reference`` lies inside ``sigmas`` standard errors.

        When no trial differs from another the standard error is 0, and the
        check needs an exact match.
        """
        return abs(self.probability - reference) <= sigmas * self.stderr + 1e-15


def monte_carlo_cp(adversarial_ratio: float, depth: int, epoch_slots: int, trials: int,
                   seed: int, batch_size: int = 4096) -> MonteCarloResult:
    """Fraction of simulated epochs holding ``depth`` consecutive adversarial leaders.

    Trials run in batches; batch ``k`` draws from its own labeled sub-stream,
    so the count is the same however the batches are scheduled.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    if not 0 <= adversarial_ratio <= 1:
        raise ValueError("adversarial_ratio must lie in [0, 1]")
    hits = 0
    if depth <= epoch_slots:
        for k, start in enumerate(range(0, trials, batch_size)):
            n = min(batch_size, trials - start)
            rng = substream(seed, f"security/monte-carlo/{k}")
            adversarial = rng.random((n, epoch_slots)) < adversarial_ratio
            runs = np.zeros((n, epoch_slots + 1), dtype=np.int32)
            np.cumsum(adversarial, axis=1, out=runs[:, 1:])
            window = runs[:, depth:] - runs[:, :-depth]
            hits += int(np.count_nonzero((window == depth).any(axis=1)))
    prob = hits / trials
    return MonteCarloResult(prob, math.sqrt(prob * (1 - prob) / trials), hits, trials)


# -- fraud resolution --------------------------------------------------------

def resolution_time(t_confirm: Real, t_detect: Real = 0, t_supervise: Real = 0,
                    t_respond: Real = 0):
    """Total time from a fraud event to the response, in the inputs' unit."""
    parts = (t_confirm, t_detect, t_supervise, t_respond)
    if any(x < 0 for x in parts):
        raise ValueError("durations must be non-negative")
    return sum(parts)


@dataclass(frozen=True)
class LegacyComparison:
    blockroam_minutes: float
    legacy_minutes: float
    saving_minutes: float


def compare_with_legacy(adversarial_ratio=0.45, target=DEFAULT_TARGET,
                        slot_time: float = DEFAULT_SLOT_TIME, t_detect: float = 0.0,
                        t_supervise: float = 0.0, t_respond: float = 0.0) -> LegacyComparison:
    """Resolution time with on-chain confirmation against the 4-hour clearing delay."""
    ours = resolution_time(confirmation_time(adversarial_ratio, target, slot_time) / 60,
                           t_detect, t_supervise, t_respond)
    legacy = resolution_time(LEGACY_CONFIRMATION_MINUTES, t_detect, t_supervise, t_respond)
    return LegacyComparison(ours, legacy, legacy - ours)
