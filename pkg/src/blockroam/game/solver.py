"""Exact leader optimization for the stake-pool game.

For a fixed set of investing followers the pool's revenue
``alpha * sum(a_i) + c * sum(exp(-B_i))`` grows in both ``alpha`` and ``c``,
so the optimum of each fixed-set linear programme sits on a vertex formed by
two binding follower lines ``a_i*alpha + c*exp(-B_i) = C_i`` or one binding
line and a box edge.  Rather than looping over all 2^N sets, the sweep walks
along every follower's binding line, parameterized by ``s = c*exp(-B_i)``,
and evaluates the threshold responses at each intersection with prefix sums.
Costs can reach ``exp(B)`` for budgets in the thousands, so all cost
arithmetic stays in log space.
"""

from __future__ import annotations

import math
from typing import Iterable, Optional

import numpy as np

from .model import (
    DegenerateInstance,
    Equilibrium,
    GameError,
    GameInstance,
    PoolPolicy,
    SolverConfig,
    charge,
    responses_at,
)

LOG_MAX = math.log(np.finfo(float).max)
MEMBER_SLACK = 1e-12     # relative slack for "binding" when classifying candidates


def _line_candidates(i: int, a: np.ndarray, B: np.ndarray, C: np.ndarray):
    """Candidate points on follower ``i``'s binding line.

    Returns ``(log_s, profit)`` arrays where ``s = c*exp(-B_i)`` runs over
    ``[max(0, C_i - a_i), C_i]`` (``alpha`` from 1 down to 0).  On this line
    follower ``j`` invests while
    ``(1 - r_j*e^{-d_j}) * s <= (C_j - r_j*C_i) * e^{-d_j}`` with
    ``r_j = a_j/a_i`` and ``d_j = B_i - B_j``; the crossing ``s_j`` splits
    followers into those that invest below it and those that invest above.
    """
    lo = math.log(max(0.0, C[i] - a[i])) if C[i] > a[i] else -math.inf
    hi = math.log(C[i]) if C[i] > 0 else -math.inf
    d = B[i] - B                  # log of exp(-B_j)/exp(-B_i)
    r = a / a[i]
    num = C - r * C[i]
    up = d > 0                    # slope in s is positive: invests below the crossing
    down = d < 0                  # negative slope: invests above the crossing
    always = ((d == 0) & (num >= 0)) | (down & (num >= 0))
    below = up & (num >= 0)
    above = down & (num < 0)

    cross = np.full(len(B), np.nan)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        cross[below] = (np.log(num[below]) - d[below]
                        - np.log1p(-r[below] * np.exp(-d[below])))
        cross[above] = np.log(num[above] / (np.exp(d[above]) - r[above]))
    on_segment = (below | above) & (cross >= lo) & (cross <= hi)
    log_s = np.unique(np.concatenate([[lo, hi], cross[on_segment]]))

    # slope sum A and log of sum exp(d) over investing followers, per candidate
    slope = np.full(log_s.shape, a[always].sum())
    log_w = np.full(log_s.shape, np.logaddexp.reduce(d[always]) if always.any() else -np.inf)

    order = np.argsort(cross[below])
    t, av, dv = cross[below][order], a[below][order], d[below][order]
    suffix_a = np.concatenate([np.cumsum(av[::-1])[::-1], [0.0]])
    suffix_w = np.concatenate([np.logaddexp.accumulate(dv[::-1])[::-1], [-np.inf]])
    k = np.searchsorted(t, log_s, side="left")          # crossings at or above s
    slope += suffix_a[k]
    log_w = np.logaddexp(log_w, suffix_w[k])

    order = np.argsort(cross[above])
    t, av, dv = cross[above][order], a[above][order], d[above][order]
    prefix_a = np.concatenate([[0.0], np.cumsum(av)])
    prefix_w = np.concatenate([[-np.inf], np.logaddexp.accumulate(dv)])
    k = np.searchsorted(t, log_s, side="right")         # crossings at or below s
    slope += prefix_a[k]
    log_w = np.logaddexp(log_w, prefix_w[k])

    with np.errstate(over="ignore"):
        alpha = (C[i] - np.exp(log_s)) / a[i]
        profit = alpha * slope + np.exp(log_s + log_w)
    keep = log_s + B[i] < LOG_MAX                         # c itself must stay finite
    return log_s[keep], profit[keep]


def _select(alpha: np.ndarray, log_c: np.ndarray, profit: np.ndarray, eps: float) -> int:
    """Index of the best candidate: max profit, then min alpha, then min c."""
    top = profit.max()
    near = np.flatnonzero(profit >= top - eps * abs(top))
    return int(near[np.lexsort((log_c[near], alpha[near]))[0]])


def _snap(instance: GameInstance, alpha: float, c: float, members: np.ndarray) -> PoolPolicy:
    """Shrink a vertex toward the origin until exact threshold responses
    reproduce ``members``.

    Binding followers sit exactly on their line; rounding may leave a charge
    an ulp above the cost, which would flip that follower out.  Charges are
    linear in (alpha, c), so scaling both by the worst cost/charge ratio fixes
    every member at once while non-members, which sit at least
    ``MEMBER_SLACK`` above their cost, stay out.
    """
    C = instance.C
    for _ in range(20):
        policy = PoolPolicy(alpha, c)
        got = np.array(responses_at(policy, instance).invest, dtype=bool)
        if np.array_equal(got, members):
            return policy
        if (got & ~members).any():
            break
        charges = np.array([charge(k, policy, instance) for k in np.flatnonzero(members & ~got)])
        ratio = float(np.min(C[members & ~got] / charges)) * (1 - 2.0 ** -51)
        alpha, c = alpha * ratio, c * ratio
    raise GameError("could not realize the optimal investing set at a representable policy")


def _classify(instance: GameInstance, alpha: float, log_c: float) -> np.ndarray:
    with np.errstate(over="ignore"):
        ch = instance.fee_slopes() * alpha + np.exp(log_c - instance.B)
    return ch <= instance.C * (1 + MEMBER_SLACK)


def solve_leader(instance: GameInstance, config: Optional[SolverConfig] = None) -> Equilibrium:
    """Globally optimal pool policy, ties broken to the smallest fee then cost."""
    config = config or SolverConfig()
    if instance.n == 0:
        raise DegenerateInstance("the instance has no followers, so sum(B) = 0")
    B, C, a = instance.B, instance.C, instance.fee_slopes()
    parts = [(i, *_line_candidates(i, a, B, C)) for i in range(instance.n)]
    owner = np.concatenate([np.full(len(ls), i) for i, ls, _ in parts])
    log_s = np.concatenate([ls for _, ls, _ in parts])
    profit = np.concatenate([f for _, _, f in parts])
    with np.errstate(over="ignore"):
        alpha = (C[owner] - np.exp(log_s)) / a[owner]
    alpha = np.clip(alpha, 0.0, 1.0)
    log_c = log_s + B[owner]
    j = _select(alpha, log_c, profit, config.eps)

    members = _classify(instance, float(alpha[j]), float(log_c[j]))
    policy = _snap(instance, float(alpha[j]), float(math.exp(log_c[j])), members)
    return Equilibrium.at(policy, instance, solver="sweep", candidates=int(len(profit)),
                          binding_follower=int(owner[j]) + 1)


def solve_fixed_set(instance: GameInstance, members: Iterable[int],
                    config: Optional[SolverConfig] = None) -> Equilibrium:
    """Best policy when the listed followers (0-based) are required to invest.

    Others are free to join if the policy suits them, which only adds revenue;
    the reported profit counts the required members alone.  Cost is O(k^3)
    in the number of members.
    """
    config = config or SolverConfig()
    S = sorted(set(members))
    if not S:
        raise GameError("at least one member is required")
    if S[0] < 0 or S[-1] >= instance.n:
        raise GameError("member index out of range")
    B, C, a = instance.B[S], instance.C[S], instance.fee_slopes()[S]
    if (C <= 0).any():
        alphas = np.array([0.0])
    else:
        top = min(1.0, float(np.min(C / a)))
        # alpha where two members' cost ceilings (C_k - a_k*alpha)*e^{B_k} meet,
        # scaled by exp(-B_max) to keep the weights finite
        w = np.exp(B - B.max())
        num = C[:, None] * w[:, None] - C[None, :] * w[None, :]
        den = a[:, None] * w[:, None] - a[None, :] * w[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            meet = (num / den)[np.triu_indices(len(S), 1)]
        meet = meet[np.isfinite(meet) & (meet >= 0) & (meet <= top)]
        alphas = np.unique(np.concatenate([[0.0, top], meet]))
    with np.errstate(divide="ignore", invalid="ignore"):
        room = C[None, :] - a[None, :] * alphas[:, None]
        log_c = np.min(np.log(np.maximum(room, 0.0)) + B[None, :], axis=1)
        weight = np.logaddexp.reduce(-B)
        profit = alphas * a.sum() + np.exp(log_c + weight)
    ok = np.isfinite(profit) & (log_c < LOG_MAX)
    alphas, log_c, profit = alphas[ok], log_c[ok], profit[ok]
    j = _select(alphas, log_c, profit, config.eps)

    mask = np.zeros(instance.n, dtype=bool)
    mask[S] = True
    got = _classify(instance, float(alphas[j]), float(log_c[j]))
    policy = _snap(instance, float(alphas[j]), float(math.exp(log_c[j])), got | mask)
    eq = Equilibrium.at(policy, instance, solver="fixed-set")
    ch = instance.fee_slopes() * policy.alpha + np.exp(math.log(policy.c) - instance.B) \
        if policy.c > 0 else instance.fee_slopes() * policy.alpha
    restricted = math.fsum(float(ch[i]) for i in S)
    return Equilibrium(eq.policy, eq.responses, restricted,
                       restricted + instance.sigma * instance.reward / instance.total_stake,
                       eq.follower_profits, "fixed-set", {"members": [i + 1 for i in S]})
