"""Independent checks on the leader solver.

* ``subset_lp_oracle`` solves one two-variable LP per investing set by
  plain vertex enumeration in linear space and keeps only sets that are
  self-consistent (members accept, non-members decline).
* ``brute_force_oracle`` scans a grid of policies.
* ``milp_oracle`` hands the big-M mixed-integer form to SciPy's HiGHS.
"""

from __future__ import annotations

import itertools
import math
from typing import Optional

import numpy as np

from .model import (
    Equilibrium,
    GameError,
    GameInstance,
    PoolPolicy,
    ResponseProfile,
    SolverConfig,
    c_max,
)

FEASIBILITY_SLACK = 1e-12


def _better(cand, best, eps):
    """Order (profit, alpha, c): higher profit, distinguishable by eps, wins;
    otherwise the lower fee, then the lower cost."""
    if best is None:
        return True
    f, al, c = cand
    bf, bal, bc = best
    tol = eps * max(abs(f), abs(bf))
    if f > bf + tol:
        return True
    if f < bf - tol:
        return False
    return (al, c) < (bal, bc)


def _set_vertices(a, w, C, members):
    """Vertices of {a_i*alpha + w_i*c <= C_i for i in members, 0<=alpha<=1, c>=0}."""
    pts = {(0.0, 0.0), (1.0, 0.0)}
    for i in members:
        pts.add((0.0, C[i] / w[i]))
        pts.add((1.0, (C[i] - a[i]) / w[i]))
        pts.add((C[i] / a[i], 0.0))
    for i, j in itertools.combinations(members, 2):
        det = a[i] * w[j] - a[j] * w[i]
        if det == 0:
            continue
        pts.add(((C[i] * w[j] - C[j] * w[i]) / det, (a[i] * C[j] - a[j] * C[i]) / det))
    out = []
    for al, c in pts:
        if -1e-12 <= al <= 1 + 1e-12 and c >= -1e-12 * max(1.0, abs(c)):
            out.append((min(max(al, 0.0), 1.0), max(c, 0.0)))
    return out


def subset_lp_oracle(instance: GameInstance, config: Optional[SolverConfig] = None) -> Equilibrium:
    """Enumerate every investing set and solve its LP by vertex enumeration."""
    config = config or SolverConfig()
    n = instance.n
    if n > config.subset_cap:
        raise GameError(f"subset oracle is capped at N = {config.subset_cap}, got {n}")
    if n == 0:
        raise GameError("the instance has no followers")
    a = [float(x) for x in instance.fee_slopes()]
    w = [math.exp(-b) for b in instance.budgets]
    C = list(instance.costs)
    best = None
    best_set = None
    sets_checked = consistent = 0
    for size in range(n + 1):
        for members in itertools.combinations(range(n), size):
            sets_checked += 1
            inside = set(members)
            found = False
            for al, c in _set_vertices(a, w, C, members):
                ch = [a[k] * al + w[k] * c for k in range(n)]
                if any(ch[k] > C[k] * (1 + FEASIBILITY_SLACK) for k in members):
                    continue
                # anyone outside who would accept makes this set the wrong one
                if any(ch[k] <= C[k] * (1 + FEASIBILITY_SLACK)
                       for k in range(n) if k not in inside):
                    continue
                found = True
                cand = (math.fsum(ch[k] for k in members), al, c)
                if _better(cand, best, config.eps):
                    best, best_set = cand, members
            consistent += found
    if best is None:
        raise GameError("no self-consistent investing set was found")
    _, al, c = best
    responses = ResponseProfile.from_invest([k in best_set for k in range(n)], instance)
    return Equilibrium.at(PoolPolicy(al, c), instance, responses, solver="subset-lp",
                          sets=sets_checked, consistent_sets=consistent)


def brute_force_oracle(instance: GameInstance, resolution: Optional[float] = None,
                       config: Optional[SolverConfig] = None) -> Equilibrium:
    """Best policy on a regular grid over [0, 1] x [0, c_max]."""
    config = config or SolverConfig()
    step = config.grid if resolution is None else resolution
    if not step > 0:
        raise GameError("grid resolution must be positive")
    steps = max(1, int(round(1.0 / step)))
    top = c_max(instance)
    alphas = np.linspace(0.0, 1.0, steps + 1)
    costs = np.linspace(0.0, top, steps + 1) if top > 0 else np.zeros(1)
    a = instance.fee_slopes()
    w = np.exp(-instance.B)
    C = instance.C
    best = None
    for al in alphas:
        ch = al * a[None, :] + costs[:, None] * w[None, :]     # rows: cost grid
        inv = ch <= C[None, :] * (1 + FEASIBILITY_SLACK)
        f = np.where(inv, ch, 0.0).sum(axis=1)
        k = int(np.argmax(f))        # first maximum is the smallest cost
        cand = (float(f[k]), float(al), float(costs[k]))
        if _better(cand, best, config.eps):
            best = cand
    _, al, c = best
    ch = al * a + c * w
    responses = ResponseProfile.from_invest(ch <= C * (1 + FEASIBILITY_SLACK), instance)
    return Equilibrium.at(PoolPolicy(al, c), instance, responses, solver="grid",
                          resolution=1.0 / steps)


def milp_oracle(instance: GameInstance, config: Optional[SolverConfig] = None) -> Equilibrium:
    """Big-M mixed-integer form; each proposed set is then priced exactly.

    Variables: alpha, u = c*exp(-B_min), x_i in {0,1}, z_i = x_i * charge_i.
    Scaling c by exp(-B_min) keeps the coefficients near one.  Ties are
    broken to the smallest alpha, then the smallest c.
    """
    from scipy.optimize import Bounds, LinearConstraint, linprog, milp

    config = config or SolverConfig()
    n = instance.n
    if n == 0:
        raise GameError("the instance has no followers")
    L = config.big_m_for(instance)
    a = instance.fee_slopes()
    b0 = float(instance.B.min())
    w = np.exp(b0 - instance.B)               # charge_i = a_i*alpha + w_i*u
    C = instance.C
    u_max = c_max(instance) * math.exp(-b0)
    nv = 2 + 2 * n                            # alpha, u, x[0:n], z[0:n]
    X = slice(2, 2 + n)
    Z = slice(2 + n, 2 + 2 * n)
    rows, lo, hi = [], [], []

    def row():
        return np.zeros(nv)

    for i in range(n):
        # members: charge_i <= C_i + L(1 - x_i)
        r = row(); r[0], r[1], r[2 + i] = a[i], w[i], L
        rows.append(r); lo.append(-np.inf); hi.append(C[i] + L)
        # non-members: charge_i >= C_i - L x_i
        r = row(); r[0], r[1], r[2 + i] = a[i], w[i], L
        rows.append(r); lo.append(C[i]); hi.append(np.inf)
        # z_i <= charge_i and z_i <= L x_i
        r = row(); r[2 + n + i], r[0], r[1] = 1.0, -a[i], -w[i]
        rows.append(r); lo.append(-np.inf); hi.append(0.0)
        r = row(); r[2 + n + i], r[2 + i] = 1.0, -L
        rows.append(r); lo.append(-np.inf); hi.append(0.0)
    lower = np.zeros(nv)
    upper = np.concatenate([[1.0, u_max], np.ones(n), np.full(n, L)])
    integrality = np.concatenate([[0, 0], np.ones(n), np.zeros(n)])
    A = np.array(rows)

    def set_lp(members: np.ndarray):
        """Exact two-variable programme for one investing set, lexicographic
        in (profit, alpha, u); ``None`` when no policy realizes the set."""
        G = np.column_stack([a, w])
        A_ub = np.vstack([G[members], -G[~members]])
        b_ub = np.concatenate([C[members], -C[~members]])
        box = [(0.0, 1.0), (0.0, u_max)]
        extra_A, extra_b = [], []
        sol = None
        for obj in (-G[members].sum(axis=0), np.array([1.0, 0.0]), np.array([0.0, 1.0])):
            res = linprog(obj, A_ub=np.vstack([A_ub] + extra_A) if extra_A else A_ub,
                          b_ub=np.concatenate([b_ub, extra_b]) if extra_b else b_ub,
                          bounds=box, method="highs")
            if res.status != 0:
                return sol
            sol = res.x
            val = float(obj @ res.x)
            extra_A.append(obj[None, :])
            extra_b.append(val + config.eps * max(abs(val), 1e-12))
        return sol

    # HiGHS applies its integrality tolerance to x, so with a large L the
    # MILP value can overstate the optimum.  Treat it as an upper bound: take
    # the set it proposes, price that set exactly, cut it off, repeat.
    cuts, cut_lo = [], []
    found = []          # (profit, alpha, u, members)
    best = -np.inf
    profit_obj = row(); profit_obj[Z] = -1.0
    for _ in range(2 ** min(n, 16) + 1):
        mats = [A] + [c[None, :] for c in cuts]
        res = milp(profit_obj, integrality=integrality, bounds=Bounds(lower, upper),
                   constraints=LinearConstraint(np.vstack(mats), lo + [-np.inf] * len(cuts),
                                                hi + cut_lo),
                   options={"mip_rel_gap": 1e-12})
        if res.x is None:
            break
        bound = -float(res.fun)
        if found and bound < best - config.eps * max(abs(best), 1e-12):
            break
        members = np.round(res.x[X]).astype(bool)
        sol = set_lp(members)
        if sol is not None:
            value = float(a[members].sum() * sol[0] + w[members].sum() * sol[1])
            found.append((value, float(sol[0]), float(sol[1]), members))
            best = max(best, value)
        cut = row()
        cut[X] = np.where(members, 1.0, -1.0)
        cuts.append(cut)
        cut_lo.append(float(members.sum()) - 1.0)
    if not found:
        raise GameError("MILP oracle found no realizable investing set")
    near = [f for f in found if f[0] >= best - config.eps * max(abs(best), 1e-12)]
    value, al, u, members = min(near, key=lambda f: (f[1], f[2]))
    al, c = min(max(al, 0.0), 1.0), max(u, 0.0) * math.exp(b0)
    return Equilibrium.at(PoolPolicy(al, c), instance,
                          ResponseProfile.from_invest(members, instance), solver="milp",
                          big_m=L, candidate_sets=len(found))
