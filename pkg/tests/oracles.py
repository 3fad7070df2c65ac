"""Independent reference computations used to freeze expected values.

Nothing here calls the linear solvers of the package: taboo probabilities
and payoffs come from forward propagation of path mass over a finite horizon
with the leftover mass as a certified tail bound, best responses from
enumeration of pure stationary policies, and matrix-game values from a
fine grid over mixed strategies.
"""

from __future__ import annotations

import itertools

import numpy as np

HORIZON = 64


def propagate_hits(P, start, taboo, target, values=None, horizon=HORIZON, stage0=False):
    """Sum of ``values[target]`` over first arrivals at ``target`` avoiding ``taboo``.

    Paths start at ``start``; the start itself counts only when ``stage0``.
    Returns ``(estimate, tail)`` where the exact value lies in
    ``[estimate, estimate + tail * max|values|]``.
    """
    n = P.shape[0]
    taboo = np.asarray(taboo, dtype=bool)
    target = np.asarray(target, dtype=bool)
    vals = np.ones(n) if values is None else np.asarray(values, dtype=float)
    mass = np.zeros(n)
    mass[start] = 1.0
    total = 0.0
    if stage0 and target[start]:
        return float(vals[start]), 0.0
    for _ in range(horizon):
        nxt = np.zeros(n)
        for u in np.flatnonzero(mass > 0):
            for v in np.flatnonzero(P[u] > 0):
                nxt[v] += mass[u] * P[u, v]
        total += float(nxt[target] @ vals[target])
        nxt[target] = 0.0
        nxt[taboo] = 0.0
        mass = nxt
    return total, float(mass.sum())


def oracle_taboo(P, s, taboo, target, horizon=HORIZON):
    n = P.shape[0]
    tb = np.zeros(n, dtype=bool)
    tb[list(taboo)] = True
    tg = np.zeros(n, dtype=bool)
    tg[list(target)] = True
    return propagate_hits(P, s, tb & ~tg, tg, horizon=horizon)


def oracle_escape(P, t, s, horizon=HORIZON):
    """``esc(t, s)`` as ``1 - reach``; reaching ``s`` counts from stage 0."""
    n = P.shape[0]
    tg = np.zeros(n, dtype=bool)
    tg[s] = True
    hit, tail = propagate_hits(P, t, np.zeros(n, dtype=bool), tg, horizon=horizon)
    return 1.0 - hit, tail


def oracle_absorption_rate(P, s, horizon=HORIZON):
    n = P.shape[0]
    tg = np.zeros(n, dtype=bool)
    tg[s] = True
    ret, tail = propagate_hits(P, s, np.zeros(n, dtype=bool), tg, horizon=horizon)
    return 1.0 - ret, tail


def oracle_payoff(P, absorbing, boundary, s, horizon=HORIZON):
    absorbing = np.asarray(absorbing, dtype=bool)
    if absorbing[s]:
        return float(boundary[s]), 0.0
    return propagate_hits(P, s, np.zeros(P.shape[0], dtype=bool), absorbing,
                          values=boundary, horizon=horizon)


def policy_enumeration(spec, opponent, player):
    """Best pure stationary deviation by enumerating every policy.

    Each policy is evaluated by propagating mass for a long horizon (so no
    linear solve is involved); never-absorbed mass is worth zero.
    """
    N = [int(s) for s in spec.nonabsorbing]
    rows = {}
    for s in N:
        k = spec.kernel[s]
        if player == 2:
            rows[s] = np.einsum("a,abt->bt", opponent[s], k)
        else:
            rows[s] = np.einsum("b,abt->at", opponent[s], k)
    payoff = np.where(spec.absorbing, spec.payoff(player), 0.0)
    best = np.full(spec.n, -np.inf)
    for choice in itertools.product(*[range(rows[s].shape[0]) for s in N]):
        P = np.eye(spec.n)
        for s, c in zip(N, choice):
            P[s] = rows[s][c]
        # powers by repeated squaring; absorbing mass settles
        Q = P.copy()
        for _ in range(12):
            Q = Q @ Q
        vals = Q @ payoff
        best = np.maximum(best, vals)
    return best


def grid_matrix_value(M, resolution=2000):
    """Max-min value of the row player over a grid of mixed strategies (two rows)."""
    M = np.asarray(M, dtype=float)
    if M.shape[0] != 2:
        raise ValueError("grid oracle handles two rows")
    p = np.linspace(0.0, 1.0, resolution + 1)
    payoffs = np.outer(p, M[0]) + np.outer(1 - p, M[1])
    return float(payoffs.min(axis=1).max())


def scalar_fixed_point(f, x0=0.0, iters=10000):
    """Iterate a contraction ``x -> f(x)`` to its fixed point."""
    x = x0
    for _ in range(iters):
        x = f(x)
    return x
