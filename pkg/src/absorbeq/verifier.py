"""Certification of candidate equilibria.

Three layers of evidence are available:

* :func:`certify_profile` checks the two sufficient conditions for the
  profile to generate a ``4 eps``-equilibrium through the test-and-punish
  strategy: every player's value is within ``eps`` of the jump level, and
  every used move keeps the one-step expected value within ``delta``.
* :func:`best_response_value` and :func:`test_and_punish_gap` compute exact
  deviation values, against the stationary opponent and against the
  opponent's test-and-punish strategy respectively.
* :func:`simulate_test_and_punish`, :func:`w_sum_check` and
  :func:`excursion_check` measure the martingale bounds behind the
  certificate by simulation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import linprog

from .auxeval import Z99
from .chain import Chain, expected_absorbing_payoff
from .game import GameSpec, StrategyProfile, evaluate_profile, induce_chain
from .zerosum import ZeroSumTables, discounted_values, jump_function, solve_mdp

VALUE_TOL = 1e-9


class NonAbsorbingProfileError(ValueError):
    """The profile leaves positive probability on never being absorbed."""


# --------------------------------------------------------------------------
# best responses against a stationary opponent


def _deviation_rows(spec: GameSpec, opponent, player: int) -> dict:
    rows = {}
    for s in spec.nonabsorbing:
        k = spec.kernel[s]
        if player == 2:
            rows[int(s)] = np.einsum("a,abt->bt", opponent[s], k)
        else:
            rows[int(s)] = np.einsum("b,abt->at", opponent[s], k)
    return rows


def _trap_set(spec: GameSpec, rows: dict) -> set:
    """States from which the deviator can avoid absorption forever."""
    W = {int(s) for s in spec.nonabsorbing}
    changed = True
    while changed:
        changed = False
        inside = np.zeros(spec.n, dtype=bool)
        inside[list(W)] = True
        for s in sorted(W):
            if not any(np.all(r[~inside] <= 0) for r in rows[s]):
                W.discard(s)
                changed = True
    return W


@dataclass(frozen=True)
class BestResponse:
    """Optimal deviation against a frozen stationary opponent.

    Attributes
    ----------
    values : ndarray
        Value of the policy found (exact evaluation), per state.
    policy : dict
        Pure action index per non-absorbing state.
    mode : str
    alpha : float or None
    bound_gap : float
        Largest difference between the optimization bound and the evaluated
        policy (0 when the policy attains the bound).
    trap_states : tuple
        States where the deviator can keep play from ever being absorbed.
    """

    values: np.ndarray
    policy: dict
    mode: str
    alpha: float | None = None
    bound_gap: float = 0.0
    trap_states: tuple = ()


def _undiscounted_best(spec, rows, payoff):
    n = spec.n
    dec = sorted(rows)
    pos = {s: i for i, s in enumerate(dec)}
    fixed = np.where(spec.absorbing, payoff, 0.0)
    W = _trap_set(spec, rows)
    A_ub, b_ub = [], []
    for s in dec:
        for r in rows[s]:
            coef = np.zeros(len(dec))
            coef[pos[s]] -= 1.0
            for t in dec:
                coef[pos[t]] += r[t]
            A_ub.append(coef)
            b_ub.append(-float(r @ fixed))
    bounds = [(0.0 if s in W else None, None) for s in dec]
    res = linprog(np.ones(len(dec)), A_ub=np.array(A_ub), b_ub=np.array(b_ub),
                  bounds=bounds, method="highs")
    if res.status != 0:
        raise RuntimeError(f"deviation linear program failed: {res.message}")
    V = fixed.copy()
    V[dec] = res.x
    tol = 1e-8
    optimal = {s: [c for c, r in enumerate(rows[s]) if r @ V >= V[s] - tol] for s in dec}
    policy = {}
    done = np.array(spec.absorbing, dtype=bool)
    progress = True
    while progress:
        progress = False
        for s in dec:
            if s in policy:
                continue
            for c in optimal[s]:
                if rows[s][c][done].sum() > 0:
                    policy[s] = c
                    done[s] = True
                    progress = True
                    break
    inside = np.zeros(n, dtype=bool)
    inside[list(W)] = True
    for s in dec:
        if s in policy:
            continue
        if s in W and V[s] <= tol:
            keep = [c for c, r in enumerate(rows[s]) if np.all(r[~inside] <= 0)]
            policy[s] = keep[0]
        else:
            policy[s] = int(np.argmax([r @ V for r in rows[s]]))
    P = np.eye(n)
    for s in dec:
        P[s] = rows[s][policy[s]]
    ch = Chain(P, spec.absorbing, spec.names)
    vals = expected_absorbing_payoff(ch, fixed)
    return vals, policy, float(np.max(np.abs(vals - V))), tuple(spec.names[s] for s in sorted(W))


def best_response_value(spec: GameSpec, opponent, player: int, mode: str = "undiscounted",
                        alpha: float | None = None) -> BestResponse:
    """Optimal deviation value of ``player`` when the other player is frozen.

    Parameters
    ----------
    spec : GameSpec
    opponent : sequence of arrays
        The frozen player's stationary strategy.
    player : {1, 2}
        The deviating player.
    mode : {"undiscounted", "discounted"}
        Undiscounted: expected absorbing payoff with never-absorbed play worth
        0; an optimal pure stationary policy exists and is extracted so that
        it attains the optimal value exactly.  Discounted: terminal payoffs
        discounted by ``1 - alpha`` per stage.

    Examples
    --------
    >>> from absorbeq.fixtures import g1_game
    >>> g = g1_game()
    >>> best_response_value(g, [[1.0], [1.0]], player=2).values[0]
    1.0
    """
    if player not in (1, 2):
        raise ValueError("player must be 1 or 2")
    rows = _deviation_rows(spec, opponent, player)
    payoff = spec.payoff(player)
    if mode == "undiscounted":
        vals, policy, gap, W = _undiscounted_best(spec, rows, payoff)
        return BestResponse(vals, policy, mode, None, gap, W)
    if mode == "discounted":
        if alpha is None or not 0 < alpha < 1:
            raise ValueError("discounted mode needs alpha in (0, 1)")
        fixed = np.where(spec.absorbing, payoff, 0.0)
        vals, policy = solve_mdp(rows, fixed, 1.0 - alpha, maximize=True)
        return BestResponse(vals, {int(k): int(v) for k, v in policy.items()}, mode, alpha)
    raise ValueError(f"unknown mode {mode!r}")


# --------------------------------------------------------------------------
# certificate


def delta_budget(eps: float, n: int, M: float = 1.0) -> float:
    """Largest admissible one-step deviation ``eps^3 / (n M)``."""
    return eps ** 3 / (n * M)


@dataclass(frozen=True)
class Certificate:
    """Outcome of :func:`certify_profile`.

    Attributes
    ----------
    eps, delta, budget : float
        ``delta`` is the realised largest ``|w^k(c) - r^k(s)|`` over used
        moves; ``budget = eps^3 / (n M)``.
    n : int
        Size of the evaluation space.
    value_margins : dict
        ``(player, state) -> r^k(s) - j^k(s) + eps``.
    move_margins : dict
        ``(player, state, move) -> delta - |w^k(c) - r^k(s)|``.
    certified : bool
    witnesses : tuple
        Failed conditions as ``(kind, player, state[, move], margin)``.
    r1, r2, j1, j2 : ndarray
    """

    eps: float
    delta: float
    budget: float
    n: int
    M: float
    value_margins: dict
    move_margins: dict
    certified: bool
    witnesses: tuple
    r1: np.ndarray = field(repr=False, default=None)
    r2: np.ndarray = field(repr=False, default=None)
    j1: np.ndarray = field(repr=False, default=None)
    j2: np.ndarray = field(repr=False, default=None)
    situations: Mapping | None = None

    @property
    def verdict(self) -> str:
        return "certified-4eps" if self.certified else "failed"


def certify_profile(spec: GameSpec, profile: StrategyProfile, eps: float, n: int | None = None,
                    tables: ZeroSumTables | None = None, delta: float | None = None,
                    M: float = 1.0, situations: Mapping | None = None,
                    tol: float = VALUE_TOL) -> Certificate:
    """Check the sufficient conditions for a ``4 eps``-equilibrium.

    Parameters
    ----------
    spec : GameSpec
        The game, or the game on situations when ``situations`` is given.
    profile : StrategyProfile
        Absorbing stationary profile.
    eps : float
        In (0, 1/2).
    n : int, optional
        Size of the evaluation space; the number of states by default.
    tables : ZeroSumTables, optional
        Must carry undiscounted values ``c1`` and ``c2``; computed at accuracy
        ``eps`` when omitted.
    delta : float, optional
        One-step tolerance to test the moves against; the realised value by default.
    M : float
        Bound on payoff differences.
    situations : mapping, optional
        Situation name -> underlying state name; recorded in the certificate.

    Raises
    ------
    NonAbsorbingProfileError
    """
    if not 0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 1/2)")
    ev = evaluate_profile(spec, profile)
    if not ev.absorbing:
        trapped = [spec.names[i] for c in ev.chain.trapped_classes for i in c]
        raise NonAbsorbingProfileError(f"profile is not absorbing; trapped states {trapped}")
    if tables is None or tables.c1 is None or tables.c2 is None:
        tables = discounted_values(spec, 0.1, eps=eps)
    n = spec.n if n is None else int(n)
    jt = jump_function(spec, profile.x, tables, profile.y)
    j = {1: jt.j1, 2: jt.j2}
    r = {1: ev.r1, 2: ev.r2}
    value_margins, move_margins, witnesses = {}, {}, []
    for k in (1, 2):
        for s in spec.nonabsorbing:
            m = float(r[k][s] - j[k][s] + eps)
            value_margins[(k, int(s))] = m
            if m <= -tol:
                witnesses.append(("value", k, spec.names[s], m))
    devs = {}
    for k in (1, 2):
        strat = profile.strategy(k)
        for s, table in ev.moves(k).items():
            for c, st in table.items():
                if strat[s][c] > 0:
                    devs[(k, s, c)] = abs(st.w(k) - float(r[k][s]))
    realised = max(devs.values(), default=0.0)
    d = realised if delta is None else float(delta)
    for key, dev in devs.items():
        m = d - dev
        move_margins[key] = m
        if m < -tol:
            k, s, c = key
            acts = spec.actions1[s] if k == 1 else spec.actions2[s]
            witnesses.append(("move", k, spec.names[s], acts[c], m))
    budget = delta_budget(eps, n, M)
    if d > budget + tol:
        witnesses.append(("budget", 0, "", d - budget))
    return Certificate(eps, d, budget, n, M, value_margins, move_margins, not witnesses,
                       tuple(witnesses), ev.r1, ev.r2, jt.j1, jt.j2, situations)


# --------------------------------------------------------------------------
# test-and-punish


def absorption_horizon(chain: Chain, start: int, eps: float, cap: int = 100000) -> int:
    """Smallest ``n`` with probability of no absorption by stage ``n`` below ``eps / 10``."""
    dist = np.zeros(chain.n)
    dist[start] = 1.0
    absorbing = chain.absorbing
    for stage in range(cap + 1):
        if dist[~absorbing].sum() < eps / 10:
            return stage
        dist = dist @ chain.P
    raise NonAbsorbingProfileError(f"no absorption horizon within {cap} stages")


def _wilson(k, n, z=Z99):
    if n == 0:
        return (0.0, 1.0)
    p = k / n
    den = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return (max(0.0, centre - half), min(1.0, centre + half))


@dataclass(frozen=True)
class SimulationReport:
    """Monte Carlo run of the profile under the test-and-punish rule.

    Per-run arrays are indexed by run.  ``outcome`` is ``"absorbed"`` (no
    violation before absorption), ``"punished"`` (a player's statistic
    exceeded ``eps``) or ``"horizon"`` (stage ``n_{s0}`` passed first).
    """

    runs: int
    seed: int
    eps: float
    horizon: int
    start: int
    outcome: np.ndarray = field(repr=False)
    violation_stage: np.ndarray = field(repr=False)
    absorption_stage: np.ndarray = field(repr=False)
    stat_max: np.ndarray = field(repr=False)
    punishment_frequency: float = 0.0
    punishment_ci: tuple = (0.0, 1.0)
    horizon_frequency: float = 0.0
    clean_frequency: float = 0.0
    absorption_frequency: float = 0.0
    mean_absorption_stage: float = float("nan")


def simulate_test_and_punish(spec: GameSpec, profile: StrategyProfile, eps: float, runs: int,
                             seed: int, start=None, horizon: int | None = None) -> SimulationReport:
    """Follow the profile and track both players' cumulative one-step statistics.

    The statistic of player ``k`` is ``sum_i (w^k(c_i) - r^k(s_i))`` over the
    moves ``c_i`` it made; the rule switches to punishment once a statistic
    exceeds ``eps``, once the stage passes ``n_{s0}``, or when a move outside
    the support is observed (impossible when both follow the profile).
    """
    ev = evaluate_profile(spec, profile)
    if not ev.absorbing:
        raise NonAbsorbingProfileError("profile is not absorbing")
    s0 = int(spec.nonabsorbing[0]) if start is None else spec.index(start)
    H = absorption_horizon(ev.chain, s0, eps) if horizon is None else int(horizon)
    rng = np.random.default_rng(seed)
    n = spec.n
    # per state: joint pair distribution, increments, next-state cdfs
    pair_cdf, inc1, inc2, nxt = {}, {}, {}, {}
    for s in spec.nonabsorbing:
        s = int(s)
        k = spec.kernel[s]
        w = np.outer(profile.x[s], profile.y[s]).ravel()
        pair_cdf[s] = np.cumsum(w)
        A1, A2 = k.shape[:2]
        inc1[s] = np.repeat([ev.moves1[s][a].w1 - ev.r1[s] for a in range(A1)], A2)
        inc2[s] = np.tile([ev.moves2[s][b].w2 - ev.r2[s] for b in range(A2)], A1)
        nxt[s] = np.cumsum(k.reshape(A1 * A2, n), axis=1)
    state = np.full(runs, s0)
    S1 = np.zeros(runs)
    S2 = np.zeros(runs)
    smax = np.zeros(runs)
    outcome = np.zeros(runs, dtype=np.int8)      # 0 running, 1 absorbed, 2 punished, 3 horizon
    vstage = np.full(runs, -1)
    astage = np.full(runs, -1)
    for stage in range(H + 1):
        live = outcome == 0
        if not live.any():
            break
        at_abs = live & spec.absorbing[state]
        outcome[at_abs] = 1
        astage[at_abs] = stage
        live &= ~at_abs
        if stage == H:
            outcome[live] = 3
            vstage[live] = stage
            break
        for s in pair_cdf:
            idx = np.flatnonzero(live & (state == s))
            if idx.size == 0:
                continue
            u = rng.random(idx.size)
            pair = np.minimum(np.searchsorted(pair_cdf[s], u, side="right"), pair_cdf[s].size - 1)
            S1[idx] += inc1[s][pair]
            S2[idx] += inc2[s][pair]
            u2 = rng.random(idx.size)
            cdf = nxt[s][pair]
            state[idx] = np.minimum((cdf < u2[:, None]).sum(axis=1), n - 1)
        smax = np.maximum(smax, np.maximum(S1, S2))
        bad = live & ((S1 > eps) | (S2 > eps))
        outcome[bad] = 2
        vstage[bad] = stage
    punished = int((outcome == 2).sum())
    hor = int((outcome == 3).sum())
    clean = int((outcome == 1).sum())
    absorbed = astage >= 0
    return SimulationReport(
        runs, seed, eps, H, s0, outcome, vstage, astage, smax,
        punished / runs, _wilson(punished, runs), hor / runs, clean / runs,
        float(absorbed.mean()), float(astage[absorbed].mean()) if absorbed.any() else float("nan"))


@dataclass(frozen=True)
class DeviationGap:
    """Exact deviation values against the opponent's test-and-punish strategy.

    ``gaps[(k, s)]`` is the deviation value of player ``k`` from ``s`` minus
    ``r^k(s)``.  ``certified`` is ``max gap <= 4 eps``.
    """

    eps: float
    gaps: dict
    values: dict
    horizon: dict
    bucket: float
    certified: bool

    @property
    def max_gap(self) -> float:
        return max(self.gaps.values(), default=0.0)


def test_and_punish_gap(spec: GameSpec, profile: StrategyProfile, eps: float,
                        tables: ZeroSumTables | None = None, bucket: float | None = None,
                        lower: float = -1.0, max_horizon: int = 5000) -> DeviationGap:
    """Best deviation value against the test-and-punish opponent by dynamic programming.

    The augmented state is (state, cumulative statistic of the deviator
    rounded to multiples of ``bucket = eps / 20``, stage).  A statistic above
    ``eps``, a move outside the support or the stage ``n_{s0}`` switches to
    punishment, after which the deviator receives ``c_k + eps`` at the next
    state.  Statistics below ``lower - eps`` are clamped.
    """
    ev = evaluate_profile(spec, profile)
    if not ev.absorbing:
        raise NonAbsorbingProfileError("profile is not absorbing")
    if tables is None or tables.c1 is None or tables.c2 is None:
        tables = discounted_values(spec, 0.1, eps=eps)
    h = eps / 20 if bucket is None else bucket
    lo = int(math.floor((lower - eps) / h))
    hi = int(math.floor(eps / h + 1e-9))
    levels = np.arange(lo, hi + 1)              # bucket index, statistic = index * h
    nb = levels.size
    gaps, values, horizons = {}, {}, {}
    for k in (1, 2):
        opp = profile.strategy(3 - k)
        own = profile.strategy(k)
        rows = _deviation_rows(spec, opp, k)
        rk = ev.payoff(k)
        payoff = np.where(spec.absorbing, spec.payoff(k), 0.0)
        punish = np.where(spec.absorbing, spec.payoff(k), tables.punishment(k) + eps)
        stats = ev.moves(k)
        for s0 in spec.nonabsorbing:
            s0 = int(s0)
            H = min(absorption_horizon(ev.chain, s0, eps, cap=max_horizon), max_horizon)
            V = np.tile(punish[:, None], (1, nb))          # value after the horizon
            V[spec.absorbing] = payoff[spec.absorbing, None]
            for stage in range(H, -1, -1):
                new = np.tile(payoff[:, None], (1, nb))
                for s, R in rows.items():
                    best = np.full(nb, -np.inf)
                    for c, row in enumerate(R):
                        pun_val = float(row @ punish)
                        if own[s][c] <= 0:
                            best = np.maximum(best, pun_val)
                            continue
                        step = int(round((stats[s][c].w(k) - rk[s]) / h))
                        nxt = levels + step
                        over = nxt > hi
                        col = np.clip(nxt, lo, hi) - lo
                        cont = row @ V[:, col] if stage < H else np.full(nb, pun_val)
                        val = np.where(over | (stage >= H), pun_val, cont)
                        best = np.maximum(best, val)
                    new[s] = best
                V = new
            v = float(V[s0, 0 - lo])
            values[(k, s0)] = v
            gaps[(k, s0)] = v - float(rk[s0])
            horizons[s0] = H
    cert = max(gaps.values(), default=0.0) <= 4 * eps + VALUE_TOL
    return DeviationGap(eps, gaps, values, horizons, h, cert)


# --------------------------------------------------------------------------
# martingale bounds


def _w_values(chain: Chain, v):
    diff = np.abs(v[None, :] - v[:, None])
    return (chain.P * diff).sum(axis=1)


@dataclass(frozen=True)
class WSumReport:
    exact: np.ndarray
    bound: float
    n_active: int
    M: float
    estimate: float | None = None
    stderr: float | None = None
    start: int | None = None

    @property
    def ok(self) -> bool:
        exact_ok = bool(np.all(self.exact <= self.bound + VALUE_TOL))
        if self.estimate is None:
            return exact_ok
        return exact_ok and self.estimate <= self.bound + 3 * self.stderr


def w_sum_check(chain: Chain, boundary, runs: int = 0, seed: int = 0, start=None,
                max_stages: int = 100000) -> WSumReport:
    """Expected total one-step variation ``E sum_i w(x_i)`` against ``M n``.

    ``w(x) = sum_y p(x, y) |v(y) - v(x)|`` for the harmonic extension ``v`` of
    ``boundary``, ``n`` is the number of states with ``w > 0`` and ``M`` the
    spread of ``v``.  The exact expectation comes from the fundamental matrix;
    with ``runs > 0`` a Monte Carlo estimate from ``start`` is added.
    """
    chain.require_absorbing()
    v = expected_absorbing_payoff(chain, boundary)
    w = _w_values(chain, v)
    M = float(v.max() - v.min())
    w[w <= VALUE_TOL * max(M, 1.0)] = 0.0      # rounding noise of the harmonic solve
    n_active = int((w > 0).sum())
    tr = np.flatnonzero(~chain.absorbing)
    Q = chain.P[np.ix_(tr, tr)]
    exact = np.zeros(chain.n)
    exact[tr] = np.linalg.solve(np.eye(tr.size) - Q, w[tr])
    bound = M * n_active
    if runs <= 0:
        return WSumReport(exact, bound, n_active, M)
    s0 = int(tr[0]) if start is None else chain.index(start)
    rng = np.random.default_rng(seed)
    cdf = np.cumsum(chain.P, axis=1)
    state = np.full(runs, s0)
    total = np.zeros(runs)
    for _ in range(max_stages):
        live = ~chain.absorbing[state]
        if not live.any():
            break
        total[live] += w[state[live]]
        u = rng.random(int(live.sum()))
        state[live] = np.minimum((cdf[state[live]] < u[:, None]).sum(axis=1), chain.n - 1)
    return WSumReport(exact, bound, n_active, M, float(total.mean()),
                      float(total.std(ddof=1) / math.sqrt(runs)), s0)


@dataclass(frozen=True)
class TwoLayerChain:
    """Alternating chain: from ``x`` in X a move ``y`` in ``Y_x``, then a state of X.

    Attributes
    ----------
    n : int
        Size of X; states ``absorbing`` only have the trivial move.
    moves : tuple
        ``moves[x]`` is a tuple of ``(probability, destination distribution)``.
    v : ndarray
        Harmonic values on X.
    absorbing : ndarray of bool
    """

    n: int
    moves: tuple
    v: np.ndarray
    absorbing: np.ndarray

    def move_values(self, x):
        return [float(d @ self.v) for _, d in self.moves[x]]

    def harmonic_residual(self) -> float:
        worst = 0.0
        for x in range(self.n):
            val = sum(p * float(d @ self.v) for p, d in self.moves[x])
            worst = max(worst, abs(val - self.v[x]))
        return worst

    def max_step(self):
        """Largest ``|v(y) - v(x)|`` over positive-probability moves, with its witness."""
        best, where = 0.0, None
        for x in range(self.n):
            for i, (p, d) in enumerate(self.moves[x]):
                gap = abs(float(d @ self.v) - self.v[x])
                if p > 0 and gap > best:
                    best, where = gap, (x, i)
        return best, where


def two_layer_from_chain(chain: Chain, boundary, delta: float) -> TwoLayerChain:
    """Split every transition into two moves whose values sit ``delta`` above and below.

    At a state where ``v`` is not constant across the successors, the moves
    ``p +/- theta (q_hi - q_lo)`` are played with probability one half each,
    with ``q_hi`` / ``q_lo`` the transition conditioned on successors above /
    below ``v(x)`` and ``theta`` chosen so that the move values differ from
    ``v(x)`` by exactly ``delta`` (or less, when the transition cannot be
    tilted that far).
    """
    chain.require_absorbing()
    v = expected_absorbing_payoff(chain, boundary)
    moves = []
    for x in range(chain.n):
        p = chain.P[x]
        if chain.absorbing[x]:
            moves.append(((1.0, p.copy()),))
            continue
        hi = p * (v > v[x] + 1e-15)
        lo = p * (v < v[x] - 1e-15)
        if hi.sum() <= 0 or lo.sum() <= 0:
            moves.append(((1.0, p.copy()),))
            continue
        qh, ql = hi / hi.sum(), lo / lo.sum()
        spread = float(qh @ v - ql @ v)
        theta = min(delta / spread, hi.sum(), lo.sum())
        up = p + theta * (qh - ql)
        down = p - theta * (qh - ql)
        moves.append(((0.5, np.clip(up, 0, None)), (0.5, np.clip(down, 0, None))))
    return TwoLayerChain(chain.n, tuple(moves), v, chain.absorbing.copy())


def random_walk_two_layer(positions: int, tilt: float = 0.0) -> TwoLayerChain:
    """Walk on ``0..positions`` with absorbing ends worth 0 and 1.

    Each interior position offers two moves played with probability one half:
    one steps right with probability ``1/2 + tilt``, the other with
    ``1/2 - tilt``.  ``tilt = 1/2`` reveals the direction of the step.
    """
    n = positions + 1
    v = np.arange(n) / positions
    moves = []
    absorbing = np.zeros(n, dtype=bool)
    absorbing[[0, positions]] = True
    for x in range(n):
        if absorbing[x]:
            d = np.zeros(n)
            d[x] = 1.0
            moves.append(((1.0, d),))
            continue
        up = np.zeros(n)
        up[x + 1], up[x - 1] = 0.5 + tilt, 0.5 - tilt
        down = np.zeros(n)
        down[x + 1], down[x - 1] = 0.5 - tilt, 0.5 + tilt
        moves.append(((0.5, up), (0.5, down)))
    return TwoLayerChain(n, tuple(moves), v, absorbing)


@dataclass(frozen=True)
class ExcursionReport:
    """Probability that the running sum of ``v(y) - v(x)`` ever reaches ``eps``."""

    delta: float
    eps: float
    n: int
    M: float
    admissible: bool
    estimate: float
    ci: tuple
    runs: int
    truncated: float
    witness: tuple | None = None

    @property
    def ok(self) -> bool:
        return self.ci[0] <= self.eps


def excursion_check(tl: TwoLayerChain, delta: float, eps: float, runs: int, seed: int,
                    start: int | None = None, n: int | None = None, M: float | None = None,
                    enforce: bool = True, max_stages: int = 200000) -> ExcursionReport:
    """Monte Carlo probability that ``max_l sum_{i <= l} (v(y_i) - v(x_i)) >= eps``.

    Parameters
    ----------
    tl : TwoLayerChain
    delta : float
        Claimed bound on ``|v(y) - v(x)|``.
    eps : float
    runs, seed : int
    start : int, optional
        Start state in X (the middle state by default).
    n, M : optional
        Size of X and spread of ``v`` used in the admissibility test
        ``delta <= eps^3 / (M n)``; default ``|X|`` and the spread of ``v``.
    enforce : bool
        Raise on an edge exceeding ``delta`` or an inadmissible ``delta``;
        otherwise record the violation and run anyway.

    Returns
    -------
    ExcursionReport
        ``truncated`` is the fraction of runs still alive at ``max_stages``
        (counted as non-exceeding).
    """
    n = tl.n if n is None else n
    M = float(tl.v.max() - tl.v.min()) if M is None else M
    step, where = tl.max_step()
    witness = None
    if step > delta + 1e-12:
        witness = where
        if enforce:
            raise ValueError(f"move {where} changes the value by {step:.3g} > delta = {delta}")
    limit = eps ** 3 / (M * n) if M > 0 else math.inf     # constant values never move
    admissible = delta <= limit * (1 + 1e-12) and witness is None
    if enforce and not admissible:
        raise ValueError(f"delta = {delta} exceeds eps^3/(M n) = {limit:.3g}")
    rng = np.random.default_rng(seed)
    x0 = tl.n // 2 if start is None else start
    # flatten moves: per state arrays of move probabilities, increments and next-state cdfs
    kmax = max(len(m) for m in tl.moves)
    mcdf = np.ones((tl.n, kmax))
    inc = np.zeros((tl.n, kmax))
    dest = np.zeros((tl.n, kmax, tl.n))
    for x, mv in enumerate(tl.moves):
        ps = np.array([p for p, _ in mv])
        mcdf[x, :len(mv)] = np.cumsum(ps)
        for i, (_, d) in enumerate(mv):
            inc[x, i] = float(d @ tl.v) - tl.v[x]
            dest[x, i] = np.cumsum(d)
        for i in range(len(mv), kmax):
            dest[x, i] = dest[x, len(mv) - 1]
    state = np.full(runs, x0)
    total = np.zeros(runs)
    hit = np.zeros(runs, dtype=bool)
    live = ~tl.absorbing[state]
    for _ in range(max_stages):
        if not live.any():
            break
        idx = np.flatnonzero(live)
        s = state[idx]
        u = rng.random(idx.size)
        m = np.minimum((mcdf[s] < u[:, None]).sum(axis=1), kmax - 1)
        total[idx] += inc[s, m]
        hit[idx] |= total[idx] >= eps - 1e-12
        u2 = rng.random(idx.size)
        state[idx] = np.minimum((dest[s, m] < u2[:, None]).sum(axis=1), tl.n - 1)
        live = ~tl.absorbing[state] & ~hit
    k = int(hit.sum())
    return ExcursionReport(delta, eps, n, M, admissible, k / runs, _wilson(k, runs), runs,
                           float(live.mean()), witness)


@dataclass(frozen=True)
class WalkCounterexample:
    """Random walk whose per-step change respects an ``n``-free bound yet breaks the conclusion."""

    positions: int
    eps: float
    delta: float
    n_free_bound: float
    admissible_bound: float
    exact: float
    estimate: float
    ci: tuple
    runs: int

    @property
    def violates(self) -> bool:
        return self.ci[0] > self.eps


def random_walk_counterexample(eps: float = 0.1, positions: int | None = None, runs: int = 400,
                               seed: int = 0, chunk: int = 4096) -> WalkCounterexample:
    """Simple walk on ``0..N`` from ``N/2`` whose moves reveal the step direction.

    Each move changes the value by ``delta = 1/N``.  Taking ``N = ceil(1/eps^3)``
    meets ``delta <= eps^3`` (a bound that ignores the size of the state
    space) while the sum of increments still reaches ``eps`` with probability
    ``(N/2) / (N/2 + ceil(eps N))``, far above ``eps``.
    """
    N = int(math.ceil(1 / eps ** 3)) if positions is None else int(positions)
    N += N % 2
    half = N // 2
    up = int(math.ceil(eps * N - 1e-9))
    exact = half / (half + up)
    rng = np.random.default_rng(seed)
    pos = np.zeros(runs, dtype=np.int64)           # displacement from the start
    hit = np.zeros(runs, dtype=bool)
    dead = np.zeros(runs, dtype=bool)
    while not (hit | dead).all():
        live = np.flatnonzero(~(hit | dead))
        steps = rng.integers(0, 2, size=(live.size, chunk), dtype=np.int8) * 2 - 1
        path = pos[live, None] + np.cumsum(steps, axis=1)
        first_up = np.where((path >= up).any(1), (path >= up).argmax(1), chunk)
        first_dn = np.where((path <= -half).any(1), (path <= -half).argmax(1), chunk)
        hit[live] = first_up < first_dn
        dead[live] = (first_dn < first_up)
        pos[live] = path[:, -1]
    k = int(hit.sum())
    return WalkCounterexample(N, eps, 1.0 / N, eps ** 3, eps ** 3 / (N + 1), exact, k / runs,
                              _wilson(k, runs), runs)
