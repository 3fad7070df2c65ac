"""Surgery on Markov chains and stationary strategies, with checkable guarantees.

Every operation recomputes the affected taboo probabilities or harmonic
values exactly and reports the quantitative margins of its guarantee.
Masses are unnormalised sub-rows over the state space of the chain.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .chain import (
    Chain,
    ChainAnalysis,
    NonAbsorbingChainError,
    Part,
    expected_absorbing_payoff,
    factor_between,
    harmonic_payoffs,
    hitting_values,
    row_statistics,
    taboo_vector,
)
from .game import GameSpec, StrategyProfile, induce_chain

SLACK = 1e-9


class HypothesisError(ValueError):
    """A transform's precondition does not hold."""


def _mask(n, states):
    m = np.zeros(n, dtype=bool)
    m[list(states)] = True
    return m


# --------------------------------------------------------------------------
# simplification


@dataclass(frozen=True)
class SimplifyResult:
    result: object
    removed: dict       # state (or (state, player)) -> removed frequency


def _renormalize(v, drop, where):
    v = np.array(v, dtype=float)
    removed = float(v[drop].sum())
    if removed >= 1.0 - 1e-15:
        raise HypothesisError(f"removal leaves nothing at {where}")
    v[drop] = 0.0
    return v / v.sum(), removed


def simplify(obj, removal, *, names=None):
    """Remove moves or parts and renormalise what remains.

    Parameters
    ----------
    obj : StrategyProfile or Chain
    removal : iterable
        For a profile: triples ``(state, player, action)`` with integer
        indices.  For a chain: pairs ``(state, label)`` of part labels, or
        ``(state, mass)`` with an explicit sub-row to subtract.

    Returns
    -------
    SimplifyResult
        ``removed`` maps ``(state, player)`` (profile) or ``state`` (chain)
        to the frequency removed there.
    """
    if isinstance(obj, StrategyProfile):
        drops = {}
        for s, player, a in removal:
            drops.setdefault((int(s), int(player)), []).append(int(a))
        x, y = list(obj.x), list(obj.y)
        removed = {}
        for (s, player), acts in sorted(drops.items()):
            strat = x if player == 1 else y
            strat[s], removed[(s, player)] = _renormalize(strat[s], acts, f"state {s}")
        return SimplifyResult(obj.replace(x=x, y=y), removed)
    if isinstance(obj, Chain):
        P = obj.P.copy()
        parts = [list(ps) for ps in obj.parts]
        removed = {}
        for s, what in removal:
            s = obj.index(s)
            if isinstance(what, np.ndarray) or isinstance(what, (list, tuple)) and \
                    len(what) == obj.n and not isinstance(what, str):
                mass = np.asarray(what, dtype=float)
            else:
                mass = obj.part(s, what).mass
                parts[s] = [p for p in parts[s] if p.label != what]
            P[s] = P[s] - mass
            if np.any(P[s] < -1e-12):
                raise HypothesisError(f"removed mass exceeds the row at state {obj.names[s]}")
            removed[s] = removed.get(s, 0.0) + float(mass.sum())
        new_parts = []
        for s in range(obj.n):
            tot = P[s].sum()
            if tot <= 1e-15:
                raise HypothesisError(f"removal leaves nothing at state {obj.names[s]}")
            P[s] = np.clip(P[s], 0.0, None) / tot
            if s in removed:
                kept = [Part(s, p.mass / tot, p.label) for p in parts[s]
                        if np.all(p.mass / tot <= P[s] + 1e-12)]
                total = sum((p.mass for p in kept), np.zeros(obj.n))
                if not kept or np.max(np.abs(total - P[s])) > 1e-9:
                    kept = [Part(s, P[s], "row")]
                new_parts.append(tuple(kept))
            else:
                new_parts.append(obj.parts[s])
        return SimplifyResult(Chain(P, obj.absorbing, obj.names, tuple(new_parts)), removed)
    raise TypeError("simplify expects a StrategyProfile or a Chain")


def simplify_below(profile: StrategyProfile, gamma: float) -> SimplifyResult:
    """Drop every move played with probability below ``gamma`` (at least one move is kept)."""
    removal = []
    for player, strat in ((1, profile.x), (2, profile.y)):
        for s, v in enumerate(strat):
            small = np.flatnonzero(v < gamma)
            if small.size == v.size:
                small = small[small != int(np.argmax(v))]
            removal.extend((s, player, int(a)) for a in small if v[a] > 0)
    return simplify(profile, removal)


def remove_masses(chain: Chain, removals: Mapping[int, np.ndarray]) -> Chain:
    return simplify(chain, [(s, np.asarray(m, dtype=float)) for s, m in removals.items()]).result


# --------------------------------------------------------------------------
# removal of rarely used motion


def _P(chain, s, taboo, target):
    n = chain.n
    tb = _mask(n, taboo)
    tg = _mask(n, target) & ~tb
    h = hitting_values(chain.P, tb, tg)
    return float(chain.P[s] @ h)


@dataclass(frozen=True)
class SinglePartReport:
    gamma: float
    at_t: tuple          # (new, old)
    at_s: tuple
    ok: bool


def single_part_check(chain: Chain, t, part_mass, s, A, B=()) -> SinglePartReport:
    """Keep only the part ``part_mass`` at ``t`` and compare escape-to-``A`` probabilities.

    ``gamma`` is the share of ``P^{B+t}(t, A)`` carried by the part (the
    complement redirected back to ``t``).  The report compares
    ``P_*^{B+t}(t, A)`` and ``P_*^{B+s}(s, A)`` with ``gamma`` times their
    old values.
    """
    t, s = chain.index(t), chain.index(s)
    A = [chain.index(a) for a in A]
    B = [chain.index(b) for b in B]
    sets = [set(A), set(B), {s, t}]
    if any(x & y for x, y in itertools.combinations(sets, 2)) or s == t:
        raise ValueError("A, B and {s, t} must be mutually disjoint")
    n = chain.n
    mass = np.asarray(part_mass, dtype=float)
    tb = _mask(n, B + [t])
    h = hitting_values(chain.P, tb, _mask(n, A))
    old_t = float(chain.P[t] @ h)
    gamma = float(mass @ h) / old_t if old_t > 0 else 1.0
    new = chain.with_rows({t: mass})
    new_t = _P(new, t, B + [t], A)
    old_s = _P(chain, s, B + [s], A)
    new_s = _P(new, s, B + [s], A)
    ok = new_t >= gamma * old_t - SLACK and new_s >= gamma * old_s - SLACK
    return SinglePartReport(gamma, (new_t, old_t), (new_s, old_s), ok)


@dataclass(frozen=True)
class RemovalReport:
    gamma: float                 # realised removal fraction
    hypothesis_ok: bool          # gamma < 1 / (2 |U|)
    escape_factor: float         # worst new/old ratio of P^{T+x}(x, A)
    escape_ok: bool
    entry_factor: float          # worst (1 - 3|U| gamma) P_* / P ratio on P^{T+A}(a, x)
    entry_ok: bool
    survival_gamma: float | None = None
    survival_ok: bool | None = None
    violations: tuple = ()

    @property
    def ok(self) -> bool:
        return self.escape_ok and self.entry_ok and self.survival_ok is not False


def removal_bound_check(chain: Chain, removals: Mapping[int, np.ndarray], T=(), A=(),
                        s=None) -> RemovalReport:
    """Remove small sub-rows at the states ``U = removals.keys()`` and check the bounds.

    The removal fraction is ``gamma = max_u |removed_u| / P^{T+u}(u, A)``
    (``|removed_u|`` itself when ``u`` is in ``A``).  With ``gamma < 1/(2|U|)``
    the check verifies ``P_*^{T+x}(x, A) >= (1 - gamma |U|) P^{T+x}(x, A)``
    for every ``x`` outside ``A`` and ``(1 - 3 |U| gamma) P_*^{T+A}(a, x) <=
    P^{T+A}(a, x)`` for ``a`` in ``A`` and ``x`` outside ``A`` and ``T``.

    When ``s`` is given, the survival of positive reachability of ``s`` from
    every ``u`` in ``U`` is checked as well, with the fraction measured against
    ``P^u(u, s)``.
    """
    n = chain.n
    T = [chain.index(v) for v in T]
    A = [chain.index(v) for v in A]
    U = sorted(chain.index(u) for u in removals)
    if set(T) & (set(A) | set(U)):
        raise ValueError("T must be disjoint from A and U")
    if not U:
        return RemovalReport(0.0, True, 1.0, True, 1.0, True)
    Aset = set(A)
    gam = 0.0
    for u in U:
        m = float(np.asarray(removals[u]).sum())
        if u in Aset:
            gam = max(gam, m)
        else:
            base = _P(chain, u, T + [u], A)
            gam = max(gam, m / base if base > 0 else (np.inf if m > 0 else 0.0))
    new = remove_masses(chain, {u: removals[u] for u in U})
    k = len(U)
    hyp = gam < 1.0 / (2 * k)
    viol = []
    worst_esc = np.inf
    for x in range(n):
        if x in Aset:
            continue
        old = _P(chain, x, T + [x], A)
        nw = _P(new, x, T + [x], A)
        if old > 0:
            worst_esc = min(worst_esc, nw / old)
        if nw < (1 - gam * k) * old - SLACK:
            viol.append(("escape", x))
    worst_entry = 0.0
    for a in A:
        for x in range(n):
            if x in Aset or x in T:
                continue
            old = _P(chain, a, T + A, [x])
            nw = _P(new, a, T + A, [x])
            lhs = (1 - 3 * k * gam) * nw
            if old > 0:
                worst_entry = max(worst_entry, lhs / old)
            elif lhs > SLACK:
                worst_entry = np.inf
            if lhs > old + SLACK:
                viol.append(("entry", a, x))
    surv_g = surv_ok = None
    if s is not None:
        r = reach_survival_check(chain, {u: removals[u] for u in U if u != chain.index(s)}, s)
        surv_g, surv_ok = r.gamma, r.ok
    esc_ok = not any(v[0] == "escape" for v in viol) if hyp else True
    ent_ok = not any(v[0] == "entry" for v in viol) if hyp else True
    return RemovalReport(float(gam), hyp, float(worst_esc if np.isfinite(worst_esc) else 1.0),
                         esc_ok, float(worst_entry), ent_ok, surv_g, surv_ok,
                         tuple(viol) if hyp else ())


@dataclass(frozen=True)
class SurvivalReport:
    gamma: float
    hypothesis_ok: bool
    reached_before: bool
    reached_after: bool

    @property
    def ok(self) -> bool:
        return not (self.hypothesis_ok and self.reached_before) or self.reached_after


def reach_survival_check(chain: Chain, removals: Mapping[int, np.ndarray], s) -> SurvivalReport:
    """Removing parts ``q^t`` that carry at most ``gamma`` of ``P^t(t, s)`` keeps ``s`` reachable.

    ``gamma = max_t f_q P_q^t(t, s) / P^t(t, s)`` where ``P_q^t`` uses the
    normalised part as the whole transition at ``t``.
    """
    s = chain.index(s)
    n = chain.n
    T = sorted(chain.index(t) for t in removals)
    reach_before = hitting_values(chain.P, np.zeros(n, bool), _mask(n, [s]))
    before = all(reach_before[t] > 0 for t in T)
    gam = 0.0
    for t in T:
        mass = np.asarray(removals[t], dtype=float)
        f = float(mass.sum())
        if f <= 0:
            continue
        base = _P(chain, t, [t], [s])
        alt = _P(chain.with_rows({t: mass}), t, [t], [s])
        gam = max(gam, f * alt / base if base > 0 else np.inf)
    new = remove_masses(chain, removals) if T else chain
    reach_after = hitting_values(new.P, np.zeros(n, bool), _mask(n, [s]))
    after = all(reach_after[t] > 0 for t in T)
    return SurvivalReport(float(gam), len(T) * gam < 1, before, after)


def _first_passage(chain, u, z):
    """``P^u(u, z)``; for ``z = u`` the return probability (stages >= 1)."""
    return _P(chain, u, [] if u == z else [u], [z])


def _take(strat, removed, where):
    out = []
    for s, v in enumerate(strat):
        if s in removed:
            m = np.asarray(removed[s], dtype=float)
            if m.shape != v.shape or np.any(m < -SLACK) or np.any(m > v + SLACK):
                raise ValueError(f"removed mass at state {s} is not a part of {where}")
            v = np.clip(v - m, 0.0, None)
            if v.sum() <= 0:
                raise HypothesisError(f"removal empties {where} at state {s}")
            v = v / v.sum()
        out.append(v)
    return out


@dataclass(frozen=True)
class ContinuedMotionReport:
    """Outcome of :func:`continued_motion_check`.

    ``gamma``, ``eps`` and ``delta`` are the realised constants; the
    hypothesis is ``(1 - 4 gamma |U|) eps > delta |U|`` together with motion
    between all pairs of ``R``.  ``borderline`` marks a hypothesis margin
    within ``1e-9`` of zero, where rounding decides the verdict.
    """

    gamma: float
    eps: float
    delta: float
    margin: float
    connected: bool
    hypothesis_ok: bool
    borderline: bool
    reach_s: dict
    reach_t: float

    @property
    def conclusion(self) -> bool:
        return all(v > 0 for v in self.reach_s.values()) and self.reach_t > 0

    @property
    def ok(self) -> bool:
        return not self.hypothesis_ok or self.conclusion


def continued_motion_check(spec: GameSpec, profile: StrategyProfile, R, U, s, t,
                           x_removed: Mapping, y_parts: Mapping) -> ContinuedMotionReport:
    """Remove Player One mass and Player Two parts on ``U``; check that ``s`` stays reachable.

    Parameters
    ----------
    spec : GameSpec
    profile : StrategyProfile
        The pair ``(x, y)``.
    R, U : sequences of states
        ``U`` is contained in ``R``; ``s`` and ``t`` are in ``U``.
    x_removed : mapping
        State -> action masses removed from ``x^u`` (a sub-vector of it).
    y_parts : mapping
        State -> the part ``y_*^u`` of ``y^u`` that is removed.

    Notes
    -----
    The constants are read off the profile: ``gamma`` is the largest removed
    Player One frequency relative to ``P^u(u, s)`` for ``u != s`` and the
    removed frequency itself at ``s``; ``eps = P^s_{x', y}(s, t) /
    P^s_{x, y}(s, t)``; ``delta`` is the largest ``f_* P^u_{x, (y | y_*)}(u, z)
    / P^u_{x, y}(u, z)`` over ``u`` in ``U`` and ``z`` in ``{s, t}``, where
    ``(y | y_*)`` plays the normalised part at ``u``.  For ``z = u`` the
    first passage is the return probability.  The conclusion is checked on
    the profile with both removals: every state of ``R`` reaches ``s`` and
    ``s`` reaches ``t``.
    """
    R = [spec.index(v) for v in R]
    U = [spec.index(v) for v in U]
    s, t = spec.index(s), spec.index(t)
    if not set(U) <= set(R) or s not in U or t not in U or s == t:
        raise ValueError("need U inside R and distinct s, t in U")
    xr = {spec.index(k): v for k, v in x_removed.items()}
    yp = {spec.index(k): v for k, v in y_parts.items()}
    if not set(xr) | set(yp) <= set(U):
        raise ValueError("removals must sit on U")
    base = induce_chain(spec, profile)
    reach = {v: hitting_values(base.P, np.zeros(base.n, bool), _mask(base.n, [v])) for v in R}
    connected = all(reach[v][u] > 0 for u in R for v in R)
    gam = 0.0
    for u, m in xr.items():
        f = float(np.sum(m))
        if u == s:
            gam = max(gam, f)
        elif f > 0:
            ref = _first_passage(base, u, s)
            gam = max(gam, f / ref if ref > 0 else np.inf)
    x_bar = _take(profile.x, xr, "x")
    mid = induce_chain(spec, profile.replace(x=x_bar))
    old_st = _first_passage(base, s, t)
    eps = _first_passage(mid, s, t) / old_st if old_st > 0 else 0.0
    dlt = 0.0
    for u, part in yp.items():
        part = np.asarray(part, dtype=float)
        f = float(part.sum())
        if f <= 0:
            continue
        y_star = list(profile.y)
        y_star[u] = part / f
        alt = induce_chain(spec, profile.replace(y=y_star))
        for z in (s, t):
            ref = _first_passage(base, u, z)
            val = f * _first_passage(alt, u, z)
            dlt = max(dlt, val / ref if ref > 0 else (np.inf if val > 0 else 0.0))
    k = len(U)
    margin = (1 - 4 * gam * k) * eps - dlt * k
    hyp = connected and margin > 0
    y_bar = _take(profile.y, yp, "y")
    new = induce_chain(spec, profile.replace(x=x_bar, y=y_bar))
    to_s = hitting_values(new.P, np.zeros(new.n, bool), _mask(new.n, [s]))
    reach_s = {spec.names[v]: float(to_s[v]) for v in R}
    reach_t = float(hitting_values(new.P, np.zeros(new.n, bool), _mask(new.n, [t]))[s])
    return ContinuedMotionReport(float(gam), float(eps), float(dlt), float(margin), connected,
                                 bool(hyp), bool(np.isfinite(margin) and abs(margin) <= 1e-9),
                                 reach_s, reach_t)


# --------------------------------------------------------------------------
# relative perturbations


def _block_pairs(groups, limit=None, rng=None):
    """Disjoint pairs (A, T) of unions of groups with A non-empty."""
    k = len(groups)
    out = []
    for labels in itertools.product((0, 1, 2), repeat=k):
        A = [s for g, l in zip(groups, labels) if l == 1 for s in g]
        T = [s for g, l in zip(groups, labels) if l == 2 for s in g]
        if A:
            out.append((tuple(A), tuple(T)))
    if limit is not None and len(out) > limit:
        rng = np.random.default_rng(0) if rng is None else rng
        idx = rng.choice(len(out), size=limit, replace=False)
        out = [out[i] for i in sorted(idx)]
    return out


@dataclass(frozen=True)
class PerturbationReport:
    gamma: float
    changed: tuple
    hypothesis_ok: bool
    taboo_factor: float
    taboo_bound: float
    harmonic_deviation: float
    harmonic_bound: float
    pairs_checked: int

    @property
    def ok(self) -> bool:
        if not self.hypothesis_ok:
            return True
        return (self.taboo_factor <= self.taboo_bound + SLACK
                and self.harmonic_deviation <= self.harmonic_bound + SLACK)


def relative_perturbation_bound(chain: Chain, perturbed: Chain, boundary=None,
                                changed: Sequence | None = None, gamma: float | None = None,
                                max_pairs: int = 2000) -> PerturbationReport:
    """Compare all taboo probabilities and harmonic values after relative row changes.

    Parameters
    ----------
    chain, perturbed : Chain
        Same state space and absorbing set; entries of changed rows must be
        within a factor ``gamma`` of the original with the same zero pattern.
    boundary : array, optional
        Absorbing values; defaults to a unit value on the first absorbing state.
    changed : sequence, optional
        The set ``U``; inferred from the rows that differ when omitted.
    gamma : float, optional
        Defaults to the realised largest factor.
    max_pairs : int
        Cap on the number of ``(A, T)`` set pairs (sampled deterministically).

    Raises
    ------
    HypothesisError
        On a zero-pattern change.
    """
    P, Q = chain.P, perturbed.P
    if P.shape != Q.shape or np.any(chain.absorbing != perturbed.absorbing):
        raise ValueError("chains must share the state space")
    if np.any((P > 0) != (Q > 0)):
        bad = np.argwhere((P > 0) != (Q > 0))[0]
        raise HypothesisError(f"zero pattern changes at entry {tuple(int(i) for i in bad)}")
    if changed is None:
        changed = [s for s in range(chain.n) if np.any(P[s] != Q[s])]
    U = tuple(sorted(chain.index(u) for u in changed))
    realised = 0.0
    for s in U:
        for t in np.flatnonzero(P[s] > 0):
            realised = max(realised, factor_between(P[s, t], Q[s, t]))
    if gamma is None:
        gamma = realised
    k = max(len(U), 1)
    hyp = gamma < 1.0 / (2 * k) and realised <= gamma + 1e-12
    n = chain.n
    groups = [[s] for s in range(n)]
    pairs = _block_pairs(groups, max_pairs)
    worst = 0.0
    for A, T in pairs:
        a = taboo_vector(chain, list(T), list(A))
        b = taboo_vector(perturbed, list(T), list(A))
        for s in range(n):
            worst = max(worst, factor_between(a[s], b[s]))
    if boundary is None:
        boundary = np.zeros(n)
        boundary[np.flatnonzero(chain.absorbing)[0]] = 1.0
    boundary = np.asarray(boundary, dtype=float)
    absv = boundary[chain.absorbing]
    M = float(absv.max() - absv.min()) if absv.size else 0.0
    r = expected_absorbing_payoff(chain, boundary)
    r2 = expected_absorbing_payoff(perturbed, boundary)
    dev = float(np.max(np.abs(r - r2)))
    return PerturbationReport(float(gamma), U, hyp, float(worst), 4 * gamma * len(U), dev,
                              4 * gamma * len(U) * M, len(pairs))


# --------------------------------------------------------------------------
# extension and contraction along a partition with exits


@dataclass(frozen=True)
class ExitSystem:
    """Partition of the non-absorbing states into blocks with designated exits.

    Attributes
    ----------
    blocks : tuple of tuple of int
        Blocks of non-absorbing states; absorbing states are implicit singletons.
    exits : dict
        ``exits[s]`` is the exit mass at ``s`` (a sub-row of the chain's row);
        all motion out of the block must be included.
    reps : tuple of int
        Representative of each block.
    """

    blocks: tuple
    exits: dict
    reps: tuple

    @classmethod
    def default(cls, chain: Chain, blocks: Sequence[Sequence], reps=None) -> "ExitSystem":
        """Exits = all out-of-block motion; a singleton block exits through its whole row."""
        blocks = tuple(tuple(chain.index(s) for s in b) for b in blocks)
        covered = sorted(s for b in blocks for s in b)
        if covered != sorted(int(s) for s in chain.nonabsorbing):
            raise ValueError("blocks must partition the non-absorbing states")
        exits = {}
        for b in blocks:
            inside = _mask(chain.n, b)
            for s in b:
                if len(b) == 1:
                    exits[s] = chain.P[s].copy()
                else:
                    exits[s] = np.where(inside, 0.0, chain.P[s])
        if reps is None:
            reps = tuple(b[0] for b in blocks)
        return cls(blocks, exits, tuple(chain.index(r) for r in reps))

    def block_of(self, s) -> int:
        for i, b in enumerate(self.blocks):
            if s in b:
                return i
        return -1

    @property
    def n_nontrivial(self) -> int:
        return sum(1 for b in self.blocks if len(b) > 1)


@dataclass(frozen=True)
class ContractionResult:
    """Extended chain on ``S_*`` and contracted chain on ``S_#``.

    Attributes
    ----------
    source : Chain
    exits : ExitSystem
    extended : Chain
        States ``s^a`` (indices ``0..n-1``) followed by ``s^b`` for each
        non-absorbing ``s``.
    b_index : dict
        Original state -> index of ``s^b`` in ``extended``.
    contracted : Chain
        States are the block representatives and the absorbing states, in
        original order.
    sharp_index : dict
        Original state (representative or absorbing) -> index in ``contracted``.
    rep_of : dict
        Original state -> its image in ``S_#`` (original index).
    delta : float
        Realised exit-avoidance defect.
    n_blocks : int
        Number of non-singleton blocks.
    """

    source: Chain
    exits: ExitSystem
    extended: Chain
    b_index: dict
    contracted: Chain
    sharp_index: dict
    rep_of: dict
    delta: float
    n_blocks: int
    hypothesis_ok: bool
    checks: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(v for k, v in self.checks.items() if k.endswith("_ok"))


def _extend(chain: Chain, ex: ExitSystem):
    n = chain.n
    nonabs = [int(s) for s in chain.nonabsorbing]
    b_index = {s: n + i for i, s in enumerate(nonabs)}
    m = n + len(nonabs)
    P = np.zeros((m, m))
    rep_block = {s: ex.reps[ex.block_of(s)] for s in nonabs}
    for s in range(n):
        if chain.absorbing[s]:
            P[s, s] = 1.0
        else:
            P[s, b_index[rep_block[s]]] = 1.0
    A = chain.absorbing
    for s in nonabs:
        row = chain.P[s]
        e = np.asarray(ex.exits[s], dtype=float)
        if np.any(e > row + 1e-12):
            raise ValueError(f"exit at state {chain.names[s]} exceeds its row")
        inside = _mask(n, ex.blocks[ex.block_of(s)])
        if np.any((row - e)[~inside & ~A] > 1e-12):
            raise ValueError(f"exits at state {chain.names[s]} miss out-of-block motion")
        ne = np.clip(row - e, 0.0, None)
        bi = b_index[s]
        P[bi, :n] += np.where(A, row, e)
        for t in nonabs:
            P[bi, b_index[t]] += ne[t]
    absorbing = np.zeros(m, dtype=bool)
    absorbing[:n] = A
    names = tuple(f"{nm}^a" for nm in chain.names) + tuple(f"{chain.names[s]}^b" for s in nonabs)
    return Chain(P, absorbing, names), b_index, rep_block


def _exit_defect(ext, b_index, exits, a_layer):
    worst = 0.0
    for blk in exits.blocks:
        for s, t in itertools.permutations(blk, 2):
            h = hitting_values(ext.P, a_layer, _mask(ext.n, [b_index[s]]))
            worst = max(worst, 1.0 - float(h[b_index[t]]))
    return worst


def exit_defect(chain: Chain, exits: ExitSystem) -> float:
    """Largest probability, over ordered pairs in a block, of using an exit on the way."""
    ext, b_index, _ = _extend(chain, exits)
    a_layer = np.zeros(ext.n, dtype=bool)
    a_layer[:chain.n] = True
    return _exit_defect(ext, b_index, exits, a_layer)


def contract(chain: Chain, exits: ExitSystem, boundary=None, delta: float | None = None,
             max_pairs: int = 2000) -> ContractionResult:
    """Build ``S_*`` and ``S_#`` and check their taboo and harmonic guarantees.

    Parameters
    ----------
    chain : Chain
        Must be absorbing.
    exits : ExitSystem
    boundary : array, optional
        Absorbing values for the harmonic comparison (unit value on the first
        absorbing state by default).
    delta : float, optional
        Claimed bound on the probability of using an exit on the way between
        two states of a block.  Raises when the realised value exceeds it.

    Returns
    -------
    ContractionResult
        ``checks`` holds the largest taboo factor, the largest harmonic
        deviation and the representative consistency, with their bounds.
    """
    chain.require_absorbing()
    n = chain.n
    ext, b_index, rep_block = _extend(chain, exits)
    m = ext.n
    a_layer = np.zeros(m, dtype=bool)
    a_layer[:n] = True
    realised = _exit_defect(ext, b_index, exits, a_layer)
    N = exits.n_nontrivial
    if delta is not None and realised > delta + 1e-12:
        raise HypothesisError(f"exits are used with probability {realised:.3g} > delta = {delta}")
    d = realised if delta is None else delta
    hyp = N == 0 or d < 1.0 / (2 * N)
    if not ext.is_absorbing:
        raise NonAbsorbingChainError(ext.trapped_classes[0], ext.names)
    # contracted chain
    sharp_states = sorted(set(exits.reps) | set(int(s) for s in np.flatnonzero(chain.absorbing)))
    sharp_index = {s: i for i, s in enumerate(sharp_states)}
    rep_of = {s: (s if chain.absorbing[s] else rep_block[s]) for s in range(n)}
    first_a = hitting_values(ext.P, np.zeros(m, bool), a_layer, np.eye(m)[:, :n])
    k = len(sharp_states)
    Ps = np.zeros((k, k))
    for s in sharp_states:
        i = sharp_index[s]
        if chain.absorbing[s]:
            Ps[i, i] = 1.0
            continue
        dist = ext.P[b_index[s]] @ first_a
        for t in range(n):
            Ps[i, sharp_index[rep_of[t]]] += dist[t]
    contracted = Chain(Ps, [bool(chain.absorbing[s]) for s in sharp_states],
                       tuple(chain.names[s] for s in sharp_states))
    checks = {}
    # taboo probabilities for unions of blocks
    groups = [list(b) for b in exits.blocks] + [[int(s)] for s in np.flatnonzero(chain.absorbing)]
    start = {s: (b_index[s] if s in b_index else s) for s in range(n)}
    worst = 0.0
    pairs = _block_pairs(groups, max_pairs)
    for A, T in pairs:
        orig = taboo_vector(chain, list(T), list(A))
        A_star = list(A) + [b_index[s] for s in A if s in b_index]
        T_star = list(T) + [b_index[s] for s in T if s in b_index]
        new = taboo_vector(ext, T_star, A_star)
        for s in range(n):
            worst = max(worst, factor_between(orig[s], new[start[s]]))
    checks["taboo_factor"] = worst
    checks["taboo_bound"] = 4 * N * d
    checks["taboo_ok"] = (not hyp) or worst <= 4 * N * d + SLACK
    if boundary is None:
        boundary = np.zeros(n)
        boundary[np.flatnonzero(chain.absorbing)[0]] = 1.0
    boundary = np.asarray(boundary, dtype=float)
    absv = boundary[chain.absorbing]
    M = float(absv.max() - absv.min())
    r = harmonic_payoffs(chain, boundary)
    r_ext = harmonic_payoffs(ext, np.concatenate([boundary, np.zeros(m - n)]))
    r_sharp = harmonic_payoffs(contracted, np.array([boundary[s] for s in sharp_states]))
    rep_gap = max(abs(r_ext[s] - r_sharp[sharp_index[s]]) for s in exits.reps) if exits.reps else 0.0
    dev = float(np.max(np.abs(r_ext[:n] - r)))
    checks.update(harmonic_deviation=dev, harmonic_bound=4 * M * N * d,
                  harmonic_ok=(not hyp) or dev <= 4 * M * N * d + SLACK,
                  representative_gap=float(rep_gap), representative_ok=rep_gap <= SLACK,
                  pairs_checked=len(pairs), M=M)
    return ContractionResult(chain, exits, ext, b_index, contracted, sharp_index, rep_of,
                             float(realised), N, hyp, checks)


@dataclass(frozen=True)
class ExitComparison:
    values: dict
    bounds: dict
    ok: bool


def exit_statistics_compare(result: ContractionResult, t, exit_mass, boundary=None) -> ExitComparison:
    """Compare an exit's g, nu and v in the original and contracted chains.

    Parameters
    ----------
    result : ContractionResult
    t : state
        Host of the exit in the original chain.
    exit_mass : array
        The exit as a sub-row at ``t`` (must lie within the designated exits).
    boundary : array, optional
        Absorbing values of the harmonic function (defaults as in :func:`contract`).
    """
    chain, ex = result.source, result.exits
    t = chain.index(t)
    n = chain.n
    mass = np.asarray(exit_mass, dtype=float)
    f = float(mass.sum())
    if f <= 0:
        raise ValueError("empty exit")
    row = mass / f
    if boundary is None:
        boundary = np.zeros(n)
        boundary[np.flatnonzero(chain.absorbing)[0]] = 1.0
    boundary = np.asarray(boundary, dtype=float)
    absv = boundary[chain.absorbing]
    M = float(absv.max() - absv.min())
    st = row_statistics(chain, t, row, f, boundary)
    if st.g <= 0:
        raise ValueError("exit has g = 0")
    rep = result.rep_of[t]
    sharp = result.contracted
    si = result.sharp_index
    row_sharp = np.zeros(sharp.n)
    for u in range(n):
        row_sharp[si[result.rep_of[u]]] += row[u]
    ext = result.extended
    bmask = np.zeros(ext.n, dtype=bool)
    bmask[list(result.b_index.values())] = True
    bidx = np.flatnonzero(bmask)
    W = ext.P[np.ix_(bidx, bidx)]
    Nmat = np.linalg.inv(np.eye(bidx.size) - W)
    pos = {int(b): i for i, b in enumerate(bidx)}
    f_sharp = float(Nmat[pos[result.b_index[rep]], pos[result.b_index[t]]] * f)
    bsharp = np.array([boundary[s] for s in sorted(si, key=si.get)])
    st_s = row_statistics(sharp, si[rep], row_sharp, f_sharp, bsharp)
    N, d = result.n_blocks, result.delta
    g, gs, nu, nus = st.g, st_s.g, st.nu, st_s.nu
    values = dict(g=g, g_sharp=gs, nu=nu, nu_sharp=nus, v=st.v, v_sharp=st_s.v,
                  f=f, f_sharp=f_sharp)
    inf = float("inf")
    bounds = {
        "g_abs": (abs(g - gs), 4 * N * d + d),
        "g_factor": (factor_between(g, gs), 4 * N * d + (2 * d / nu if nu > 0 else inf)),
        "nu_factor": (factor_between(nu, nus), 4 * N * d + 2 * d + (4 * N * d + d) / g),
        "nu_abs": (abs(nu - nus), 8 * N * d + 4 * d),
        "v_abs": (abs(st.v - st_s.v),
                  M * min(8 * N * d + d / g, 8 * N * d + (2 * d / nu if nu > 0 else inf))),
    }
    ok = (not result.hypothesis_ok) or all(v <= b + SLACK for v, b in bounds.values())
    return ExitComparison(values, bounds, ok)


# --------------------------------------------------------------------------
# single-state replacement


@dataclass(frozen=True)
class ReplaceResult:
    chain: Chain
    eps: float
    ratios: dict          # state -> a_new / a_old
    ok: bool


def replace_transition(chain: Chain, t, p, mode: str = "part", eps: float | None = None,
                       lam: float | None = None) -> ReplaceResult:
    """Replace the transition at ``t`` and check that absorption rates elsewhere survive.

    Parameters
    ----------
    chain : Chain
        Absorbing chain.
    t : state
    p : array or tuple
        ``mode="part"``: a sub-row at ``t`` (used after normalisation).
        ``mode="replacement"``: a full distribution.
        ``mode="convex"``: a pair ``(part_mass, replacement_row)`` mixed with
        weight ``lam`` on the normalised part.
    eps : float, optional
        Guaranteed factor; defaults to ``nu(part)``, ``g(replacement)`` or the
        smaller of the two.  A larger value raises :class:`HypothesisError`.
    """
    chain.require_absorbing()
    t = chain.index(t)
    an = ChainAnalysis(chain)
    if mode == "part":
        mass = np.asarray(p, dtype=float)
        st = an.row_stats(t, mass / mass.sum(), mass.sum())
        avail = st.nu
        row = mass / mass.sum()
    elif mode == "replacement":
        row = np.asarray(p, dtype=float)
        row = row / row.sum()
        avail = an.row_stats(t, row).g
    elif mode == "convex":
        mass, alt = (np.asarray(v, dtype=float) for v in p)
        if lam is None or not 0 <= lam <= 1:
            raise ValueError("convex mode needs lam in [0, 1]")
        st = an.row_stats(t, mass / mass.sum(), mass.sum())
        alt = alt / alt.sum()
        avail = min(st.nu, an.row_stats(t, alt).g)
        row = lam * mass / mass.sum() + (1 - lam) * alt
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if eps is None:
        eps = avail
    if eps > avail + 1e-12 or eps <= 0:
        raise HypothesisError(f"eps = {eps} not admissible (available {avail})")
    new = chain.with_rows({t: row})
    if not new.is_absorbing:
        return ReplaceResult(new, float(eps), {}, False)
    a_new = ChainAnalysis(new).a
    ratios = {}
    ok = True
    for s in chain.nonabsorbing:
        s = int(s)
        if s == t:
            continue
        ratios[s] = a_new[s] / an.a[s] if an.a[s] > 0 else np.inf
        ok &= a_new[s] >= eps * an.a[s] - SLACK
    return ReplaceResult(new, float(eps), ratios, bool(ok))


# --------------------------------------------------------------------------
# polarization


@dataclass(frozen=True)
class PolarSpec:
    """Per-state ingredients: the low part ``p_star``, the alternative ``p_alt`` and the part ``q``.

    ``p_star`` and ``q`` are disjoint sub-rows of the state's transition;
    ``p_alt`` is a full distribution.  Any of them may be ``None``.
    """

    p_star: np.ndarray | None = None
    p_alt: np.ndarray | None = None
    q: np.ndarray | None = None


@dataclass(frozen=True)
class PolarizationReport:
    selected: tuple
    lambdas: dict
    lambda_residual: float
    r2_preserved: float            # max |r2_{T,*} - r2| before the discard
    deviation1: float
    deviation2: float
    eps: float
    delta_regime_ok: bool          # delta below the strict polarization threshold
    violations: tuple
    thresholds: dict

    @property
    def ok(self) -> bool:
        return not self.violations and max(self.deviation1, self.deviation2) <= self.eps + SLACK


def polarization_delta_bound(eps: float, n_states: int) -> float:
    N = n_states
    return eps * eps ** (3 * N) / (2 * N * (3 * N) ** N)


def _w(row, r):
    return float(row @ r)


def polarize(chain: Chain, r1_boundary, r2_boundary, specs: Mapping[int, PolarSpec],
             eps: float, delta: float, gamma: float, strict: bool = False):
    """Polarize the states whose low part is important enough and discard the others.

    Selection is greedy: at each step the candidate with the largest current
    ``nu(p_star)`` is added while that value is at least ``eps^2 / (2N)``.
    At a selected state ``t`` the transition becomes ``lam p_alt + (1 - lam) q``
    with ``lam`` chosen so that the one-step expectation of ``r2`` equals
    ``r2(t)``.  Elsewhere ``p_star`` is removed and the row renormalised.

    Returns
    -------
    T : tuple
        Selected states.
    new_chain : Chain
    report : PolarizationReport

    Raises
    ------
    HypothesisError
        When ``strict`` and some hypothesis fails; otherwise failures are
        listed in ``report.violations``.
    """
    chain.require_absorbing()
    n = chain.n
    N = int(chain.nonabsorbing.size)
    b1 = np.asarray(r1_boundary, dtype=float)
    b2 = np.asarray(r2_boundary, dtype=float)
    an = ChainAnalysis(chain, {"r1": b1, "r2": b2})
    r1, r2 = an.harmonic["r1"], an.harmonic["r2"]
    specs = {chain.index(s): sp for s, sp in specs.items()}
    viol = []

    def stats(s, mass, name):
        f = float(mass.sum())
        return an.row_stats(s, mass / f, f, name)

    cand = []
    for s, sp in sorted(specs.items()):
        if sp.p_star is None or sp.p_star.sum() <= 0:
            continue
        ps = np.asarray(sp.p_star, dtype=float)
        if stats(s, ps, "r2").w > r2[s] - eps + SLACK:
            viol.append((s, "w2(p_star) > r2 - eps"))
        nu_ps = stats(s, ps, "r2").nu
        if nu_ps < gamma:
            continue
        if sp.p_alt is None or sp.q is None:
            viol.append((s, "missing alternative or q for an important p_star"))
            continue
        alt = np.asarray(sp.p_alt, dtype=float)
        alt = alt / alt.sum()
        st_alt1 = an.row_stats(s, alt, 0.0, "r1")
        if _w(alt, r2) > r2[s] - eps + SLACK:
            viol.append((s, "w2(p_alt) > r2 - eps"))
        if abs(st_alt1.v - r1[s]) > delta + SLACK:
            viol.append((s, "|v1(p_alt) - r1| > delta"))
        q = np.asarray(sp.q, dtype=float)
        qd = chain.P[s] - q - ps
        if np.any(qd < -1e-12):
            viol.append((s, "q and p_star overlap or exceed the row"))
        qd = np.clip(qd, 0.0, None)
        if qd.sum() > 1e-15:
            st = stats(s, qd, "r2")
            if (st.v - r2[s]) * st.nu > N * delta / eps + SLACK:
                viol.append((s, "complement of q and p_star too valuable"))
        if _w(q / q.sum(), r2) > r2[s]:
            cand.append(s)
    if strict and viol:
        raise HypothesisError(f"polarization hypotheses fail: {viol}")
    threshold = eps ** 2 / (2 * N)
    T = []
    lambdas = {}
    rows = {}

    def polarized_row(t):
        sp = specs[t]
        alt = np.asarray(sp.p_alt, dtype=float)
        alt = alt / alt.sum()
        q = np.asarray(sp.q, dtype=float)
        qrow = q / q.sum()
        wq, wp = _w(qrow, r2), _w(alt, r2)
        lam = (wq - r2[t]) / (wq - wp)
        return lam, lam * alt + (1 - lam) * qrow

    current = chain
    while True:
        best, best_nu = None, -1.0
        cur_an = ChainAnalysis(current) if T else an
        for s in cand:
            if s in T:
                continue
            ps = np.asarray(specs[s].p_star, dtype=float)
            nu = cur_an.row_stats(s, ps / ps.sum(), ps.sum()).nu
            if nu > best_nu:
                best, best_nu = s, nu
        if best is None or best_nu < threshold:
            break
        T.append(best)
        lambdas[best], rows[best] = polarized_row(best)
        current = chain.with_rows(rows)
        if not current.is_absorbing:
            viol.append((best, "polarized chain not absorbing"))
            break
    lam_res = 0.0
    for t in T:
        lam_res = max(lam_res, abs(_w(rows[t], r2) - r2[t]))
    pres = 0.0
    if T and current.is_absorbing:
        pres = float(np.max(np.abs(harmonic_payoffs(current, b2) - r2)))
    # discard p_star outside T
    final_rows = dict(rows)
    for s, sp in specs.items():
        if s in T or sp.p_star is None or sp.p_star.sum() <= 0:
            continue
        rest = chain.P[s] - np.asarray(sp.p_star, dtype=float)
        final_rows[s] = np.clip(rest, 0.0, None)
    final = chain.with_rows(final_rows) if final_rows else chain
    if final.is_absorbing:
        d1 = float(np.max(np.abs(harmonic_payoffs(final, b1) - r1)))
        d2 = float(np.max(np.abs(harmonic_payoffs(final, b2) - r2)))
    else:
        viol.append((-1, "final chain not absorbing"))
        d1 = d2 = float("inf")
    report = PolarizationReport(tuple(T), lambdas, lam_res, pres, d1, d2, eps,
                                delta < polarization_delta_bound(eps, N), tuple(viol),
                                {"selection": threshold, "gamma": gamma, "delta": delta})
    return tuple(T), final, report
