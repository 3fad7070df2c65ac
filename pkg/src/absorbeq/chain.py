"""Taboo-probability calculus for finite time-homogeneous Markov chains.

All hitting-type quantities are obtained from exact linear solves on
substochastic restrictions of the kernel.  Stopping times are counted from
stage 1: ``taboo_probability(chain, s, A, B)`` is the probability that, started
at ``s``, the chain enters ``B`` at some stage ``n >= 1`` before entering ``A``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.linalg
from scipy.sparse.csgraph import connected_components

ROW_TOL = 1e-9
RESIDUAL_TOL = 1e-10


class NonAbsorbingChainError(ValueError):
    """Raised when a computation needs an absorbing chain and some states are trapped."""

    def __init__(self, trapped, names=None):
        self.trapped = tuple(int(i) for i in trapped)
        label = [names[i] for i in self.trapped] if names is not None else list(self.trapped)
        super().__init__(f"chain is not absorbing; trapped recurrent class {label}")


class InconsistencyError(RuntimeError):
    """Internal numerical inconsistency (should not happen for valid inputs)."""


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Part:
    """A labelled piece of the transition at ``host``.

    ``mass`` is the unnormalised sub-row: its sum is the frequency ``f_p``
    with which the part is used, and ``mass / f_p`` is the conditional row.
    A part may also be an alternative transition (``mass`` sums to one).
    """

    host: int
    mass: np.ndarray
    label: object = None

    def __post_init__(self):
        m = _frozen(self.mass)
        if np.any(m < -ROW_TOL):
            raise ValueError("part mass must be non-negative")
        object.__setattr__(self, "mass", m)

    @property
    def freq(self) -> float:
        return float(self.mass.sum())

    @property
    def row(self) -> np.ndarray:
        f = self.freq
        if f <= 0:
            raise ValueError(f"part {self.label!r} at state {self.host} is empty")
        return self.mass / f

    @classmethod
    def alternative(cls, host, row, label="alt"):
        """An alternative (replacement) transition: a full distribution."""
        row = np.asarray(row, dtype=float)
        return cls(host, row / row.sum(), label)


@dataclass(frozen=True, eq=False)
class Chain:
    """Finite Markov chain with designated absorbing states and row decompositions."""

    P: np.ndarray
    absorbing: np.ndarray
    names: tuple = ()
    parts: tuple = ()

    def __post_init__(self):
        P = np.array(self.P, dtype=float)
        n = P.shape[0]
        if P.ndim != 2 or P.shape != (n, n):
            raise ValueError("kernel must be square")
        if np.any(P < -ROW_TOL):
            raise ValueError("kernel has negative entries")
        P = np.clip(P, 0.0, None)
        sums = P.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > ROW_TOL):
            bad = int(np.argmax(np.abs(sums - 1.0)))
            raise ValueError(f"row {bad} sums to {sums[bad]!r}")
        P = P / sums[:, None]
        absorbing = np.asarray(self.absorbing, dtype=bool)
        if absorbing.shape != (n,):
            raise ValueError("absorbing mask has wrong length")
        for s in np.flatnonzero(absorbing):
            if abs(P[s, s] - 1.0) > ROW_TOL:
                raise ValueError(f"absorbing state {s} does not self-loop")
        names = tuple(self.names) if self.names else tuple(str(i) for i in range(n))
        parts = self.parts
        if not parts:
            parts = tuple((Part(s, P[s], "row"),) for s in range(n))
        else:
            parts = tuple(tuple(ps) for ps in parts)
            for s, ps in enumerate(parts):
                total = sum(p.mass for p in ps)
                if np.max(np.abs(total - P[s])) > 1e-9:
                    raise ValueError(f"parts at state {s} do not add up to its row")
        object.__setattr__(self, "P", _frozen(P))
        object.__setattr__(self, "absorbing", _frozen(absorbing, bool))
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "parts", parts)

    @classmethod
    def from_matrix(cls, P, absorbing=None, names=None):
        P = np.asarray(P, dtype=float)
        if absorbing is None:
            absorbing = np.isclose(np.diag(P), 1.0)
        return cls(P, absorbing, tuple(names) if names else ())

    @property
    def n(self) -> int:
        return self.P.shape[0]

    @property
    def nonabsorbing(self) -> np.ndarray:
        return np.flatnonzero(~self.absorbing)

    def index(self, state) -> int:
        if isinstance(state, (int, np.integer)):
            return int(state)
        return self.names.index(state)

    def indices(self, states) -> np.ndarray:
        if states is None:
            return np.array([], dtype=int)
        if isinstance(states, (int, np.integer, str)):
            states = [states]
        return np.array(sorted({self.index(s) for s in states}), dtype=int)

    def mask(self, states) -> np.ndarray:
        m = np.zeros(self.n, dtype=bool)
        m[self.indices(states)] = True
        return m

    def with_rows(self, rows: Mapping[int, np.ndarray]) -> "Chain":
        """Replace whole rows; replaced rows become single-part rows."""
        P = self.P.copy()
        parts = list(self.parts)
        for s, row in rows.items():
            row = np.asarray(row, dtype=float)
            P[s] = row / row.sum()
            parts[s] = (Part(s, P[s], "row"),)
        return Chain(P, self.absorbing, self.names, tuple(parts))

    def part(self, s, label) -> Part:
        s = self.index(s)
        for p in self.parts[s]:
            if p.label == label:
                return p
        raise KeyError(f"no part {label!r} at state {self.names[s]}")

    @cached_property
    def trapped_classes(self) -> list:
        """Closed communicating classes that contain no absorbing state."""
        adj = self.P > 0
        ncomp, labels = connected_components(adj, directed=True, connection="strong")
        out = []
        for c in range(ncomp):
            members = np.flatnonzero(labels == c)
            if self.absorbing[members].any():
                continue
            leaves = adj[np.ix_(members, np.setdiff1d(np.arange(self.n), members))].any()
            if not leaves:
                out.append(members)
        return out

    @property
    def is_absorbing(self) -> bool:
        return not self.trapped_classes

    def require_absorbing(self):
        if self.trapped_classes:
            raise NonAbsorbingChainError(self.trapped_classes[0], self.names)


# --------------------------------------------------------------------------
# linear-algebra kernels


def _reachable_avoiding(P, sources_ok, target):
    """States in ``sources_ok`` that can reach ``target`` moving only through ``sources_ok``."""
    reach = target.copy()
    adj = P > 0
    while True:
        new = sources_ok & ~reach & adj[:, reach].any(axis=1)
        if not new.any():
            break
        reach |= new
    return reach & sources_ok


def _solve(A, b):
    lu = scipy.linalg.lu_factor(A, check_finite=False)
    x = scipy.linalg.lu_solve(lu, b, check_finite=False)
    r = b - A @ x
    if np.max(np.abs(r)) > RESIDUAL_TOL:
        x = x + scipy.linalg.lu_solve(lu, r, check_finite=False)
    return x


def hitting_values(P, taboo, target, values=None):
    """Minimal solution of the hitting system, stage-0 convention.

    Returns ``h`` with ``h = values`` on ``target``, ``0`` on ``taboo`` and
    ``h(u) = sum_v P[u, v] h(v)`` elsewhere (0 where the target is unreachable).
    ``values`` may be an ``(n,)`` or ``(n, k)`` array; default is all ones.
    """
    P = np.asarray(P)
    n = P.shape[0]
    taboo = np.asarray(taboo, dtype=bool)
    target = np.asarray(target, dtype=bool)
    if (taboo & target).any():
        raise ValueError("taboo and target sets overlap")
    if values is None:
        values = np.ones(n)
    values = np.asarray(values, dtype=float)
    shape = (n,) + values.shape[1:]
    h = np.zeros(shape)
    h[target] = values[target]
    free = ~(taboo | target)
    R = _reachable_avoiding(P, free, target)
    idx = np.flatnonzero(R)
    if idx.size:
        A = np.eye(idx.size) - P[np.ix_(idx, idx)]
        b = P[np.ix_(idx, np.flatnonzero(target))] @ values[target]
        h[idx] = _solve(A, b)
    return h


def _as_mask(chain, states):
    if isinstance(states, np.ndarray) and states.dtype == bool:
        return states
    return chain.mask(states)


def taboo_probability(chain: Chain, s, taboo, target) -> float:
    """P^taboo(s, target): reach ``target`` at a stage >= 1 before ``taboo``."""
    A = _as_mask(chain, taboo)
    B = _as_mask(chain, target)
    if (A & B).any():
        raise ValueError("taboo and target sets overlap")
    h = hitting_values(chain.P, A, B)
    return float(np.clip(chain.P[chain.index(s)] @ h, 0.0, 1.0))


def taboo_vector(chain: Chain, taboo, target) -> np.ndarray:
    """P^taboo(u, target) for every start state u."""
    A = _as_mask(chain, taboo)
    B = _as_mask(chain, target)
    h = hitting_values(chain.P, A, B)
    return np.clip(chain.P @ h, 0.0, 1.0)


def reach_probabilities(chain: Chain, s) -> np.ndarray:
    """Probability of ever visiting ``s`` (stage >= 0) from each start."""
    s = chain.index(s)
    target = np.zeros(chain.n, dtype=bool)
    target[s] = True
    return hitting_values(chain.P, np.zeros(chain.n, dtype=bool), target)


def escape_probability(chain: Chain, t, s) -> float:
    """esc(t, s): probability of never reaching ``s`` from ``t``."""
    t, s = chain.index(t), chain.index(s)
    if t == s:
        raise ValueError("escape probability needs distinct states")
    return float(1.0 - reach_probabilities(chain, s)[t])


def escape_matrix(chain: Chain) -> np.ndarray:
    """E[t, s] = esc(t, s); the diagonal is 0 (the start counts as a visit)."""
    E = np.empty((chain.n, chain.n))
    for s in range(chain.n):
        E[:, s] = 1.0 - reach_probabilities(chain, s)
    np.fill_diagonal(E, 0.0)
    return np.clip(E, 0.0, 1.0)


def chain_metric(chain: Chain, s, t) -> float:
    s, t = chain.index(s), chain.index(t)
    if s == t:
        return 0.0
    return escape_probability(chain, s, t) + escape_probability(chain, t, s)


def absorption_rate(chain: Chain, s) -> float:
    """a(s) = 1 - P(return to s at some stage >= 1)."""
    s = chain.index(s)
    return float(1.0 - taboo_probability(chain, s, (), [s]))


def absorption_rates(chain: Chain, esc=None) -> np.ndarray:
    if esc is None:
        esc = escape_matrix(chain)
    a = np.clip((chain.P * esc.T).sum(axis=1), 0.0, 1.0)
    a[chain.absorbing] = 0.0
    return a


def expected_visits(a) -> np.ndarray:
    """Expected number of visits from a start at the state itself: 1/a, inf when a = 0."""
    a = np.asarray(a, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(a > 0, 1.0 / np.where(a > 0, a, 1.0), np.inf)


def _boundary_array(chain, boundary):
    if isinstance(boundary, Mapping):
        b = np.zeros(chain.n)
        for k, v in boundary.items():
            b[chain.index(k)] = float(v)
        return b
    b = np.asarray(boundary, dtype=float)
    if b.shape != (chain.n,):
        raise ValueError("boundary must assign a value to every state index")
    return b


def expected_absorbing_payoff(chain: Chain, boundary) -> np.ndarray:
    """Expected boundary value at absorption; never-absorbed play counts as 0."""
    b = _boundary_array(chain, boundary)
    return hitting_values(chain.P, np.zeros(chain.n, dtype=bool), chain.absorbing, b)


def harmonic_payoffs(chain: Chain, boundary) -> np.ndarray:
    """Unique harmonic extension of absorbing-state values to all states."""
    chain.require_absorbing()
    return expected_absorbing_payoff(chain, boundary)


def avoid_values(chain: Chain, s, boundary) -> np.ndarray:
    """u(t) = E[boundary(absorbing state) ; s never visited] from start t (stage >= 0).

    ``u(s) = 0``.  Dividing by esc(t, s) gives the expectation conditional on
    never visiting ``s``.
    """
    s = chain.index(s)
    taboo = np.zeros(chain.n, dtype=bool)
    taboo[s] = True
    target = chain.absorbing & ~taboo
    b = _boundary_array(chain, boundary)
    return hitting_values(chain.P, taboo, target, b)


@dataclass(frozen=True)
class PartStats:
    g: float
    nu: float
    v: float
    w: float
    freq: float
    flagged: bool = False


def row_statistics(chain: Chain, s, row, freq=0.0, boundary=None, *, esc=None, a=None,
                   r=None, u=None) -> PartStats:
    """Statistics of a conditional row used at ``s`` with frequency ``freq``.

    This is :func:`part_statistics` for a part given by its conditional row,
    which also covers moves that are currently unused (``freq = 0``).
    """
    s = chain.index(s)
    if chain.absorbing[s]:
        raise ValueError("part statistics are defined at non-absorbing states")
    row = np.asarray(row, dtype=float)
    if esc is None:
        esc = 1.0 - reach_probabilities(chain, s)
        esc[s] = 0.0
    if a is None:
        a = float(chain.P[s] @ esc)
    g = float(np.clip(row @ esc, 0.0, 1.0))
    f = float(freq)
    flagged = False
    if a > 0:
        nu = f * g / a
    else:
        if f * g > 1e-12:
            raise InconsistencyError(f"a({s}) = 0 but part has f*g = {f * g}")
        nu, flagged = 0.0, True
    if boundary is None and r is None:
        return PartStats(g, nu, np.nan, np.nan, f, flagged)
    if r is None:
        r = expected_absorbing_payoff(chain, boundary)
    if u is None:
        u = avoid_values(chain, s, boundary if boundary is not None else r)
    v = float(row @ u) / g if g > 0 else float(r[s])
    w = g * v + (1.0 - g) * float(r[s])
    return PartStats(g, nu, v, w, f, flagged)


def part_statistics(chain: Chain, part: Part, boundary=None, **tables) -> PartStats:
    """g, nu, v^r, w^r of ``part`` at its host state.

    Parameters
    ----------
    chain : Chain
    part : Part
        Sub-row at a non-absorbing host state.
    boundary : array or mapping, optional
        Absorbing values of the harmonic function ``r``.  When omitted, ``v``
        and ``w`` are NaN.
    **tables
        Precomputed ``esc`` (escape column of the host), ``a``, ``r`` and
        ``u`` (avoid-values), as cached by :class:`ChainAnalysis`.

    Returns
    -------
    PartStats
        ``nu`` is 0 and ``flagged`` set when the host is never left.
    """
    return row_statistics(chain, part.host, part.row, part.freq, boundary, **tables)


class ChainAnalysis:
    """Immutable snapshot of the taboo calculus of one chain.

    Parameters
    ----------
    chain : Chain
    boundaries : mapping name -> absorbing values, optional
        Each entry yields a harmonic (expected absorbing payoff) vector and
        per-part ``v``/``w`` statistics under that name.
    """

    def __init__(self, chain: Chain, boundaries: Mapping[str, object] | None = None):
        self.chain = chain
        self.esc = escape_matrix(chain)
        self.esc.setflags(write=False)
        n = chain.n
        self.mu = self.esc + self.esc.T
        np.fill_diagonal(self.mu, 0.0)
        self.mu.setflags(write=False)
        a = np.clip((chain.P * self.esc.T).sum(axis=1), 0.0, 1.0)
        a[chain.absorbing] = 0.0
        self.a = _frozen(a)
        self.visits = _frozen(expected_visits(a))
        self.flagged_states = tuple(int(s) for s in chain.nonabsorbing if a[s] == 0.0)
        self.harmonic = {}
        self._avoid = {}
        self.part_stats = {}
        for name, bnd in (boundaries or {}).items():
            b = _boundary_array(chain, bnd)
            self.harmonic[name] = _frozen(expected_absorbing_payoff(chain, b))
            self._avoid[name] = {s: avoid_values(chain, s, b) for s in chain.nonabsorbing}
        for s in chain.nonabsorbing:
            for p in chain.parts[s]:
                if p.freq > 0:
                    self.part_stats[(int(s), p.label)] = self.stats(p)

    def taboo(self, s, taboo, target) -> float:
        return taboo_probability(self.chain, s, taboo, target)

    def row_stats(self, s, row, freq=0.0, boundary: str | None = None) -> PartStats:
        """Statistics of a conditional row at ``s`` using the cached tables."""
        s = self.chain.index(s)
        kw = dict(esc=self.esc[:, s], a=float(self.a[s]))
        if boundary is not None:
            kw.update(r=self.harmonic[boundary], u=self._avoid[boundary][s])
        return row_statistics(self.chain, s, row, freq, **kw)

    def stats(self, part: Part, boundary: str | None = None) -> PartStats:
        """g and nu of ``part``; also v and w when a boundary name is given."""
        return self.row_stats(part.host, part.row, part.freq, boundary)

    def identity_residuals(self) -> dict:
        """Largest violations of the exact taboo identities, the a/mu sandwich and the esc triangle rule.

        Keys: ``esc_ratio`` (esc from the two taboo probabilities),
        ``rate_split`` (a(s) split over a visit to t), ``sandwich``
        (P^s(s,t) mu <= a(s) <= mu and a(t) P^s(s,t) <= a(s)),
        ``esc_triangle`` and ``metric`` (symmetry of mu).
        """
        ch, esc, a = self.chain, self.esc, self.a
        A = ch.absorbing
        n = ch.n
        worst = {"esc_ratio": 0.0, "rate_split": 0.0, "sandwich": 0.0, "esc_triangle": 0.0, "metric": 0.0}
        Ps = {}  # P^s(s, t) for all t
        Pst_A = {}
        for s in range(n):
            taboo = np.zeros(n, dtype=bool)
            taboo[s] = True
            for t in range(n):
                if t == s:
                    continue
                tgt = np.zeros(n, dtype=bool)
                tgt[t] = True
                Ps[s, t] = float(ch.P[s] @ hitting_values(ch.P, taboo, tgt))
                tb = taboo.copy()
                tb[t] = True
                Pst_A[s, t] = float(ch.P[s] @ hitting_values(ch.P, tb, A & ~tb))
        for s in range(n):
            for t in range(n):
                if s == t:
                    continue
                den = Ps[s, t] + Pst_A[s, t]
                if den > 0:
                    worst["esc_ratio"] = max(worst["esc_ratio"], abs(esc[s, t] - Pst_A[s, t] / den))
                if A[s]:
                    continue
                worst["rate_split"] = max(worst["rate_split"], abs(a[s] - (Ps[s, t] * esc[t, s] + Pst_A[s, t])))
                mu = self.mu[s, t]
                viol = max(Ps[s, t] * mu - a[s], a[s] - mu)
                if not A[t]:
                    viol = max(viol, a[t] * Ps[s, t] - a[s])
                worst["sandwich"] = max(worst["sandwich"], viol)
                if abs(self.mu[s, t] - self.mu[t, s]) > worst["metric"]:
                    worst["metric"] = abs(self.mu[s, t] - self.mu[t, s])
        for u in range(n):
            for v in range(n):
                for w in range(n):
                    if len({u, v, w}) < 3:
                        continue
                    lhs = 1.0 - esc[u, w]
                    rhs = (1.0 - esc[u, v]) * (1.0 - esc[v, w])
                    worst["esc_triangle"] = max(worst["esc_triangle"], rhs - lhs)
        return worst


def analyze(chain: Chain, boundaries=None) -> ChainAnalysis:
    return ChainAnalysis(chain, boundaries)


# --------------------------------------------------------------------------
# perturbation bounds


def within_factor(a, b, gamma, slack=1e-12) -> bool:
    """True when ``a >= (1 - gamma) b`` and ``b >= (1 - gamma) a``."""
    return a >= (1.0 - gamma) * b - slack and b >= (1.0 - gamma) * a - slack


def factor_between(a, b) -> float:
    """Smallest gamma with a, b within factor gamma (0 for 0 vs 0, 1 if one is 0)."""
    a, b = float(a), float(b)
    if a == b:
        return 0.0
    hi, lo = max(a, b), min(a, b)
    if hi <= 0:
        return 0.0
    return 1.0 - lo / hi


@dataclass(frozen=True)
class ReplacementBound:
    new_values: np.ndarray
    deviation: float
    bound: float
    holds: bool
    deltas: dict = field(default_factory=dict)
    epsilons: dict = field(default_factory=dict)


def row_replacement_bound(chain: Chain, replacements: Mapping[int, Part], boundary,
                          deltas: Mapping[int, float] | None = None,
                          epsilons: Mapping[int, float] | None = None) -> ReplacementBound:
    """Replace rows by alternative transitions and bound the harmonic shift.

    States absent from ``replacements`` keep their rows.  When ``deltas`` or
    ``epsilons`` are not given, the tightest admissible values are used:
    ``delta_s = |v(p_s) - r(s)|`` and ``eps_s = min(1, a_new(s) / g(p_s))``.
    """
    chain.require_absorbing()
    b = _boundary_array(chain, boundary)
    r = harmonic_payoffs(chain, b)
    stats = {}
    for s, p in replacements.items():
        s = chain.index(s)
        st = part_statistics(chain, Part(s, p.row, p.label), b, r=r)
        if st.g <= 0:
            raise ValueError(f"replacement at state {chain.names[s]} has g = 0")
        stats[s] = st
    new = chain.with_rows({s: p.row for s, p in replacements.items()})
    a_new = ChainAnalysis(new).a if new.is_absorbing else None
    if a_new is None:
        return ReplacementBound(np.full(chain.n, np.nan), np.inf, np.inf, False)
    r_new = harmonic_payoffs(new, b)
    d, e = {}, {}
    for s, st in stats.items():
        d[s] = abs(st.v - r[s]) if deltas is None else float(deltas[s])
        e[s] = min(1.0, a_new[s] / st.g) if epsilons is None else float(epsilons[s])
        if d[s] < abs(st.v - r[s]) - 1e-12 or a_new[s] < e[s] * st.g - 1e-12 or not 0 < e[s] <= 1:
            raise ValueError(f"supplied delta/epsilon at state {s} violate the hypotheses")
    bound = sum(d[s] / e[s] for s in stats)
    dev = float(np.max(np.abs(r_new - r)))
    return ReplacementBound(_frozen(r_new), dev, bound, dev <= bound + 1e-9, d, e)


@dataclass(frozen=True)
class ClosePairReport:
    gamma: float
    esc_ts: float
    esc_st: float
    first_factor: float          # factor between P^t(t,s) mu(s,t) and a(t)
    last_visit_factor_t: float   # esc(t,s)/mu vs P(last visit at t | start t)
    last_visit_factor_s: float   # same, start at s
    visit_ratio_s: float         # (visits s / visits t) / (P^t(t,s)/P^s(s,t)), start s
    visit_ratio_t: float         # same, start t

    @property
    def first_ok(self) -> bool:
        return self.first_factor <= 2 * self.gamma + 1e-9

    @property
    def last_visit_ok(self) -> bool:
        ok = self.last_visit_factor_t <= 3 * self.gamma + 1e-9
        if self.esc_st <= self.gamma:
            ok = ok and self.last_visit_factor_s <= 3 * self.gamma + 1e-9
        return ok

    @property
    def visit_ratio_ok(self) -> bool:
        ok = self.visit_ratio_s >= 1 - 4 * self.gamma - 1e-9
        if self.esc_st <= self.gamma:
            ok = ok and self.visit_ratio_t >= 1 - 4 * self.gamma - 1e-9
        return ok

    @property
    def ok(self) -> bool:
        return self.first_ok and self.last_visit_ok and self.visit_ratio_ok


def close_pair_check(chain: Chain, s, t, gamma: float | None = None) -> ClosePairReport:
    """Compare the close-state approximations with direct computation.

    The start-at-``t`` visit ratio and the start-at-``s`` last-visit ratio are
    only asserted when ``esc(s, t) <= gamma`` as well; without it they fail
    (a state ``s`` that rarely reaches ``t`` is a counterexample).
    """
    chain.require_absorbing()
    s, t = chain.index(s), chain.index(t)
    an = ChainAnalysis(chain)
    esc_ts, esc_st = an.esc[t, s], an.esc[s, t]
    if gamma is None:
        gamma = esc_ts
    if not (esc_ts <= gamma < 1):
        raise ValueError("need esc(t, s) <= gamma < 1")
    Pts = taboo_probability(chain, t, [t], [s])
    Pst = taboo_probability(chain, s, [s], [t])
    mu = an.mu[s, t]
    first = factor_between(Pts * mu, an.a[t])
    # last visit among {s, t}: E[#visits to t], then multiply by P(no return to {s,t}) from t
    A = chain.absorbing
    tb = np.zeros(chain.n, dtype=bool)
    tb[[s, t]] = True
    leave_t = taboo_probability(chain, t, tb, A & ~tb)
    leave_s = taboo_probability(chain, s, tb, A & ~tb)
    reach = {u: reach_probabilities(chain, u) for u in (s, t)}
    visits = {}
    for start in (s, t):
        for u in (s, t):
            visits[start, u] = reach[u][start] / an.a[u]
    last_t = {start: visits[start, t] * leave_t for start in (s, t)}
    last_s = {start: visits[start, s] * leave_s for start in (s, t)}
    ratio = esc_ts / mu if mu > 0 else 0.0
    lv = {start: factor_between(ratio, last_t[start] / (last_t[start] + last_s[start]))
          for start in (s, t)}
    vr = {}
    for start in (s, t):
        num = visits[start, s] * Pst
        den = visits[start, t] * Pts
        if den > 0:
            vr[start] = num / den
        else:
            vr[start] = 1.0     # s never reaches t: both ratios are infinite

    return ClosePairReport(float(gamma), float(esc_ts), float(esc_st), first,
                           lv[t], lv[s], float(vr[s]), float(vr[t]))


def chain_from_parts(n, absorbing, rows_parts: Sequence[Sequence[Part]], names=()) -> Chain:
    P = np.zeros((n, n))
    for s, ps in enumerate(rows_parts):
        for p in ps:
            P[s] += p.mass
    return Chain(P, absorbing, tuple(names), tuple(tuple(ps) for ps in rows_parts))


def states_of(chain: Chain, labels: Iterable) -> list:
    return [chain.index(x) for x in labels]
