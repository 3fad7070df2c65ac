"""Two-player absorbing positive recursive stochastic games and stationary profiles."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from .chain import Chain, ChainAnalysis, Part, PartStats

STOCHASTIC_TOL = 1e-9
ABSORBING_ACTION = "-"


def _frozen(a):
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GameSpec:
    """A finite two-player stochastic game with absorbing terminal payoffs.

    Parameters
    ----------
    names : sequence of str
        State names in canonical order.
    absorbing : sequence of bool
    actions1, actions2 : sequence of sequence of str
        Action labels per state.  Absorbing states carry a single action.
    kernel : sequence of ndarray
        ``kernel[s][a, b, t] = p(t | s; a, b)``.
    r1, r2 : ndarray
        Absorbing payoffs (entries at non-absorbing states are ignored).
    omega : float
        Lower bound for Player Two's absorbing payoffs.

    Notes
    -----
    Construction only checks shapes.  Use :func:`validate_game` for the model
    constraints; the constructor never rejects a game for violating them, so
    that a validation report can list every issue.
    """

    names: tuple
    absorbing: np.ndarray
    actions1: tuple
    actions2: tuple
    kernel: tuple
    r1: np.ndarray
    r2: np.ndarray
    omega: float

    def __post_init__(self):
        n = len(self.names)
        if len(set(self.names)) != n:
            raise ValueError("state names must be unique")
        absorbing = np.array(self.absorbing, dtype=bool)
        absorbing.setflags(write=False)
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "absorbing", absorbing)
        object.__setattr__(self, "actions1", tuple(tuple(a) for a in self.actions1))
        object.__setattr__(self, "actions2", tuple(tuple(a) for a in self.actions2))
        kernel = []
        for s in range(n):
            k = _frozen(self.kernel[s])
            shape = (len(self.actions1[s]), len(self.actions2[s]), n)
            if k.shape != shape:
                raise ValueError(f"kernel at {self.names[s]} has shape {k.shape}, expected {shape}")
            kernel.append(k)
        object.__setattr__(self, "kernel", tuple(kernel))
        object.__setattr__(self, "r1", _frozen(self.r1))
        object.__setattr__(self, "r2", _frozen(self.r2))
        object.__setattr__(self, "omega", float(self.omega))

    @classmethod
    def build(cls, states: Sequence[dict], actions: Mapping[str, Mapping[str, Sequence[str]]],
              transitions: Sequence[dict], omega: float) -> "GameSpec":
        """Build a game from name-keyed records (the file-format shape).

        ``states`` entries have ``name``, ``absorbing`` and, for absorbing
        states, ``r1`` and ``r2``.  ``transitions`` entries have ``from``,
        ``a``, ``b``, ``to`` and ``p``.  Absorbing states get their self-loop
        automatically when no transition is listed for them.
        """
        names = [st["name"] for st in states]
        idx = {nm: i for i, nm in enumerate(names)}
        n = len(names)
        absorbing = [bool(st.get("absorbing", False)) for st in states]
        a1, a2 = [], []
        for i, nm in enumerate(names):
            if absorbing[i]:
                acts = actions.get(nm, {})
                a1.append(tuple(acts.get("p1", [ABSORBING_ACTION])))
                a2.append(tuple(acts.get("p2", [ABSORBING_ACTION])))
            else:
                acts = actions[nm]
                a1.append(tuple(acts["p1"]))
                a2.append(tuple(acts["p2"]))
        kernel = [np.zeros((len(a1[i]), len(a2[i]), n)) for i in range(n)]
        listed = set()
        for tr in transitions:
            s = idx[tr["from"]]
            a = a1[s].index(tr["a"])
            b = a2[s].index(tr["b"])
            kernel[s][a, b, idx[tr["to"]]] += float(tr["p"])
            listed.add(s)
        for i in range(n):
            if absorbing[i] and i not in listed:
                kernel[i][:, :, i] = 1.0
        r1 = np.zeros(n)
        r2 = np.zeros(n)
        for i, st in enumerate(states):
            if absorbing[i]:
                r1[i] = float(st.get("r1", 0.0))
                r2[i] = float(st.get("r2", 0.0))
        return cls(tuple(names), absorbing, a1, a2, tuple(kernel), r1, r2, omega)

    @property
    def n(self) -> int:
        return len(self.names)

    @cached_property
    def nonabsorbing(self) -> np.ndarray:
        return np.flatnonzero(~self.absorbing)

    @cached_property
    def rho(self) -> float:
        """Minimal non-zero transition probability."""
        vals = np.concatenate([k[k > 0] for k in self.kernel])
        return float(vals.min())

    @cached_property
    def m(self) -> int:
        """Maximal per-player action count over non-absorbing states."""
        return max((max(len(self.actions1[s]), len(self.actions2[s])) for s in self.nonabsorbing),
                   default=1)

    def index(self, state) -> int:
        if isinstance(state, (int, np.integer)):
            return int(state)
        return self.names.index(state)

    def payoff(self, player: int) -> np.ndarray:
        if player not in (1, 2):
            raise ValueError("player must be 1 or 2")
        return self.r1 if player == 1 else self.r2

    def normalized(self) -> "GameSpec":
        """Copy with every transition row rescaled to sum exactly to one."""
        kernel = []
        for k in self.kernel:
            sums = k.sum(axis=2, keepdims=True)
            kernel.append(np.where(sums > 0, k / np.where(sums > 0, sums, 1.0), k))
        return GameSpec(self.names, self.absorbing, self.actions1, self.actions2, tuple(kernel),
                        self.r1, self.r2, self.omega)

    def with_payoffs(self, r1=None, r2=None, omega=None) -> "GameSpec":
        return GameSpec(self.names, self.absorbing, self.actions1, self.actions2, self.kernel,
                        self.r1 if r1 is None else r1, self.r2 if r2 is None else r2,
                        self.omega if omega is None else omega)


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    issues: tuple = ()
    is_absorbing_forcible_p2: bool = False

    def __post_init__(self):
        if self.ok and self.issues:
            raise ValueError("a passing report cannot carry issues")


def _p2_can_force(spec: GameSpec) -> bool:
    """Whether some stationary Player Two strategy makes every reaction absorbing.

    Against a fully mixed ``y`` the chain's support graph under ``x`` is the
    union over ``b`` of the successors of the ``a`` played, and a full-support
    ``y`` is the best Player Two can do for reachability.  Player One can trap
    the play iff there is a non-empty set ``C`` of non-absorbing states where
    some action keeps every successor (over all ``b``) inside ``C``.  The
    largest such set is found as a greatest fixed point.
    """
    C = set(int(s) for s in spec.nonabsorbing)
    changed = True
    while changed:
        changed = False
        for s in sorted(C):
            k = spec.kernel[s]
            keep = False
            for a in range(k.shape[0]):
                succ = np.flatnonzero((k[a] > 0).any(axis=0))
                if all(int(t) in C for t in succ):
                    keep = True
                    break
            if not keep:
                C.discard(s)
                changed = True
    return not C


def validate_game(spec: GameSpec) -> ValidationReport:
    """List every violated model constraint of ``spec``.

    Returns
    -------
    ValidationReport
        Failures are report entries; this function does not raise.
    """
    issues = []
    for s in range(spec.n):
        nm = spec.names[s]
        k = spec.kernel[s]
        if not spec.actions1[s] or not spec.actions2[s]:
            issues.append((nm, "empty action set"))
            continue
        if np.any(k < 0):
            issues.append((nm, "negative transition probability"))
        sums = k.sum(axis=2)
        if np.any(np.abs(sums - 1.0) > STOCHASTIC_TOL):
            bad = np.argwhere(np.abs(sums - 1.0) > STOCHASTIC_TOL)[0]
            loc = f"{nm}/{spec.actions1[s][bad[0]]}/{spec.actions2[s][bad[1]]}"
            issues.append((loc, f"row not stochastic (sum {sums[tuple(bad)]:.12g})"))
        if spec.absorbing[s]:
            if k.shape[:2] != (1, 1):
                issues.append((nm, "absorbing state must have a single action pair"))
            if abs(k[0, 0, s] - 1.0) > STOCHASTIC_TOL:
                issues.append((nm, "absorbing state does not self-loop"))
            if not -0.5 <= spec.r1[s] <= 0.5:
                issues.append((nm, "payoff1 outside [-1/2, 1/2]"))
            if spec.r2[s] < spec.omega:
                issues.append((nm, "payoff2 below omega"))
            if spec.r2[s] > 1.0:
                issues.append((nm, "payoff2 above 1"))
    if not spec.omega > 0:
        issues.append(("omega", "omega must be positive"))
    if spec.omega > 1:
        issues.append(("omega", "omega must not exceed 1"))
    if not spec.absorbing.any():
        issues.append(("states", "no absorbing state"))
    forcible = False
    if not issues:
        forcible = _p2_can_force(spec)
    return ValidationReport(not issues, tuple(issues), forcible)


def _as_dist(v, k, where):
    v = np.asarray(v, dtype=float)
    if v.shape != (k,):
        raise ValueError(f"distribution at {where} has length {v.size}, expected {k}")
    if np.any(v < -STOCHASTIC_TOL) or abs(v.sum() - 1.0) > STOCHASTIC_TOL:
        raise ValueError(f"distribution at {where} is not a probability vector")
    v = np.clip(v, 0.0, None)
    return _frozen(v / v.sum())


@dataclass(frozen=True, eq=False)
class StrategyProfile:
    """Stationary mixed strategies ``x`` (Player One) and ``y`` (Player Two).

    ``x[s]`` and ``y[s]`` are distributions over the action sets at ``s``;
    absorbing states carry the trivial distribution ``[1.0]``.
    """

    x: tuple
    y: tuple

    @classmethod
    def from_arrays(cls, spec: GameSpec, x, y) -> "StrategyProfile":
        xs, ys = [], []
        for s in range(spec.n):
            k1, k2 = len(spec.actions1[s]), len(spec.actions2[s])
            xs.append(_as_dist(x[s] if x[s] is not None else np.ones(k1) / k1, k1,
                               f"x[{spec.names[s]}]"))
            ys.append(_as_dist(y[s] if y[s] is not None else np.ones(k2) / k2, k2,
                               f"y[{spec.names[s]}]"))
        return cls(tuple(xs), tuple(ys))

    @classmethod
    def from_mapping(cls, spec: GameSpec, x: Mapping, y: Mapping) -> "StrategyProfile":
        """Profiles keyed by state name, with either action-keyed dicts or vectors."""
        def get(table, s, actions):
            if spec.names[s] not in table:
                return [1.0] if len(actions) == 1 else None
            v = table[spec.names[s]]
            if isinstance(v, Mapping):
                unknown = set(v) - set(actions)
                if unknown:
                    raise ValueError(f"unknown actions {sorted(unknown)} at {spec.names[s]}")
                return [float(v.get(a, 0.0)) for a in actions]
            return v
        xs = [get(x, s, spec.actions1[s]) for s in range(spec.n)]
        ys = [get(y, s, spec.actions2[s]) for s in range(spec.n)]
        missing = [spec.names[s] for s in spec.nonabsorbing if xs[s] is None or ys[s] is None]
        if missing:
            raise ValueError(f"profile missing states {missing}")
        return cls.from_arrays(spec, xs, ys)

    @classmethod
    def pure(cls, spec: GameSpec, choice1: Mapping, choice2: Mapping) -> "StrategyProfile":
        x = {nm: {a: 1.0} for nm, a in choice1.items()}
        y = {nm: {b: 1.0} for nm, b in choice2.items()}
        return cls.from_mapping(spec, x, y)

    @classmethod
    def uniform(cls, spec: GameSpec) -> "StrategyProfile":
        return cls.from_arrays(spec, [None] * spec.n, [None] * spec.n)

    def strategy(self, player: int) -> tuple:
        return self.x if player == 1 else self.y

    def replace(self, x=None, y=None) -> "StrategyProfile":
        return StrategyProfile(tuple(_frozen(v) for v in (x if x is not None else self.x)),
                               tuple(_frozen(v) for v in (y if y is not None else self.y)))

    def check(self, spec: GameSpec):
        if len(self.x) != spec.n or len(self.y) != spec.n:
            raise ValueError("profile does not match the number of states")
        for s in range(spec.n):
            _as_dist(self.x[s], len(spec.actions1[s]), f"x[{spec.names[s]}]")
            _as_dist(self.y[s], len(spec.actions2[s]), f"y[{spec.names[s]}]")


def induce_chain(spec: GameSpec, profile: StrategyProfile) -> Chain:
    """Markov chain of the stationary profile, decomposed by action pairs.

    The row at ``s`` is ``sum_{a,b} x_a y_b p(.|s;a,b)``; each action pair
    with positive weight becomes a part labelled ``(a, b)`` (action indices).
    """
    profile.check(spec)
    n = spec.n
    P = np.zeros((n, n))
    parts = []
    for s in range(n):
        k = spec.kernel[s]
        w = np.outer(profile.x[s], profile.y[s])
        P[s] = np.einsum("ab,abt->t", w, k)
        ps = []
        for a, b in zip(*np.nonzero(w)):
            ps.append(Part(s, w[a, b] * k[a, b], (int(a), int(b))))
        parts.append(tuple(ps))
    return Chain(P, spec.absorbing, spec.names, tuple(parts))


@dataclass(frozen=True)
class MoveStats:
    """Statistics of one move (or action pair) at a non-absorbing state."""

    freq: float
    g: float
    nu: float
    v1: float
    v2: float
    w1: float
    w2: float

    def v(self, player):
        return self.v1 if player == 1 else self.v2

    def w(self, player):
        return self.w1 if player == 1 else self.w2


def _merge(st1: PartStats, st2: PartStats) -> MoveStats:
    return MoveStats(st1.freq, st1.g, st1.nu, st1.v, st2.v, st1.w, st2.w)


class ProfileEvaluation:
    """Chain calculus of a profile together with per-move statistics.

    Attributes
    ----------
    chain : Chain
    analysis : ChainAnalysis
        Built with boundaries ``"r1"`` and ``"r2"``.
    r1, r2 : ndarray
        Expected absorbing payoffs (0 for never-absorbed play).
    moves1, moves2 : dict
        ``moves1[s][a]`` and ``moves2[s][b]`` are :class:`MoveStats` for every
        action, used or not; an unused move has ``freq = nu = 0``.
    pairs : dict
        ``pairs[s][(a, b)]`` for every action pair.
    """

    def __init__(self, spec: GameSpec, profile: StrategyProfile):
        self.spec = spec
        self.profile = profile
        self.chain = induce_chain(spec, profile)
        self.analysis = ChainAnalysis(self.chain, {"r1": spec.r1, "r2": spec.r2})
        self.r1 = self.analysis.harmonic["r1"]
        self.r2 = self.analysis.harmonic["r2"]
        self.absorbing = self.chain.is_absorbing
        self.moves1, self.moves2, self.pairs = {}, {}, {}
        an = self.analysis
        for s in spec.nonabsorbing:
            s = int(s)
            k = spec.kernel[s]
            x, y = profile.x[s], profile.y[s]

            def stats(row, f):
                return _merge(an.row_stats(s, row, f, "r1"), an.row_stats(s, row, f, "r2"))

            self.moves1[s] = {a: stats(y @ k[a], x[a]) for a in range(k.shape[0])}
            self.moves2[s] = {b: stats(x @ k[:, b], y[b]) for b in range(k.shape[1])}
            self.pairs[s] = {(a, b): stats(k[a, b], x[a] * y[b])
                             for a in range(k.shape[0]) for b in range(k.shape[1])}

    def payoff(self, player: int) -> np.ndarray:
        return self.r1 if player == 1 else self.r2

    def moves(self, player: int) -> dict:
        return self.moves1 if player == 1 else self.moves2

    @property
    def a(self) -> np.ndarray:
        return self.analysis.a


def evaluate_profile(spec: GameSpec, profile: StrategyProfile) -> ProfileEvaluation:
    return ProfileEvaluation(spec, profile)
