"""Best replies of the auxiliary game and a numerical search for their fixed points.

Player One replies with the actions maximizing her undiscounted one-step
value ``w1``.  Player Two compares his auxiliary evaluation ``xi(s)`` with the
jump level ``j^alpha_x(s)``:

* ``xi(s) > j + band``: the moves maximizing ``xi^b``;
* ``|xi(s) - j| <= band``: those moves together with the jump moves ``J^alpha_x(s)``;
* ``xi(s) < j - band``: the jump moves.

The correspondence has fixed points but no constructive route to them, so
:func:`find_fixed_point` runs a damped best-reply iteration from several
starting points, purifies, and on very small games falls back to a grid.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .auxeval import AuxEvaluation, AuxParams, xi_values
from .game import GameSpec, ProfileEvaluation, StrategyProfile, evaluate_profile
from .zerosum import JumpTables, ZeroSumTables, jump_function

BAND = 1e-7
CASES = ("xi", "tie", "jump")


@dataclass(frozen=True)
class BestReplySets:
    """Best-reply sets per non-absorbing state.

    Attributes
    ----------
    B1, B2 : dict
        State index -> tuple of action indices.
    cases : dict
        State index -> ``"xi"``, ``"tie"`` or ``"jump"``.
    margins : dict
        State index -> ``xi(s) - j^alpha_x(s)`` (``nan`` on jump-only replies).
    jump_only : bool
        True when the profile is not absorbing and ``xi`` could not be formed.
    trapped : tuple
        Names of the states in closed non-absorbing classes.
    """

    B1: dict
    B2: dict
    cases: dict
    margins: dict
    jump_only: bool = False
    trapped: tuple = ()


def _argmax(values: dict, tol: float) -> tuple:
    m = max(values.values())
    return tuple(sorted(k for k, v in values.items() if v >= m - tol))


def _evaluate(spec, profile, tables, params):
    ev = evaluate_profile(spec, profile)
    jt = jump_function(spec, profile.x, tables)
    aux = None
    if ev.absorbing:
        try:
            aux = xi_values(ev, params)
        except ValueError:
            aux = None
    return ev, jt, aux


def _replies(spec: GameSpec, ev: ProfileEvaluation, jt: JumpTables, aux: AuxEvaluation | None,
             band: float) -> BestReplySets:
    B1, B2, cases, margins = {}, {}, {}, {}
    for s in spec.nonabsorbing:
        s = int(s)
        B1[s] = _argmax({a: st.w1 for a, st in ev.moves1[s].items()}, band)
        J = tuple(jt.J_alpha[s])
        if aux is None:
            B2[s], cases[s], margins[s] = J, "jump", float("nan")
            continue
        margin = aux.xi[s] - float(jt.j_alpha[s])
        best = _argmax({b: aux.moves[(s, b)].xi for b in ev.moves2[s]}, band)
        margins[s] = margin
        if margin > band:
            B2[s], cases[s] = best, "xi"
        elif margin >= -band:
            B2[s], cases[s] = tuple(sorted(set(J) | set(best))), "tie"
        else:
            B2[s], cases[s] = J, "jump"
    trapped = ()
    if not ev.absorbing:
        trapped = tuple(ev.chain.names[i] for c in ev.chain.trapped_classes for i in c)
    return BestReplySets(B1, B2, cases, margins, aux is None, trapped)


def best_reply(spec: GameSpec, profile: StrategyProfile, tables: ZeroSumTables,
               params: AuxParams, band: float = BAND) -> BestReplySets:
    """Best-reply sets of both players at ``profile``.

    Parameters
    ----------
    spec : GameSpec
    profile : StrategyProfile
    tables : ZeroSumTables
        Supplies ``c^alpha`` for the jump function.
    params : AuxParams
    band : float
        Tie tolerance for the argmax sets and equality band of the case split.

    Notes
    -----
    On a non-absorbing profile ``xi`` is undefined; Player Two's reply is
    then the jump set at every state and ``jump_only`` is set.

    Examples
    --------
    >>> from absorbeq.fixtures import g1_game
    >>> from absorbeq.zerosum import discounted_values
    >>> g = g1_game()
    >>> prof = StrategyProfile.from_mapping(g, {}, {"s0": [0.5, 0.5]})
    >>> br = best_reply(g, prof, discounted_values(g, 0.1), AuxParams.for_game(g, 0.1, 0.1))
    >>> br.B2[0], br.cases[0]
    ((0,), 'xi')
    """
    ev, jt, aux = _evaluate(spec, profile, tables, params)
    return _replies(spec, ev, jt, aux, band)


def reply_residual(profile: StrategyProfile, br: BestReplySets) -> float:
    """Largest mass a player puts outside the best-reply set at any state."""
    worst = 0.0
    for s, B in br.B1.items():
        worst = max(worst, 1.0 - float(profile.x[s][list(B)].sum()))
    for s, B in br.B2.items():
        worst = max(worst, 1.0 - float(profile.y[s][list(B)].sum()))
    return max(worst, 0.0)


@dataclass(frozen=True)
class FixedPointCandidate:
    """Outcome of :func:`find_fixed_point`.

    Attributes
    ----------
    profile : StrategyProfile
    residual : float
        Mass outside the best-reply sets (see :func:`reply_residual`).
    converged : bool
        ``residual <= tol``.
    tol : float
    iterations : int
        Total best-reply evaluations spent.
    trace : tuple
        ``(restart, iteration, eta, residual)`` records of improvements.
    method : str
        ``"initial"``, ``"iteration"``, ``"purified"`` or ``"grid"``.
    restart : int
        Index of the restart that produced the profile (-1 for the initial point and the grid).
    """

    profile: StrategyProfile
    residual: float
    converged: bool
    tol: float
    iterations: int
    trace: tuple = field(default=(), repr=False)
    method: str = "iteration"
    restart: int = -1


@dataclass(frozen=True)
class SolverSettings:
    """Damped best-reply iteration settings.

    ``eta`` starts at ``eta0`` and is multiplied by ``anneal`` every step, but
    not below ``eta_min``.  ``max_iters`` caps every restart; the grid
    fallback spends at most ``grid_budget`` evaluations.
    """

    eta0: float = 0.5
    anneal: float = 0.97
    eta_min: float = 0.02
    restarts: int = 16
    max_iters: int = 200
    tol: float = 1e-6
    band: float = BAND
    grid_resolution: int = 64
    grid_budget: int = 20000
    grid: bool = True
    seed: int = 0


def _uniform_on(k, B):
    v = np.zeros(k)
    v[list(B)] = 1.0 / len(B)
    return v


def _purify(spec, profile, br):
    x, y = list(profile.x), list(profile.y)
    for s, B in br.B1.items():
        v = np.where(np.isin(np.arange(x[s].size), B), x[s], 0.0)
        x[s] = v / v.sum() if v.sum() > 0 else _uniform_on(x[s].size, B)
    for s, B in br.B2.items():
        v = np.where(np.isin(np.arange(y[s].size), B), y[s], 0.0)
        y[s] = v / v.sum() if v.sum() > 0 else _uniform_on(y[s].size, B)
    return profile.replace(x=x, y=y)


def _random_profile(spec, rng):
    x = [rng.dirichlet(np.ones(len(spec.actions1[s]))) if not spec.absorbing[s] else np.ones(1)
         for s in range(spec.n)]
    y = [rng.dirichlet(np.ones(len(spec.actions2[s]))) if not spec.absorbing[s] else np.ones(1)
         for s in range(spec.n)]
    return StrategyProfile.from_arrays(spec, x, y)


def _simplex_grid(k, res):
    for c in itertools.combinations(range(res + k - 1), k - 1):
        parts = np.diff(np.concatenate([[-1], c, [res + k - 1]])) - 1
        yield parts / res


class _Search:
    def __init__(self, spec, tables, params, settings):
        self.spec, self.tables, self.params, self.cfg = spec, tables, params, settings
        self.evals = 0
        self.best = None
        self.trace = []

    def residual(self, profile):
        self.evals += 1
        br = best_reply(self.spec, profile, self.tables, self.params, self.cfg.band)
        return reply_residual(profile, br), br

    def offer(self, profile, res, method, restart, it, eta=float("nan")):
        if self.best is None or res < self.best[1] - 1e-15:
            self.best = (profile, res, method, restart)
            self.trace.append((restart, it, eta, res))

    def done(self):
        return self.best is not None and self.best[1] <= self.cfg.tol

    def run_from(self, profile, restart):
        cfg = self.cfg
        eta = cfg.eta0
        for it in range(cfg.max_iters):
            res, br = self.residual(profile)
            self.offer(profile, res, "iteration", restart, it, eta)
            if res <= cfg.tol:
                return
            pure = _purify(self.spec, profile, br)
            pres, _ = self.residual(pure)
            self.offer(pure, pres, "purified", restart, it, eta)
            if pres <= cfg.tol:
                return
            x = [(1 - eta) * profile.x[s] + eta * _uniform_on(profile.x[s].size, br.B1[s])
                 if s in br.B1 else profile.x[s] for s in range(self.spec.n)]
            y = [(1 - eta) * profile.y[s] + eta * _uniform_on(profile.y[s].size, br.B2[s])
                 if s in br.B2 else profile.y[s] for s in range(self.spec.n)]
            profile = profile.replace(x=x, y=y)
            eta = max(eta * cfg.anneal, cfg.eta_min)

    def grid(self):
        spec, cfg = self.spec, self.cfg
        N = spec.nonabsorbing
        sizes = [len(spec.actions1[s]) for s in N] + [len(spec.actions2[s]) for s in N]
        if len(N) > 2 or max(sizes) > 3:
            return
        res = cfg.grid_resolution
        while res > 1 and math.prod(math.comb(res + k - 1, k - 1) for k in sizes) > cfg.grid_budget:
            res //= 2
        axes = [list(_simplex_grid(k, res)) for k in sizes]
        m = len(N)
        for combo in itertools.product(*axes):
            x = [np.ones(1)] * spec.n
            y = [np.ones(1)] * spec.n
            for i, s in enumerate(N):
                x[s], y[s] = combo[i], combo[m + i]
            prof = StrategyProfile.from_arrays(spec, x, y)
            r, _ = self.residual(prof)
            self.offer(prof, r, "grid", -1, 0)
            if self.done():
                return


def find_fixed_point(spec: GameSpec, tables: ZeroSumTables, params: AuxParams,
                     settings: SolverSettings | None = None,
                     initial: StrategyProfile | None = None) -> FixedPointCandidate:
    """Search for a profile whose players only use best replies.

    Parameters
    ----------
    spec : GameSpec
    tables : ZeroSumTables
    params : AuxParams
    settings : SolverSettings, optional
    initial : StrategyProfile, optional
        First starting point (uniform by default).  It is returned unchanged
        when it is already a fixed point.

    Returns
    -------
    FixedPointCandidate
        The best profile found; ``converged`` is False when no profile reached
        the tolerance.
    """
    cfg = settings or SolverSettings()
    search = _Search(spec, tables, params, cfg)
    start = initial if initial is not None else StrategyProfile.uniform(spec)
    res0, _ = search.residual(start)
    search.offer(start, res0, "initial", -1, 0)
    if not search.done():
        rng = np.random.default_rng(cfg.seed)
        seeds = [start] + [_random_profile(spec, rng) for _ in range(cfg.restarts - 1)]
        for i, prof in enumerate(seeds):
            search.run_from(prof, i)
            if search.done():
                break
    if not search.done() and cfg.grid:
        search.grid()
    prof, res, method, restart = search.best
    return FixedPointCandidate(prof, float(res), res <= cfg.tol, cfg.tol, search.evals,
                               tuple(search.trace), method, restart)


# --------------------------------------------------------------------------
# diagnostics at a candidate


def sufficient_constants(spec: GameSpec, alpha: float, eps_bar: float) -> dict:
    """Sufficient weight cap ``L*`` and auxiliary discount ``delta*`` for the fixed-point bounds."""
    n = int(spec.nonabsorbing.size)
    w = spec.omega
    return {"L_star": 100 * n / (w ** 2 * alpha ** 2 * eps_bar),
            "delta_star": eps_bar * alpha ** 3 * w ** 3 / (300 * n),
            "eps_bar_max": w * alpha / 4}


@dataclass(frozen=True)
class Diagnosis:
    """Checks at a fixed-point candidate.

    ``checks`` maps ``"a"``..``"f"`` to dicts with ``ok`` and the margins
    that decided it; ``regime`` tells whether the parameters satisfy the
    sufficient constants of :func:`sufficient_constants`.
    """

    checks: dict
    regime: dict
    cases: dict

    @property
    def ok(self) -> bool:
        return all(c["ok"] for c in self.checks.values())

    def passed(self, *keys) -> bool:
        return all(self.checks[k]["ok"] for k in keys)


def diagnose_candidate(spec: GameSpec, candidate, tables: ZeroSumTables, params: AuxParams,
                       tol: float = 1e-7) -> Diagnosis:
    """Evaluate the fixed-point consequences at ``candidate`` and report their margins.

    Checks
    ------
    a
        The profile is absorbing.
    b
        ``r2 >= j^alpha_x - tol`` at every state.
    c
        ``xi >= j^alpha_x - tol`` at every state.
    d
        Where jump moves are used: ``xi <= r2 - 3 eps_bar + tol`` and ``g^b < eps_bar``.
    e
        The probability put on jump moves at any state is at most ``omega alpha / 20``.
    f
        Where ``xi <= r2 - 2 eps_bar``, every move with ``g^b <= eps_bar`` has
        ``g^b <= 1.1 delta xi / w~`` and ``g^b <= 2.3 eps_bar a~``.
    """
    profile = candidate.profile if isinstance(candidate, FixedPointCandidate) else candidate
    ev, jt, aux = _evaluate(spec, profile, tables, params)
    br = _replies(spec, ev, jt, aux, BAND)
    alpha = tables.alpha
    consts = sufficient_constants(spec, alpha, params.eps_bar)
    regime = dict(consts, L=params.L, delta=params.delta, alpha=alpha, eps_bar=params.eps_bar,
                  sufficient_regime=bool(params.L >= consts["L_star"]
                                    and params.delta <= consts["delta_star"]
                                    and params.eps_bar <= consts["eps_bar_max"]))
    checks = {}
    N = [int(s) for s in spec.nonabsorbing]
    checks["a"] = {"ok": bool(ev.absorbing),
                   "trapped": tuple(ev.chain.names[i] for c in ev.chain.trapped_classes for i in c)}
    if aux is None:
        for k in "bcdef":
            checks[k] = {"ok": False, "reason": "auxiliary evaluation unavailable"}
        return Diagnosis(checks, regime, br.cases)
    j = jt.j_alpha
    mb = {s: float(ev.r2[s] - j[s]) for s in N}
    checks["b"] = {"ok": min(mb.values()) >= -tol, "margins": mb, "tol": tol}
    mc = {s: float(aux.xi[s] - j[s]) for s in N}
    checks["c"] = {"ok": min(mc.values()) >= -tol, "margins": mc, "tol": tol}
    eb = params.eps_bar
    md, me, used = {}, {}, {}
    for s in N:
        J = set(jt.J_alpha[s])
        if br.cases[s] == "xi":
            J_used = []
        else:
            J_used = [b for b in J if profile.y[s][b] > 0]
        mass = float(sum(profile.y[s][b] for b in J_used))
        me[s] = consts["eps_bar_max"] / 5 - mass
        if J_used:
            used[s] = tuple(J_used)
            md[s] = {"xi_gap": float(ev.r2[s] - 3 * eb - aux.xi[s]),
                     "g": {b: eb - aux.moves[(s, b)].g for b in J_used}}
    d_ok = all(v["xi_gap"] >= -tol and min(v["g"].values()) > 0 for v in md.values())
    checks["d"] = {"ok": d_ok, "margins": md, "used": used, "tol": tol}
    checks["e"] = {"ok": min(me.values(), default=0.0) >= -tol, "margins": me,
                   "bound": consts["eps_bar_max"] / 5}
    mf = {}
    for s in N:
        if aux.xi[s] > ev.r2[s] - 2 * eb:
            continue
        for b in ev.moves2[s]:
            g = aux.moves[(s, b)].g
            if g > eb:
                continue
            w = aux.w_tilde[s]
            mf[(s, b)] = {"discount": 1.1 * params.delta * aux.xi[s] / w - g,
                          "rate": 2.3 * eb * aux.a_tilde[s] - g}
    f_ok = all(min(v.values()) >= -tol for v in mf.values())
    checks["f"] = {"ok": f_ok, "margins": mf, "tol": tol}
    return Diagnosis(checks, regime, br.cases)
