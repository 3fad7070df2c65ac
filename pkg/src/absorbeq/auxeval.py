"""State-specific discounted evaluation of Player Two's moves.

Given a profile ``(x, y)`` and thresholds ``eps_bar`` and ``delta``, every
Player Two move ``b`` at a non-absorbing state ``s`` gets

* a thresholded no-return rate ``g~ = 1`` if ``g >= eps_bar`` else ``g / eps_bar``,
* the adjusted exit value ``v~2 = (1 - g/g~) r2(s) + (g/g~) v2(b)``,
* the per-return stopping weight ``g_bar`` with ``1 - g~ = (1 - g_bar)(1 - g)``,

and every state an auxiliary rate ``a~(s) = sum_b y_b g~^b`` and an
ordering weight ``w~(s)``.  The evaluation ``xi`` discounts only returns to
the decision state, by ``1 - delta / w~(s)`` per return.  Its closed form is

    xi(s)   = r2(s) w~ a~ / (w~ a~ + delta (1 - a~)),
    xi^b    = g~ v~2 + (1 - delta / w~) (1 - g~) xi(s).

:func:`xi_monte_carlo` estimates the defining path expectation by simulation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .game import GameSpec, ProfileEvaluation, StrategyProfile, induce_chain

Z99 = 2.5758293035489004


@dataclass(frozen=True)
class AuxParams:
    """Thresholds and weight cap of the auxiliary evaluation.

    Parameters
    ----------
    eps_bar : float
        Threshold on the no-return probability, in (0, 1).
    delta : float
        Auxiliary discount, ``>= 0``.
    Q1, Q2 : float
        Factors ``> 1``; ``L = Q1 Q2`` and ``K = L ** n_nonabs``.
    n_nonabs : int
        Number of non-absorbing states.

    Notes
    -----
    ``K`` is kept as ``log_K``; :attr:`K` returns ``inf`` on overflow.
    """

    eps_bar: float
    delta: float
    Q1: float
    Q2: float
    n_nonabs: int

    def __post_init__(self):
        if not 0 < self.eps_bar < 1:
            raise ValueError("eps_bar must lie in (0, 1)")
        if self.delta < 0:
            raise ValueError("delta must be non-negative")
        if self.Q1 <= 1 or self.Q2 <= 1:
            raise ValueError("Q1 and Q2 must exceed 1")
        if self.n_nonabs < 1:
            raise ValueError("need at least one non-absorbing state")

    @classmethod
    def for_game(cls, spec: GameSpec, eps_bar: float, delta: float, Q1: float = 10.0,
                 Q2: float = 10.0) -> "AuxParams":
        return cls(eps_bar, delta, Q1, Q2, int(spec.nonabsorbing.size))

    @property
    def log_L(self) -> float:
        return math.log(self.Q1) + math.log(self.Q2)

    @property
    def L(self) -> float:
        return self.Q1 * self.Q2

    @property
    def log_K(self) -> float:
        return self.n_nonabs * self.log_L

    @property
    def K(self) -> float:
        try:
            return math.exp(self.log_K)
        except OverflowError:
            return math.inf


def thresholded_rate(g, eps_bar):
    g = np.asarray(g, dtype=float)
    return np.where(g >= eps_bar, 1.0, g / eps_bar)


def stopping_weight(g, g_tilde):
    """Solve ``1 - g~ = (1 - g_bar)(1 - g)`` for ``g_bar`` (1 when ``g~ = 1``)."""
    g = np.asarray(g, dtype=float)
    g_tilde = np.asarray(g_tilde, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        gb = 1.0 - (1.0 - g_tilde) / (1.0 - g)
    gb = np.where(g_tilde >= 1.0, 1.0, gb)
    return np.clip(gb, 0.0, 1.0)


def adjusted_value(g, g_tilde, v2, r2s):
    if g_tilde == 0.0:
        return float(r2s)
    ratio = g / g_tilde
    return (1.0 - ratio) * r2s + ratio * v2


@dataclass(frozen=True)
class MoveAux:
    g: float
    g_tilde: float
    v2: float
    v2_tilde: float
    g_bar: float
    xi: float = float("nan")


@dataclass(frozen=True)
class AuxQuantities:
    a_tilde: dict
    moves: dict        # (s, b) -> MoveAux without xi


def aux_quantities(ev: ProfileEvaluation, params: AuxParams) -> AuxQuantities:
    """Thresholded rates, adjusted values and stopping weights of every Player Two move."""
    moves = {}
    a_tilde = {}
    r2 = ev.r2
    for s, table in ev.moves2.items():
        y = ev.profile.y[s]
        at = 0.0
        for b, st in table.items():
            gt = float(thresholded_rate(st.g, params.eps_bar))
            gb = float(stopping_weight(st.g, gt))
            moves[(s, b)] = MoveAux(st.g, gt, st.v2, adjusted_value(st.g, gt, st.v2, r2[s]), gb)
            at += y[b] * gt
        a_tilde[s] = at
    return AuxQuantities(a_tilde, moves)


@dataclass(frozen=True)
class OrderingWeights:
    order: tuple            # states sorted by a~ (ties by index)
    log_w: dict
    w: dict


def ordering_weights(a_tilde: dict, params: AuxParams, names=None) -> OrderingWeights:
    """Weights ``w~(s_k) = prod_{j >= k} min(a~(s_{j+1}) / a~(s_j), K)``.

    Parameters
    ----------
    a_tilde : dict
        Auxiliary rate per non-absorbing state index.
    params : AuxParams
    names : sequence of str, optional
        Used in error messages.

    Raises
    ------
    ValueError
        When some ``a~`` is zero.
    """
    for s, v in a_tilde.items():
        if not v > 0:
            label = names[s] if names is not None else s
            raise ValueError(f"auxiliary rate is zero at state {label}")
    states = sorted(a_tilde, key=lambda s: (a_tilde[s], s))
    log_a = [math.log(a_tilde[s]) for s in states]
    log_w = {}
    acc = 0.0
    log_w[states[-1]] = 0.0
    for k in range(len(states) - 2, -1, -1):
        acc += min(log_a[k + 1] - log_a[k], params.log_K)
        log_w[states[k]] = acc
    w = {s: math.exp(v) if v < 700 else math.inf for s, v in log_w.items()}
    return OrderingWeights(tuple(states), log_w, w)


def xi_closed_form(r2, log_w, a_tilde, delta):
    """``r2 w a / (w a + delta (1 - a))`` evaluated without forming ``w``."""
    if a_tilde >= 1.0 or delta == 0.0:
        return float(r2)
    ratio = delta * (1.0 - a_tilde) / a_tilde * math.exp(-log_w)
    return float(r2) / (1.0 + ratio)


@dataclass(frozen=True)
class AuxEvaluation:
    """Auxiliary evaluation of one profile.

    Attributes
    ----------
    a, a_tilde, w_tilde, log_w_tilde, xi, xi_bar, r2 : dict
        Per non-absorbing state index.
    moves : dict
        ``(s, b) -> MoveAux`` including ``xi``.
    params : AuxParams
    consistency : float
        Largest ``|sum_b y_b xi^b - xi(s)|``.
    """

    a: dict
    a_tilde: dict
    w_tilde: dict
    log_w_tilde: dict
    xi: dict
    xi_bar: dict
    r2: dict
    moves: dict
    params: AuxParams
    consistency: float
    order: tuple = field(default=())

    def discount(self, s) -> float:
        return 1.0 - self.params.delta * math.exp(-self.log_w_tilde[s])


def xi_values(ev: ProfileEvaluation, params: AuxParams) -> AuxEvaluation:
    """Closed-form ``xi(s)`` and ``xi^b`` for every state and Player Two move."""
    q = aux_quantities(ev, params)
    ow = ordering_weights(q.a_tilde, params, ev.spec.names)
    delta = params.delta
    xi, xi_bar, moves = {}, {}, {}
    worst = 0.0
    for s in q.a_tilde:
        r2s = float(ev.r2[s])
        xs = xi_closed_form(r2s, ow.log_w[s], q.a_tilde[s], delta)
        d = 1.0 - delta * math.exp(-ow.log_w[s])
        y = ev.profile.y[s]
        mix = 0.0
        best = -math.inf
        for b in ev.moves2[s]:
            m = q.moves[(s, b)]
            xb = m.g_tilde * m.v2_tilde + d * (1.0 - m.g_tilde) * xs
            moves[(s, b)] = MoveAux(m.g, m.g_tilde, m.v2, m.v2_tilde, m.g_bar, xb)
            mix += y[b] * xb
            best = max(best, xb)
        worst = max(worst, abs(mix - xs))
        xi[s] = xs
        xi_bar[s] = best
    return AuxEvaluation(
        a={s: float(ev.a[s]) for s in q.a_tilde},
        a_tilde=q.a_tilde, w_tilde=ow.w, log_w_tilde=ow.log_w, xi=xi, xi_bar=xi_bar,
        r2={s: float(ev.r2[s]) for s in q.a_tilde}, moves=moves, params=params,
        consistency=worst, order=ow.order,
    )


def exit_identity_residual(aux: AuxEvaluation) -> float:
    """Largest ``|g v2 + (1 - g) g_bar r2 - g~ v~2|`` over all moves."""
    worst = 0.0
    for (s, b), m in aux.moves.items():
        lhs = m.g * m.v2 + (1.0 - m.g) * m.g_bar * aux.r2[s]
        worst = max(worst, abs(lhs - m.g_tilde * m.v2_tilde))
    return worst


def harmonic_identity_residual(aux: AuxEvaluation) -> float:
    """Largest ``|r2 - xi (1 + delta (1 - a~) / (w~ a~))|``."""
    worst = 0.0
    for s, xs in aux.xi.items():
        at = aux.a_tilde[s]
        factor = 1.0 + aux.params.delta * (1.0 - at) / at * math.exp(-aux.log_w_tilde[s])
        worst = max(worst, abs(aux.r2[s] - xs * factor))
    return worst


# --------------------------------------------------------------------------
# ordering comparisons between two states


@dataclass(frozen=True)
class MonotonicityReport:
    weight_implication: bool | None
    value_implication: bool | None
    margins: dict

    @property
    def ok(self) -> bool:
        return self.weight_implication is not False and self.value_implication is not False


def xi_monotonicity_check(aux: AuxEvaluation, s, t, gamma: float) -> MonotonicityReport:
    """Check the two ordering implications between states ``s`` and ``t``.

    ``None`` marks an implication whose hypothesis does not hold.
    """
    K = aux.params.K
    delta = aux.params.delta
    wa = {u: aux.w_tilde[u] * aux.a_tilde[u] for u in (s, t)}
    margins = {}
    first = None
    if aux.a_tilde[t] <= K * aux.a_tilde[s]:
        margins["weight"] = wa[s] - wa[t]
        first = margins["weight"] >= -1e-9 * max(1.0, wa[s])
    second = None
    if wa[s] <= wa[t] * (1 + 1e-12) and aux.r2[s] <= aux.r2[t] + gamma:
        margins["value"] = aux.xi[t] + gamma + delta - aux.xi[s]
        second = margins["value"] >= -1e-12
    return MonotonicityReport(first, second, margins)


# --------------------------------------------------------------------------
# simulation of the path expectation


@dataclass(frozen=True)
class SimulationTrace:
    states: tuple
    actions: tuple          # (a, b) pairs at non-absorbing stages
    visits: tuple           # stages at which the decision state occurs
    payoff: float
    absorbed: bool

    @property
    def n_visits(self) -> int:
        return len(self.visits)


@dataclass(frozen=True)
class MonteCarloEstimate:
    estimate: float
    halfwidth: float
    runs: int
    horizon: int
    tail_mass: float
    closed_form: float

    @property
    def covers(self) -> bool:
        return abs(self.estimate - self.closed_form) <= self.halfwidth


def _survival_horizon(spec, profile, s, b, cutoff=1e-4, max_horizon=100000):
    """Smallest H such that, after the forced first move, P(not absorbed by stage H) < cutoff."""
    chain = induce_chain(spec, profile)
    if not chain.is_absorbing:
        raise ValueError("profile is not absorbing")
    first = profile.x[s] @ spec.kernel[s][:, b]
    dist = first.copy()
    P = chain.P
    H = 1
    alive = float(dist[~chain.absorbing].sum())
    while alive >= cutoff:
        dist = dist @ P
        H += 1
        alive = float(dist[~chain.absorbing].sum())
        if H > max_horizon:
            raise RuntimeError("absorption too slow for simulation")
    return H, alive


def _sample(cdf, u):
    return np.minimum((u[:, None] > cdf).sum(axis=1), cdf.shape[1] - 1)


def xi_monte_carlo(spec: GameSpec, profile: StrategyProfile, s, b, params: AuxParams,
                   runs: int = 100000, horizon: int | None = None, seed=None,
                   aux: AuxEvaluation | None = None) -> MonteCarloEstimate:
    """Monte Carlo estimate of the path expectation defining ``xi^b`` at ``s``.

    Stage 0 is at ``s`` with Player Two's move forced to ``b``; afterwards
    both players follow the profile.  At the ``i``-th return to ``s`` the
    running weight ``W`` contributes ``g_bar(b_i) W`` and is multiplied by
    ``(1 - delta / w~(s)) (1 - g_bar(b_i))``.  At absorption the trace
    is worth ``r2 * (S + W)``; traces still running at the horizon count 0.

    Returns
    -------
    MonteCarloEstimate
        ``halfwidth`` is the 99% normal-approximation halfwidth.
    """
    s = spec.index(s)
    if isinstance(b, str):
        b = spec.actions2[s].index(b)
    rng = np.random.default_rng(seed)
    if aux is None:
        aux = xi_values(ProfileEvaluation(spec, profile), params)
    tail = 0.0
    if horizon is None:
        horizon, tail = _survival_horizon(spec, profile, s, b)
    n = spec.n
    chain = induce_chain(spec, profile)
    cdf = np.cumsum(chain.P, axis=1)
    # rows at s by Player Two move, with Player One mixing
    rows_b = np.array([profile.x[s] @ spec.kernel[s][:, bb] for bb in range(len(spec.actions2[s]))])
    cdf_b = np.cumsum(rows_b, axis=1)
    cdf_y = np.cumsum(profile.y[s])[None, :]
    gbar = np.array([aux.moves[(s, bb)].g_bar for bb in range(rows_b.shape[0])])
    d = aux.discount(s)
    absorbing = spec.absorbing
    r2 = spec.r2

    state = np.full(runs, s)
    S = np.zeros(runs)
    W = np.ones(runs)
    last_gbar = np.zeros(runs)
    value = np.zeros(runs)
    alive = np.ones(runs, dtype=bool)
    # stage 0
    nxt = _sample(cdf_b[b][None, :].repeat(runs, 0), rng.random(runs))
    last_gbar[:] = gbar[b]
    state = nxt
    for _ in range(horizon):
        done = alive & absorbing[state]
        if done.any():
            value[done] = r2[state[done]] * (S[done] + W[done])
            alive &= ~done
        if not alive.any():
            break
        at_s = alive & (state == s)
        if at_s.any():
            S[at_s] += last_gbar[at_s] * W[at_s]
            W[at_s] *= d * (1.0 - last_gbar[at_s])
            k = int(at_s.sum())
            moves = _sample(np.repeat(cdf_y, k, 0), rng.random(k))
            last_gbar[at_s] = gbar[moves]
            state_s = _sample(cdf_b[moves], rng.random(k))
        other = alive & ~at_s
        if other.any():
            idx = state[other]
            state[other] = _sample(cdf[idx], rng.random(int(other.sum())))
        if at_s.any():
            state[at_s] = state_s
    done = alive & absorbing[state]
    value[done] = r2[state[done]] * (S[done] + W[done])
    mean = float(value.mean())
    hw = Z99 * float(value.std(ddof=1)) / math.sqrt(runs) if runs > 1 else math.inf
    return MonteCarloEstimate(mean, hw, runs, int(horizon), float(tail), aux.moves[(s, b)].xi)


def sample_trace(spec: GameSpec, profile: StrategyProfile, s, b, aux: AuxEvaluation,
                 rng, horizon: int = 10000) -> SimulationTrace:
    """One history from ``s`` with first move ``b``, with its path-expectation weight."""
    s = spec.index(s)
    states = [s]
    actions = []
    visits = [0]
    S, W = 0.0, 1.0
    d = aux.discount(s)
    cur = s
    move_b = b
    last_gbar = None
    for stage in range(horizon):
        if spec.absorbing[cur]:
            return SimulationTrace(tuple(states), tuple(actions), tuple(visits),
                                   float(spec.r2[cur] * (S + W)), True)
        if cur == s and stage > 0:
            visits.append(stage)
            S += last_gbar * W
            W *= d * (1.0 - last_gbar)
        a = int(rng.choice(len(profile.x[cur]), p=profile.x[cur]))
        bb = move_b if stage == 0 else int(rng.choice(len(profile.y[cur]), p=profile.y[cur]))
        if cur == s:
            last_gbar = aux.moves[(s, bb)].g_bar
        actions.append((a, bb))
        cur = int(rng.choice(spec.n, p=spec.kernel[cur][a, bb]))
        states.append(cur)
    return SimulationTrace(tuple(states), tuple(actions), tuple(visits), 0.0, False)
