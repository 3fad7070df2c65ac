"""Zero-sum auxiliary games: matrix games, discounted values and jump functions.

Player Two's discounted value ``c^alpha`` solves, at every non-absorbing state,

    c(s) = val_{a,b} [(1 - alpha) * sum_t p(t | s; a, b) c(t)],

with ``c = r^2`` on absorbing states, Player Two maximizing.  Player One's
values use ``r^1`` with Player One maximizing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from .game import GameSpec

GAP_TOL = 1e-9
TIE_TOL = 1e-9
ALPHA_GRID_START = 0.5
ALPHA_GRID_FACTOR = 0.2
ALPHA_MIN = 1e-7


@dataclass(frozen=True)
class MatrixGameSolution:
    """Value and optimal mixed strategies of a finite zero-sum matrix game.

    ``row`` and ``col`` are optimal strategies for the row and column player.
    ``gap`` is the certified duality gap: the best pure reply of the
    maximizer against the minimizer's strategy minus the worst pure reply
    against the maximizer's.
    """

    value: float
    row: np.ndarray
    col: np.ndarray
    gap: float


def _certify(M, x, y, row_max):
    if row_max:
        lo = float(np.min(x @ M))
        hi = float(np.max(M @ y))
    else:
        lo = float(np.min(M @ y))
        hi = float(np.max(x @ M))
    return lo, hi


def _lp_row_max(M):
    """Row player maximizing ``x^T M y``: returns (x, y) from the primal and dual LPs."""
    k1, k2 = M.shape
    shift = 1.0 - M.min()
    A = M + shift
    opts = dict(method="highs", options={"primal_feasibility_tolerance": 1e-10,
                                         "dual_feasibility_tolerance": 1e-10})
    # min 1.u  s.t.  A^T u >= 1, u >= 0  -> x = u / sum(u)
    res_x = scipy.optimize.linprog(np.ones(k1), A_ub=-A.T, b_ub=-np.ones(k2),
                                   bounds=(0, None), **opts)
    # max 1.w  s.t.  A w <= 1, w >= 0  -> y = w / sum(w)
    res_y = scipy.optimize.linprog(-np.ones(k2), A_ub=A, b_ub=np.ones(k1),
                                   bounds=(0, None), **opts)
    if res_x.status != 0 or res_y.status != 0:
        raise RuntimeError(f"matrix game LP failed: {res_x.message} / {res_y.message}")
    x = np.clip(res_x.x, 0, None)
    y = np.clip(res_y.x, 0, None)
    return x / x.sum(), y / y.sum()


def _equalize(M, x, y):
    """Polish LP strategies on their supports by solving the indifference equations."""
    Sx = np.flatnonzero(x > 1e-9)
    Sy = np.flatnonzero(y > 1e-9)
    if Sx.size != Sy.size:
        return x, y
    k = Sx.size
    sub = M[np.ix_(Sx, Sy)]
    A = np.zeros((k + 1, k + 1))
    A[:k, :k] = sub.T
    A[:k, k] = -1.0
    A[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    B = np.zeros((k + 1, k + 1))
    B[:k, :k] = sub
    B[:k, k] = -1.0
    B[k, :k] = 1.0
    try:
        sx = np.linalg.solve(A, rhs)[:k]
        sy = np.linalg.solve(B, rhs)[:k]
    except np.linalg.LinAlgError:
        return x, y
    if np.any(sx < -1e-12) or np.any(sy < -1e-12):
        return x, y
    x2 = np.zeros_like(x)
    y2 = np.zeros_like(y)
    x2[Sx] = np.clip(sx, 0, None)
    y2[Sy] = np.clip(sy, 0, None)
    return x2 / x2.sum(), y2 / y2.sum()


def _solve_row_max(M):
    k1, k2 = M.shape
    # pure saddle point
    row_min = M.min(axis=1)
    col_max = M.max(axis=0)
    lo, hi = row_min.max(), col_max.min()
    if hi - lo <= 1e-15 * max(1.0, abs(lo)):
        i, j = int(np.argmax(row_min)), int(np.argmin(col_max))
        x = np.zeros(k1)
        y = np.zeros(k2)
        x[i] = y[j] = 1.0
        return x, y
    if (k1, k2) == (2, 2):
        (a, b), (c, d) = M
        den = a - b - c + d
        if den != 0:
            p = (d - c) / den
            q = (d - b) / den
            if 0 <= p <= 1 and 0 <= q <= 1:
                return np.array([p, 1 - p]), np.array([q, 1 - q])
    x, y = _lp_row_max(M)
    lo, hi = _certify(M, x, y, True)
    if hi - lo > GAP_TOL:
        x, y = _equalize(M, x, y)
    return x, y


def solve_matrix_game(M, maximizer: str = "row") -> MatrixGameSolution:
    """Minimax value of a zero-sum matrix game.

    Parameters
    ----------
    M : array_like, shape (k1, k2)
        Payoff to the maximizer for each (row, column) pair.
    maximizer : {"row", "col"}
        Which player maximizes ``M``.

    Returns
    -------
    MatrixGameSolution

    Examples
    --------
    >>> sol = solve_matrix_game([[3, 0], [1, 2]])
    >>> round(sol.value, 12), sol.row.round(12).tolist(), sol.col.round(12).tolist()
    (1.5, [0.25, 0.75], [0.5, 0.5])
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        raise ValueError("empty payoff matrix")
    if maximizer not in ("row", "col"):
        raise ValueError("maximizer must be 'row' or 'col'")
    if maximizer == "row":
        x, y = _solve_row_max(M)
    else:
        yt, xt = _solve_row_max(M.T)
        x, y = xt, yt
    lo, hi = _certify(M, x, y, maximizer == "row")
    gap = hi - lo
    if gap > GAP_TOL:
        raise RuntimeError(f"duality gap {gap:.3g} exceeds {GAP_TOL}")
    return MatrixGameSolution(0.5 * (lo + hi), x, y, max(gap, 0.0))


# --------------------------------------------------------------------------
# MDPs against a frozen opponent


def solve_mdp(rows, fixed, discount: float, maximize: bool, *, policy=None, max_iter=1000):
    """Policy iteration for a terminal-payoff MDP with discount ``discount < 1``.

    Parameters
    ----------
    rows : dict
        ``rows[s]`` is an array ``(k, n)``: the next-state distribution of each
        action at decision state ``s``.
    fixed : ndarray, shape (n,)
        Values at states without a decision (the absorbing states).
    discount : float
        Factor applied to the next state's value, ``(1 - alpha)``.
    maximize : bool

    Returns
    -------
    values : ndarray
    policy : dict
        Chosen action index per decision state.
    """
    n = fixed.shape[0]
    dec = np.array(sorted(rows), dtype=int)
    other = np.setdiff1d(np.arange(n), dec)
    sign = 1.0 if maximize else -1.0
    v = fixed.astype(float).copy()
    if policy is None:
        policy = {}
        for s in dec:
            q = rows[s] @ v
            policy[s] = int(np.argmax(sign * q))
    policy = dict(policy)
    for _ in range(max_iter):
        P = np.array([rows[s][policy[s]] for s in dec])
        A = np.eye(dec.size) - discount * P[:, dec]
        b = discount * P[:, other] @ fixed[other]
        v = fixed.astype(float).copy()
        v[dec] = np.linalg.solve(A, b)
        changed = False
        for s in dec:
            q = sign * (rows[s] @ v)
            best = int(np.argmax(q))
            if q[best] > q[policy[s]] + 1e-13 * max(1.0, abs(q[best])):
                policy[s] = best
                changed = True
        if not changed:
            return v, policy
    raise RuntimeError("policy iteration did not converge")


# --------------------------------------------------------------------------
# discounted values


@dataclass(frozen=True)
class ZeroSumTables:
    """Discounted and approximate undiscounted punishment values.

    Attributes
    ----------
    alpha : float
    c_alpha : ndarray
        Player Two's value of the ``alpha``-discounted game.
    c1, c2 : ndarray or None
        Approximate undiscounted values for Player One and Player Two.
    alpha1, alpha2 : float or None
        Discount at which ``c1`` / ``c2`` were taken.
    tol : float
        Certified sup-norm error of ``c_alpha``.
    eps : float or None
        Accuracy requested for ``c1``/``c2`` (successive grid values within eps/4).
    residuals : tuple
        Successive sup-norm Bellman residuals of the ``c_alpha`` solve.
    """

    alpha: float
    c_alpha: np.ndarray
    c1: np.ndarray | None = None
    c2: np.ndarray | None = None
    alpha1: float | None = None
    alpha2: float | None = None
    tol: float = 0.0
    eps: float | None = None
    residuals: tuple = field(default=(), repr=False)

    def punishment(self, player: int) -> np.ndarray:
        c = self.c1 if player == 1 else self.c2
        if c is None:
            raise ValueError("undiscounted values were not computed")
        return c


def _stage_matrices(spec: GameSpec):
    return {int(s): spec.kernel[s] for s in spec.nonabsorbing}


def _bellman(spec, c, discount, player, want_strategies=False):
    out = c.copy()
    strat = {}
    maxim = "col" if player == 2 else "row"
    for s in spec.nonabsorbing:
        M = discount * (spec.kernel[s] @ c)
        sol = solve_matrix_game(M, maxim)
        out[s] = sol.value
        if want_strategies:
            strat[int(s)] = sol
    return (out, strat) if want_strategies else out


def _hoffman_karp(spec, c, discount, player, sweeps=50):
    """Strategy iteration: freeze the maximizer's local optimal strategies, solve the minimizer's MDP."""
    fixed = np.where(spec.absorbing, spec.payoff(player), 0.0)
    for _ in range(sweeps):
        _, strat = _bellman(spec, c, discount, player, want_strategies=True)
        rows = {}
        for s, sol in strat.items():
            k = spec.kernel[s]
            if player == 2:
                rows[s] = np.einsum("b,abt->at", sol.col, k)
            else:
                rows[s] = np.einsum("a,abt->bt", sol.row, k)
        new, _ = solve_mdp(rows, fixed, discount, maximize=False)
        if np.max(np.abs(new - c)) <= 1e-14:
            return new
        c = new
    return c


def _discounted(spec: GameSpec, alpha: float, tol: float, player: int, c0=None):
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    discount = 1.0 - alpha
    payoff = spec.payoff(player)
    c = np.where(spec.absorbing, payoff, 0.0) if c0 is None else np.array(c0, dtype=float)
    c = _hoffman_karp(spec, c, discount, player)
    residuals = []
    # a Bellman residual d certifies |c - c*| <= d / alpha
    while True:
        new = _bellman(spec, c, discount, player)
        d = float(np.max(np.abs(new - c)))
        residuals.append(d)
        c = new
        if d <= tol * alpha / discount or d == 0.0:
            break
        if len(residuals) > 10 and residuals[-1] > 0.5 * residuals[-10]:
            c = _hoffman_karp(spec, c, discount, player)
    return c, tuple(residuals)


def discounted_values(spec: GameSpec, alpha: float, tol: float = 1e-10,
                      eps: float | None = None) -> ZeroSumTables:
    """Shapley values of the ``alpha``-discounted zero-sum games.

    Parameters
    ----------
    spec : GameSpec
    alpha : float
        Discount parameter in (0, 1).
    tol : float
        Sup-norm accuracy of ``c_alpha``.
    eps : float, optional
        When given, ``c1`` and ``c2`` are also computed with
        :func:`undiscounted_values` at accuracy ``eps``.
    """
    c, res = _discounted(spec, alpha, tol, 2)
    c1 = c2 = a1 = a2 = None
    if eps is not None:
        c1, a1 = undiscounted_values(spec, 1, eps, tol)
        c2, a2 = undiscounted_values(spec, 2, eps, tol)
    for arr in (c, c1, c2):
        if arr is not None:
            arr.setflags(write=False)
    return ZeroSumTables(alpha, c, c1, c2, a1, a2, tol, eps, res)


def alpha_grid(start=ALPHA_GRID_START, factor=ALPHA_GRID_FACTOR, stop=ALPHA_MIN):
    a = start
    while a >= stop:
        yield a
        a *= factor


def undiscounted_values(spec: GameSpec, player: int, eps: float, tol: float = 1e-10):
    """Approximate undiscounted value for ``player`` on a geometric alpha grid.

    The grid is 0.5, 0.1, 0.02, 0.004, ...; iteration stops at the first alpha
    whose values differ from the previous grid point's by less than ``eps/4``.

    Returns
    -------
    values : ndarray
    alpha : float
        The grid point used.
    """
    prev = None
    c = None
    for alpha in alpha_grid():
        c, _ = _discounted(spec, alpha, tol, player, c0=c)
        if prev is not None and np.max(np.abs(c - prev)) < eps / 4:
            return c, alpha
        prev = c
    return c, alpha


# --------------------------------------------------------------------------
# jump functions


@dataclass(frozen=True)
class JumpTables:
    """Jump values and argmax sets.

    ``j_alpha[s]`` and ``J_alpha[s]`` are Player Two's one-shot guarantees
    against ``x`` followed by discounted punishment.  ``j2`` / ``J2`` use
    the undiscounted ``c2``; ``j1`` / ``J1`` are Player One's against ``y``
    using ``c1`` (present when ``y`` and the undiscounted values are given).
    """

    j_alpha: np.ndarray
    J_alpha: tuple
    j2: np.ndarray | None = None
    J2: tuple | None = None
    j1: np.ndarray | None = None
    J1: tuple | None = None


def _argmax_set(q, tol=TIE_TOL):
    m = q.max()
    return tuple(int(i) for i in np.flatnonzero(q >= m - tol))


def _jump(spec, strat, c, discount, player):
    n = spec.n
    j = np.where(spec.absorbing, spec.payoff(player), 0.0).astype(float)
    J = [()] * n
    for s in spec.nonabsorbing:
        k = spec.kernel[s]
        if player == 2:
            q = discount * np.einsum("a,abt,t->b", strat[s], k, c)
        else:
            q = discount * np.einsum("b,abt,t->a", strat[s], k, c)
        j[s] = q.max()
        J[s] = _argmax_set(q)
    for s in np.flatnonzero(spec.absorbing):
        J[s] = (0,)
    return j, tuple(J)


def jump_function(spec: GameSpec, x, tables: ZeroSumTables, y=None) -> JumpTables:
    """Jump values of Player Two against ``x`` (and of Player One against ``y``).

    ``j^alpha_x(s) = (1 - alpha) max_b sum_{a,t} x_a p(t|s;a,b) c^alpha(t)``,
    and ``j^alpha_x = r^2`` at absorbing states.  Ties within 1e-9 are all
    kept in the argmax set.
    """
    j, J = _jump(spec, x, tables.c_alpha, 1.0 - tables.alpha, 2)
    j2 = J2 = j1 = J1 = None
    if tables.c2 is not None:
        j2, J2 = _jump(spec, x, tables.c2, 1.0, 2)
    if tables.c1 is not None and y is not None:
        j1, J1 = _jump(spec, y, tables.c1, 1.0, 1)
    return JumpTables(j, J, j2, J2, j1, J1)


@dataclass(frozen=True)
class SubmartingaleReport:
    ok: bool
    worst_margin: float
    margins: dict


def submartingale_check(spec: GameSpec, x, tables: ZeroSumTables, tol: float = 1e-9):
    """Check ``j(s) <= (1 - alpha) E_{x,b}[j(next)]`` for every ``b`` in ``J(s)``.

    Margins are ``rhs - lhs`` (non-negative when the inequality holds).
    """
    jt = jump_function(spec, x, tables)
    j = jt.j_alpha
    discount = 1.0 - tables.alpha
    margins = {}
    for s in spec.nonabsorbing:
        k = spec.kernel[s]
        for b in jt.J_alpha[s]:
            rhs = discount * float(np.einsum("a,at,t->", x[s], k[:, b], j))
            margins[(int(s), b)] = rhs - float(j[s])
    worst = min(margins.values(), default=0.0)
    return SubmartingaleReport(worst >= -tol, worst, margins)


def optimal_strategy(spec: GameSpec, tables: ZeroSumTables, player: int = 1):
    """Stationary optimal strategy of ``player`` in Player Two's discounted game."""
    _, strat = _bellman(spec, tables.c_alpha, 1.0 - tables.alpha, 2, want_strategies=True)
    out = []
    for s in range(spec.n):
        if s in strat:
            out.append(strat[s].row if player == 1 else strat[s].col)
        else:
            out.append(np.ones(1))
    return tuple(out)
