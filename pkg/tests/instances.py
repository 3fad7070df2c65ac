"""Random instance generators shared by the property tests and the acceptance run."""

from __future__ import annotations

import numpy as np

from absorbeq.chain import Chain, ChainAnalysis, harmonic_payoffs, taboo_probability
from absorbeq.transforms import ExitSystem, exit_defect, PolarSpec, polarization_delta_bound


def random_chain(rng, n_nonabs=None, n_abs=None, sparsity=0.4, absorb=None, max_n=8):
    """Absorbing chain with random sparse rows; retries until every state absorbs."""
    while True:
        k = int(rng.integers(1, max_n - 1)) if n_nonabs is None else n_nonabs
        m = int(rng.integers(1, min(3, max_n - k) + 1)) if n_abs is None else n_abs
        n = k + m
        P = np.zeros((n, n))
        for s in range(k):
            w = rng.random(n) * (rng.random(n) > sparsity)
            if w.sum() == 0:
                w[rng.integers(n)] = 1.0
            if absorb is not None:
                w[k:] *= absorb
            P[s] = w / w.sum()
        for s in range(k, n):
            P[s, s] = 1.0
        ch = Chain(P, [s >= k for s in range(n)])
        if ch.is_absorbing:
            return ch


def random_boundary(rng, chain, lo=-0.5, hi=0.5):
    b = np.zeros(chain.n)
    b[chain.absorbing] = rng.uniform(lo, hi, chain.absorbing.sum())
    return b


def random_subrow(rng, row, keep=0.6):
    """A random sub-row of ``row`` with positive mass."""
    sup = np.flatnonzero(row > 0)
    while True:
        frac = rng.random(row.size) * (rng.random(row.size) < keep)
        mass = row * frac
        if mass[sup].sum() > 1e-6:
            return mass


def single_part_instance(rng):
    ch = random_chain(rng, n_nonabs=int(rng.integers(2, 6)))
    N = list(ch.nonabsorbing)
    t, s = (int(v) for v in rng.choice(N, 2, replace=False))
    rest = [v for v in range(ch.n) if v not in (s, t)]
    rng.shuffle(rest)
    A = [v for v in rest if ch.absorbing[v]][:1] + [v for v in rest if not ch.absorbing[v]][:int(rng.integers(0, 2))]
    B = [v for v in rest if v not in A and rng.random() < 0.3]
    return ch, t, random_subrow(rng, ch.P[t]), s, A, B


def removal_instance(rng):
    """Chain, removal masses at up to three states, taboo set T and target set A."""
    while True:
        ch = random_chain(rng, n_nonabs=int(rng.integers(3, 7)))
        n = ch.n
        A = [int(v) for v in np.flatnonzero(ch.absorbing)]
        others = [v for v in range(n) if v not in A]
        rng.shuffle(others)
        T = others[:int(rng.integers(0, 2))]
        cand = [v for v in others if v not in T]
        U = cand[:int(rng.integers(1, 4))]
        k = len(U)
        gam = rng.uniform(0.05, 0.95) / (2 * k)
        rem = {}
        for u in U:
            base = taboo_probability(ch, u, T + [u], A)
            if base <= 0:
                continue
            mass = random_subrow(rng, ch.P[u])
            scale = min(gam * base / mass.sum(), 1.0) * rng.uniform(0.5, 1.0)
            mass = np.minimum(mass * scale, ch.P[u] * 0.999)
            rem[u] = mass
        if rem:
            return ch, rem, T, A


def perturbation_instance(rng):
    ch = random_chain(rng, n_nonabs=int(rng.integers(2, 6)))
    N = [int(v) for v in ch.nonabsorbing]
    U = list(rng.choice(N, size=min(len(N), int(rng.integers(1, 4))), replace=False))
    g0 = rng.uniform(0.01, 0.2) / (2 * len(U))
    rows = {}
    for u in U:
        row = ch.P[u] * (1 + rng.uniform(-g0, g0, ch.n))
        rows[int(u)] = row / row.sum()
    return ch, ch.with_rows(rows), [int(u) for u in U]


def block_instance(rng, max_delta=0.02):
    """Chain with up to three tightly coupled blocks whose exits are rarely used."""
    while True:
        n_blocks = int(rng.integers(1, 4))
        sizes = [int(rng.integers(2, 4)) for _ in range(n_blocks)]
        singles = int(rng.integers(0, 3))
        k = sum(sizes) + singles
        m = int(rng.integers(1, 3))
        n = k + m
        P = np.zeros((n, n))
        blocks, start = [], 0
        for sz in sizes:
            blocks.append(list(range(start, start + sz)))
            start += sz
        for i in range(singles):
            blocks.append([start + i])
        for blk in blocks:
            for s in blk:
                out = rng.random(n) * (rng.random(n) > 0.4)
                out[blk] = 0.0
                out[k + int(rng.integers(m))] += 0.2
                out /= out.sum()
                if len(blk) == 1:
                    P[s] = out
                    continue
                inside = np.zeros(n)
                inside[blk] = rng.random(len(blk)) + 0.2
                inside[s] *= rng.random()
                inside /= inside.sum()
                e = rng.uniform(0.0005, max_delta / 4)
                P[s] = (1 - e) * inside + e * out
        for s in range(k, n):
            P[s, s] = 1.0
        ch = Chain(P, [s >= k for s in range(n)])
        if not ch.is_absorbing:
            continue
        ex = ExitSystem.default(ch, blocks)
        if exit_defect(ch, ex) <= max_delta:
            return ch, ex


def replacement_instance(rng):
    """Chain, state, transition and mode with a positive admissible factor."""
    while True:
        ch = random_chain(rng, n_nonabs=int(rng.integers(2, 6)))
        t = int(rng.choice(ch.nonabsorbing))
        mode = ("part", "replacement", "convex")[int(rng.integers(3))]
        part = random_subrow(rng, ch.P[t])
        alt = rng.random(ch.n) * (rng.random(ch.n) > 0.3)
        alt[int(rng.choice(np.flatnonzero(ch.absorbing)))] += 0.1
        alt /= alt.sum()
        an = ChainAnalysis(ch)
        if an.row_stats(t, part / part.sum(), part.sum()).nu > 1e-3:
            break
    if mode == "part":
        p = part
    elif mode == "replacement":
        p = alt
    else:
        p = (part, alt)
    return ch, t, p, mode, float(rng.random())


def polarization_instance(rng, eps=0.2):
    """Chain with low-value parts ``p_star`` and value-preserving alternatives.

    Non-absorbing states ``0..N-1`` move among themselves and to absorbing
    states with high and middle Player Two payoffs; the part ``p_star`` leads
    to a low-payoff state.  Each state also owns an unreachable absorbing
    state ``Alt_s`` with Player One payoff ``r1(s)`` and Player Two payoff
    ``r2(s) - eps - 0.05``, which serves as the alternative transition.
    """
    while True:
        N = int(rng.integers(1, 4))
        # absorbing: hi, mid, lo, then one alt per state
        hi, mid, lo = N, N + 1, N + 2
        n = N + 3 + N
        P = np.zeros((n, n))
        for s in range(N):
            w = np.zeros(n)
            w[:N] = rng.random(N) * (rng.random(N) > 0.3)
            w[hi] = rng.uniform(0.1, 1.0)
            w[mid] = rng.uniform(0.0, 0.5)
            w /= w.sum()
            pstar = rng.uniform(0.02, 0.3)
            P[s] = (1 - pstar) * w
            P[s, lo] = pstar
        for s in range(N, n):
            P[s, s] = 1.0
        absorbing = [s >= N for s in range(n)]
        ch = Chain(P, absorbing)
        r1b = np.zeros(n)
        r2b = np.zeros(n)
        r1b[[hi, mid, lo]] = rng.uniform(-0.5, 0.5, 3)
        r2b[[hi, mid, lo]] = [1.0, 0.6, 0.05]
        r1 = harmonic_payoffs(ch, r1b)
        r2 = harmonic_payoffs(ch, r2b)
        if np.any(r2[:N] < eps + 0.1):
            continue
        specs = {}
        for s in range(N):
            alt_state = N + 3 + s
            r1b[alt_state] = r1[s]
            r2b[alt_state] = r2[s] - eps - 0.05
            ps = np.zeros(n)
            ps[lo] = P[s, lo]
            q = P[s] - ps
            alt = np.zeros(n)
            alt[alt_state] = 1.0
            specs[s] = PolarSpec(ps, alt, q)
        delta = 0.5 * polarization_delta_bound(eps, N)
        gamma = 0.5 * delta
        return ch, r1b, r2b, specs, eps, delta, gamma


def random_game(rng, max_nonabs=3, max_abs=3, max_actions=3, omega=0.2):
    """Positive recursive game where every action pair absorbs with positive probability."""
    from absorbeq.game import GameSpec

    k = int(rng.integers(1, max_nonabs + 1))
    m = int(rng.integers(1, max_abs + 1))
    names = [f"s{i}" for i in range(k)] + [f"z{i}" for i in range(m)]
    states = [{"name": nm, "absorbing": False} for nm in names[:k]]
    states += [{"name": nm, "absorbing": True, "r1": float(rng.uniform(-0.5, 0.5)),
                "r2": float(rng.uniform(omega, 1))} for nm in names[k:]]
    actions, transitions = {}, []
    for s in range(k):
        a1 = [f"a{i}" for i in range(int(rng.integers(1, max_actions + 1)))]
        a2 = [f"b{i}" for i in range(int(rng.integers(1, max_actions + 1)))]
        actions[names[s]] = {"p1": a1, "p2": a2}
        for a in a1:
            for b in a2:
                w = rng.random(k + m) * (rng.random(k + m) > 0.4)
                w[k + int(rng.integers(m))] += 0.05
                w /= w.sum()
                transitions += [{"from": names[s], "a": a, "b": b, "to": names[t], "p": float(w[t])}
                                for t in np.flatnonzero(w > 0)]
    return GameSpec.build(states, actions, transitions, omega=omega)


def random_profile(rng, spec):
    from absorbeq.game import StrategyProfile

    def draw(k):
        v = rng.random(k) * (rng.random(k) > 0.3)
        if v.sum() == 0:
            v[rng.integers(k)] = 1.0
        return v / v.sum()

    x = [draw(len(spec.actions1[s])) for s in range(spec.n)]
    y = [draw(len(spec.actions2[s])) for s in range(spec.n)]
    return StrategyProfile.from_arrays(spec, x, y)
