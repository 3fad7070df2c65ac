"""Hypothesis strategies for absorbing chains and boundaries."""

from __future__ import annotations

import numpy as np
from hypothesis import strategies as st

from absorbeq.chain import Chain


@st.composite
def absorbing_chains(draw, max_nonabs=5, max_abs=3, min_exit=0.01):
    """Chains whose every non-absorbing row leaks at least ``min_exit`` into the absorbing set."""
    k = draw(st.integers(1, max_nonabs))
    m = draw(st.integers(1, max_abs))
    n = k + m
    weights = st.floats(0.0, 1.0, allow_nan=False, allow_infinity=False)
    P = np.zeros((n, n))
    for s in range(k):
        row = np.array(draw(st.lists(weights, min_size=n, max_size=n)))
        keep = np.array(draw(st.lists(st.booleans(), min_size=n, max_size=n)))
        row = row * keep * (row > 1e-9)
        exit_to = draw(st.integers(k, n - 1))
        row[exit_to] += min_exit * max(row.sum(), 1.0)
        P[s] = row / row.sum()
    for s in range(k, n):
        P[s, s] = 1.0
    return Chain(P, [s >= k for s in range(n)])


@st.composite
def chains_with_boundary(draw, **kw):
    ch = draw(absorbing_chains(**kw))
    vals = draw(st.lists(st.floats(-1.0, 1.0, allow_nan=False), min_size=ch.n, max_size=ch.n))
    b = np.where(ch.absorbing, np.array(vals), 0.0)
    return ch, b
