"""Taboo probabilities and the statistics built from them, on a two-state chain.

The chain passes play between ``s`` and ``t``; each state absorbs with
probability one half.  Everything printed here can be checked by hand.
"""

import numpy as np

from absorbeq.chain import (
    ChainAnalysis,
    absorption_rate,
    chain_metric,
    escape_probability,
    harmonic_payoffs,
    taboo_probability,
)
from absorbeq.fixtures import g2_chain

chain = g2_chain()
print("transition matrix (s, t, A):")
print(chain.P)

# P^T(s, B): reach B at some stage >= 1 before any visit to T.
print("\nP^s(s, t)        =", taboo_probability(chain, "s", ["s"], ["t"]))
print("P^{s,t}(s, A)    =", taboo_probability(chain, "s", ["s", "t"], ["A"]))

# esc(t, s) is the chance of never seeing s again from t; a(s) is one minus
# the return probability to s.
print("esc(t, s)        =", escape_probability(chain, "t", "s"))
print("a(s)             =", absorption_rate(chain, "s"), "(leave now 1/2, or via t 1/4)")
print("mu(s, t)         =", chain_metric(chain, "s", "t"))

# Splitting the absorbing state gives a harmonic function with r(A_s) = 0, r(A_t) = 1.
split = g2_chain(split=True)
r = harmonic_payoffs(split, {"A_s": 0.0, "A_t": 1.0})
print("\nharmonic payoffs on the split chain:", np.round(r, 6), "(1/3 and 2/3 at s and t)")

# ChainAnalysis bundles the whole calculus and checks the identities that tie
# escape probabilities, return probabilities and absorption rates together.
an = ChainAnalysis(split, {"r": [0, 0, 0, 1]})
print("\nidentity residuals:")
for name, res in an.identity_residuals().items():
    print(f"  {name:14s} {res:.2e}")

# A part is a piece of a row.  Using the whole row of s once, the chance of
# never returning equals a(s) and the one-step expectation equals r(s).
st = an.row_stats(0, split.P[0], 1.0, "r")
print(f"\nwhole row at s: g = {st.g:.4f}, nu = {st.nu:.4f}, v = {st.v:.4f}, w = {st.w:.4f}")
