"""Changing a chain while keeping control of its taboo probabilities and values.

Four operations are shown: removing rare motion, contracting a block of
states that mostly talk among themselves, replacing one transition, and
polarizing a row so that Player Two's value is preserved exactly.
"""

import numpy as np

from absorbeq.chain import Chain, ChainAnalysis, harmonic_payoffs, taboo_probability
from absorbeq.fixtures import g2_chain
from absorbeq.transforms import (
    ExitSystem,
    PolarSpec,
    contract,
    exit_statistics_compare,
    polarization_delta_bound,
    polarize,
    remove_masses,
    removal_bound_check,
    replace_transition,
)

# Removal: drop a quarter of the motion from t back to s.
chain = g2_chain()
cut = {1: np.array([0.125, 0.0, 0.0])}
after = remove_masses(chain, cut)
print("P^s(s, A) before", taboo_probability(chain, "s", ["s"], ["A"]),
      "after", round(taboo_probability(after, "s", ["s"], ["A"]), 6), "(11/14)")
rep = removal_bound_check(chain, cut, T=[], A=[2], s=0)
print("removal fraction", rep.gamma, "bounds hold:", rep.ok)

# Contraction: two states that exit only one percent of the time are merged
# into their representative.
P = np.array([[0, 0.99, 0.01, 0], [0.99, 0, 0, 0.01], [0, 0, 1, 0], [0, 0, 0, 1]])
pair = Chain(P, [False, False, True, True], ("u", "v", "lo", "hi"))
exits = ExitSystem.default(pair, [["u", "v"]])
res = contract(pair, exits, [0, 0, 0, 1])
print("\nexit defect", res.delta, "hypothesis holds:", res.hypothesis_ok)
print("harmonic deviation", res.checks["harmonic_deviation"], "within bound:", res.ok)
cmp = exit_statistics_compare(res, 0, exits.exits[0], [0, 0, 0, 1])
print("exit statistics agree within their bounds:", cmp.ok)

# Replacement: making t absorb at once can only raise the absorption rate of s.
new = replace_transition(chain, "t", [0, 0, 1.0], "replacement")
print("\na(s) before", ChainAnalysis(chain).a[0], "after", ChainAnalysis(new.chain).a[0])

# Polarization at a single state: split the row into a high and a low part
# and mix them so that Player Two's value does not move.
P = np.zeros((5, 5))
P[0, 1:4] = [0.6, 0.2, 0.2]
for i in range(1, 5):
    P[i, i] = 1.0
row = Chain(P, [False, True, True, True, True])
r1b = np.array([0, 0.3, -0.1, 0.2, 0.0])
r2b = np.array([0, 1.0, 0.6, 0.05, 0.4])
r1b[4] = harmonic_payoffs(row, r1b)[0]
spec = PolarSpec(np.array([0, 0, 0, 0.2, 0]), np.array([0, 0, 0, 0, 1.0]), np.array([0, 0.6, 0.2, 0, 0]))
d = 0.5 * polarization_delta_bound(0.2, 1)
T, polar, prep = polarize(row, r1b, r2b, {0: spec}, 0.2, d, d / 2)
print("\npolarized states", T, "lambda", round(prep.lambdas[0], 12))
print("Player Two value before", harmonic_payoffs(row, r2b)[0],
      "after", round(harmonic_payoffs(polar, r2b)[0], 12))
