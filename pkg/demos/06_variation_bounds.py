"""How much a harmonic function can wander along a path, and why the state count matters.

The expected total one-step variation of a harmonic function is at most its
spread times the number of states where it moves.  When every move changes
the value by at most ``eps^3 / (M n)``, a running sum of changes rarely
reaches ``eps``.  A long random walk shows that a bound ignoring ``n`` does
not suffice.
"""

import numpy as np

from absorbeq.fixtures import g2_chain
from absorbeq.verifier import (
    excursion_check,
    random_walk_counterexample,
    two_layer_from_chain,
    w_sum_check,
)

chain = g2_chain(split=True)
rep = w_sum_check(chain, [0, 0, 0, 1], runs=20000, seed=0)
print("exact expected variation from s", round(rep.exact[0], 4),
      "simulated", round(rep.estimate, 4), "bound M n =", rep.bound)

eps = 0.1
v_spread, n = 1.0, chain.n
delta = eps ** 3 / (v_spread * n)
tl = two_layer_from_chain(chain, [0, 0, 0, 1], delta)
exc = excursion_check(tl, delta, eps, runs=20000, seed=1, start=0)
print(f"\nwith delta = {delta:.2e}: P(sum reaches eps) ~ {exc.estimate:.4f}, "
      f"99% CI {np.round(exc.ci, 4)}, admissible {exc.admissible}")

ce = random_walk_counterexample(eps, runs=400, seed=2)
print(f"\nwalk on {ce.positions} positions, each move worth 1/{ce.positions} = eps^3:")
print(f"  exact probability of reaching eps {ce.exact:.4f}, estimate {ce.estimate:.3f}")
print("  conclusion violated:", ce.violates)
