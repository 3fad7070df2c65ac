"""The discounted auxiliary evaluation of Player Two, in closed form and by simulation.

Player Two's evaluation ``xi`` discounts each return to a state by a
state-specific amount, so that moves which rarely leave a state are worth
less than their undiscounted value.  The closed form is compared with a
Monte Carlo estimate of the path expectation it summarises.
"""

from absorbeq.auxeval import AuxParams, ordering_weights, xi_monte_carlo, xi_values
from absorbeq.fixtures import g1_game
from absorbeq.game import ProfileEvaluation, StrategyProfile

spec = g1_game()
prof = StrategyProfile.from_mapping(spec, {"s0": {"a": 1.0}}, {"s0": {"b1": 0.5, "b2": 0.5}})
params = AuxParams.for_game(spec, eps_bar=0.1, delta=0.1)
aux = xi_values(ProfileEvaluation(spec, prof), params)

print("r2(s0)      =", aux.r2[0])
print("xi(s0)      =", aux.xi[0], "(1 / 1.1)")
print("xi^b1       =", aux.moves[(0, 0)].xi, "(absorbs at once)")
print("xi^b2       =", aux.moves[(0, 1)].xi, "(0.9 / 1.1: stays and pays the discount)")
print("consistency =", aux.consistency)

# Weights order the states by their thresholded absorption rates; the
# slowest state carries the largest weight, capped by K.
ow = ordering_weights({0: 0.1, 1: 0.4}, AuxParams(0.1, 0.1, 10, 10, 2))
print("\nweights for rates 0.1 and 0.4:", ow.w)

# Simulating the path expectation of the staying move.
mc = xi_monte_carlo(spec, prof, "s0", "b2", params, runs=100000, seed=7)
print(f"\nMonte Carlo xi^b2 = {mc.estimate:.4f} +/- {mc.halfwidth:.4f} (99%)"
      f"  closed form {mc.closed_form:.4f}  covered: {mc.covers}")
