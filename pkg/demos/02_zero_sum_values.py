"""Values of the zero-sum games that serve as punishments.

Player Two's punishment level at a state is the value of the game in which
Player One tries to hold Player Two's payoff down.  Discounted values come
from Shapley iteration; undiscounted ones are read off a shrinking grid of
discount rates.
"""

import numpy as np

from absorbeq.fixtures import g1_game, g2_choice_game, pennies_game
from absorbeq.game import StrategyProfile
from absorbeq.zerosum import (
    discounted_values,
    jump_function,
    optimal_strategy,
    solve_matrix_game,
    submartingale_check,
    undiscounted_values,
)

# A matrix game first: matching pennies has value 0 with uniform play.
sol = solve_matrix_game([[1, -1], [-1, 1]])
print("matching pennies value", round(sol.value, 12), "row", sol.row, "col", sol.col)

# In G1 Player Two can absorb at payoff 1 right away, so after one discounted
# stage the value is exactly 1 - alpha.
g1 = g1_game()
for alpha in (0.5, 0.1, 0.01):
    print(f"G1 alpha = {alpha:5}: c = {discounted_values(g1, alpha).c_alpha[0]:.6f}")

# Undiscounted values: the grid alpha = 0.5, 0.1, 0.02, ... stops once
# successive values agree to eps / 4.
spec = g2_choice_game()
c2, alpha = undiscounted_values(spec, 2, eps=0.01)
print("\nG2-choice undiscounted Player Two values:",
      {nm: round(float(v), 4) for nm, v in zip(spec.names, c2)})
print("smallest discount rate used:", alpha)

# The jump function: the best Player Two can get by moving once and then
# being held to the punishment level.
tables = discounted_values(spec, 0.1, eps=0.01)
prof = StrategyProfile.uniform(spec)
jt = jump_function(spec, prof.x, tables, prof.y)
print("\njump values j^alpha:", {nm: round(float(v), 4) for nm, v in zip(spec.names, jt.j_alpha)})
print("jump moves:", {spec.names[s]: [spec.actions2[s][b] for b in jt.J_alpha[s]] for s in spec.nonabsorbing})
print("sub-martingale property holds:", submartingale_check(spec, prof.x, tables).ok)

# The pennies game mixes: Player One's optimal stationary strategy is not pure.
pen = pennies_game()
tb = discounted_values(pen, 0.1)
print("\npennies optimal punishing strategy of Player One:", np.round(optimal_strategy(pen, tb)[0], 4))
