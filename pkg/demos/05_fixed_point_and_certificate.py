"""From best replies to a certified approximate equilibrium.

In the G2-choice game Player Two decides at each state whether to absorb
at once at a low payoff or to travel, which absorbs at payoff 1 half of the
time.  The best-reply search finds that travelling everywhere is a fixed
point; the verifier then certifies it and measures the best deviation against
the test-and-punish strategy exactly.
"""

from absorbeq.auxeval import AuxParams
from absorbeq.fixed_point import diagnose_candidate, find_fixed_point
from absorbeq.fixtures import g2_choice_game
from absorbeq.verifier import certify_profile, simulate_test_and_punish, test_and_punish_gap
from absorbeq.zerosum import discounted_values

spec = g2_choice_game()
tables = discounted_values(spec, 0.1, eps=0.01)
params = AuxParams.for_game(spec, 0.1, 0.1)

cand = find_fixed_point(spec, tables, params)
print("method", cand.method, "residual", cand.residual, "converged", cand.converged)
for s in spec.nonabsorbing:
    y = {b: float(p) for b, p in zip(spec.actions2[s], cand.profile.y[s])}
    print(f"  Player Two at {spec.names[s]}: {y}")

diag = diagnose_candidate(spec, cand, tables, params)
print("\ndiagnosis:", {k: v["ok"] for k, v in diag.checks.items()})
print("parameters inside the sufficient regime:", diag.regime["sufficient_regime"])

cert = certify_profile(spec, cand.profile, eps=0.1, tables=tables)
print("\ncertificate:", cert.verdict, "realised delta", cert.delta, "budget", cert.budget)

gap = test_and_punish_gap(spec, cand.profile, 0.1, tables)
print("largest deviation gain against test-and-punish:", round(gap.max_gap, 6), "<= 4 eps")

sim = simulate_test_and_punish(spec, cand.profile, 0.1, runs=5000, seed=1)
print("simulated punishment frequency", sim.punishment_frequency,
      "absorbed", sim.absorption_frequency)
