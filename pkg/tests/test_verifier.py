import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from absorbeq.chain import Chain
from absorbeq.fixtures import g1_game, g2_chain, g2_choice_game, uniform_payoff_game
from absorbeq.game import StrategyProfile
from absorbeq.verifier import (
    NonAbsorbingProfileError,
    absorption_horizon,
    best_response_value,
    certify_profile,
    delta_budget,
    excursion_check,
    random_walk_counterexample,
    random_walk_two_layer,
    simulate_test_and_punish,
    test_and_punish_gap as tp_gap,
    two_layer_from_chain,
    w_sum_check,
)
from instances import random_game, random_profile
from oracles import policy_enumeration
from strategies import chains_with_boundary


def _g1_pure(b="b1"):
    spec = g1_game()
    return spec, StrategyProfile.pure(spec, {"s0": "a"}, {"s0": b})


def _g2_choice(y_s, y_t):
    spec = g2_choice_game()
    return spec, StrategyProfile.pure(spec, {"s": "a", "t": "a"}, {"s": y_s, "t": y_t})


# ---------------------------------------------------------------- deviation values


def test_g1_player_two_can_always_absorb():
    spec, prof = _g1_pure()
    br = best_response_value(spec, prof.x, player=2)
    assert br.values[0] == 1.0 and br.policy[0] == 0 and br.bound_gap <= 1e-9


def test_g1_discounted_deviation():
    spec, prof = _g1_pure()
    br = best_response_value(spec, prof.x, player=2, mode="discounted", alpha=0.1)
    assert br.values[0] == pytest.approx(0.9)


def test_uniform_game_deviation_equals_constant():
    spec = uniform_payoff_game(0.2, 0.6)
    prof = StrategyProfile.uniform(spec)
    assert best_response_value(spec, prof.x, 2).values[0] == pytest.approx(0.6)
    assert best_response_value(spec, prof.y, 1).values[0] == pytest.approx(0.2)


def test_g2_choice_half_matches_enumeration():
    spec = g2_choice_game()
    prof = StrategyProfile.uniform(spec)
    for player, opp in ((2, prof.x), (1, prof.y)):
        val = best_response_value(spec, opp, player).values
        assert np.allclose(val, policy_enumeration(spec, opp, player), atol=1e-9)


def test_deviation_arguments_checked():
    spec, prof = _g1_pure()
    with pytest.raises(ValueError):
        best_response_value(spec, prof.x, player=3)
    with pytest.raises(ValueError):
        best_response_value(spec, prof.x, player=2, mode="discounted")


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_deviation_values_match_enumeration(seed):
    rng = np.random.default_rng(seed)
    spec = random_game(rng, max_actions=2)
    prof = random_profile(rng, spec)
    for player, opp in ((1, prof.y), (2, prof.x)):
        val = best_response_value(spec, opp, player).values
        assert np.allclose(val, policy_enumeration(spec, opp, player), atol=1e-7)


# ---------------------------------------------------------------- certificate


def test_budget_formula():
    assert delta_budget(0.1, 4, 2.0) == pytest.approx(1e-3 / 8)


def test_g1_absorbing_profile_is_certified():
    spec, prof = _g1_pure()
    cert = certify_profile(spec, prof, 0.1)
    assert cert.certified and cert.verdict == "certified-4eps"
    assert cert.delta == 0.0 and cert.witnesses == ()


def test_g1_stay_profile_cannot_be_certified():
    spec, prof = _g1_pure("b2")
    with pytest.raises(NonAbsorbingProfileError):
        certify_profile(spec, prof, 0.1)


def test_failure_names_the_state():
    # absorbing at once forgoes the value 1 Player Two can secure by travelling
    spec, prof = _g2_choice("now", "now")
    cert = certify_profile(spec, prof, 0.1)
    assert not cert.certified and cert.verdict == "failed"
    kinds = {(w[0], w[1], w[2]) for w in cert.witnesses}
    assert ("value", 2, "s") in kinds and ("value", 2, "t") in kinds
    assert cert.value_margins[(2, 0)] == pytest.approx(0.4 - 1.0 + 0.1, abs=0.01)


def test_move_tolerance_violation_is_a_witness():
    spec = g2_choice_game()
    prof = StrategyProfile.from_mapping(spec, {}, {"s": {"now": 0.5, "travel": 0.5},
                                                   "t": {"travel": 1.0}})
    cert = certify_profile(spec, prof, 0.1, delta=0.0)
    assert any(w[0] == "move" and w[2] == "s" for w in cert.witnesses)


def test_eps_range_checked():
    spec, prof = _g1_pure()
    with pytest.raises(ValueError):
        certify_profile(spec, prof, 0.5)


# ---------------------------------------------------------------- test-and-punish


def test_g1_simulation_is_never_punished():
    spec, prof = _g1_pure()
    rep = simulate_test_and_punish(spec, prof, 0.1, runs=500, seed=0)
    assert rep.punishment_frequency == 0.0 and rep.clean_frequency == 1.0
    assert rep.horizon == 1


def test_simulation_is_reproducible():
    spec = g2_choice_game()
    prof = StrategyProfile.uniform(spec)
    a = simulate_test_and_punish(spec, prof, 0.1, runs=300, seed=5)
    b = simulate_test_and_punish(spec, prof, 0.1, runs=300, seed=5)
    assert np.array_equal(a.outcome, b.outcome) and a.punishment_ci == b.punishment_ci


def test_horizon_of_half_absorbing_chain():
    ch = g2_chain()
    # first stage at which the surviving mass drops below eps / 10
    h = absorption_horizon(ch, 0, 0.1)
    dist = np.linalg.matrix_power(ch.P, h)[0]
    prev = np.linalg.matrix_power(ch.P, h - 1)[0]
    assert dist[:2].sum() < 0.01 <= prev[:2].sum()


def test_g1_deviation_gap_within_four_eps():
    spec, prof = _g1_pure()
    gap = tp_gap(spec, prof, 0.1)
    assert gap.certified and gap.max_gap <= 0.4


# ---------------------------------------------------------------- variation sums and excursions


@settings(max_examples=40, deadline=None)
@given(chains_with_boundary(max_nonabs=4))
def test_w_sum_bound(data):
    ch, b = data
    rep = w_sum_check(ch, b)
    assert rep.ok
    assert rep.n_active <= int((~ch.absorbing).sum())


def test_w_sum_monte_carlo_agrees_with_exact():
    ch = g2_chain(split=True)
    rep = w_sum_check(ch, [0, 0, 0, 1], runs=20000, seed=2)
    assert abs(rep.estimate - rep.exact[0]) <= 4 * rep.stderr
    assert rep.ok


def test_constant_values_have_no_variation():
    ch = g2_chain(split=True)
    rep = w_sum_check(ch, [0.3, 0.3, 0.3, 0.3])
    assert rep.n_active == 0 and rep.bound == 0.0 and np.all(rep.exact == 0) and rep.ok


def test_constant_values_never_make_an_excursion():
    tl = two_layer_from_chain(g2_chain(split=True), [0.3] * 4, 0.0)
    rep = excursion_check(tl, 0.0, 0.1, runs=200, seed=0)
    assert rep.estimate == 0.0 and rep.ok


def test_zero_delta_split_keeps_the_chain():
    ch = g2_chain(split=True)
    tl = two_layer_from_chain(ch, [0, 0, 0, 1], 0.0)
    assert tl.max_step()[0] == 0.0 and tl.harmonic_residual() <= 1e-12
    rep = excursion_check(tl, 0.0, 0.1, runs=500, seed=1, start=0)
    assert rep.estimate == 0.0


def test_split_moves_hit_delta_exactly():
    ch = g2_chain(split=True)
    tl = two_layer_from_chain(ch, [0, 0, 0, 1], 0.01)
    assert tl.max_step()[0] == pytest.approx(0.01)
    assert tl.harmonic_residual() <= 1e-12


def test_inadmissible_delta_rejected():
    tl = two_layer_from_chain(g2_chain(split=True), [0, 0, 0, 1], 0.01)
    with pytest.raises(ValueError, match="exceeds"):
        excursion_check(tl, 0.01, 0.1, runs=10, seed=0)
    rep = excursion_check(tl, 0.01, 0.1, runs=10, seed=0, enforce=False)
    assert not rep.admissible


def test_admissible_walk_rarely_reaches_eps():
    eps, N = 0.5, 4
    delta = eps ** 3 / (N + 1)
    tl = random_walk_two_layer(N, tilt=delta * N / 2)
    rep = excursion_check(tl, delta, eps, runs=4000, seed=3)
    assert rep.admissible and rep.ok


def test_random_walk_counterexample():
    ce = random_walk_counterexample(0.1, runs=400, seed=0)
    assert ce.positions == 1000
    assert ce.exact == pytest.approx(500 / 600)
    assert ce.delta <= ce.n_free_bound and ce.delta > ce.admissible_bound
    assert ce.violates
