import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from absorbeq.auxeval import AuxParams
from absorbeq.fixed_point import (
    SolverSettings,
    best_reply,
    diagnose_candidate,
    find_fixed_point,
    sufficient_constants,
    reply_residual,
)
from absorbeq.fixtures import g1_game, g2_choice_game, pennies_game, uniform_payoff_game
from absorbeq.game import StrategyProfile
from absorbeq.zerosum import discounted_values
from instances import random_game, random_profile


def _setup(spec, alpha=0.1, eps_bar=0.1, delta=0.1):
    return discounted_values(spec, alpha, eps=0.01), AuxParams.for_game(spec, eps_bar, delta)


def _pure_profiles(spec):
    N = [int(s) for s in spec.nonabsorbing]
    for a in itertools.product(*[spec.actions1[s] for s in N]):
        for b in itertools.product(*[spec.actions2[s] for s in N]):
            yield StrategyProfile.pure(spec, {spec.names[s]: c for s, c in zip(N, a)},
                                       {spec.names[s]: c for s, c in zip(N, b)})


# ---------------------------------------------------------------- best replies


def test_g1_half_profile_replies():
    spec = g1_game()
    tb, p = _setup(spec)
    prof = StrategyProfile.from_mapping(spec, {}, {"s0": {"b1": 0.5, "b2": 0.5}})
    br = best_reply(spec, prof, tb, p)
    assert br.B2[0] == (0,) and br.cases[0] == "xi"
    assert reply_residual(prof, br) == pytest.approx(0.5)


def test_non_absorbing_profile_gets_jump_replies():
    spec = g1_game()
    tb, p = _setup(spec)
    br = best_reply(spec, StrategyProfile.pure(spec, {"s0": "a"}, {"s0": "b2"}), tb, p)
    assert br.jump_only and br.cases[0] == "jump"
    assert br.trapped == ("s0",)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_reply_sets_are_nonempty(seed):
    rng = np.random.default_rng(seed)
    spec = random_game(rng)
    tb, p = _setup(spec, alpha=0.2)
    prof = random_profile(rng, spec)
    br = best_reply(spec, prof, tb, p)
    for s in spec.nonabsorbing:
        assert br.B1[int(s)] and br.B2[int(s)]
    assert 0.0 <= reply_residual(prof, br) <= 1.0


# ---------------------------------------------------------------- search


def test_g1_fixed_point():
    spec = g1_game()
    tb, p = _setup(spec)
    c = find_fixed_point(spec, tb, p)
    assert c.converged and c.residual == 0.0
    assert np.array_equal(c.profile.y[0], [1.0, 0.0])


def test_g2_choice_fixed_point_agrees_with_enumeration():
    spec = g2_choice_game()
    tb, p = _setup(spec)
    c = find_fixed_point(spec, tb, p)
    assert c.converged and c.residual <= 1e-6
    travel = spec.actions2[0].index("travel")
    assert c.profile.y[0][travel] == 1.0 and c.profile.y[1][travel] == 1.0
    # every pure profile with zero residual, found by brute force
    fixed = [prof for prof in _pure_profiles(spec)
             if reply_residual(prof, best_reply(spec, prof, tb, p)) == 0.0]
    assert any(all(np.array_equal(f.y[s], c.profile.y[s]) for s in range(spec.n)) for f in fixed)


def test_fixed_initial_point_is_returned():
    spec = uniform_payoff_game()
    tb, p = _setup(spec)
    start = StrategyProfile.uniform(spec)
    c = find_fixed_point(spec, tb, p, initial=start)
    assert c.method == "initial" and c.iterations == 1
    assert c.profile is start


def test_search_can_fail_honestly():
    spec = pennies_game()
    tb, p = _setup(spec)
    c = find_fixed_point(spec, tb, p, SolverSettings(max_iters=10, restarts=2, grid_budget=50))
    assert not c.converged and c.residual > c.tol


def test_search_is_deterministic():
    spec = pennies_game()
    tb, p = _setup(spec)
    cfg = SolverSettings(max_iters=10, restarts=2, grid_budget=50, seed=4)
    a = find_fixed_point(spec, tb, p, cfg)
    b = find_fixed_point(spec, tb, p, cfg)
    assert a.residual == b.residual
    assert all(np.array_equal(u, v) for u, v in zip(a.profile.y, b.profile.y))


# ---------------------------------------------------------------- diagnosis


def test_diagnosis_at_g1_fixed_point():
    spec = g1_game()
    tb, p = _setup(spec)
    d = diagnose_candidate(spec, find_fixed_point(spec, tb, p), tb, p)
    assert d.passed("a", "b", "c") and d.ok
    assert d.checks["b"]["margins"][0] >= 0


def test_diagnosis_flags_trapped_profile():
    spec = g1_game()
    tb, p = _setup(spec)
    d = diagnose_candidate(spec, StrategyProfile.pure(spec, {"s0": "a"}, {"s0": "b2"}), tb, p)
    assert not d.checks["a"]["ok"] and d.checks["a"]["trapped"] == ("s0",)
    assert not d.ok


def test_diagnosis_reports_regime():
    spec = g2_choice_game()
    tb, p = _setup(spec)
    d = diagnose_candidate(spec, find_fixed_point(spec, tb, p), tb, p)
    consts = sufficient_constants(spec, 0.1, 0.1)
    assert d.regime["L_star"] == consts["L_star"]
    # default weights are far below the sufficient cap
    assert not d.regime["sufficient_regime"]
    assert set(d.checks) == set("abcdef")
    assert "margins" in d.checks["e"] and "margins" in d.checks["f"]


def test_sufficient_constants():
    c = sufficient_constants(g1_game(), 0.1, 0.1)
    assert c["L_star"] == pytest.approx(100 / (0.01 * 0.1))
    assert c["delta_star"] == pytest.approx(0.1 * 1e-3 / 300)
    assert c["eps_bar_max"] == pytest.approx(0.025)
