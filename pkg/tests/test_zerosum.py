import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from absorbeq.fixtures import g1_game, uniform_payoff_game
from absorbeq.game import GameSpec
from absorbeq.zerosum import (
    discounted_values,
    jump_function,
    optimal_strategy,
    solve_matrix_game,
    submartingale_check,
    undiscounted_values,
)
from instances import random_game, random_profile
from oracles import grid_matrix_value, scalar_fixed_point

payoffs = st.floats(-1.0, 1.0, allow_nan=False, allow_infinity=False)


# ---------------------------------------------------------------- matrix games


def test_one_by_one_game():
    assert solve_matrix_game([[0.37]]).value == pytest.approx(0.37)


def test_matching_pennies():
    sol = solve_matrix_game([[1, -1], [-1, 1]])
    assert sol.value == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(sol.row, 0.5) and np.allclose(sol.col, 0.5)


def test_two_by_two_closed_form():
    sol = solve_matrix_game([[3, 0], [1, 2]])
    # mixed equilibrium of a 2x2 game without saddle point: (d - c) / (a - b - c + d)
    assert sol.value == pytest.approx((3 * 2 - 0 * 1) / (3 + 2 - 0 - 1))
    assert np.allclose(sol.row, [0.25, 0.75]) and np.allclose(sol.col, [0.5, 0.5])


def test_column_maximizer_is_the_transposed_game():
    M = np.array([[0.3, -0.2, 0.5], [0.1, 0.4, -0.6]])
    col = solve_matrix_game(M, maximizer="col")
    row = solve_matrix_game(M.T, maximizer="row")
    assert col.value == pytest.approx(row.value, abs=1e-12)


def test_empty_matrix_rejected():
    with pytest.raises(ValueError):
        solve_matrix_game(np.zeros((0, 2)))


@settings(max_examples=80, deadline=None)
@given(arrays(float, st.tuples(st.just(2), st.integers(1, 4)), elements=payoffs))
def test_value_matches_grid_oracle(M):
    sol = solve_matrix_game(M)
    grid = grid_matrix_value(M, resolution=4000)
    spread = float(M.max() - M.min())
    assert grid - 1e-12 <= sol.value <= grid + spread / 4000 + 1e-12


@settings(max_examples=80, deadline=None)
@given(arrays(float, st.tuples(st.integers(1, 4), st.integers(1, 4)), elements=payoffs))
def test_strategies_certify_the_value(M):
    sol = solve_matrix_game(M)
    assert sol.gap <= 1e-9
    assert np.min(sol.row @ M) >= sol.value - 1e-9
    assert np.max(M @ sol.col) <= sol.value + 1e-9
    assert sol.row.sum() == pytest.approx(1.0) and sol.col.sum() == pytest.approx(1.0)


# ---------------------------------------------------------------- discounted values


def _half_absorbing_game():
    """One state; the single action pair absorbs at Player Two payoff 1 with probability 1/2."""
    return GameSpec.build(
        states=[{"name": "s", "absorbing": False},
                {"name": "z", "absorbing": True, "r1": 0.0, "r2": 1.0}],
        actions={"s": {"p1": ["a"], "p2": ["b"]}},
        transitions=[{"from": "s", "a": "a", "b": "b", "to": "z", "p": 0.5},
                     {"from": "s", "a": "a", "b": "b", "to": "s", "p": 0.5}],
        omega=1.0,
    )


def test_self_loop_only_has_zero_value():
    spec = GameSpec.build(
        states=[{"name": "s", "absorbing": False},
                {"name": "z", "absorbing": True, "r1": 0.0, "r2": 1.0}],
        actions={"s": {"p1": ["a"], "p2": ["b"]}},
        transitions=[{"from": "s", "a": "a", "b": "b", "to": "s", "p": 1.0}],
        omega=1.0,
    )
    assert discounted_values(spec, 0.3).c_alpha[0] == pytest.approx(0.0, abs=1e-10)


@pytest.mark.parametrize("alpha", [0.5, 0.1, 0.01])
def test_forced_half_absorption_matches_scalar_fixed_point(alpha):
    expected = scalar_fixed_point(lambda c: (1 - alpha) * 0.5 * (1 + c))
    c = discounted_values(_half_absorbing_game(), alpha).c_alpha
    assert c[0] == pytest.approx(expected, abs=1e-10)


@pytest.mark.parametrize("alpha", [0.5, 0.1, 0.02])
def test_g1_discounted_value(alpha):
    # absorbing now is worth (1 - alpha) after the stage's discount
    tb = discounted_values(g1_game(), alpha)
    assert tb.c_alpha[0] == pytest.approx(1 - alpha, abs=1e-10)
    assert tb.c_alpha[1] == 1.0


def test_uniform_game_undiscounted_values():
    spec = uniform_payoff_game(0.2, 0.6)
    c1, _ = undiscounted_values(spec, 1, 0.01)
    c2, _ = undiscounted_values(spec, 2, 0.01)
    assert c1[0] == pytest.approx(0.2, abs=0.01)
    assert c2[0] == pytest.approx(0.6, abs=0.01)


def test_g1_undiscounted_values():
    tb = discounted_values(g1_game(), 0.1, eps=0.01)
    assert tb.c2[0] == pytest.approx(1.0, abs=0.01)
    assert tb.c1[0] == pytest.approx(0.0, abs=0.01)
    with pytest.raises(ValueError):
        discounted_values(g1_game(), 0.1).punishment(1)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.05, 0.9))
def test_shapley_fixed_point(seed, alpha):
    spec = random_game(np.random.default_rng(seed))
    c = discounted_values(spec, alpha, tol=1e-11).c_alpha
    for s in spec.nonabsorbing:
        M = (1 - alpha) * np.einsum("abt,t->ab", spec.kernel[s], c)
        assert solve_matrix_game(M, maximizer="col").value == pytest.approx(c[s], abs=1e-9)


# ---------------------------------------------------------------- jump functions


def test_jump_at_absorbing_state_is_the_payoff():
    spec = g1_game()
    tb = discounted_values(spec, 0.1)
    jt = jump_function(spec, [np.ones(1), np.ones(1)], tb)
    assert jt.j_alpha[1] == spec.r2[1]
    assert jt.J_alpha[0] == (0,)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_jump_equals_value_against_optimal_strategy(seed):
    spec = random_game(np.random.default_rng(seed))
    tb = discounted_values(spec, 0.2, tol=1e-11)
    x = optimal_strategy(spec, tb, player=1)
    jt = jump_function(spec, x, tb)
    assert np.allclose(jt.j_alpha, tb.c_alpha, atol=1e-8)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_jump_dominates_value_and_is_submartingale(seed):
    rng = np.random.default_rng(seed)
    spec = random_game(rng)
    prof = random_profile(rng, spec)
    tb = discounted_values(spec, 0.2, tol=1e-11)
    jt = jump_function(spec, prof.x, tb)
    assert np.all(jt.j_alpha >= tb.c_alpha - 1e-9)
    assert submartingale_check(spec, prof.x, tb).ok
