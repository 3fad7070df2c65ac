import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from absorbeq.chain import (
    Chain,
    ChainAnalysis,
    NonAbsorbingChainError,
    Part,
    absorption_rate,
    chain_from_parts,
    chain_metric,
    close_pair_check,
    escape_probability,
    harmonic_payoffs,
    part_statistics,
    row_replacement_bound,
    taboo_probability,
)
from absorbeq.fixtures import g2_chain
from oracles import oracle_absorption_rate, oracle_escape, oracle_payoff, oracle_taboo
from strategies import absorbing_chains, chains_with_boundary


# ---------------------------------------------------------------- construction


def test_rows_must_be_stochastic():
    with pytest.raises(ValueError, match="sums to"):
        Chain(np.array([[0.5, 0.4], [0.0, 1.0]]), [False, True])


def test_absorbing_states_must_self_loop():
    with pytest.raises(ValueError, match="self-loop"):
        Chain(np.array([[0.0, 1.0], [1.0, 0.0]]), [False, True])


def test_parts_must_add_up_to_row():
    ok = [Part(0, [0.0, 0.3, 0.2]), Part(0, [0.5, 0.0, 0.0])]
    chain_from_parts(3, [False, True, True], [ok, [Part(1, [0, 1, 0])], [Part(2, [0, 0, 1])]])
    P = np.array([[0.5, 0.3, 0.2], [0, 1, 0], [0, 0, 1]])
    bad = ((Part(0, [0.0, 0.3, 0.2]),), (Part(1, [0, 1, 0]),), (Part(2, [0, 0, 1]),))
    with pytest.raises(ValueError, match="do not add up"):
        Chain(P, [False, True, True], parts=bad)


def test_states_can_be_named():
    ch = g2_chain()
    assert ch.index("t") == 1
    assert taboo_probability(ch, "s", ["s"], ["t"]) == taboo_probability(ch, 0, [0], [1])


# ---------------------------------------------------------------- worked values


def test_g2_return_and_exit_probabilities():
    ch = g2_chain()
    assert taboo_probability(ch, "s", ["s"], ["t"]) == pytest.approx(0.5, abs=1e-12)
    assert taboo_probability(ch, "s", ["s", "t"], ["A"]) == pytest.approx(0.5, abs=1e-12)
    # a(s): leave directly (1/2) or via t and then absorb (1/4)
    assert absorption_rate(ch, "s") == pytest.approx(0.75, abs=1e-12)


def test_g2_split_harmonic_value():
    ch = g2_chain(split=True)
    r = harmonic_payoffs(ch, {"A_s": 0.0, "A_t": 1.0})
    assert r[0] == pytest.approx(1 / 3, abs=1e-12)
    assert r[1] == pytest.approx(2 / 3, abs=1e-12)


def test_escape_without_path_is_certain():
    P = np.array([[0, 0, 1, 0], [0, 0, 0, 1], [0, 0, 1, 0], [0, 0, 0, 1]], dtype=float)
    ch = Chain(P, [False, False, True, True])
    assert escape_probability(ch, 0, 1) == 1.0
    assert chain_metric(ch, 0, 1) == 2.0


def test_escape_is_zero_when_move_is_certain():
    P = np.array([[0, 1, 0], [0.5, 0, 0.5], [0, 0, 1]], dtype=float)
    ch = Chain(P, [False, False, True])
    assert escape_probability(ch, 0, 1) == 0.0


def test_absorption_rate_extremes():
    P = np.array([[0, 1.0, 0], [0, 0, 1.0], [0, 0, 1.0]])
    ch = Chain(P, [False, False, True])
    assert absorption_rate(ch, 2) == 0.0
    assert absorption_rate(ch, 1) == 1.0


def test_self_loop_part_has_no_exit():
    ch = chain_from_parts(
        3, [False, True, True],
        [[Part(0, [0.4, 0, 0], "stay"), Part(0, [0, 0.3, 0.3], "go")],
         [Part(1, [0, 1, 0])], [Part(2, [0, 0, 1])]])
    b = np.array([0.0, 1.0, -1.0])
    r = harmonic_payoffs(ch, b)
    st = part_statistics(ch, ch.part(0, "stay"), b)
    assert st.g == 0.0
    assert st.v == pytest.approx(r[0])
    assert st.w == pytest.approx(r[0])
    go = part_statistics(ch, ch.part(0, "go"), b)
    assert go.g == 1.0 and go.nu == pytest.approx(1.0)


def test_harmonic_payoffs_need_absorption():
    P = np.array([[0, 1.0, 0], [1.0, 0, 0], [0, 0, 1.0]])
    ch = Chain(P, [False, False, True])
    assert not ch.is_absorbing
    with pytest.raises(NonAbsorbingChainError):
        harmonic_payoffs(ch, [0, 0, 1])


def test_constant_boundary_is_harmonic():
    ch = g2_chain(split=True)
    assert np.allclose(harmonic_payoffs(ch, np.full(4, 0.3)), 0.3)


def test_overlapping_taboo_and_target_rejected():
    with pytest.raises(ValueError, match="overlap"):
        taboo_probability(g2_chain(), "s", ["t"], ["t", "A"])


# ---------------------------------------------------------------- oracle agreement


@settings(max_examples=40, deadline=None)
@given(absorbing_chains(max_nonabs=4))
def test_taboo_probabilities_match_path_propagation(ch):
    n = ch.n
    for s in range(n):
        for t in range(n):
            if t == s:
                continue
            est, tail = oracle_taboo(ch.P, s, [s], [t])
            val = taboo_probability(ch, s, [s], [t])
            assert est - 1e-12 <= val <= est + tail + 1e-12
            est, tail = oracle_escape(ch.P, s, t)
            val = escape_probability(ch, s, t)
            assert est - tail - 1e-12 <= val <= est + 1e-12


@settings(max_examples=40, deadline=None)
@given(chains_with_boundary(max_nonabs=4))
def test_rates_and_payoffs_match_path_propagation(data):
    ch, b = data
    r = harmonic_payoffs(ch, b)
    for s in ch.nonabsorbing:
        est, tail = oracle_absorption_rate(ch.P, s)
        assert est - tail - 1e-12 <= absorption_rate(ch, s) <= est + 1e-12
        est, tail = oracle_payoff(ch.P, ch.absorbing, b, s)
        assert abs(r[s] - est) <= tail * np.abs(b).max() + 1e-12


# ---------------------------------------------------------------- identities


@settings(max_examples=60, deadline=None)
@given(absorbing_chains())
def test_taboo_identities(ch):
    res = ChainAnalysis(ch).identity_residuals()
    assert max(res.values()) <= 1e-9, res


@settings(max_examples=60, deadline=None)
@given(chains_with_boundary())
def test_harmonic_values_invariant_under_one_step(data):
    ch, b = data
    r = harmonic_payoffs(ch, b)
    assert np.max(np.abs(ch.P @ r - r)) <= 1e-10


@settings(max_examples=60, deadline=None)
@given(chains_with_boundary())
def test_one_step_expectation_of_full_row_is_harmonic_value(data):
    ch, b = data
    an = ChainAnalysis(ch, {"r": b})
    r = an.harmonic["r"]
    for s in ch.nonabsorbing:
        st = an.row_stats(s, ch.P[s], 1.0, "r")
        assert st.w == pytest.approx(r[s], abs=1e-10)
        assert st.g == pytest.approx(an.a[s], abs=1e-10)


# ---------------------------------------------------------------- perturbation bounds


def test_identical_replacement_has_zero_deviation():
    ch = g2_chain(split=True)
    rep = row_replacement_bound(ch, {0: Part.alternative(0, ch.P[0])}, [0, 0, 0, 1])
    assert rep.deviation <= 1e-12 and rep.holds


def test_replacement_absorbing_at_own_value_keeps_payoffs():
    P = np.zeros((5, 5))
    P[:4, :4] = g2_chain(split=True).P
    P[4, 4] = 1.0
    ch = Chain(P, [False, False, True, True, True])
    b = np.array([0, 0, 0, 1, 1 / 3])
    r = harmonic_payoffs(ch, b)
    rep = row_replacement_bound(ch, {0: Part.alternative(0, [0, 0, 0, 0, 1])}, b)
    assert np.allclose(rep.new_values, r, atol=1e-12)
    assert rep.deviation <= 1e-12 and rep.holds


@settings(max_examples=40, deadline=None)
@given(chains_with_boundary(max_nonabs=3), st.integers(0, 2 ** 32 - 1))
def test_row_replacement_bound_holds(data, seed):
    ch, b = data
    rng = np.random.default_rng(seed)
    s = int(rng.choice(ch.nonabsorbing))
    alt = rng.random(ch.n) * (rng.random(ch.n) > 0.3)
    alt[int(rng.choice(np.flatnonzero(ch.absorbing)))] += 0.2
    rep = row_replacement_bound(ch, {s: Part.alternative(s, alt)}, b)
    assert rep.holds


@settings(max_examples=40, deadline=None)
@given(absorbing_chains(max_nonabs=4))
def test_close_pair_approximations(ch):
    N = list(ch.nonabsorbing)
    if len(N) < 2:
        return
    an = ChainAnalysis(ch)
    for s in N:
        for t in N:
            if s != t and an.esc[t, s] < 0.2:
                assert close_pair_check(ch, s, t).ok
