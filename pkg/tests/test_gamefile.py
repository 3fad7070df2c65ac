import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from absorbeq.fixtures import g1_game, g2_as_game, g2_choice_game, pennies_game
from absorbeq.game import StrategyProfile
from absorbeq.gamefile import (
    GameFileError,
    GameValidationError,
    parse_game,
    parse_profile,
    read_game,
    serialize_game,
    serialize_profile,
)
from instances import random_game, random_profile

DATA = Path(__file__).parent / "data"


def _g1_doc():
    return json.loads(serialize_game(g1_game()))


def test_round_trip_preserves_every_array():
    for spec in (g1_game(), g2_as_game(), g2_choice_game(), pennies_game()):
        again = parse_game(serialize_game(spec))
        assert again.names == spec.names and again.omega == spec.omega
        assert np.array_equal(again.absorbing, spec.absorbing)
        assert all(np.array_equal(a, b) for a, b in zip(again.kernel, spec.kernel))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_serialisation_is_a_fixed_point(seed):
    spec = random_game(np.random.default_rng(seed))
    text = serialize_game(spec)
    assert serialize_game(parse_game(text)) == text


def test_data_files_are_canonical():
    text = (DATA / "g2_choice.json").read_text()
    assert serialize_game(read_game(DATA / "g2_choice.json")) == text


def test_negative_probability_location():
    with pytest.raises(GameFileError) as err:
        read_game(DATA / "bad_negative.json")
    assert err.value.location == "$.transitions[0].p"


def test_syntax_error_location():
    with pytest.raises(GameFileError) as err:
        read_game(DATA / "bad_syntax.json")
    assert err.value.location == "line 2 column 17"


@pytest.mark.parametrize("mutate, where", [
    (lambda d: d.pop("omega"), "$"),
    (lambda d: d["states"][0].pop("name"), "$.states[0]"),
    (lambda d: d["transitions"][0].update(to="nowhere"), "$.transitions[0].to"),
    (lambda d: d["transitions"][0].update(b="b9"), "$.transitions[0].b"),
    (lambda d: d["transitions"][0].update(p="abc"), "$.transitions[0].p"),
    (lambda d: d["actions"]["s0"].update(p2=["b1", "b1"]), "$.actions.s0.p2"),
])
def test_structural_errors_name_the_field(mutate, where):
    doc = _g1_doc()
    mutate(doc)
    with pytest.raises(GameFileError) as err:
        parse_game(json.dumps(doc))
    assert err.value.location == where


def test_near_unit_sums_are_normalised_exactly():
    doc = _g1_doc()
    doc["transitions"][0]["p"] = "0.9999999999"
    spec = parse_game(json.dumps(doc))
    assert spec.kernel[0][0, 0].sum() == 1.0


def test_validation_failure_is_separate_from_parsing():
    doc = _g1_doc()
    doc["states"][1]["r2"] = "0.5"          # below omega = 1
    text = json.dumps(doc)
    with pytest.raises(GameValidationError) as err:
        parse_game(text)
    assert ("a1", "payoff2 below omega") in err.value.report.issues
    assert parse_game(text, validate=False).r2[1] == 0.5


# ---------------------------------------------------------------- profiles


def test_profile_file():
    spec = read_game(DATA / "g1.json")
    prof = parse_profile((DATA / "g1_half.json").read_text(), spec)
    assert np.allclose(prof.y[0], [0.5, 0.5]) and prof.x[0][0] == 1.0


def test_single_action_states_may_be_omitted():
    spec = g1_game()
    prof = parse_profile('{"y": {"s0": {"b1": "1"}}}', spec)
    assert prof.x[0][0] == 1.0 and np.array_equal(prof.y[0], [1.0, 0.0])


@pytest.mark.parametrize("text, where", [
    ('{"y": {"s0": {"b1": "-1", "b2": "2"}}}', "$.y.s0.b1"),
    ('{"y": {"s0": {"b7": "1"}}}', "$.y.s0.b7"),
    ('{"y": {"zz": {"b1": "1"}}}', "$.y.zz"),
    ('{"y": {"s0": {"b1": "0.4"}}}', "$.y.s0"),
])
def test_bad_profiles(text, where):
    with pytest.raises(GameFileError) as err:
        parse_profile(text, g1_game())
    assert err.value.location == where


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_profile_round_trip(seed):
    rng = np.random.default_rng(seed)
    spec = random_game(rng)
    prof = random_profile(rng, spec)
    again = parse_profile(serialize_profile(spec, prof), spec)
    for s in spec.nonabsorbing:
        assert np.allclose(again.x[s], prof.x[s], rtol=0, atol=1e-15)
        assert np.allclose(again.y[s], prof.y[s], rtol=0, atol=1e-15)
