"""Small reference games and chains used by the tests, demos and command line."""

from __future__ import annotations

import numpy as np

from .chain import Chain
from .game import GameSpec


def g1_game() -> GameSpec:
    """One decision state; Player Two either absorbs at payoff 1 (``b1``) or stays (``b2``)."""
    return GameSpec.build(
        states=[{"name": "s0", "absorbing": False},
                {"name": "a1", "absorbing": True, "r1": 0.0, "r2": 1.0}],
        actions={"s0": {"p1": ["a"], "p2": ["b1", "b2"]}},
        transitions=[{"from": "s0", "a": "a", "b": "b1", "to": "a1", "p": 1.0},
                     {"from": "s0", "a": "a", "b": "b2", "to": "s0", "p": 1.0}],
        omega=1.0,
    )


def g2_chain(split: bool = False) -> Chain:
    """Two states passing the play back and forth, each absorbing with probability one half.

    With ``split`` the absorbing state is duplicated so that absorption from
    ``s`` lands in ``A_s`` and absorption from ``t`` in ``A_t``.
    """
    if split:
        P = np.array([[0, .5, .5, 0], [.5, 0, 0, .5], [0, 0, 1, 0], [0, 0, 0, 1]])
        return Chain(P, [False, False, True, True], ("s", "t", "A_s", "A_t"))
    P = np.array([[0, .5, .5], [.5, 0, .5], [0, 0, 1]])
    return Chain(P, [False, False, True], ("s", "t", "A"))


def g2_as_game() -> GameSpec:
    """The two-state chain encoded as a game with one action per player."""
    return GameSpec.build(
        states=[{"name": "s", "absorbing": False}, {"name": "t", "absorbing": False},
                {"name": "A", "absorbing": True, "r1": 0.0, "r2": 1.0}],
        actions={"s": {"p1": ["a"], "p2": ["b"]}, "t": {"p1": ["a"], "p2": ["b"]}},
        transitions=[{"from": "s", "a": "a", "b": "b", "to": "t", "p": 0.5},
                     {"from": "s", "a": "a", "b": "b", "to": "A", "p": 0.5},
                     {"from": "t", "a": "a", "b": "b", "to": "s", "p": 0.5},
                     {"from": "t", "a": "a", "b": "b", "to": "A", "p": 0.5}],
        omega=1.0,
    )


def g2_choice_game() -> GameSpec:
    """Two-state game where Player Two chooses between absorbing now and travelling.

    ``now`` absorbs at a low Player Two payoff (0.4 at ``s``, 0.3 at ``t``);
    ``travel`` absorbs at payoff 1 with probability one half and otherwise
    moves to the other state.  Player One has a single action.
    """
    states = [{"name": "s", "absorbing": False}, {"name": "t", "absorbing": False},
              {"name": "A1", "absorbing": True, "r1": 0.1, "r2": 0.4},
              {"name": "A2", "absorbing": True, "r1": -0.2, "r2": 1.0},
              {"name": "A3", "absorbing": True, "r1": 0.3, "r2": 0.3}]
    actions = {"s": {"p1": ["a"], "p2": ["now", "travel"]},
               "t": {"p1": ["a"], "p2": ["now", "travel"]}}
    transitions = [
        {"from": "s", "a": "a", "b": "now", "to": "A1", "p": 1.0},
        {"from": "s", "a": "a", "b": "travel", "to": "t", "p": 0.5},
        {"from": "s", "a": "a", "b": "travel", "to": "A2", "p": 0.5},
        {"from": "t", "a": "a", "b": "now", "to": "A3", "p": 1.0},
        {"from": "t", "a": "a", "b": "travel", "to": "s", "p": 0.5},
        {"from": "t", "a": "a", "b": "travel", "to": "A2", "p": 0.5},
    ]
    return GameSpec.build(states, actions, transitions, omega=0.3)


def uniform_payoff_game(c1: float = 0.2, c2: float = 0.6) -> GameSpec:
    """Every action pair absorbs immediately at the same payoffs."""
    states = [{"name": "s", "absorbing": False},
              {"name": "z", "absorbing": True, "r1": c1, "r2": c2}]
    actions = {"s": {"p1": ["u", "d"], "p2": ["l", "r"]}}
    transitions = [{"from": "s", "a": a, "b": b, "to": "z", "p": 1.0}
                   for a in ("u", "d") for b in ("l", "r")]
    return GameSpec.build(states, actions, transitions, omega=c2)


def pennies_game() -> GameSpec:
    """Absorbing matching-pennies game whose only equilibrium mixes with weights 1/3 and 2/3.

    Player One wants to match (``U L`` or ``D R``), Player Two to mismatch.
    Pure best replies cycle, so best-reply dynamics need many damped steps.
    """
    pay = {("U", "L"): (0.5, 0.2), ("U", "R"): (-0.5, 0.8),
           ("D", "L"): (-0.5, 0.8), ("D", "R"): (0.0, 0.5)}
    states = [{"name": "s", "absorbing": False}]
    transitions = []
    for (a, b), (r1, r2) in pay.items():
        z = f"z{a}{b}"
        states.append({"name": z, "absorbing": True, "r1": r1, "r2": r2})
        transitions.append({"from": "s", "a": a, "b": b, "to": z, "p": 1.0})
    actions = {"s": {"p1": ["U", "D"], "p2": ["L", "R"]}}
    return GameSpec.build(states, actions, transitions, omega=0.2)
