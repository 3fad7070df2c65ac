"""Driving the toolkit from the command line.

A game file is written to a temporary directory, then validated, analysed
and solved through ``absorb-eq``.  Reports are canonical JSON, so repeated
runs with the same seed are byte-identical.
"""

import json
import tempfile
from pathlib import Path

from absorbeq.cli import main
from absorbeq.fixtures import g2_choice_game
from absorbeq.gamefile import serialize_game

work = Path(tempfile.mkdtemp())
game = work / "g2_choice.json"
game.write_text(serialize_game(g2_choice_game()))
profile = work / "travel.json"
profile.write_text(json.dumps({"y": {"s": {"travel": "1"}, "t": {"travel": "1"}}}))


def run(*args):
    out = work / "report.json"
    code = main([*map(str, args), "--output", str(out)])
    return code, json.loads(out.read_text())


code, rep = run("validate", game)
print("validate exit", code)

code, rep = run("fixed-point", game)
print("fixed-point exit", code, "residual", rep["result"]["residual"])

code, rep = run("verify", game, "--profile", profile)
print("verify exit", code, "verdict", rep["result"]["verdict"])

code, first = run("simulate", game, "--profile", profile, "--runs", "2000", "--seed", "5")
code, second = run("simulate", game, "--profile", profile, "--runs", "2000", "--seed", "5")
print("simulate reports identical:", first == second)
