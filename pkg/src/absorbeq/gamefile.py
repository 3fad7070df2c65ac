"""JSON game and profile files with exact decimal probabilities.

Game file::

    {"omega": "0.3",
     "states": [{"name": "s", "absorbing": false},
                {"name": "z", "absorbing": true, "r1": "0.1", "r2": "0.4"}],
     "actions": {"s": {"p1": ["a"], "p2": ["b"]}},
     "transitions": [{"from": "s", "a": "a", "b": "b", "to": "z", "p": "1"}]}

Profile file::

    {"x": {"s": {"a": "1"}}, "y": {"s": {"b": "1"}}}

Numbers may be given as decimal strings or JSON numbers; both are read
exactly.  Each action pair's transition is normalised exactly when its sum is
within ``1e-9`` of one but further than ``1e-12`` from it; closer sums are
float round-off and are kept as written, so serialisation round-trips.  Serialisation is canonical: sorted keys, shortest
round-trip decimal strings, states and transitions in file order.
"""

from __future__ import annotations

import json
from decimal import Decimal, InvalidOperation
from fractions import Fraction
from pathlib import Path

import numpy as np

from .game import ABSORBING_ACTION, GameSpec, StrategyProfile, validate_game

NORMALIZE_TOL = Fraction(1, 10 ** 9)
FLOAT_TOL = Fraction(1, 10 ** 12)     # rows written from floats already sum to one this closely


class GameFileError(ValueError):
    """Malformed file; ``location`` is a line number or a field path."""

    def __init__(self, message: str, location: str = ""):
        super().__init__(f"{location}: {message}" if location else message)
        self.location = location


class GameValidationError(ValueError):
    def __init__(self, report):
        super().__init__("; ".join(f"{w}: {m}" for w, m in report.issues))
        self.report = report


def _load(text: str):
    try:
        return json.loads(text, parse_float=Decimal, parse_int=Decimal)
    except json.JSONDecodeError as e:
        raise GameFileError(e.msg, f"line {e.lineno} column {e.colno}") from None


def _exact(value, where) -> Fraction:
    if isinstance(value, bool) or not isinstance(value, (str, Decimal)):
        raise GameFileError("expected a decimal number", where)
    try:
        d = Decimal(value)
    except InvalidOperation:
        raise GameFileError(f"not a decimal number: {value!r}", where) from None
    if not d.is_finite():
        raise GameFileError("number must be finite", where)
    return Fraction(d)


def _need(obj, key, kind, where):
    if not isinstance(obj, dict) or key not in obj:
        raise GameFileError(f"missing field {key!r}", where)
    v = obj[key]
    if kind is not None and not isinstance(v, kind):
        raise GameFileError(f"field {key!r} has the wrong type", f"{where}.{key}")
    return v


def parse_game(text: str, validate: bool = True) -> GameSpec:
    """Parse a game from JSON text.

    Raises
    ------
    GameFileError
        Syntax errors (with line and column) and structural errors (with the
        field path), including negative probabilities.
    GameValidationError
        When ``validate`` is set and :func:`validate_game` reports issues.
    """
    doc = _load(text)
    if not isinstance(doc, dict):
        raise GameFileError("top level must be an object", "$")
    states = _need(doc, "states", list, "$")
    actions = _need(doc, "actions", dict, "$")
    transitions = _need(doc, "transitions", list, "$")
    omega = _exact(_need(doc, "omega", None, "$"), "$.omega")
    recs, names, absorbing = [], [], {}
    for i, st in enumerate(states):
        where = f"$.states[{i}]"
        name = _need(st, "name", str, where)
        if name in absorbing:
            raise GameFileError(f"duplicate state {name!r}", where)
        ab = _need(st, "absorbing", bool, where)
        rec = {"name": name, "absorbing": ab}
        if ab:
            rec["r1"] = float(_exact(_need(st, "r1", None, where), f"{where}.r1"))
            rec["r2"] = float(_exact(_need(st, "r2", None, where), f"{where}.r2"))
        names.append(name)
        absorbing[name] = ab
        recs.append(rec)
    acts = {}
    for nm, table in actions.items():
        where = f"$.actions.{nm}"
        if nm not in absorbing:
            raise GameFileError(f"unknown state {nm!r}", where)
        p1 = _need(table, "p1", list, where)
        p2 = _need(table, "p2", list, where)
        for key, lst in (("p1", p1), ("p2", p2)):
            if not lst or not all(isinstance(a, str) for a in lst) or len(set(lst)) != len(lst):
                raise GameFileError("actions must be distinct strings", f"{where}.{key}")
        acts[nm] = {"p1": list(p1), "p2": list(p2)}
    for nm in names:
        if not absorbing[nm] and nm not in acts:
            raise GameFileError(f"no actions for non-absorbing state {nm!r}", "$.actions")
    mass, order = {}, []
    for i, tr in enumerate(transitions):
        where = f"$.transitions[{i}]"
        src = _need(tr, "from", str, where)
        dst = _need(tr, "to", str, where)
        a = _need(tr, "a", str, where)
        b = _need(tr, "b", str, where)
        for key, nm in (("from", src), ("to", dst)):
            if nm not in absorbing:
                raise GameFileError(f"unknown state {nm!r}", f"{where}.{key}")
        table = acts.get(src, {"p1": [ABSORBING_ACTION], "p2": [ABSORBING_ACTION]})
        if a not in table["p1"]:
            raise GameFileError(f"unknown action {a!r}", f"{where}.a")
        if b not in table["p2"]:
            raise GameFileError(f"unknown action {b!r}", f"{where}.b")
        p = _exact(_need(tr, "p", None, where), f"{where}.p")
        if p < 0:
            raise GameFileError("negative probability", f"{where}.p")
        key = (src, a, b)
        if key not in mass:
            mass[key] = {}
        mass[key][dst] = mass[key].get(dst, Fraction(0)) + p
        order.append((key, dst))
    recs_tr = []
    seen = set()
    for key, dst in order:
        total = sum(mass[key].values())
        if FLOAT_TOL < abs(total - 1) <= NORMALIZE_TOL:
            prob = mass[key][dst] / total
        else:
            prob = mass[key][dst]
        if (key, dst) in seen:
            continue
        seen.add((key, dst))
        recs_tr.append({"from": key[0], "a": key[1], "b": key[2], "to": dst, "p": float(prob)})
    spec = GameSpec.build(recs, acts, recs_tr, float(omega))
    if validate:
        report = validate_game(spec)
        if not report.ok:
            raise GameValidationError(report)
    return spec


def read_game(path, validate: bool = True) -> GameSpec:
    return parse_game(Path(path).read_text(encoding="utf-8"), validate)


def _num(v: float) -> str:
    v = float(v)
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def game_to_dict(spec: GameSpec) -> dict:
    states = []
    for s in range(spec.n):
        rec = {"name": spec.names[s], "absorbing": bool(spec.absorbing[s])}
        if spec.absorbing[s]:
            rec["r1"] = _num(spec.r1[s])
            rec["r2"] = _num(spec.r2[s])
        states.append(rec)
    actions = {spec.names[s]: {"p1": list(spec.actions1[s]), "p2": list(spec.actions2[s])}
               for s in spec.nonabsorbing}
    transitions = []
    for s in range(spec.n):
        k = spec.kernel[s]
        for a in range(k.shape[0]):
            for b in range(k.shape[1]):
                for t in np.flatnonzero(k[a, b] > 0):
                    if spec.absorbing[s] and t == s:
                        continue
                    transitions.append({"from": spec.names[s], "a": spec.actions1[s][a],
                                        "b": spec.actions2[s][b], "to": spec.names[t],
                                        "p": _num(k[a, b, t])})
    return {"omega": _num(spec.omega), "states": states, "actions": actions,
            "transitions": transitions}


def dumps(obj) -> str:
    """Canonical JSON text: sorted keys, two-space indent, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def serialize_game(spec: GameSpec) -> str:
    return dumps(game_to_dict(spec))


def write_game(spec: GameSpec, path) -> None:
    Path(path).write_text(serialize_game(spec), encoding="utf-8")


def profile_to_dict(spec: GameSpec, profile: StrategyProfile) -> dict:
    out = {"x": {}, "y": {}}
    for s in spec.nonabsorbing:
        nm = spec.names[s]
        out["x"][nm] = {a: _num(p) for a, p in zip(spec.actions1[s], profile.x[s])}
        out["y"][nm] = {b: _num(p) for b, p in zip(spec.actions2[s], profile.y[s])}
    return out


def serialize_profile(spec: GameSpec, profile: StrategyProfile) -> str:
    return dumps(profile_to_dict(spec, profile))


def parse_profile(text: str, spec: GameSpec) -> StrategyProfile:
    """Parse a profile; omitted single-action states default to that action.

    Raises
    ------
    GameFileError
    """
    doc = _load(text)
    if not isinstance(doc, dict):
        raise GameFileError("top level must be an object", "$")
    tables = []
    for key in ("x", "y"):
        table = doc.get(key, {})
        if not isinstance(table, dict):
            raise GameFileError("expected an object", f"$.{key}")
        out = {}
        for nm, dist in table.items():
            where = f"$.{key}.{nm}"
            if nm not in spec.names:
                raise GameFileError(f"unknown state {nm!r}", where)
            s = spec.index(nm)
            acts = spec.actions1[s] if key == "x" else spec.actions2[s]
            if not isinstance(dist, dict):
                raise GameFileError("expected an action -> probability object", where)
            probs = {}
            for a, p in dist.items():
                if a not in acts:
                    raise GameFileError(f"unknown action {a!r}", f"{where}.{a}")
                q = _exact(p, f"{where}.{a}")
                if q < 0:
                    raise GameFileError("negative probability", f"{where}.{a}")
                probs[a] = q
            total = sum(probs.values())
            if total <= 0 or abs(total - 1) > NORMALIZE_TOL:
                raise GameFileError(f"probabilities sum to {float(total)}", where)
            out[nm] = {a: float(q / total) for a, q in probs.items()}
        tables.append(out)
    try:
        return StrategyProfile.from_mapping(spec, tables[0], tables[1])
    except ValueError as e:
        raise GameFileError(str(e), "$") from None


def read_profile(path, spec: GameSpec) -> StrategyProfile:
    return parse_profile(Path(path).read_text(encoding="utf-8"), spec)
