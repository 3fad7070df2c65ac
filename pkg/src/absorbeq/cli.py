"""Command-line front end.

Every command reads a game file (and usually a profile file), runs one
pipeline and writes a report.  Structured reports are canonical JSON with
``"schema": "absorb-eq/1"``; each numeric result is paired with the
tolerance or confidence interval it was checked against.

Exit status: 0 success, 1 internal error, 2 parse error, 3 validation
failure, 4 fixed-point search not converged, 5 certification failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .auxeval import AuxParams, exit_identity_residual, harmonic_identity_residual, xi_monte_carlo, xi_values
from .chain import RESIDUAL_TOL
from .fixed_point import SolverSettings, diagnose_candidate, find_fixed_point
from .game import ProfileEvaluation, StrategyProfile, validate_game
from .gamefile import (
    GameFileError,
    GameValidationError,
    dumps,
    parse_game,
    profile_to_dict,
    read_profile,
)
from .transforms import ExitSystem, contract, simplify_below
from .verifier import (
    NonAbsorbingProfileError,
    certify_profile,
    simulate_test_and_punish,
    test_and_punish_gap,
)
from .zerosum import GAP_TOL, discounted_values

SCHEMA = "absorb-eq/1"
EXIT_OK, EXIT_INTERNAL, EXIT_PARSE, EXIT_VALIDATION, EXIT_NONCONVERGED, EXIT_CERT = 0, 1, 2, 3, 4, 5
COMMANDS = ("validate", "analyze", "solve-zerosum", "aux-eval", "fixed-point", "transform",
            "verify", "simulate")


@dataclass
class RunConfig:
    """Parameters of one command invocation (echoed in every report)."""

    command: str
    game: str
    profile: str | None = None
    eps: float = 0.1
    eps_bar: float = 0.1
    delta: float = 0.1
    alpha: float = 0.1
    q1: float = 10.0
    q2: float = 10.0
    tol: float = 1e-10
    seed: int = 0
    runs: int = 10000
    horizon: int | None = None
    max_iters: int = 200
    restarts: int = 16
    grid: bool = True
    gamma: float = 0.05
    blocks: str | None = None
    state: str | None = None
    move: str | None = None
    exact_gap: bool = False
    n: int | None = None
    format: str = "json"
    output: str | None = None
    extra: dict = field(default_factory=dict)

    def echo(self) -> dict:
        d = asdict(self)
        d.pop("extra")
        d.pop("output")
        d.pop("format")
        d["game"] = Path(self.game).name
        if self.profile:
            d["profile"] = Path(self.profile).name
        return d


def _clean(obj):
    """Make a report JSON-safe and deterministic."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def _q(value, tol):
    return {"value": value, "tol": tol}


def _name_keys(spec, table):
    """Replace state indices (or ``(state, move)`` pairs) in keys by names."""
    out = {}
    for key, v in table.items():
        if isinstance(key, tuple):
            s, b = key
            out[f"{spec.names[s]}/{spec.actions2[s][b]}"] = v
        else:
            out[spec.names[key]] = v
    return out


def _named(spec, arr, tol, states=None):
    states = range(spec.n) if states is None else states
    return {spec.names[s]: _q(float(arr[s]), tol) for s in states}


# --------------------------------------------------------------------------
# commands


def _profile(cfg, spec):
    if cfg.profile is None:
        raise GameFileError("this command needs --profile", "--profile")
    return read_profile(cfg.profile, spec)


def cmd_validate(cfg, spec):
    rep = validate_game(spec)
    return EXIT_OK if rep.ok else EXIT_VALIDATION, {
        "ok": rep.ok, "issues": [list(i) for i in rep.issues],
        "p2_can_force_absorption": rep.is_absorbing_forcible_p2,
        "states": spec.n, "nonabsorbing": int(spec.nonabsorbing.size)}


def cmd_analyze(cfg, spec):
    prof = _profile(cfg, spec)
    ev = ProfileEvaluation(spec, prof)
    an = ev.analysis
    N = [int(s) for s in spec.nonabsorbing]
    names = spec.names
    tol = RESIDUAL_TOL
    moves = {}
    for s in N:
        for k, table in ((1, ev.moves1[s]), (2, ev.moves2[s])):
            acts = spec.actions1[s] if k == 1 else spec.actions2[s]
            for c, st in table.items():
                moves[f"{names[s]}/p{k}/{acts[c]}"] = {
                    "freq": _q(st.freq, 0.0), "g": _q(st.g, tol), "nu": _q(st.nu, tol),
                    "w1": _q(st.w1, tol), "w2": _q(st.w2, tol)}
    return EXIT_OK, {
        "absorbing": ev.absorbing,
        "trapped": [names[i] for c in ev.chain.trapped_classes for i in c],
        "a": _named(spec, an.a, tol, N),
        "esc": {names[t]: {names[s]: _q(float(an.esc[t, s]), tol) for s in N if s != t} for t in N},
        "mu": {names[t]: {names[s]: _q(float(an.mu[t, s]), tol) for s in N if s != t} for t in N},
        "r1": _named(spec, ev.r1, tol), "r2": _named(spec, ev.r2, tol),
        "moves": moves,
        "identity_residuals": {k: _q(v, 1e-9) for k, v in an.identity_residuals().items()},
    }


def cmd_solve_zerosum(cfg, spec):
    tb = discounted_values(spec, cfg.alpha, cfg.tol, eps=cfg.eps)
    out = {"alpha": cfg.alpha, "c_alpha": _named(spec, tb.c_alpha, cfg.tol),
           "c1": _named(spec, tb.c1, cfg.eps / 4), "c2": _named(spec, tb.c2, cfg.eps / 4),
           "alpha1": tb.alpha1, "alpha2": tb.alpha2, "bellman_iterations": len(tb.residuals),
           "matrix_game_gap_tol": GAP_TOL}
    return EXIT_OK, out


def _aux_params(cfg, spec):
    return AuxParams.for_game(spec, cfg.eps_bar, cfg.delta, cfg.q1, cfg.q2)


def cmd_aux_eval(cfg, spec):
    prof = _profile(cfg, spec)
    ev = ProfileEvaluation(spec, prof)
    if not ev.absorbing:
        raise NonAbsorbingProfileError("auxiliary evaluation needs an absorbing profile")
    params = _aux_params(cfg, spec)
    aux = xi_values(ev, params)
    names = spec.names
    tol = 1e-9
    out = {
        "params": {"eps_bar": params.eps_bar, "delta": params.delta, "Q1": params.Q1,
                   "Q2": params.Q2, "log_K": params.log_K},
        "states": {names[s]: {"xi": _q(aux.xi[s], tol), "a": _q(aux.a[s], tol),
                              "a_tilde": _q(aux.a_tilde[s], tol),
                              "log_w_tilde": _q(aux.log_w_tilde[s], tol),
                              "r2": _q(aux.r2[s], tol)} for s in aux.xi},
        "moves": {f"{names[s]}/{spec.actions2[s][b]}": {
            "xi": _q(m.xi, tol), "g": _q(m.g, tol), "g_tilde": _q(m.g_tilde, tol),
            "g_bar": _q(m.g_bar, tol), "v2_tilde": _q(m.v2_tilde, tol)}
            for (s, b), m in sorted(aux.moves.items())},
        "consistency": _q(aux.consistency, tol),
        "exit_identity_residual": _q(exit_identity_residual(aux), tol),
        "harmonic_identity_residual": _q(harmonic_identity_residual(aux), tol),
    }
    if cfg.state is not None and cfg.move is not None:
        s = spec.index(cfg.state)
        b = spec.actions2[s].index(cfg.move)
        mc = xi_monte_carlo(spec, prof, s, b, params, runs=cfg.runs, horizon=cfg.horizon,
                            seed=cfg.seed, aux=aux)
        out["monte_carlo"] = {"state": cfg.state, "move": cfg.move, "estimate": mc.estimate,
                              "ci99": [mc.estimate - mc.halfwidth, mc.estimate + mc.halfwidth],
                              "closed_form": mc.closed_form, "covers": mc.covers,
                              "runs": mc.runs, "horizon": mc.horizon, "tail_mass": mc.tail_mass}
    return EXIT_OK, out


def cmd_fixed_point(cfg, spec):
    tb = discounted_values(spec, cfg.alpha, cfg.tol)
    params = _aux_params(cfg, spec)
    settings = SolverSettings(max_iters=cfg.max_iters, restarts=cfg.restarts, grid=cfg.grid,
                              seed=cfg.seed)
    initial = read_profile(cfg.profile, spec) if cfg.profile else None
    cand = find_fixed_point(spec, tb, params, settings, initial)
    out = {"converged": cand.converged, "residual": _q(cand.residual, cand.tol),
           "method": cand.method, "restart": cand.restart, "evaluations": cand.iterations,
           "profile": profile_to_dict(spec, cand.profile)}
    if cand.converged:
        diag = diagnose_candidate(spec, cand, tb, params)
        out["diagnosis"] = {"checks": {k: {"ok": v["ok"]} for k, v in diag.checks.items()},
                            "margins": {k: _name_keys(spec, v.get("margins", {}))
                                        for k, v in diag.checks.items()},
                            "regime": diag.regime,
                            "cases": {spec.names[s]: c for s, c in diag.cases.items()}}
    return (EXIT_OK if cand.converged else EXIT_NONCONVERGED), out


def cmd_transform(cfg, spec):
    prof = _profile(cfg, spec)
    ev = ProfileEvaluation(spec, prof)
    out = {}
    if cfg.blocks:
        blocks = [[b.strip() for b in blk.split(",") if b.strip()] for blk in cfg.blocks.split(";")]
        ex = ExitSystem.default(ev.chain, blocks)
        res = contract(ev.chain, ex, boundary=spec.r2)
        out["contraction"] = {
            "delta": _q(res.delta, 0.0), "nontrivial_blocks": res.n_blocks,
            "hypothesis_ok": res.hypothesis_ok,
            "checks": {k: v for k, v in res.checks.items()},
            "contracted_states": list(res.contracted.names),
            "contracted_P": res.contracted.P}
    simp = simplify_below(prof, cfg.gamma)
    new = simp.result
    ev2 = ProfileEvaluation(spec, new)
    removed = {f"{spec.names[s]}/p{k}": v for (s, k), v in simp.removed.items()}
    dev = {}
    if ev.absorbing and ev2.absorbing:
        dev = {"r1": _q(float(np.max(np.abs(ev.r1 - ev2.r1))), 1e-9),
               "r2": _q(float(np.max(np.abs(ev.r2 - ev2.r2))), 1e-9)}
    out["simplify"] = {"gamma": cfg.gamma, "removed": removed, "absorbing": ev2.absorbing,
                       "payoff_change": dev, "profile": profile_to_dict(spec, new)}
    return EXIT_OK, out


def cmd_verify(cfg, spec):
    prof = _profile(cfg, spec)
    tb = discounted_values(spec, cfg.alpha, cfg.tol, eps=cfg.eps)
    cert = certify_profile(spec, prof, cfg.eps, n=cfg.n, tables=tb)
    names = spec.names
    out = {"verdict": cert.verdict, "eps": cfg.eps, "delta": _q(cert.delta, cert.budget),
           "delta_budget": cert.budget, "n": cert.n, "M": cert.M,
           "value_margins": {f"p{k}/{names[s]}": _q(m, 1e-9) for (k, s), m in cert.value_margins.items()},
           "move_margins": {f"p{k}/{names[s]}/{(spec.actions1 if k == 1 else spec.actions2)[s][c]}":
                            _q(m, 1e-9) for (k, s, c), m in cert.move_margins.items()},
           "witnesses": [list(w) for w in cert.witnesses],
           "punishment_accuracy": cfg.eps / 4}
    ok = cert.certified
    if cfg.exact_gap:
        gap = test_and_punish_gap(spec, prof, cfg.eps, tb)
        out["deviation_gap"] = {f"p{k}/{names[s]}": _q(g, 4 * cfg.eps) for (k, s), g in gap.gaps.items()}
        out["deviation_gap_ok"] = gap.certified
        ok = ok and gap.certified
    return (EXIT_OK if ok else EXIT_CERT), out


def cmd_simulate(cfg, spec):
    prof = _profile(cfg, spec)
    rep = simulate_test_and_punish(spec, prof, cfg.eps, cfg.runs, cfg.seed,
                                   start=cfg.state, horizon=cfg.horizon)
    return EXIT_OK, {
        "runs": rep.runs, "horizon": rep.horizon, "start": spec.names[rep.start],
        "punishment_frequency": {"value": rep.punishment_frequency, "ci99": list(rep.punishment_ci)},
        "horizon_frequency": rep.horizon_frequency, "clean_frequency": rep.clean_frequency,
        "absorption_frequency": rep.absorption_frequency,
        "mean_absorption_stage": rep.mean_absorption_stage,
        "max_statistic": float(rep.stat_max.max()) if rep.runs else 0.0,
        "bound": 2 * cfg.eps}


HANDLERS = {"validate": cmd_validate, "analyze": cmd_analyze, "solve-zerosum": cmd_solve_zerosum,
            "aux-eval": cmd_aux_eval, "fixed-point": cmd_fixed_point, "transform": cmd_transform,
            "verify": cmd_verify, "simulate": cmd_simulate}


# --------------------------------------------------------------------------
# plumbing


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="absorb-eq", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        c = sub.add_parser(name)
        c.add_argument("game")
        c.add_argument("--profile")
        c.add_argument("--seed", type=int, default=0)
        c.add_argument("--format", choices=("json", "text"), default="json")
        c.add_argument("--output")
        c.add_argument("--eps", type=float, default=0.1)
        c.add_argument("--eps-bar", type=float, default=0.1)
        c.add_argument("--delta", type=float, default=0.1)
        c.add_argument("--alpha", type=float, default=0.1)
        c.add_argument("--q1", type=float, default=10.0)
        c.add_argument("--q2", type=float, default=10.0)
        c.add_argument("--tol", type=float, default=1e-10)
        c.add_argument("--runs", type=int, default=10000)
        c.add_argument("--horizon", type=int)
        c.add_argument("--max-iters", type=int, default=200)
        c.add_argument("--restarts", type=int, default=16)
        c.add_argument("--no-grid", dest="grid", action="store_false")
        c.add_argument("--gamma", type=float, default=0.05)
        c.add_argument("--blocks", help="blocks as 's,t;u'")
        c.add_argument("--state")
        c.add_argument("--move")
        c.add_argument("--exact-gap", action="store_true")
        c.add_argument("--n", type=int)
    return p


def _check_ranges(cfg: RunConfig):
    checks = [(0 < cfg.eps < 0.5, "--eps must lie in (0, 1/2)"),
              (0 < cfg.eps_bar < 1, "--eps-bar must lie in (0, 1)"),
              (cfg.delta >= 0, "--delta must be non-negative"),
              (0 < cfg.alpha < 1, "--alpha must lie in (0, 1)"),
              (cfg.q1 > 1 and cfg.q2 > 1, "--q1 and --q2 must exceed 1"),
              (cfg.runs > 0, "--runs must be positive"),
              (cfg.max_iters > 0 and cfg.restarts > 0, "--max-iters and --restarts must be positive"),
              (0 < cfg.gamma < 1, "--gamma must lie in (0, 1)")]
    for ok, msg in checks:
        if not ok:
            raise GameFileError(msg, "arguments")


def _text(obj, indent=0) -> str:
    pad = "  " * indent
    lines = []
    if isinstance(obj, dict):
        if set(obj) == {"value", "tol"}:
            return f"{obj['value']} (tol {obj['tol']})"
        for k in sorted(obj):
            v = obj[k]
            if isinstance(v, (dict, list)) and not (isinstance(v, dict) and set(v) == {"value", "tol"}):
                lines.append(f"{pad}{k}:")
                lines.append(_text(v, indent + 1))
            else:
                lines.append(f"{pad}{k}: {_text(v)}")
        return "\n".join(lines)
    if isinstance(obj, list):
        return "\n".join(f"{pad}- {_text(v)}" for v in obj) if obj else f"{pad}[]"
    return str(obj)


def run(cfg: RunConfig) -> tuple[int, dict]:
    """Execute one command; returns the exit status and the report."""
    report = {"schema": SCHEMA, "command": cfg.command, "config": cfg.echo()}
    try:
        _check_ranges(cfg)
        spec = parse_game(Path(cfg.game).read_text(encoding="utf-8"),
                          validate=cfg.command != "validate")
        status, result = HANDLERS[cfg.command](cfg, spec)
        report["result"] = result
    except GameFileError as e:
        status, report["error"] = EXIT_PARSE, {"kind": "parse", "message": str(e),
                                               "location": e.location}
    except GameValidationError as e:
        status, report["error"] = EXIT_VALIDATION, {
            "kind": "validation", "issues": [list(i) for i in e.report.issues]}
    except NonAbsorbingProfileError as e:
        status, report["error"] = EXIT_CERT, {"kind": "non-absorbing", "message": str(e)}
    except OSError as e:
        status, report["error"] = EXIT_PARSE, {"kind": "io", "message": f"{e.strerror}: {e.filename}"}
    except Exception as e:  # reported, never silent
        status, report["error"] = EXIT_INTERNAL, {"kind": "internal",
                                                  "message": f"{type(e).__name__}: {e}"}
    report["exit_status"] = status
    return status, _clean(report)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = RunConfig(**{k: v for k, v in vars(args).items()})
    status, report = run(cfg)
    text = dumps(report) if cfg.format == "json" else _text(report) + "\n"
    if cfg.output:
        Path(cfg.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return status


if __name__ == "__main__":
    raise SystemExit(main())
