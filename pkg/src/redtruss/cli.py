"""Command-line front end: ``redtruss <command> ...``.

Exit codes
----------
0  success
2  usage error
3  bad input (instance/design/config file, out-of-range option)
4  mechanism or overload: the load case cannot be carried at any load factor
5  unbounded load factor
6  nominal violation: the intact design misses the performance requirement
7  optimizer failure (unstable start, broken direction subproblem)
8  LP solver failure
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import logging
import math
import os
import sys
import time
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .limit import LimitStatus, classical_limit_design, limit_load_factor
from .lp import LpError
from .model import (
    DamageScenario,
    Design,
    GroundStructure,
    ModelError,
    builtin_example,
    dump_instance,
    instance_dict,
    load_instance,
    volume,
)
from .render import draw_design, draw_trace
from .sqp import BFGS_MODES, SqpConfig, SqpError, run
from .worstcase import NOMINAL_VIOLATION, strong_redundancy, worst_case

log = logging.getLogger("redtruss")

REPORT_SCHEMA_VERSION = 1
THREADS_ENV = "REDTRUSS_THREADS"

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_MECHANISM = 4
EXIT_UNBOUNDED = 5
EXIT_NOMINAL_VIOLATION = 6
EXIT_OPTIMIZE = 7
EXIT_LP = 8

_STATUS_EXIT = {
    LimitStatus.OPTIMAL: EXIT_OK,
    LimitStatus.MECHANISM_OR_OVERLOAD: EXIT_MECHANISM,
    LimitStatus.UNBOUNDED: EXIT_UNBOUNDED,
}


class InputError(Exception):
    pass


def sig6(v: float) -> str:
    return f"{v:.6g}"


def _num(v):
    """Report value rounded to 6 significant digits; non-finite as strings."""
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    v = float(v)
    if not math.isfinite(v):
        return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
    return float(f"{v:.6g}")


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, int, np.floating, np.integer, np.bool_)):
        return _num(obj)
    return obj


def instance_digest(gs: GroundStructure, design: Design) -> str:
    text = json.dumps(instance_dict(gs, design), sort_keys=True, separators=(",", ":"))
    return "sha256:" + hashlib.sha256(text.encode()).hexdigest()


# -- argument handling -------------------------------------------------------

def _threads(args) -> int:
    if args.threads is not None:
        n = args.threads
    else:
        raw = os.environ.get(THREADS_ENV, "1")
        try:
            n = int(raw)
        except ValueError:
            raise InputError(f"{THREADS_ENV}={raw!r} is not an integer") from None
    if n < 1:
        raise InputError("thread count must be at least 1")
    return n


def _load(args) -> tuple[GroundStructure, Design, dict]:
    if args.example:
        gs, design = builtin_example(args.example)
        source = {"example": args.example}
    else:
        gs, design = load_instance(args.instance)
        source = {"instance": str(args.instance)}
    if getattr(args, "design", None):
        _, other = load_instance(args.design)
        if other.areas.shape != design.areas.shape:
            raise InputError(f"{args.design}: design has {other.areas.size} areas, "
                             f"structure has {gs.n_members} members")
        design = other
        source["design"] = str(args.design)
    return gs, design, source


def _check_alpha(gs: GroundStructure, alpha: int) -> None:
    if not 0 <= alpha <= gs.n_members:
        raise InputError(f"--alpha must lie in [0, {gs.n_members}]")


def _check_gamma(gamma: float) -> None:
    if not 0.0 <= gamma < 1.0:
        raise InputError("--gamma must lie in [0, 1)")


_CONFIG_FLAGS = {
    "radius": "radius",
    "radius_min": "radius_min",
    "eps_direction": "eps_direction",
    "rho": "rho",
    "eta": "eta",
    "beta": "beta",
    "tau_max": "tau_max",
    "bfgs": "bfgs_denominator",
    "max_iterations": "max_iterations",
    "max_seconds": "max_seconds",
}


def sqp_config(args) -> SqpConfig:
    """Built-in defaults, then the config file, then explicit flags."""
    cfg = SqpConfig()
    known = {f.name for f in fields(SqpConfig)}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise InputError(f"{args.config}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
        if not isinstance(data, dict):
            raise InputError(f"{args.config}: top level must be an object")
        unknown = sorted(set(data) - known)
        if unknown:
            raise InputError(f"{args.config}: unknown keys {unknown}")
        cfg = replace(cfg, **data)
    flags = {dst: getattr(args, src) for src, dst in _CONFIG_FLAGS.items() if getattr(args, src) is not None}
    cfg = replace(cfg, **flags, threads=_threads(args))
    try:
        cfg.validate()
    except ValueError as exc:
        raise InputError(f"configuration: {exc}") from None
    return cfg


# -- reports -----------------------------------------------------------------

def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_report(args, out: Path, mode: str, gs, design, source, inputs, results, started) -> Path:
    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "tool": f"redtruss {__version__}",
        "mode": mode,
        "instance_digest": instance_digest(gs, design),
        "source": source,
        "inputs": inputs,
        "structure": {"members": gs.n_members, "free_dofs": gs.n_dof,
                      "volume_budget_mm3": design.volume_budget},
        "results": results,
    }
    if not args.no_timestamp:
        report["created"] = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
        report["wall_time_s"] = time.perf_counter() - started
    path = out / "report.json"
    path.write_text(json.dumps(_clean(report), indent=2) + "\n", encoding="utf-8")
    return path


def _scenario_rows(minimizers) -> list[list[int]]:
    return [list(s.damaged) for s in minimizers]


def _forces_csv(path: Path, forces) -> None:
    lines = ["member_id,force_N"] + [f"{i},{sig6(q)}" for i, q in enumerate(forces)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# -- commands ----------------------------------------------------------------

def cmd_analyze(args) -> int:
    started = time.perf_counter()
    gs, design, source = _load(args)
    res = limit_load_factor(gs, design.areas)
    out = _out_dir(args)
    print(f"status        {res.status.value}")
    print(f"load factor   {sig6(res.load_factor)}")
    for i, q in enumerate(res.forces):
        print(f"  member {i:3d}  force {sig6(q)} N")
    _forces_csv(out / "forces.csv", res.forces)
    draw_design(gs, design.areas, out / "design.svg", title="design")
    _write_report(args, out, "analyze", gs, design, source, {"areas_mm2": design.areas},
                  {"status": res.status.value, "load_factor": res.load_factor,
                   "f_value": res.f_value, "forces_N": res.forces}, started)
    return _STATUS_EXIT[res.status]


def cmd_worst_case(args) -> int:
    started = time.perf_counter()
    gs, design, source = _load(args)
    _check_alpha(gs, args.alpha)
    _check_gamma(args.gamma)
    res = worst_case(gs, design.areas, args.alpha, args.gamma)
    out = _out_dir(args)
    print(f"alpha         {args.alpha}")
    print(f"worst lambda  {sig6(res.worst_lambda)}")
    print(f"f             {sig6(res.f_value)}")
    print(f"multiplicity  {res.multiplicity}")
    for s in res.minimizers:
        print(f"  damaged {list(s.damaged)}")
    text = res.to_csv()
    if not args.all_scenarios:
        lines = text.splitlines()
        text = "\n".join(lines[:1] + [ln for ln in lines[1:] if ln.endswith(",1")]) + "\n"
    (out / "scenarios.csv").write_text(text, encoding="utf-8")
    damaged = res.minimizers[0].damaged if res.minimizers else ()
    draw_design(gs, design.areas, out / "worst_scenario.svg", damaged,
                title=f"worst scenario, alpha={args.alpha}")
    _write_report(args, out, "worst-case", gs, design, source,
                  {"alpha": args.alpha, "gamma": args.gamma, "areas_mm2": design.areas},
                  {"worst_lambda": res.worst_lambda, "f_value": res.f_value,
                   "multiplicity": res.multiplicity, "minimizers": _scenario_rows(res.minimizers),
                   "lp_count": res.lp_count}, started)
    return EXIT_OK if math.isfinite(res.worst_lambda) else EXIT_MECHANISM


def cmd_optimize(args) -> int:
    started = time.perf_counter()
    gs, design, source = _load(args)
    _check_alpha(gs, args.alpha)
    _check_gamma(args.gamma)
    cfg = sqp_config(args)
    out = _out_dir(args)
    with open(out / "trace.csv", "w", encoding="utf-8") as trace:
        def stream(rec):
            trace.write(rec.csv_row() + "\n")
            trace.flush()

        def restart():
            trace.seek(0)
            trace.truncate()
            trace.write("k,r,f,d_norm,step,lp_count\n")

        restart()
        try:
            res = run(gs, args.alpha, design, cfg, args.gamma, on_iteration=stream)
        except SqpError as exc:
            # same policy as sqp.run_with_fallback, but the trace file restarts too
            if args.no_fallback or cfg.bfgs_denominator == "conventional" or "positive definite" not in str(exc):
                raise
            log.warning("%s; rerunning with the conventional BFGS update", exc)
            cfg = replace(cfg, bfgs_denominator="conventional")
            restart()
            res = run(gs, args.alpha, design, cfg, args.gamma, on_iteration=stream)
            res.aborted_qp_solves = exc.qp_solves
    worst = res.worst
    final = res.design
    dump_instance(gs, final, out / "design.json")
    (out / "scenarios.csv").write_text(worst.to_csv(), encoding="utf-8")
    drawn = draw_design(gs, final.areas, out / "design.svg", title=f"optimized design, alpha={args.alpha}")
    if worst.minimizers:
        draw_design(gs, final.areas, out / "worst_scenario.svg", worst.minimizers[0].damaged,
                    title="optimized design, worst scenario")
    ks = [r.k for r in res.trace]
    draw_trace(ks, [r.f for r in res.trace], [r.r for r in res.trace], out / "trace.svg")
    print(f"termination   {res.termination}")
    print(f"worst lambda  {sig6(worst.worst_lambda)}")
    print(f"multiplicity  {worst.multiplicity}")
    print(f"iterations    {res.iterations}")
    print(f"QP solves     {res.qp_solves}")
    print(f"LPs solved    {res.lp_count}")
    _write_report(args, out, "optimize", gs, design, source,
                  {"alpha": args.alpha, "gamma": args.gamma, "config": cfg.as_dict(),
                   "fallback": not args.no_fallback, "initial_areas_mm2": design.areas},
                  {"termination": res.termination, "bfgs_denominator": res.bfgs_denominator,
                   "worst_lambda": worst.worst_lambda, "f_value": worst.f_value,
                   "multiplicity": worst.multiplicity, "minimizers": _scenario_rows(worst.minimizers),
                   "final_areas_mm2": final.areas, "final_volume_mm3": volume(final.areas, gs),
                   "members_drawn": drawn,
                   "counters": {"iterations": res.iterations, "qp_solves": res.qp_solves,
                                "aborted_qp_solves": res.aborted_qp_solves,
                                "objective_evaluations": res.evaluations, "lp_count": res.lp_count,
                                "bfgs_skips": res.bfgs_skips},
                   "final_radius": res.radius}, started)
    return EXIT_OK


def cmd_limit_design(args) -> int:
    started = time.perf_counter()
    gs, design, source = _load(args)
    ld = classical_limit_design(gs, design.volume_budget)
    out = _out_dir(args)
    kept = ld.surviving()
    print(f"load factor   {sig6(ld.load_factor)}")
    print(f"members kept  {kept.size} of {gs.n_members}")
    dump_instance(gs, ld.design, out / "design.json")
    draw_design(gs, ld.design.areas, out / "design.svg", title="limit design")
    _write_report(args, out, "limit-design", gs, design, source,
                  {"volume_budget_mm3": design.volume_budget},
                  {"load_factor": ld.load_factor, "surviving_members": kept,
                   "surviving_count": kept.size, "areas_mm2": ld.design.areas,
                   "forces_N": ld.forces}, started)
    return EXIT_OK


def cmd_redundancy(args) -> int:
    started = time.perf_counter()
    gs, design, source = _load(args)
    _check_gamma(args.gamma)
    alpha_hat = strong_redundancy(gs, design.areas, args.h_c, args.gamma)
    out = _out_dir(args)
    violated = alpha_hat is NOMINAL_VIOLATION
    print("strong redundancy  " + ("NominalViolation" if violated else str(alpha_hat)))
    _write_report(args, out, "redundancy", gs, design, source,
                  {"h_c": args.h_c, "gamma": args.gamma, "areas_mm2": design.areas},
                  {"nominal_violation": violated, "strong_redundancy": None if violated else alpha_hat},
                  started)
    return EXIT_NOMINAL_VIOLATION if violated else EXIT_OK


def _parse_scenario(text: str | None, m: int) -> tuple[int, ...]:
    if not text:
        return ()
    try:
        ids = tuple(int(t) for t in text.replace(",", " ").split())
    except ValueError:
        raise InputError(f"--scenario: expected member ids, got {text!r}") from None
    return DamageScenario(ids, m).damaged


def cmd_render(args) -> int:
    gs, design, _ = _load(args)
    damaged = _parse_scenario(args.scenario, gs.n_members)
    target = Path(args.svg)
    target.parent.mkdir(parents=True, exist_ok=True)
    n = draw_design(gs, design.areas, target, damaged, title=args.title)
    print(f"drew {n} members to {target}")
    return EXIT_OK


def cmd_export_example(args) -> int:
    gs, design = builtin_example(args.name)
    target = Path(args.path)
    target.parent.mkdir(parents=True, exist_ok=True)
    dump_instance(gs, design, target)
    print(f"wrote example {args.name} to {target}")
    return EXIT_OK


# -- parser ------------------------------------------------------------------

def _source_args(p, design: bool = True) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--example", choices=["I", "II"], help="built-in example structure")
    src.add_argument("--instance", type=Path, help="instance JSON file")
    if design:
        p.add_argument("--design", type=Path,
                       help="take areas and budget from this file (instance schema)")


def _common_args(p) -> None:
    p.add_argument("--out", default="redtruss-out", help="output directory (default: %(default)s)")
    p.add_argument("--no-timestamp", action="store_true",
                   help="leave timestamps and wall time out of the report")
    p.add_argument("--threads", type=int, help=f"parallel map width (default: ${THREADS_ENV} or 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="redtruss",
        description="Worst-case limit analysis and redundancy optimization of plane trusses.",
        epilog="exit codes: 0 ok, 2 usage, 3 input, 4 mechanism, 5 unbounded, "
               "6 nominal violation, 7 optimizer failure, 8 LP failure",
    )
    parser.add_argument("--version", action="version", version=f"redtruss {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="limit load factor of the intact design")
    _source_args(p)
    _common_args(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("worst-case", help="worst load factor over damage scenarios")
    _source_args(p)
    _common_args(p)
    p.add_argument("--alpha", type=int, required=True, help="number of damaged members")
    p.add_argument("--gamma", type=float, default=0.0, help="residual area fraction of damaged members")
    p.add_argument("--all-scenarios", action="store_true", help="write every scenario to scenarios.csv")
    p.set_defaults(func=cmd_worst_case)

    p = sub.add_parser("optimize", help="maximise the worst-case load factor")
    _source_args(p)
    _common_args(p)
    p.add_argument("--alpha", type=int, required=True)
    p.add_argument("--gamma", type=float, default=0.0)
    p.add_argument("--config", type=Path, help="JSON file with optimizer settings")
    p.add_argument("--radius", type=float, help="initial stencil radius (mm^2)")
    p.add_argument("--radius-min", type=float, help="stop once the radius drops below this")
    p.add_argument("--eps-direction", type=float, help="stop once the direction norm drops below this")
    p.add_argument("--rho", type=float, help="radius reduction factor")
    p.add_argument("--eta", type=float, help="Armijo sufficient-decrease constant")
    p.add_argument("--beta", type=float, help="backtracking factor")
    p.add_argument("--tau-max", type=int, help="maximum backtracking steps")
    p.add_argument("--max-iterations", type=int)
    p.add_argument("--max-seconds", type=float, help="stop after this much wall time (not reproducible)")
    p.add_argument("--bfgs", choices=list(BFGS_MODES), help="BFGS update denominator")
    p.add_argument("--no-fallback", action="store_true",
                   help="do not retry with the conventional BFGS update after a failure")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("limit-design", help="volume-constrained plastic design without damage")
    _source_args(p, design=True)
    _common_args(p)
    p.set_defaults(func=cmd_limit_design)

    p = sub.add_parser("redundancy", help="largest damage count the design tolerates")
    _source_args(p)
    _common_args(p)
    p.add_argument("--h-c", type=float, required=True,
                   help="performance requirement on f = -load factor")
    p.add_argument("--gamma", type=float, default=0.0)
    p.set_defaults(func=cmd_redundancy)

    p = sub.add_parser("render", help="draw a design as SVG")
    _source_args(p)
    p.add_argument("--scenario", help="damaged member ids to leave out, e.g. '3,7'")
    p.add_argument("--title")
    p.add_argument("--svg", required=True, help="output SVG path")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("export-example", help="write a built-in example as an instance file")
    p.add_argument("name", choices=["I", "II"])
    p.add_argument("path")
    p.set_defaults(func=cmd_export_example)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, ModelError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"redtruss: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SqpError as exc:
        print(f"redtruss: optimization failed: {exc}", file=sys.stderr)
        return EXIT_OPTIMIZE
    except LpError as exc:
        print(f"redtruss: LP failure: {exc}", file=sys.stderr)
        return EXIT_LP


if __name__ == "__main__":
    sys.exit(main())
