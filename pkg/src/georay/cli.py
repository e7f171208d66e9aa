"""``georay`` command line.

Exit codes: 0 success, 1 a check ran and failed, 2 usage or config error,
3 runtime error (start outside the domain, singular metric, I/O failure).
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .config import Scenario, ScenarioError, load_scenario, parse_toml, require, scenario_from_mapping
from .frames import FrameError, ScalarField, derivative_vector, frame_from_metric, gradient_align
from .geodesic import FORMS, compare_traces, convergence_study, trace_many
from .metric import MetricConfigError, MetricError, eval_metric
from .output import emit_csv, emit_svg, report_json
from .snell import snell_experiment
from .wavefront import (
    WavefrontError,
    alpha_max,
    equal_increment_check,
    gradient_alignment_check,
    huygens_tangency_check,
    level_set,
    pair_convergence,
    trace_fan,
)

OK, CHECK_FAILED, USAGE, RUNTIME = 0, 1, 2, 3
PAIR_RATIO = 0.6
INCREMENT_FACTOR = 4.0


def _floats(text: str) -> list:
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _param(text: str) -> tuple:
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    try:
        parsed = parse_toml(f"v = {value}")["v"]
    except ScenarioError:
        parsed = value  # bare strings such as profile=gaussian
    return key.strip(), parsed


def _scenario_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="scenario TOML file")
    p.add_argument("--metric")
    p.add_argument("--param", type=_param, action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--start", type=_floats)
    p.add_argument("--direction", type=_floats)
    p.add_argument("--formulation", choices=FORMS + ("both",))
    p.add_argument("--h", type=float)
    p.add_argument("--max-S", dest="max_S", type=float)
    p.add_argument("--max-r", dest="max_r", type=float)
    p.add_argument("--count", dest="fan_count", type=int)
    p.add_argument("--window", dest="fan_window", type=_floats)
    p.add_argument("--levels", type=_floats)
    p.add_argument("--huygens", type=_floats, metavar="S1,S2")
    p.add_argument("--increment", type=_floats, metavar="SA,SB")
    p.add_argument("--steps", type=_floats)
    p.add_argument("--lam", type=float)
    p.add_argument("--dr", type=float)
    p.add_argument("--halvings", type=int)
    p.add_argument("--tolerance", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--discs", action="store_true", default=None)
    _output_flags(p)


def _output_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--csv")
    p.add_argument("--svg")
    p.add_argument("--report", help="also write the JSON report here")
    p.add_argument("--timing", action="store_true", help="include wall-clock seconds in the report")


SCENARIO_COMMANDS = ("trace", "compare", "fan", "wavefront", "pairs", "frames")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="georay", description="Trace and cross-check geodesics.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    helps = {
        "trace": "trace one geodesic per formulation",
        "compare": "trace under both formulations and report their deviation",
        "fan": "trace a fan of geodesics from one point",
        "wavefront": "fan plus level sets, equal-increment, alignment and Huygens checks",
        "pairs": "pair construction turning-rate estimate versus the transverse gradient",
        "frames": "differential frame of the metric at a point",
    }
    for name in SCENARIO_COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        _scenario_flags(p)
        if name == "frames":
            p.add_argument("--gradient", type=_floats, help="gradient of a linear test function")
    p = sub.add_parser("snell", help="refraction through a smoothed index step")
    p.add_argument("--n1", type=float, default=1.0)
    p.add_argument("--n2", type=float, default=1.5)
    p.add_argument("--angle-deg", type=float, default=30.0)
    p.add_argument("--width", type=float, default=0.01)
    p.add_argument("--h", type=float, default=1e-4)
    p.add_argument("--formulation", choices=FORMS + ("both",), default="both")
    p.add_argument("--tolerance", type=float, default=0.1, help="allowed angle error in degrees")
    _output_flags(p)
    p = sub.add_parser("validate", help="run the acceptance criteria")
    p.add_argument("--only", type=int, action="append", help="criterion number (repeatable)")
    p.add_argument("--report")
    p.add_argument("--timing", action="store_true")
    return parser


def scenario_from_args(args: argparse.Namespace) -> Scenario:
    keys = ("metric", "start", "direction", "formulation", "h", "max_S", "max_r", "fan_count", "fan_window",
            "levels", "huygens", "increment", "steps", "lam", "dr", "halvings", "tolerance", "seed",
            "threads", "discs", "csv", "svg", "report")
    overrides = {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}
    if args.param:
        overrides["params"] = dict(args.param)
    if args.config is not None:
        if "params" in overrides:
            base = parse_toml(args.config.read_text(), str(args.config)).get("params", {}) \
                if args.config.exists() else {}
            overrides["params"] = {**base, **overrides["params"]}
        return load_scenario(args.config, overrides)
    return scenario_from_mapping(overrides, Path.cwd())


# ---------------------------------------------------------------------------
# subcommands; each returns (report body, passed, traces, plot extras)


def _metric(sc: Scenario):
    m = sc.build_metric()
    for key in ("start", "direction"):
        v = getattr(sc, key)
        if v and len(v) != m.dim:
            raise ScenarioError(f"{key} has {len(v)} components, metric {m.label} has dim {m.dim}", key)
    return m


def _trace_summary(tr) -> dict:
    return {"form": tr.form, "samples": len(tr), "S_end": tr.S[-1], "r_end": tr.r[-1],
            "x_end": tr.x[-1], "exited": tr.exited}


def cmd_trace(sc: Scenario):
    require(sc, "start", "direction", "limit")
    m = _metric(sc)
    traces = [trace_many(m, [sc.start], [sc.direction], form, sc.h, **sc.limit)[0] for form in sc.forms]
    return {"traces": [_trace_summary(t) for t in traces]}, True, traces, {}


def cmd_compare(sc: Scenario):
    require(sc, "start", "direction", "limit")
    m = _metric(sc)
    traces = [trace_many(m, [sc.start], [sc.direction], form, sc.h, **sc.limit)[0] for form in FORMS]
    dev = compare_traces(*traces)
    passed = dev.max_distance <= sc.tolerance
    report = {"traces": [_trace_summary(t) for t in traces], "deviation": dev.as_dict(),
              "tolerance": sc.tolerance}
    if sc.steps:
        require(sc, "max_S")
        report["convergence"] = convergence_study(m, sc.start, sc.direction, sc.steps, sc.max_S).as_dict()
    return report, passed, traces, {}


def _fan(sc: Scenario):
    require(sc, "start", "max_S")
    if sc.formulation == "both":
        raise ScenarioError("fans use a single formulation", "formulation")
    return trace_fan(_metric(sc), sc.start, sc.fan_count, sc.formulation, sc.h, sc.max_S,
                     window=tuple(sc.fan_window), seed=sc.seed, threads=sc.threads)


def _fan_report(fan) -> dict:
    return {"count": fan.count, "form": fan.traces[0].form, "closed": fan.closed,
            "flagged": [i for i, t in enumerate(fan.traces) if t.exited],
            "samples": [len(t) for t in fan.traces]}


def cmd_fan(sc: Scenario):
    fan = _fan(sc)
    levels = [level_set(fan, S) for S in sc.levels]
    report = {"fan": _fan_report(fan),
              "levels": [{"S": ls.S, "points": len(ls.points)} for ls in levels]}
    return report, True, fan.traces, {"level_sets": levels}


def cmd_wavefront(sc: Scenario):
    fan = _fan(sc)
    levels = [level_set(fan, S) for S in sc.levels]
    report = {"fan": _fan_report(fan), "levels": [{"S": ls.S, "points": len(ls.points)} for ls in levels]}
    passed = True
    extras = {"level_sets": levels}
    if sc.increment:
        dev = equal_increment_check(fan, *sc.increment)
        bound = INCREMENT_FACTOR * alpha_max(fan) * sc.h
        report["increment"] = {"S": sc.increment, "deviation": dev, "bound": bound, "passed": dev <= bound}
        passed &= dev <= bound
    if sc.huygens:
        S1, S2 = sc.huygens
        rep = huygens_tangency_check(fan, S1, S2)
        report["huygens"] = rep.as_dict()
        report["alignment_angle"] = gradient_alignment_check(fan, S1)
        passed &= rep.passed
        extras["level_sets"] = levels + [level_set(fan, S1), level_set(fan, S2)]
        if sc.discs:
            extras["discs"] = rep.discs
    return report, passed, fan.traces, extras


def cmd_pairs(sc: Scenario):
    require(sc, "start", "direction")
    rows = pair_convergence(_metric(sc), sc.start, sc.direction, sc.lam, sc.dr, sc.halvings)
    errors = [r.error for r in rows]
    passed = all(b <= PAIR_RATIO * a or a == 0.0 for a, b in zip(errors, errors[1:]))
    report = {"rows": [{"lam": r.lam, "dr": r.dr, "estimate": r.estimate, "reference": r.reference,
                        "error": r.error} for r in rows],
              "max_ratio": PAIR_RATIO}
    return report, passed, [], {}


def cmd_frames(sc: Scenario, gradient=None):
    require(sc, "start")
    m = _metric(sc)
    fr = frame_from_metric(m, sc.start)
    rho = eval_metric(m, sc.start)
    res = fr.residuals(rho)
    report = {"point": sc.start, "metric": rho, "A": fr.A, "A_star": fr.A_star, "residuals": res}
    if gradient is not None:
        if len(gradient) != m.dim:
            raise ScenarioError(f"gradient needs {m.dim} components", "gradient")
        g = np.asarray(gradient)
        f = ScalarField(lambda x: float(g @ x), lambda x: g)
        aligned, B = gradient_align(f, fr)
        report.update(derivative=derivative_vector(f, fr), gradient_square=float(g @ np.linalg.solve(rho, g)),
                      rotation=B, aligned_derivative=derivative_vector(f, aligned))
    return report, max(res.values()) <= 1e-10, [], {}


def cmd_snell(args):
    forms = FORMS if args.formulation == "both" else (args.formulation,)
    if not 0 <= args.angle_deg < 90:
        raise ScenarioError("angle must lie in [0, 90) degrees", "angle-deg")
    for key in ("n1", "n2", "width", "h"):
        v = getattr(args, key)
        if not (math.isfinite(v) and v > 0):
            raise ScenarioError(f"{key} must be positive and finite", key)
    results, traces = [], []
    for form in forms:
        res, tr = snell_experiment(args.n1, args.n2, args.angle_deg, args.width, args.h, form)
        results.append(res.as_dict())
        traces.append(tr)
    passed = all(r["error_deg"] <= args.tolerance for r in results)
    return {"results": results, "tolerance_deg": args.tolerance}, passed, traces, {}


def cmd_validate(args):
    from .acceptance import run_all

    results = run_all(set(args.only) if args.only else None, echo=lambda s: print(s, file=sys.stderr))
    report = {"criteria": [{"number": c.number, "name": c.name, "passed": c.passed, "details": c.details}
                           for c in results]}
    if args.timing:
        for entry, c in zip(report["criteria"], results):
            entry["seconds"] = c.seconds
    return report, all(c.passed for c in results), [], {}


# ---------------------------------------------------------------------------


def _dispatch(args):
    if args.command == "snell":
        return cmd_snell(args), args
    if args.command == "validate":
        return cmd_validate(args), args
    sc = scenario_from_args(args)
    handler = {"trace": cmd_trace, "compare": cmd_compare, "fan": cmd_fan,
               "wavefront": cmd_wavefront, "pairs": cmd_pairs}.get(args.command)
    out = cmd_frames(sc, args.gradient) if args.command == "frames" else handler(sc)
    return out, sc


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage to stderr
        return USAGE if exc.code else OK
    t0 = time.perf_counter()
    try:
        (body, passed, traces, extras), src = _dispatch(args)
        report = {"command": args.command, "argv": list(argv) if argv is not None else sys.argv[1:],
                  "status": OK if passed else CHECK_FAILED, "passed": bool(passed), **body}
        if getattr(args, "timing", False):
            report["seconds"] = time.perf_counter() - t0
        csv = getattr(src, "csv", None)
        svg = getattr(src, "svg", None)
        if csv:
            if not traces:
                raise ScenarioError(f"{args.command} produces no traces for CSV output", "csv")
            emit_csv(traces, csv)
        if svg:
            if not traces:
                raise ScenarioError(f"{args.command} produces no traces for SVG output", "svg")
            emit_svg(traces, svg, extras.get("level_sets", ()), extras.get("discs", ()), title=args.command)
        text = report_json(report)
        if getattr(src, "report", None):
            Path(src.report).write_text(text)
        sys.stdout.write(text)
        return report["status"]
    except (ScenarioError, MetricConfigError) as exc:
        key = f" [{exc.key}]" if getattr(exc, "key", None) else ""
        print(f"georay {args.command}: config error{key}: {exc}", file=sys.stderr)
        return USAGE
    except (MetricError, FrameError, WavefrontError, ValueError, RuntimeError, OSError,
            np.linalg.LinAlgError) as exc:
        print(f"georay {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return RUNTIME


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
