"""Command-line interface.

Exit codes: 0 success / condition holds, 1 constraint violation, 2 parse or
usage error, 3 nonlocal box, 4 inadmissible jamming scenario.
"""
from __future__ import annotations

import argparse
import functools
import hashlib
import json
import math
import os
import sys
from pathlib import Path

from . import __version__
from .bell import (
    chsh_of_box,
    classify,
    is_local,
    max_chsh_over_axes,
)
from .boxes import (
    EXACT_TOL,
    FILE_TOL,
    NO_SIGNALING_TOL,
    check_no_signaling,
    correlators,
    validate_box,
)
from .correlations import AxisConfiguration, CorrelationModel, box_at_angles
from .formats import (
    FormatError,
    box_to_structured,
    certificate_to_structured,
    dumps_structured,
    load_box,
    load_scenario,
    parse_angle,
    tally_to_csv,
    tally_to_structured,
)
from .jamming import ButtonSchedule, JammingScenario, check_scenario, simulate_jamming
from .sampler import (
    ExperimentPlan,
    SettingSchedule,
    chsh_estimate,
    empirical_no_signaling,
    estimate_correlators,
    run_experiment,
)

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_PARSE = 2
EXIT_NONLOCAL = 3
EXIT_INADMISSIBLE = 4

SEED_ENV = "NONLOCALITY_SEED"
SETTINGS = ("00", "01", "10", "11")


class UsageError(Exception):
    pass


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _clean(value):
    """JSON-safe copy: NaN/inf become null, tuples become lists."""
    if isinstance(value, float):
        return value if math.isfinite(value) else None
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    return value


def _digest(payload) -> str:
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return "sha256:" + hashlib.sha256(text.encode()).hexdigest()


def _envelope(command: str, args: dict, digest_source, results: dict, **provenance) -> dict:
    return {
        "command": command,
        "arguments": _clean(args),
        "input_digest": _digest(digest_source),
        "results": _clean(results),
        "provenance": _clean({"version": __version__, **provenance}),
    }


def _flatten(prefix: str, value, rows: list):
    if isinstance(value, dict):
        for k, v in value.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), v, rows)
    elif isinstance(value, list):
        for i, v in enumerate(value):
            _flatten(f"{prefix}.{i}", v, rows)
    else:
        rows.append((prefix, "" if value is None else value))


def _emit(args, envelope: dict, stream=None):
    if args.format == "csv":
        rows = []
        _flatten("", envelope["results"], rows)
        text = "key,value\n" + "".join(f"{k},{v}\n" for k, v in rows)
    else:
        text = dumps_structured(envelope)
    _write(args, text, stream)


def _write(args, text: str, stream=None):
    if getattr(args, "out", None):
        Path(args.out).write_text(text)
    else:
        (stream or sys.stdout).write(text)


def _load_box_arg(ref: str):
    try:
        return load_box(ref)
    except FormatError as exc:
        raise UsageError(str(exc)) from None


def _validity(box, tol):
    result = validate_box(box, tol)
    return result, [
        {"kind": v.kind, "setting": list(v.setting), "magnitude": v.magnitude} for v in result.violations
    ]


def cmd_box_check(args) -> int:
    tol = args.tol if args.tol is not None else FILE_TOL
    box = _load_box_arg(args.box)
    result, violations = _validity(box, tol)
    results = {"valid": result.valid, "violations": violations}
    code = EXIT_OK
    if result.valid:
        ns = check_no_signaling(box, tol=tol if args.tol is not None else NO_SIGNALING_TOL, validity_tol=tol)
        results["no_signaling"] = {
            "holds": ns.holds,
            "worst_violation": ns.worst_violation,
            "witness": {"party": ns.witness[0], "local_input": ns.witness[1], "remote_inputs": list(ns.witness[2])},
            "tol": ns.tol,
        }
        if not ns.holds:
            code = EXIT_VIOLATION
    else:
        code = EXIT_VIOLATION
    results["status"] = "ok" if code == EXIT_OK else "constraint-violation"
    _emit(args, _envelope("box-check", {"box": args.box, "tol": tol}, box_to_structured(box), results, tol=tol))
    return code


def _model_axes(args) -> AxisConfiguration:
    if args.axes:
        parts = args.axes.split(",")
        if len(parts) != 4:
            raise UsageError("--axes needs four angles: a',b,a,b'")
        return AxisConfiguration(*(parse_angle(p) for p in parts))
    if args.angles:
        parts = args.angles.split(",")
        if len(parts) != 3:
            raise UsageError("--angles needs three gaps: a'->b, b->a, a->b'")
        return AxisConfiguration.from_relative(*(parse_angle(p) for p in parts))
    return AxisConfiguration.evenly_spaced(parse_angle(args.spacing or "pi/4"))


def cmd_chsh(args) -> int:
    tol = args.tol if args.tol is not None else EXACT_TOL
    arguments = {"tol": tol}
    if args.box:
        if args.model:
            raise UsageError("give either --box or --model, not both")
        box = _load_box_arg(args.box)
        result, violations = _validity(box, FILE_TOL)
        if not result.valid:
            _emit(args, _envelope("chsh", {"box": args.box}, box_to_structured(box), {"valid": False, "violations": violations}))
            return EXIT_VIOLATION
        arguments["box"] = args.box
        source = box_to_structured(box)
        extra = {}
    elif args.model:
        try:
            model = CorrelationModel.from_name(args.model)
            if args.maximize:
                search = max_chsh_over_axes(model)
                axes = search.axes
            else:
                axes = _model_axes(args)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        box = box_at_angles(model, axes)
        arguments.update(model=model.value, spacing=args.spacing, angles=args.angles, axes=args.axes, maximize=args.maximize)
        source = {"model": model.value, "axes": [axes.a_prime, axes.b, axes.a, axes.b_prime]}
        extra = {"axes": {"a_prime": axes.a_prime, "b": axes.b, "a": axes.a, "b_prime": axes.b_prime}}
        if args.maximize:
            extra["search"] = {"relative_angles": list(search.relative_angles), "final_step": 1e-6}
    else:
        raise UsageError("chsh needs --box or --model")
    value = chsh_of_box(box)
    results = {
        "chsh": value,
        "classification": classify(value).value,
        "correlators": dict(zip(SETTINGS, correlators(box))),
        "tol": tol,
        **extra,
    }
    _emit(args, _envelope("chsh", arguments, source, results, tol=tol))
    return EXIT_OK


def cmd_local(args) -> int:
    tol = args.tol if args.tol is not None else 1e-9
    box = _load_box_arg(args.box)
    result, violations = _validity(box, max(tol, EXACT_TOL))
    if not result.valid:
        _emit(args, _envelope("local", {"box": args.box, "tol": tol}, box_to_structured(box),
                              {"valid": False, "violations": violations, "status": "constraint-violation"}))
        return EXIT_VIOLATION
    cert = is_local(box, tol)
    results = certificate_to_structured(cert)
    results.pop("format")
    results["chsh"] = chsh_of_box(box)
    _emit(args, _envelope("local", {"box": args.box, "tol": tol}, box_to_structured(box), results, tol=tol))
    return EXIT_OK if cert.is_local else EXIT_NONLOCAL


def _estimates_doc(tally):
    est = estimate_correlators(tally)
    doc, missing = {}, []
    for (x, y), e in est.items():
        key = f"{x}{y}"
        if e is None:
            doc[key] = None
            missing.append(key)
        else:
            doc[key] = {"estimate": e.estimate, "standard_error": e.standard_error, "rounds": e.rounds}
    summary = {"correlators": doc, "missing_settings": missing}
    if not missing:
        value, se = chsh_estimate(est)
        summary["chsh"] = {"estimate": value, "standard_error": se, "classification": classify(value).value}
        ns = empirical_no_signaling(tally)
        summary["no_signaling"] = {
            "z_scores": {f"{p}:{i}": z for (p, i), z in ns.z_scores.items()},
            "max_abs_z": ns.max_abs_z,
            "insufficient_settings": [f"{x}{y}" for x, y in ns.insufficient],
        }
    return summary


def cmd_sample(args) -> int:
    box = _load_box_arg(args.box)
    result, violations = _validity(box, EXACT_TOL)
    if not result.valid:
        sys.stderr.write(f"invalid box: {violations}\n")
        return EXIT_VIOLATION
    seed = args.seed if args.seed is not None else _default_seed()
    try:
        plan = ExperimentPlan(rounds=args.rounds, schedule=SettingSchedule.parse(args.schedule), seed=seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    tally = run_experiment(box, plan, workers=args.workers)
    summary = _estimates_doc(tally)
    arguments = {"box": args.box, "rounds": plan.rounds, "seed": seed, "schedule": str(plan.schedule)}
    if args.format == "csv":
        _write(args, tally_to_csv(tally))
        sys.stderr.write(dumps_structured(_clean(summary)))
    else:
        results = {"tally": tally_to_structured(tally), **summary}
        _emit(args, _envelope("sample", arguments, box_to_structured(box), results, seed=seed))
    if summary["missing_settings"]:
        sys.stderr.write(f"settings with zero rounds: {', '.join(summary['missing_settings'])}\n")
    return EXIT_OK


def cmd_jam(args) -> int:
    tol = args.tol if args.tol is not None else NO_SIGNALING_TOL
    try:
        sc = load_scenario(args.scenario)
        ev = sc["events"]
        scenario = JammingScenario(ev["A"], ev["B"], ev["J"], sc["box_off"], sc["box_on"])
        seed = args.seed if args.seed is not None else int(sc.get("seed", _default_seed()))
        rounds = args.rounds if args.rounds is not None else int(sc.get("rounds", 100_000))
        buttons = ButtonSchedule.parse(args.schedule or sc.get("button_schedule", "bernoulli:0.5"))
        settings = SettingSchedule.parse(args.settings or sc.get("settings", "uniform"))
        plan = ExperimentPlan(rounds=rounds, schedule=settings, seed=seed)
    except (FormatError, ValueError) as exc:
        raise UsageError(str(exc)) from None

    report = check_scenario(scenario, tol)
    results = {
        "conditions": {
            "spacelike": report.spacelike_ok,
            "unary": report.unary_ok,
            "binary": report.binary_ok,
            "admissible": report.admissible,
            "failed": report.failed,
            "intervals": report.intervals,
            "marginal_discrepancy": report.marginal_discrepancy,
            "warnings": list(report.warnings),
            "tol": tol,
        }
    }
    arguments = {
        "scenario": str(args.scenario),
        "rounds": rounds,
        "seed": seed,
        "button_schedule": str(buttons),
        "settings": str(settings),
        "tol": tol,
    }
    digest_source = {
        "events": {k: [e.t, e.x] for k, e in ev.items()},
        "box_off": box_to_structured(scenario.box_off),
        "box_on": box_to_structured(scenario.box_on),
    }
    if not report.admissible:
        sys.stderr.write(f"inadmissible scenario; failed: {', '.join(report.failed)}\n")
        _emit(args, _envelope("jam", arguments, digest_source, results, seed=seed, tol=tol))
        return EXIT_INADMISSIBLE

    transcript = simulate_jamming(scenario, plan, buttons, tol)
    pressed = int(transcript.pressed.sum())
    chsh = {}
    for flag, est in transcript.chsh_by_button().items():
        n = pressed if flag else transcript.rounds - pressed
        value, se = est if est is not None else (None, None)
        chsh["pressed" if flag else "unpressed"] = {"estimate": value, "standard_error": se, "rounds": n}
    results["simulation"] = {
        "rounds": transcript.rounds,
        "pressed_rounds": pressed,
        "unary_z_scores": {f"{p}:{i}": z for (p, i), z in transcript.unary_z_scores().items()},
        "chsh": chsh,
    }
    _emit(args, _envelope("jam", arguments, digest_source, results, seed=seed, tol=tol))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nonlocality", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, default_format="structured"):
        p.add_argument("--tol", type=float, default=None, help="numerical tolerance")
        p.add_argument("--format", choices=("csv", "structured"), default=default_format)
        p.add_argument("--out", help="write output to this file instead of stdout")

    p = sub.add_parser("box-check", help="validate a box and test no-signaling")
    p.add_argument("box", nargs="?", help="box file or built-in name")
    p.add_argument("--box", dest="box_flag", help=argparse.SUPPRESS)
    common(p)
    p.set_defaults(func=cmd_box_check)

    p = sub.add_parser("chsh", help="CHSH value and bound class of a box or model")
    p.add_argument("--box", help="box file or built-in name")
    p.add_argument("--model", help="classical, quantum or superquantum")
    p.add_argument("--spacing", help="successive angle between a', b, a, b' (e.g. pi/4)")
    p.add_argument("--angles", help="relative gaps a'->b,b->a,a->b'")
    p.add_argument("--axes", help="absolute directions a',b,a,b'")
    p.add_argument("--maximize", action="store_true", help="search for the best axes")
    common(p)
    p.set_defaults(func=cmd_chsh)

    p = sub.add_parser("local", help="local-hidden-variable certificate")
    p.add_argument("box", nargs="?", help="box file or built-in name")
    p.add_argument("--box", dest="box_flag", help=argparse.SUPPRESS)
    common(p)
    p.set_defaults(func=cmd_local)

    p = sub.add_parser("sample", help="Monte Carlo rounds on a box")
    p.add_argument("box", nargs="?", help="box file or built-in name")
    p.add_argument("--box", dest="box_flag", help=argparse.SUPPRESS)
    p.add_argument("--rounds", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=None, help=f"defaults to ${SEED_ENV} or 0")
    p.add_argument("--schedule", default="uniform", help="uniform, round-robin or fixed:X,Y")
    p.add_argument("--workers", type=int, default=1)
    common(p, default_format="csv")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("jam", help="check and simulate a jamming scenario")
    p.add_argument("scenario", help="scenario JSON file")
    p.add_argument("--rounds", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--schedule", default=None, help="button schedule: all, none, alternate, bernoulli:P")
    p.add_argument("--settings", default=None, help="setting schedule: uniform, round-robin, fixed:X,Y")
    common(p)
    p.set_defaults(func=cmd_jam)
    return parser


@functools.lru_cache(maxsize=1)
def _parser() -> argparse.ArgumentParser:
    # building the parser costs more than most commands; it holds no state
    return build_parser()


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    if hasattr(args, "box_flag"):
        if args.box and args.box_flag:
            sys.stderr.write("error: give the box once\n")
            return EXIT_PARSE
        args.box = args.box or args.box_flag
        if not args.box:
            sys.stderr.write("error: a box file or built-in name is required\n")
            return EXIT_PARSE
    try:
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
