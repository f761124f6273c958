"""Command-line entry point.

Exit codes: 0 success or property holds, 1 property fails, 2 usage, parse or
runtime error.  Diagnostics go to standard error; files are only written
under ``--out``.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from importlib import resources
from pathlib import Path

from . import analysis, blocks
from . import builtins as bi
from .lang import ProgramError, parse, pretty
from .scenario import Scenario, ScenarioError, load
from .sim import SimulationError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

PROPERTIES = ("self-stabilization", "self-stabilization-correctness", "uniqueness",
              "fairness", "dynamics")


class UsageError(Exception):
    pass


def _seed(args, scenario: Scenario) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("FIELDC_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"FIELDC_SEED is not an integer: {env!r}") from None
    return scenario.seed


def _write(out: Path, name: str, text: str):
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text, encoding="utf-8")


def _emit_report(args, report: dict, lines: list[str]):
    if args.out:
        _write(Path(args.out), "report.json", json.dumps(report, indent=2, default=str) + "\n")
    if getattr(args, "json", False):
        print(json.dumps(report, indent=2, default=str))
    else:
        for line in lines:
            print(line)


def _read_source(path: str) -> tuple[str, str]:
    p = Path(path)
    if p.exists():
        return p.read_text(encoding="utf-8"), str(p)
    # Fall back to files shipped with the package (stdlib.fc, scenario programs).
    root = resources.files(__package__)
    for candidate in (root.joinpath(p.name), root.joinpath("scenarios", p.name)):
        if candidate.is_file():
            return candidate.read_text(encoding="utf-8"), p.name
    raise UsageError(f"no such file: {path}")


# -- subcommands --------------------------------------------------------------

def cmd_check(args) -> int:
    text, name = _read_source(args.program)
    prog = parse(text, name) if args.no_stdlib else blocks.load_program(text, name)
    if args.pretty:
        print(pretty(prog), end="")
    else:
        defs = len(prog.defs)
        print(f"{name}: ok ({defs} definition(s), main {'present' if prog.main else 'absent'})")
    return EXIT_OK


def cmd_run(args) -> int:
    sc = load(args.scenario)
    seed = _seed(args, sc)
    if args.rounds is not None:
        sc = sc.with_changes(rounds=args.rounds)
    if args.require_stabilization:
        sc = sc.with_changes(stabilization={**sc.stabilization, "stop": True})
    trace = sc.run(seed, keep_exports=args.exports)
    csv = trace.to_csv()
    if args.out:
        out = Path(args.out)
        _write(out, "trace.csv", csv)
        if args.exports:
            _write(out, "exports.json", json.dumps(trace.exports_json()) + "\n")
    else:
        sys.stdout.write(csv)
    if args.require_stabilization:
        env = sc.environment(seed)
        k = sc.quiet_rounds(env, sc.perturbation_list(env, seed))
        rep = analysis.detect_stabilization(trace, sc.freeze_time, k, sc.epsilon)
        if not rep.stabilized:
            print(f"error: round budget exhausted without stabilization: {rep.diagnostics}",
                  file=sys.stderr)
            return EXIT_FAIL
    return EXIT_OK


def _stabilization(sc: Scenario, seed: int):
    trace = sc.run(seed)
    env0 = sc.environment(seed)
    k = sc.quiet_rounds(env0, sc.perturbation_list(env0, seed))
    return trace, analysis.detect_stabilization(trace, sc.freeze_time, k, sc.epsilon)


def cmd_analyze(args) -> int:
    sc = load(args.scenario)
    seed = _seed(args, sc)
    prop = args.property
    report: dict = {"scenario": args.scenario, "property": prop, "seed": seed}
    lines = []
    if prop in ("self-stabilization", "self-stabilization-correctness"):
        trace, rep = _stabilization(sc, seed)
        report.update(rep.to_json())
        ok = rep.stabilized
        lines.append(f"stabilized: {rep.stabilized} (quiet rounds {rep.quiet_rounds}, "
                     f"epsilon {rep.epsilon})")
        if rep.stabilization_time is not None:
            lines.append(f"stabilization time: {rep.stabilization_time!r}")
        if rep.diagnostics:
            lines.append(f"diagnostics: {rep.diagnostics}")
        if prop == "self-stabilization-correctness":
            oracle = sc.oracle_fn()
            if oracle is None:
                raise UsageError("scenario has no oracle; correctness cannot be checked")
            if rep.stabilized:
                err = analysis.snapshot_error(rep.snapshot, oracle(trace.environment_at(trace.end_time)))
                correct = err <= sc.epsilon
                report.update(oracle_error=err, correct=correct)
                lines.append(f"max error against oracle: {err!r}")
                lines.append("correct" if correct else "stabilized to a wrong value")
                ok = correct
    elif prop == "uniqueness":
        rep = analysis.check_uniqueness(sc, args.warm_starts, seed)
        report.update(rep.to_json())
        ok = rep.unique
        lines.append(f"unique: {rep.unique} over {len(rep.snapshots)} warm starts "
                     f"(max divergence {rep.max_divergence!r})")
        if rep.divergent_devices:
            lines.append(f"divergent devices: {rep.divergent_devices[:20]}")
        if rep.unstable_runs:
            lines.append(f"warm starts that never stabilized: {rep.unstable_runs}")
    elif prop == "fairness":
        if sc.schedule.get("mode", "synchronous") != "fair-async":
            print("warning: scenario is synchronous; checking the window anyway", file=sys.stderr)
        rep = analysis.check_fairness(sc.run(seed))
        report.update(rep.to_json())
        ok = rep.fair
        lines.append(f"fair: {rep.fair} (window {rep.window!r}, worst gap {rep.worst_gap!r})")
    else:  # dynamics
        oracle = sc.oracle_fn()
        if oracle is None:
            raise UsageError("scenario has no oracle; dynamics need a reference field")
        m = analysis.dynamics_metrics(sc.run(seed), oracle, sc.epsilon)
        report.update(m.to_json())
        ok = m.convergence_time != float("inf")
        lines.append(f"convergence time: {m.convergence_time!r} ({m.convergence_rounds!r} rounds)")
        lines.append(f"peak error: {m.peak_error!r}, cumulative error: {m.cumulative_error!r}")
    report["pass"] = ok
    lines.append("PASS" if ok else "FAIL")
    _emit_report(args, report, lines)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_sweep(args) -> int:
    sc = load(args.scenario)
    seed = _seed(args, sc)
    densities = None
    if args.densities:
        try:
            densities = [int(x) for x in args.densities.split(",")]
        except ValueError:
            raise UsageError(f"bad --densities {args.densities!r}") from None
    rep = sc.density_sweep(seed, densities, args.replications)
    report = {"scenario": args.scenario, "seed": seed, **rep.to_json()}
    lines = [f"{'n':>6} {'radius':>8} {'discrepancy':>12} {'successive':>11} {'mean':>8}"]
    succ = [None] + rep.successive
    for i, n in enumerate(rep.densities):
        s = "" if succ[i] is None else f"{succ[i]:.4f}"
        lines.append(f"{n:>6} {rep.radii[i]:>8.4f} {rep.discrepancy[i]:>12.4f} {s:>11} "
                     f"{rep.mean_value[i]:>8.3f}")
    lines.append(rep.label)
    _emit_report(args, report, lines)
    return EXIT_OK if rep.verdict else EXIT_FAIL


def cmd_dump_stdlib(args) -> int:
    sys.stdout.write(blocks.stdlib_source())
    return EXIT_OK


def cmd_list_builtins(args) -> int:
    for name, arity, doc in bi.describe():
        print(f"{name:<10} {arity:>2}  {doc}")
    return EXIT_OK


# -----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fieldcalc", description="Field-calculus interpreter and simulator.")
    p.add_argument("--dump-stdlib", action="store_true", help="print the bundled stdlib.fc and exit")
    p.add_argument("--list-builtins", action="store_true", help="list builtin functions and exit")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")

    c = sub.add_parser("check", help="parse and resolve a program")
    c.add_argument("program")
    c.add_argument("--no-stdlib", action="store_true", help="do not link the standard library")
    c.add_argument("--pretty", action="store_true", help="print the normalised program")
    c.set_defaults(func=cmd_check)

    def common(q):
        q.add_argument("scenario")
        q.add_argument("--seed", type=int, default=None,
                       help="master seed (default: $FIELDC_SEED, then the scenario's seed)")
        q.add_argument("--out", metavar="DIR", help="directory for output files")

    r = sub.add_parser("run", help="simulate a scenario and emit its CSV trace")
    common(r)
    r.add_argument("--rounds", type=int, help="override the round budget")
    r.add_argument("--require-stabilization", action="store_true",
                   help="stop once stable; exit 1 if the budget runs out first")
    r.add_argument("--exports", action="store_true", help="also write exports.json (needs --out)")
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("analyze", help="check a resilience property on a scenario")
    common(a)
    a.add_argument("--property", required=True, choices=PROPERTIES)
    a.add_argument("--warm-starts", type=int, default=5)
    a.add_argument("--json", action="store_true", help="print the report as JSON")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("sweep", help="density sweep for eventual consistency")
    common(s)
    s.add_argument("--densities", help="comma-separated device counts, e.g. 100,200,400")
    s.add_argument("--replications", type=int)
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_sweep)

    sub.add_parser("dump-stdlib", help="print the bundled stdlib.fc").set_defaults(func=cmd_dump_stdlib)
    sub.add_parser("list-builtins", help="list builtin functions").set_defaults(func=cmd_list_builtins)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    flags = [f for f in (args.dump_stdlib, args.list_builtins) if f]
    if len(flags) + (args.command is not None) != 1:
        parser.print_usage(sys.stderr)
        print("fieldcalc: error: give exactly one command", file=sys.stderr)
        return EXIT_USAGE
    if args.dump_stdlib:
        return cmd_dump_stdlib(args)
    if args.list_builtins:
        return cmd_list_builtins(args)
    if getattr(args, "exports", False) and not args.out:
        print("fieldcalc: error: --exports needs --out", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (ProgramError, ScenarioError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SimulationError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except analysis.NotStabilized as exc:
        print(f"not stabilized: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
