"""Command-line entry point.

Subcommands wire the pieces together: ``tune`` runs a plan against a
backend and persists the session, ``sweep`` runs a sensitivity sweep and
prints the impact table, ``replay`` re-executes a stored session and
verifies the trace is reproduced, ``simulate`` queries a workload model,
``report`` re-renders a stored record, and ``emit-plan``/``emit-catalog``
print the shipped documents for inspection or editing.

Exit codes: 0 success; 1 usage or validation problem; 2 backend failure;
3 every candidate value crashed. The human report goes to standard
output, diagnostics to standard error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import store
from .catalog import (
    Catalog,
    Configuration,
    builtin_spark_catalog,
    parse_properties,
    resolve_data_file,
)
from .errors import (
    DocumentError,
    ExecutorFailureError,
    IoFailureError,
    NoValidValuesError,
    SchemaVersionMismatchError,
    ValidationError,
)
from .plan import (
    canonical_plan_path,
    canonical_spark_plan,
    load_plan,
    plan_from_document,
    plan_to_document,
    run_session,
)
from .runner import (
    CommandExecutor,
    FALLBACK_NEAREST,
    FALLBACK_STRICT,
    INJECT_MODES,
    INJECT_PROPERTIES,
    OK,
    ReplayExecutor,
    ReplayTable,
)
from .sensitivity import (
    SweepSpec,
    impact_table,
    load_sweep_spec,
    render_impact_csv,
    render_impact_json,
    run_sweep,
)
from .workload import SimulatorExecutor, evaluate, load_model, model_from_document

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_BACKEND = 2
EXIT_NO_VALID_VALUES = 3

BACKENDS = ("command", "replay", "sim")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse, but usage problems raise instead of exiting with code 2."""

    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _data_file(name: str, kind: str) -> Path:
    """Resolve a fixture reference, accepting names without the extension."""
    try:
        return resolve_data_file(name, kind=kind)
    except DocumentError:
        if name.endswith(".json"):
            raise
        return resolve_data_file(name + ".json", kind=kind)


def _require_file(path: str, what: str) -> Path:
    resolved = Path(path)
    if not resolved.is_file():
        raise _UsageError(f"{what} file not found: {path}")
    return resolved


def _check_backend_flags(args) -> None:
    used = {
        "command": bool(getattr(args, "template", None)),
        "replay": bool(getattr(args, "table", None)),
        "sim": bool(getattr(args, "model", None)),
    }
    foreign = [flag for backend, flag in
               (("command", "--template"), ("replay", "--table"),
                ("sim", "--model"))
               if used[backend] and backend != args.backend]
    if foreign:
        raise _UsageError(
            f"{', '.join(foreign)} cannot be combined with "
            f"--backend {args.backend}")


def _build_executor(args, catalog: Catalog):
    _check_backend_flags(args)
    if args.backend == "replay":
        if not args.table:
            raise _UsageError("--backend replay requires --table")
        path = _data_file(args.table, "replay")
        table = ReplayTable.from_file(path, catalog, fallback=args.fallback)
        return ReplayExecutor(table)
    if args.backend == "sim":
        if not args.model:
            raise _UsageError("--backend sim requires --model")
        model = load_model(_data_file(args.model, "models"))
        return SimulatorExecutor(model, catalog, seed=args.seed)
    if not args.template:
        raise _UsageError("--backend command requires --template")
    return CommandExecutor(args.template, args.workdir, catalog=catalog,
                           inject=args.inject,
                           parallel_safe=args.parallel_safe)


def _load_tune_plan(args, catalog: Catalog):
    if args.canonical and args.plan:
        raise _UsageError("--canonical and --plan are mutually exclusive")
    if args.plan:
        plan = load_plan(_require_file(args.plan, "plan"), catalog)
    else:
        plan = load_plan(canonical_plan_path(), catalog)
    if args.threshold is not None:
        plan = dataclasses.replace(plan, threshold=args.threshold)
    return plan


def _cmd_tune(args) -> int:
    catalog = builtin_spark_catalog()
    plan = _load_tune_plan(args, catalog)
    executor = _build_executor(args, catalog)
    trace = run_session(plan, Configuration(), executor, catalog=catalog,
                        reps=args.reps, timeout=args.timeout)
    record = store.new_record(trace, plan, catalog, executor)
    target = store.save(record, args.out, catalog)
    sys.stdout.write(store.render_report(record, catalog))
    print(f"session saved: {target}", file=sys.stderr)
    return EXIT_OK


def _sweep_spec(args, catalog: Catalog) -> SweepSpec:
    if args.spec:
        if args.all or args.params:
            raise _UsageError("--spec cannot be combined with --params/--all")
        return load_sweep_spec(_require_file(args.spec, "sweep spec"), catalog)
    if args.all == bool(args.params):
        raise _UsageError("exactly one of --params or --all is required")
    return SweepSpec(parameters=tuple(args.params or ()), reps=args.reps)


def _plural(count: int, noun: str) -> str:
    return f"{count} {noun}" if count == 1 else f"{count} {noun}s"


def _render_impact_text(run, rows) -> str:
    width = max((len(r.parameter) for r in rows), default=9)
    lines = [
        f"baseline median: {run.baseline.median:.6g} s "
        f"({_plural(len(run.entries), 'value')} over "
        f"{_plural(len(rows), 'row')})",
        "",
        f"{'parameter'.ljust(width)}  {'impact':>8}  flags",
    ]
    for row in rows:
        lines.append(
            f"{row.parameter.ljust(width)}  "
            f"{row.mean_abs_deviation * 100:7.1f}%  {';'.join(row.flags)}".rstrip()
        )
    return "\n".join(lines) + "\n"


def _cmd_sweep(args) -> int:
    catalog = builtin_spark_catalog()
    spec = _sweep_spec(args, catalog)
    executor = _build_executor(args, catalog)
    baseline = Configuration()
    if args.baseline:
        path = _require_file(args.baseline, "baseline properties")
        baseline = parse_properties(path.read_text(encoding="utf-8"), catalog)
    if args.jobs > 1 and not executor.parallel_safe:
        hint = "; pass --parallel-safe if concurrent runs are acceptable" \
            if args.backend == "command" else ""
        raise _UsageError(f"backend is not parallel-safe, use --jobs 1{hint}")
    run = run_sweep(spec, executor, catalog=catalog, baseline=baseline,
                    timeout=args.timeout, jobs=args.jobs)
    rows = impact_table(run)
    sys.stdout.write(_render_impact_text(run, rows))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "impact.csv").write_text(render_impact_csv(run, rows),
                                        encoding="utf-8")
        (out / "impact.json").write_text(
            json.dumps(render_impact_json(run, rows), sort_keys=True,
                       indent=2) + "\n",
            encoding="utf-8")
        print(f"table written: {out / 'impact.csv'}, {out / 'impact.json'}",
              file=sys.stderr)
    return EXIT_OK


def _rebuild_executor(record: store.SessionRecord, catalog: Catalog):
    backend = record.backend
    kind = backend.get("kind")
    if kind == "replay":
        table = ReplayTable.from_document(backend["table"], catalog)
        return ReplayExecutor(table)
    if kind == "simulate":
        model = model_from_document(backend["model"])
        return SimulatorExecutor(model, catalog, seed=backend.get("seed"))
    raise _UsageError(
        f"cannot re-execute a session with backend kind {kind!r}; only "
        "replay and simulate sessions are reproducible")


def _cmd_replay(args) -> int:
    record = store.load(args.record)
    catalog = Catalog.from_document(record.catalog_document)
    plan = plan_from_document(record.plan_document, catalog)
    executor = _rebuild_executor(record, catalog)
    if not executor.deterministic:
        raise _UsageError("stored session used a noisy backend; "
                          "re-execution would not be comparable")
    reps = record.trace.baseline.requested
    trace = run_session(plan, record.trace.initial, executor,
                        catalog=catalog, reps=reps)
    if trace.to_dict() == record.trace.to_dict():
        print(f"session {record.session_id} reproduced: traces identical")
        return EXIT_OK
    print(f"session {record.session_id} NOT reproduced", file=sys.stderr)
    print(f"  stored final: {record.trace.final_runtime:.6g} s, "
          f"re-run final: {trace.final_runtime:.6g} s", file=sys.stderr)
    return EXIT_BACKEND


def _cmd_simulate(args) -> int:
    catalog = builtin_spark_catalog()
    model = load_model(_data_file(args.model, "models"))
    config = Configuration()
    if args.config:
        path = _require_file(args.config, "properties")
        config = parse_properties(path.read_text(encoding="utf-8"), catalog)
    outcome = evaluate(model, config, catalog, seed=args.seed)
    if outcome.status == OK:
        print(f"{model.name}: {outcome.runtime:.6g} s")
    else:
        print(f"{model.name}: {outcome.status}")
    return EXIT_OK


def _cmd_report(args) -> int:
    record = store.load(args.record)
    catalog = Catalog.from_document(record.catalog_document)
    sys.stdout.write(store.render_report(record, catalog, args.format))
    return EXIT_OK


def _cmd_emit_plan(args) -> int:
    catalog = builtin_spark_catalog()
    if args.plan:
        plan = load_plan(args.plan, catalog)
    elif args.threshold is not None:
        plan = canonical_spark_plan(args.threshold)
    else:
        plan = load_plan(canonical_plan_path(), catalog)
    if args.threshold is not None:
        plan = dataclasses.replace(plan, threshold=args.threshold)
    print(json.dumps(plan_to_document(plan), sort_keys=True, indent=2))
    return EXIT_OK


def _cmd_emit_catalog(args) -> int:
    catalog = builtin_spark_catalog()
    print(json.dumps(catalog.to_document(), sort_keys=True, indent=2))
    return EXIT_OK


def _add_backend_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("backend")
    group.add_argument("--backend", choices=BACKENDS, required=True,
                       help="trial backend kind")
    group.add_argument("--table", metavar="NAME",
                       help="replay table: shipped fixture name or path")
    group.add_argument("--fallback",
                       choices=(FALLBACK_STRICT, FALLBACK_NEAREST),
                       default=FALLBACK_STRICT,
                       help="replay behaviour for unknown configurations")
    group.add_argument("--model", metavar="NAME",
                       help="workload model: shipped model name or path")
    group.add_argument("--seed", type=int, default=None,
                       help="noise seed for the sim backend")
    group.add_argument("--template", metavar="CMD",
                       help="command template; {CONFIG} marks the injection "
                            "point")
    group.add_argument("--inject", choices=sorted(INJECT_MODES),
                       default=INJECT_PROPERTIES,
                       help="how the command receives the configuration")
    group.add_argument("--workdir", metavar="DIR",
                       help="working directory for the command backend")
    group.add_argument("--parallel-safe", action="store_true",
                       help="declare the command safe to run concurrently")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tunetree",
                     description="Black-box Spark configuration tuner.")
    sub = parser.add_subparsers(dest="cmd", metavar="SUBCOMMAND")

    tune = sub.add_parser("tune", help="run a tuning plan and save the session")
    tune.add_argument("--plan", metavar="PATH", help="plan document to run")
    tune.add_argument("--canonical", action="store_true",
                      help="use the shipped canonical plan (default)")
    tune.add_argument("--threshold", type=float, default=None,
                      help="relative improvement required to accept")
    tune.add_argument("--reps", type=int, default=5,
                      help="repetitions per trial (median is scored)")
    tune.add_argument("--timeout", type=float, default=None,
                      help="per-run wall-clock limit in seconds")
    tune.add_argument("--out", metavar="DIR", default="tunetree-sessions",
                      help="directory to store the session under")
    _add_backend_flags(tune)
    tune.set_defaults(func=_cmd_tune)

    sweep = sub.add_parser("sweep",
                           help="one-at-a-time sensitivity sweep")
    sweep.add_argument("--params", nargs="+", metavar="NAME",
                       help="parameters to sweep")
    sweep.add_argument("--all", action="store_true",
                       help="sweep every catalog parameter")
    sweep.add_argument("--spec", metavar="PATH",
                       help="sweep spec document (instead of --params/--all)")
    sweep.add_argument("--baseline", metavar="PROPS",
                       help="properties file to sweep around "
                            "(default: catalog defaults)")
    sweep.add_argument("--reps", type=int, default=1,
                       help="repetitions per value")
    sweep.add_argument("--timeout", type=float, default=None)
    sweep.add_argument("--jobs", type=int, default=1,
                       help="parallel trials (parallel-safe backends only)")
    sweep.add_argument("--out", metavar="DIR", default=None,
                       help="write impact.csv and impact.json here")
    _add_backend_flags(sweep)
    sweep.set_defaults(func=_cmd_sweep)

    replay = sub.add_parser("replay",
                            help="re-execute a stored session and verify it")
    replay.add_argument("record", metavar="RECORD",
                        help="session directory or record.json path")
    replay.set_defaults(func=_cmd_replay)

    simulate = sub.add_parser("simulate",
                              help="evaluate a workload model once")
    simulate.add_argument("--model", metavar="NAME", required=True)
    simulate.add_argument("--config", metavar="PROPS",
                          help="properties file to evaluate "
                               "(default: all defaults)")
    simulate.add_argument("--seed", type=int, default=None)
    simulate.set_defaults(func=_cmd_simulate)

    report = sub.add_parser("report", help="re-render a stored session")
    report.add_argument("record", metavar="RECORD")
    report.add_argument("--format", choices=store.REPORT_FORMATS,
                        default="text")
    report.set_defaults(func=_cmd_report)

    emit_plan = sub.add_parser("emit-plan",
                               help="print a plan document to stdout")
    emit_plan.add_argument("--plan", metavar="PATH",
                           help="plan file to echo (default: canonical)")
    emit_plan.add_argument("--threshold", type=float, default=None)
    emit_plan.set_defaults(func=_cmd_emit_plan)

    emit_catalog = sub.add_parser("emit-catalog",
                                  help="print the catalog document to stdout")
    emit_catalog.set_defaults(func=_cmd_emit_catalog)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "func", None) is None:
            parser.print_usage(sys.stderr)
            print(f"{parser.prog}: a subcommand is required", file=sys.stderr)
            return EXIT_USAGE
        return args.func(args)
    except _UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except NoValidValuesError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NO_VALID_VALUES
    except (ValidationError, SchemaVersionMismatchError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (ExecutorFailureError, IoFailureError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_BACKEND


if __name__ == "__main__":
    sys.exit(main())
