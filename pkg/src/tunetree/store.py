"""Session persistence and reporting.

Every tuning session lands on disk as a directory named by its session id:

    <id>/record.json        complete machine-readable record (schema v1)
    <id>/report.txt         human-readable summary
    <id>/final.properties   tuned configuration, ready for spark-submit

record.json embeds copies of the plan, the catalog, and the backend
descriptor (replay table or workload model included), so a record can be
audited or re-rendered years later without the original inputs.
"""

from __future__ import annotations

import csv
import io
import json
import secrets
import threading
import time
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from importlib import metadata
from pathlib import Path
from typing import Mapping

from .catalog import Catalog, config_warnings, to_properties
from .errors import DocumentError, IoFailureError, SchemaVersionMismatchError
from .plan import SessionTrace, TuningPlan, plan_to_document
from .runner import CommandExecutor, OK, ReplayExecutor, TrialExecutor
from .workload import SimulatorExecutor, model_to_document

SCHEMA = "v1"
RECORD_FILE = "record.json"
REPORT_FILE = "report.txt"
PROPERTIES_FILE = "final.properties"

try:
    TOOL_VERSION = metadata.version("tunetree")
except metadata.PackageNotFoundError:   # running from a source tree
    TOOL_VERSION = "0.0.0"

_id_lock = threading.Lock()
_last_ns = 0


def new_session_id() -> str:
    """Sortable, collision-resistant id: UTC timestamp to the nanosecond
    plus a short random suffix. Monotonic within the process even if the
    clock stalls or steps backwards."""
    global _last_ns
    with _id_lock:
        now = time.time_ns()
        if now <= _last_ns:
            now = _last_ns + 1
        _last_ns = now
    stamp = time.strftime("%Y%m%dT%H%M%S", time.gmtime(now // 1_000_000_000))
    return f"{stamp}{now % 1_000_000_000:09d}-{secrets.token_hex(2)}"


def describe_backend(executor: TrialExecutor) -> dict:
    """Self-contained descriptor of the trial backend for the record."""
    if isinstance(executor, ReplayExecutor):
        return {"kind": "replay", "table": executor.table.to_document()}
    if isinstance(executor, SimulatorExecutor):
        return {"kind": "simulate",
                "model": model_to_document(executor.model),
                "seed": executor.seed}
    if isinstance(executor, CommandExecutor):
        return {"kind": "command", "template": executor.template,
                "inject": executor.inject, "workdir": executor.workdir}
    return {"kind": "custom", "name": executor.name}


def improvement_fraction(trace: SessionTrace) -> float:
    baseline = trace.baseline.median
    return (baseline - trace.final_runtime) / baseline


def improvement_percent_text(trace: SessionTrace) -> int:
    # whole percent, truncated toward zero: never overstate a speedup
    return int(improvement_fraction(trace) * 100.0)


def improvement_percent_json(trace: SessionTrace) -> float:
    pct = Decimal(str(improvement_fraction(trace) * 100.0))
    return float(pct.quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class SessionRecord:
    session_id: str
    created_utc: str
    tool_version: str
    trace: SessionTrace
    plan_document: Mapping
    catalog_document: Mapping
    backend: Mapping
    warnings: tuple[str, ...] = ()

    def to_document(self) -> dict:
        return {
            "schema": SCHEMA,
            "session_id": self.session_id,
            "created_utc": self.created_utc,
            "tool_version": self.tool_version,
            "improvement_percent": improvement_percent_json(self.trace),
            "trace": self.trace.to_dict(),
            "plan": dict(self.plan_document),
            "catalog": dict(self.catalog_document),
            "backend": dict(self.backend),
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_document(cls, doc: Mapping) -> "SessionRecord":
        found = doc.get("schema")
        if found != SCHEMA:
            raise SchemaVersionMismatchError(found)
        try:
            return cls(
                session_id=doc["session_id"],
                created_utc=doc["created_utc"],
                tool_version=doc["tool_version"],
                trace=SessionTrace.from_dict(doc["trace"]),
                plan_document=doc["plan"],
                catalog_document=doc["catalog"],
                backend=doc["backend"],
                warnings=tuple(doc.get("warnings", ())),
            )
        except KeyError as missing:
            raise DocumentError(f"session record missing field {missing}") from None


def new_record(trace: SessionTrace, plan: TuningPlan, catalog: Catalog,
               executor: TrialExecutor) -> SessionRecord:
    warnings = config_warnings(trace.final, catalog)
    return SessionRecord(
        session_id=new_session_id(),
        created_utc=time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        tool_version=TOOL_VERSION,
        trace=trace,
        plan_document=plan_to_document(plan),
        catalog_document=catalog.to_document(),
        backend=describe_backend(executor),
        warnings=tuple(warnings),
    )


def _seconds(value: float | None) -> str:
    return "-" if value is None else f"{value:.6g} s"


REPORT_FORMATS = ("text", "json", "csv", "properties")


def render_report(record: SessionRecord, catalog: Catalog,
                  format: str = "text") -> str:
    """Render a stored session: human text, full-fidelity JSON, a per-
    decision CSV, or just the final configuration as properties."""
    if format == "text":
        return _render_text(record, catalog)
    if format == "json":
        return json.dumps(record.to_document(), sort_keys=True, indent=2) + "\n"
    if format == "csv":
        return _render_csv(record)
    if format == "properties":
        return to_properties(record.trace.final, catalog, render=True)
    raise ValueError(f"report format must be one of {REPORT_FORMATS}, "
                     f"got {format!r}")


def _render_csv(record: SessionRecord) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["node", "candidate", "baseline_s", "median_s",
                     "accepted", "reason"])
    for decision in record.trace.decisions:
        if decision.accepted:
            median = decision.candidates[decision.candidate].median
        else:
            ok = [r.median for r in decision.candidates.values()
                  if r.status == OK]
            median = min(ok) if ok else None
        writer.writerow([
            decision.node,
            decision.candidate or "none",
            f"{decision.baseline:.6g}",
            "" if median is None else f"{median:.6g}",
            str(decision.accepted).lower(),
            decision.reason,
        ])
    return out.getvalue()


def _render_text(record: SessionRecord, catalog: Catalog) -> str:
    trace = record.trace
    lines = [
        f"tunetree session {record.session_id}",
        f"plan: {trace.plan}",
        f"backend: {record.backend.get('kind', 'custom')}",
        f"created: {record.created_utc}",
        "",
        f"baseline median: {_seconds(trace.baseline.median)}",
        f"final median: {_seconds(trace.final_runtime)}",
        f"improvement: {improvement_percent_text(trace)}%",
        "",
        "decisions:",
    ]
    width = max((len(d.node) for d in trace.decisions), default=0)
    for decision in trace.decisions:
        ok_medians = [r.median for r in decision.candidates.values()
                      if r.status == OK]
        shown = min(ok_medians) if ok_medians else None
        verdict = f"accept {decision.candidate}" if decision.accepted \
            else "keep baseline"
        lines.append(
            f"  {decision.node.ljust(width)}  {verdict:<28} "
            f"best candidate {_seconds(shown):>10}  [{decision.reason}]"
        )
    lines.append("")
    lines.append("final settings:")
    settings = to_properties(trace.final, catalog, render=True)
    if settings:
        lines.extend("  " + line for line in settings.splitlines())
    else:
        lines.append("  (all defaults)")
    if record.warnings:
        lines.append("")
        lines.append("warnings:")
        lines.extend(f"  {w}" for w in record.warnings)
    return "\n".join(lines) + "\n"


def save(record: SessionRecord, root: str | Path, catalog: Catalog) -> Path:
    """Write the session directory under ``root``; returns its path."""
    target = Path(root) / record.session_id
    try:
        target.mkdir(parents=True, exist_ok=False)
        (target / RECORD_FILE).write_text(
            json.dumps(record.to_document(), sort_keys=True, indent=2) + "\n",
            encoding="utf-8")
        (target / REPORT_FILE).write_text(
            render_report(record, catalog), encoding="utf-8")
        (target / PROPERTIES_FILE).write_text(
            to_properties(record.trace.final, catalog, render=True),
            encoding="utf-8")
    except OSError as err:
        raise IoFailureError(f"cannot write session {record.session_id}: {err}") \
            from err
    return target


def load(path: str | Path) -> SessionRecord:
    """Read a record back from a session directory or a record.json path."""
    source = Path(path)
    if source.is_dir():
        source = source / RECORD_FILE
    try:
        text = source.read_text(encoding="utf-8")
    except OSError as err:
        raise IoFailureError(f"cannot read {source}: {err}") from err
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise DocumentError(f"{source}: {err}") from None
    return SessionRecord.from_document(doc)
