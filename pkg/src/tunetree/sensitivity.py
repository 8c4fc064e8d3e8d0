"""One-at-a-time sensitivity sweeps and the impact statistic.

Against a fixed baseline configuration, each selected parameter is varied
in isolation (its sweep group jointly, when every member is selected) and
the relative runtime deviation recorded:

    deviation = (median - baseline_median) / baseline_median

A parameter's impact is the mean absolute deviation over the values that
completed. Crashed values are excluded from the mean but flagged, since a
crash is itself a strong sensitivity signal.
"""

from __future__ import annotations

import concurrent.futures
import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .catalog import (
    BOOLEAN,
    Catalog,
    Configuration,
    ENUMERATED,
    ParameterDef,
    SettingBundle,
    Value,
    overlay,
)
from .errors import (
    DocumentError,
    EmptyCandidatesError,
    ExecutorFailureError,
    NoValidValuesError,
)
from .runner import CRASH, OK, TrialExecutor, TrialResult, measure_median

HALF_AND_HALF = "half-and-1.5x"
FLAG_CRASH = "crashed-value-present"
FLAG_LOW = "below-5-percent"
LOW_CUTOFF = 0.05

CSV_COLUMNS = ("parameter", "value", "median_s", "deviation",
               "mean_abs_deviation", "flags")


def candidate_values(param: ParameterDef,
                     rule: str | Sequence[Value] = HALF_AND_HALF,
                     ) -> list[Value]:
    """Values to probe for one parameter under the given rule.

    Booleans flip; enumerations take every non-default value in domain
    order. Numerics under the default rule take half and 1.5x the default,
    clamped to bounds and rounded to the parameter's granularity. An
    explicit list is validated and used as-is.
    """
    if not isinstance(rule, str):
        values = [param.granular(v) for v in rule]
        for value in values:
            param.check(value)
        if not values:
            raise EmptyCandidatesError(f"{param.name}: empty explicit value list")
        return values
    if rule != HALF_AND_HALF:
        raise ValueError(f"unknown candidate rule {rule!r}")
    if param.kind == BOOLEAN:
        return [not param.default]
    if param.kind == ENUMERATED:
        return [v for v in param.values if v != param.default]
    # numeric: probe both directions around the default
    lo, hi = param.default / 2, param.default * 1.5
    if param.min is not None:
        lo, hi = max(lo, param.min), max(hi, param.min)
    if param.max is not None:
        lo, hi = min(lo, param.max), min(hi, param.max)
    values = []
    for raw in (lo, hi):
        value = param.granular(raw)
        if value != param.granular(param.default) and value not in values:
            values.append(value)
    if not values:
        raise EmptyCandidatesError(
            f"{param.name}: bounds collapse every probe onto the default")
    return values


@dataclass(frozen=True)
class SweepSpec:
    """What to sweep: parameter names (empty = all) and optional overrides."""

    parameters: tuple[str, ...] = ()
    values: Mapping[str, tuple[Value, ...]] = field(default_factory=dict)
    reps: int = 1
    name: str = "sweep"

    @classmethod
    def from_document(cls, doc: Mapping, catalog: Catalog) -> "SweepSpec":
        params = tuple(doc.get("parameters", ()))
        for name in params:
            catalog.get(name)
        values = {}
        for name, listed in doc.get("values", {}).items():
            param = catalog.get(name)
            values[name] = tuple(candidate_values(param, listed))
        return cls(parameters=params, values=values,
                   reps=int(doc.get("reps", 1)),
                   name=doc.get("name", "sweep"))


def load_sweep_spec(path: str | Path, catalog: Catalog) -> SweepSpec:
    with open(path, encoding="utf-8") as handle:
        try:
            doc = json.load(handle)
        except json.JSONDecodeError as err:
            raise DocumentError(f"{path}: {err}") from None
    return SweepSpec.from_document(doc, catalog)


@dataclass(frozen=True)
class SweepEntry:
    """One measured point: a parameter (or group) at one probed value."""

    parameter: str            # parameter name, or group label for joint rows
    value_label: str          # canonical rendering of the probed value(s)
    assignments: Mapping[str, Value]
    result: TrialResult

    def deviation(self, baseline: float) -> float | None:
        if self.result.status != OK:
            return None
        return (self.result.median - baseline) / baseline


@dataclass(frozen=True)
class SweepRun:
    baseline: TrialResult
    baseline_config: Configuration
    entries: tuple[SweepEntry, ...]
    spec: SweepSpec


@dataclass(frozen=True)
class ImpactRow:
    parameter: str
    mean_abs_deviation: float
    entries: tuple[SweepEntry, ...]
    flags: tuple[str, ...]


def _group_rows(spec: SweepSpec, catalog: Catalog,
                ) -> list[tuple[str, list[tuple[str, dict[str, Value]]]]]:
    """Expand the spec into (row name, [(value label, assignments)]) pairs.

    Walks the catalog in declaration order. A sweep group is emitted once,
    as a joint row, when all of its members are selected; otherwise the
    members are swept individually like any other parameter.
    """
    selected = list(spec.parameters) or [p.name for p in catalog]
    for name in selected:
        catalog.get(name)
    selected_set = set(selected)
    rows: list[tuple[str, list[tuple[str, dict[str, Value]]]]] = []
    emitted_groups: set[str] = set()
    for param in catalog:
        if param.name not in selected_set:
            continue
        group = catalog.group_for(param.name)
        joint = (
            group is not None
            and all(m in selected_set for m in group.parameters)
            and not any(m in spec.values for m in group.parameters)
        )
        if joint:
            if group.name in emitted_groups:
                continue
            emitted_groups.add(group.name)
            points = []
            for joint_values in group.candidates:
                label = "/".join(
                    catalog.get(m).format_value(joint_values[m])
                    for m in group.parameters
                )
                points.append((label, dict(joint_values)))
            rows.append((group.label, points))
            continue
        values = spec.values.get(param.name)
        probe = list(values) if values is not None \
            else candidate_values(param)
        points = [(param.format_value(v), {param.name: v}) for v in probe]
        rows.append((param.name, points))
    return rows


def run_sweep(spec: SweepSpec, executor: TrialExecutor, *,
              catalog: Catalog, baseline: Configuration | None = None,
              timeout: float | None = None, jobs: int = 1,
              executor_factory: Callable[[], TrialExecutor] | None = None,
              ) -> SweepRun:
    """Measure the baseline, then every probed value one change at a time.

    ``jobs > 1`` fans entries out over a thread pool; each worker gets its
    own executor from ``executor_factory`` unless the shared one declares
    itself parallel-safe. The baseline must complete ok.
    """
    if jobs < 1:
        raise ValueError("jobs must be >= 1")
    if baseline is None:
        baseline = Configuration()
    base_result = measure_median(executor, baseline, catalog=catalog,
                                 reps=spec.reps, timeout=timeout)
    if base_result.status != OK:
        raise ExecutorFailureError(
            f"baseline configuration did not complete: {base_result.status}")

    rows = _group_rows(spec, catalog)
    points: list[tuple[str, str, dict[str, Value]]] = [
        (row_name, label, assignments)
        for row_name, row_points in rows
        for label, assignments in row_points
    ]

    def measure_point(point: tuple[str, str, dict[str, Value]],
                      worker: TrialExecutor) -> SweepEntry:
        row_name, label, assignments = point
        bundle = SettingBundle(label, assignments)
        config = overlay(baseline, bundle, f"sweep:{row_name}", catalog)
        result = measure_median(worker, config, catalog=catalog,
                                reps=spec.reps, timeout=timeout)
        return SweepEntry(row_name, label, assignments, result)

    if jobs == 1 or len(points) <= 1:
        entries = [measure_point(p, executor) for p in points]
    else:
        if executor_factory is not None:
            workers = [executor_factory() for _ in range(jobs)]
        elif executor.parallel_safe:
            workers = [executor] * jobs
        else:
            raise ValueError(
                "executor is not parallel-safe; pass executor_factory")
        with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [
                pool.submit(measure_point, point, workers[i % jobs])
                for i, point in enumerate(points)
            ]
            entries = [f.result() for f in futures]
    return SweepRun(base_result, baseline, tuple(entries), spec)


def impact_table(run: SweepRun) -> list[ImpactRow]:
    """Aggregate a sweep into per-parameter impact rows, highest first.

    A row whose every value failed raises NoValidValuesError naming the
    parameter; partial crashes are flagged and excluded from the mean.
    """
    baseline = run.baseline.median
    by_row: dict[str, list[SweepEntry]] = {}
    for entry in run.entries:
        by_row.setdefault(entry.parameter, []).append(entry)
    rows = []
    for name, entries in by_row.items():
        deviations = [e.deviation(baseline) for e in entries
                      if e.result.status == OK]
        if not deviations:
            raise NoValidValuesError(name)
        mean = sum(abs(d) for d in deviations) / len(deviations)
        flags = []
        if any(e.result.status == CRASH for e in entries):
            flags.append(FLAG_CRASH)
        if mean < LOW_CUTOFF:
            flags.append(FLAG_LOW)
        rows.append(ImpactRow(name, mean, tuple(entries), tuple(flags)))
    rows.sort(key=lambda r: -r.mean_abs_deviation)
    return rows


def render_impact_csv(run: SweepRun, rows: Sequence[ImpactRow]) -> str:
    """One CSV line per probed value, annotated with its row's aggregate."""
    baseline = run.baseline.median
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        for entry in row.entries:
            dev = entry.deviation(baseline)
            writer.writerow([
                row.parameter,
                entry.value_label,
                "" if entry.result.median is None
                else f"{entry.result.median:.6g}",
                "" if dev is None else f"{dev:.6f}",
                f"{row.mean_abs_deviation:.6f}",
                ";".join(row.flags),
            ])
    return out.getvalue()


def render_impact_json(run: SweepRun, rows: Sequence[ImpactRow]) -> dict:
    baseline = run.baseline.median
    return {
        "schema": "v1",
        "sweep": run.spec.name,
        "baseline_median_s": baseline,
        "rows": [
            {
                "parameter": row.parameter,
                "mean_abs_deviation": row.mean_abs_deviation,
                "flags": list(row.flags),
                "values": [
                    {
                        "value": entry.value_label,
                        "status": entry.result.status,
                        "median_s": entry.result.median,
                        "deviation": entry.deviation(baseline),
                    }
                    for entry in row.entries
                ],
            }
            for row in rows
        ],
    }
