"""Tuning plans and the greedy traversal engine.

A plan is a DAG of trial nodes, each carrying one or two candidate setting
bundles. The engine walks it depth-first from the roots keeping per-branch
state (current configuration, best runtime). At each node every candidate
is measured on top of the branch configuration; a candidate is improving
when it ran ok and its median undercuts the branch best by more than the
threshold. The best improving candidate is accepted and its bundle
propagates to all downstream trials on the branch.

The built-in plan is a linear six-node chain ordering the historically
highest-impact switches first; the engine itself supports branching plans.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from .catalog import (
    Catalog,
    Configuration,
    SettingBundle,
    config_digest,
    data_dir,
    overlay,
    validate,
    validate_bundle,
)
from .errors import (
    ConstraintViolationError,
    DocumentError,
    ExecutorFailureError,
    PlanInvalidError,
    SearchSpaceTooLargeError,
)
from .runner import CRASH, OK, TrialExecutor, TrialResult, measure_median

ACCEPTED = "improved-beyond-threshold"
BELOW_THRESHOLD = "below-threshold"
WORSE = "worse"
CRASHED = "crashed"
TIMED_OUT = "timeout"

ORACLE_CAP = 10_000
CONSTRAINT_BACKEND = "constraint"


@dataclass(frozen=True)
class PlanNode:
    """One trial: 1 or 2 candidate bundles, children inherit the outcome."""

    id: str
    candidates: tuple[SettingBundle, ...]
    children: tuple[str, ...] = ()
    note: str = ""
    threshold: float | None = None

    def __post_init__(self):
        if not 1 <= len(self.candidates) <= 2:
            raise PlanInvalidError(f"node {self.id}: needs 1 or 2 candidates")
        labels = [c.label for c in self.candidates]
        if len(set(labels)) != len(labels):
            raise PlanInvalidError(f"node {self.id}: duplicate candidate labels")
        if self.threshold is not None and not 0.0 <= self.threshold < 1.0:
            raise PlanInvalidError(f"node {self.id}: threshold outside [0, 1)")


@dataclass(frozen=True)
class TuningPlan:
    """Acyclic graph of plan nodes with an acceptance threshold."""

    name: str
    nodes: Mapping[str, PlanNode]
    roots: tuple[str, ...]
    threshold: float

    def __post_init__(self):
        if not 0.0 <= self.threshold < 1.0:
            raise PlanInvalidError("plan threshold outside [0, 1)")
        for node_id, node in self.nodes.items():
            if node.id != node_id:
                raise PlanInvalidError(f"node keyed {node_id} carries id {node.id}")
            for child in node.children:
                if child not in self.nodes:
                    raise PlanInvalidError(f"node {node_id}: unknown child {child}")
        for root in self.roots:
            if root not in self.nodes:
                raise PlanInvalidError(f"unknown root {root}")
        self._check_acyclic_and_reachable()

    def _check_acyclic_and_reachable(self) -> None:
        WHITE, GREY, BLACK = 0, 1, 2
        color = {node_id: WHITE for node_id in self.nodes}

        def visit(node_id: str) -> None:
            color[node_id] = GREY
            for child in self.nodes[node_id].children:
                if color[child] == GREY:
                    raise PlanInvalidError(f"cycle through node {child}")
                if color[child] == WHITE:
                    visit(child)
            color[node_id] = BLACK

        for root in self.roots:
            if color[root] == WHITE:
                visit(root)
        unreachable = [node_id for node_id, c in color.items() if c == WHITE]
        if unreachable:
            raise PlanInvalidError(
                f"nodes unreachable from roots: {', '.join(sorted(unreachable))}"
            )

    def node_threshold(self, node_id: str) -> float:
        node = self.nodes[node_id]
        return self.threshold if node.threshold is None else node.threshold

    def topological_order(self) -> list[str]:
        order: list[str] = []
        seen: set[str] = set()

        def visit(node_id: str) -> None:
            if node_id in seen:
                return
            seen.add(node_id)
            order.append(node_id)
            for child in self.nodes[node_id].children:
                visit(child)

        for root in self.roots:
            visit(root)
        return order


@dataclass(frozen=True)
class Decision:
    """Outcome of one node: what was measured and what was kept."""

    node: str
    candidate: str | None
    baseline: float
    candidates: Mapping[str, TrialResult]
    accepted: bool
    reason: str

    def to_dict(self) -> dict:
        return {
            "node": self.node,
            "candidate": self.candidate if self.candidate is not None else "none",
            "baseline_s": self.baseline,
            "candidates": {label: r.to_dict() for label, r in self.candidates.items()},
            "accepted": self.accepted,
            "reason": self.reason,
        }

    @classmethod
    def from_dict(cls, obj: Mapping) -> "Decision":
        candidate = obj["candidate"]
        return cls(
            node=obj["node"],
            candidate=None if candidate == "none" else candidate,
            baseline=obj["baseline_s"],
            candidates={label: TrialResult.from_dict(r)
                        for label, r in obj["candidates"].items()},
            accepted=obj["accepted"],
            reason=obj["reason"],
        )


@dataclass(frozen=True)
class SessionTrace:
    """Complete audit log of one tuning session."""

    plan: str
    initial: Configuration
    baseline: TrialResult
    decisions: tuple[Decision, ...]
    final: Configuration
    final_runtime: float

    def to_dict(self) -> dict:
        return {
            "plan": self.plan,
            "initial": self.initial.to_dict(),
            "baseline": self.baseline.to_dict(),
            "decisions": [d.to_dict() for d in self.decisions],
            "final": self.final.to_dict(),
            "final_runtime_s": self.final_runtime,
        }

    @classmethod
    def from_dict(cls, obj: Mapping) -> "SessionTrace":
        return cls(
            plan=obj["plan"],
            initial=Configuration.from_dict(obj["initial"]),
            baseline=TrialResult.from_dict(obj["baseline"]),
            decisions=tuple(Decision.from_dict(d) for d in obj["decisions"]),
            final=Configuration.from_dict(obj["final"]),
            final_runtime=obj["final_runtime_s"],
        )


def canonical_spark_plan(threshold: float = 0.1) -> TuningPlan:
    """The built-in six-node chain over nine of the catalog parameters.

    Node order reflects expected impact: the serializer first (largest
    single switch), then the shuffle manager with its companion settings,
    compression, the memory split, spill compression, and the file buffer.
    """
    chain = [
        PlanNode(
            id="serializer",
            candidates=(SettingBundle("kryo", {"spark.serializer": "kryo"}),),
            note="serializer choice tends to dominate; test it before anything else",
        ),
        PlanNode(
            id="shuffle-manager",
            candidates=(
                SettingBundle("tungsten-lzf", {
                    "spark.shuffle.manager": "tungsten-sort",
                    "spark.io.compression.codec": "lzf",
                }),
                SettingBundle("hash-consolidate", {
                    "spark.shuffle.manager": "hash",
                    "spark.shuffle.consolidateFiles": True,
                }),
            ),
            note="tungsten-sort pairs well with the lzf codec; hash needs file "
                 "consolidation to avoid one file per map/reduce pair",
        ),
        PlanNode(
            id="shuffle-compress",
            candidates=(SettingBundle("no-shuffle-compress",
                                      {"spark.shuffle.compress": False}),),
            note="skipping compression can pay off when the network is fast "
                 "and cores are busy",
        ),
        PlanNode(
            id="memory-fractions",
            candidates=(
                SettingBundle("balanced-0.4-0.4", {
                    "spark.shuffle.memoryFraction": 0.4,
                    "spark.storage.memoryFraction": 0.4,
                }),
                SettingBundle("storage-heavy-0.1-0.7", {
                    "spark.shuffle.memoryFraction": 0.1,
                    "spark.storage.memoryFraction": 0.7,
                }),
            ),
            note="shift the heap split toward shuffling or toward cached data",
        ),
        PlanNode(
            id="spill-compress",
            candidates=(SettingBundle("no-spill-compress",
                                      {"spark.shuffle.spill.compress": False}),),
            note="spill compression saves disk but costs CPU exactly when "
                 "memory is already tight",
        ),
        PlanNode(
            id="file-buffer",
            candidates=(
                SettingBundle("buffer-48k", {"spark.shuffle.file.buffer": 48}),
                SettingBundle("buffer-15k", {"spark.shuffle.file.buffer": 15}),
            ),
            note="probe the shuffle write buffer in both directions",
        ),
    ]
    nodes = {}
    for node, successor in itertools.zip_longest(chain, chain[1:]):
        children = (successor.id,) if successor is not None else ()
        nodes[node.id] = PlanNode(node.id, node.candidates, children,
                                  node.note, node.threshold)
    return TuningPlan("canonical-spark", nodes, (chain[0].id,), threshold)


def plan_to_document(plan: TuningPlan) -> dict:
    nodes = {}
    for node_id, node in plan.nodes.items():
        obj: dict = {
            "candidates": [c.to_dict() for c in node.candidates],
            "children": list(node.children),
            "note": node.note,
        }
        if node.threshold is not None:
            obj["threshold"] = node.threshold
        nodes[node_id] = obj
    return {"name": plan.name, "threshold": plan.threshold,
            "roots": list(plan.roots), "nodes": nodes}


def plan_from_document(doc: Mapping, catalog: Catalog | None = None) -> TuningPlan:
    """Build a plan from its document; validates bundles when given a catalog."""
    try:
        nodes = {}
        for node_id, obj in doc["nodes"].items():
            candidates = tuple(SettingBundle.from_dict(c) for c in obj["candidates"])
            nodes[node_id] = PlanNode(
                id=node_id,
                candidates=candidates,
                children=tuple(obj.get("children", ())),
                note=obj.get("note", ""),
                threshold=obj.get("threshold"),
            )
        plan = TuningPlan(doc.get("name", "plan"), nodes,
                          tuple(doc["roots"]), doc["threshold"])
    except KeyError as missing:
        raise DocumentError(f"plan document missing field {missing}") from None
    if catalog is not None:
        for node in plan.nodes.values():
            for bundle in node.candidates:
                validate_bundle(bundle, catalog)
    return plan


def load_plan(path: str | Path, catalog: Catalog | None = None) -> TuningPlan:
    with open(path, encoding="utf-8") as handle:
        try:
            doc = json.load(handle)
        except json.JSONDecodeError as err:
            raise DocumentError(f"{path}: {err}") from None
    return plan_from_document(doc, catalog)


def canonical_plan_path() -> Path:
    return data_dir() / "plan-canonical.json"


def _infeasible_result(config: Configuration, bundle: SettingBundle,
                       catalog: Catalog, reps: int) -> TrialResult:
    merged = Configuration({**config.settings, **bundle.assignments})
    return TrialResult(
        digest=config_digest(merged, catalog),
        runtimes=(),
        median=None,
        status=CRASH,
        requested=reps,
        completed=0,
        backend=CONSTRAINT_BACKEND,
    )


def _rejection_reason(results: Mapping[str, TrialResult], best: float) -> str:
    ok_medians = [r.median for r in results.values() if r.status == OK]
    if ok_medians:
        return BELOW_THRESHOLD if min(ok_medians) < best else WORSE
    if any(r.status == CRASH for r in results.values()):
        return CRASHED
    return TIMED_OUT


def run_session(plan: TuningPlan, initial: Configuration,
                executor: TrialExecutor, *, catalog: Catalog, reps: int = 5,
                timeout: float | None = None) -> SessionTrace:
    """Execute a tuning session and return its complete trace.

    The baseline is the initial configuration's median, measured first.
    Candidates whose overlay violates a constraint are recorded as crashed
    without invoking the executor. With several branches the final state is
    the best branch terminal; for linear plans that is simply the left-fold
    of every accepted bundle over the initial configuration.
    """
    validate(initial, catalog)
    baseline = measure_median(executor, initial, catalog=catalog, reps=reps,
                              timeout=timeout)
    if baseline.status != OK:
        raise ExecutorFailureError(
            f"baseline configuration did not complete: {baseline.status}"
        )
    decisions: list[Decision] = []
    terminals: list[tuple[float, Configuration]] = []

    def visit(node_id: str, config: Configuration, best: float) -> None:
        node = plan.nodes[node_id]
        threshold = plan.node_threshold(node_id)
        results: dict[str, TrialResult] = {}
        measured: dict[str, tuple[Configuration, TrialResult]] = {}
        for bundle in node.candidates:
            try:
                candidate_config = overlay(config, bundle, node.id, catalog)
            except ConstraintViolationError:
                results[bundle.label] = _infeasible_result(
                    config, bundle, catalog, reps)
                continue
            result = measure_median(executor, candidate_config,
                                    catalog=catalog, reps=reps, timeout=timeout)
            results[bundle.label] = result
            measured[bundle.label] = (candidate_config, result)
        cutoff = best * (1.0 - threshold)
        improving = {
            label: pair for label, pair in measured.items()
            if pair[1].status == OK and pair[1].median < cutoff
        }
        if improving:
            order = {b.label: i for i, b in enumerate(node.candidates)}
            label = min(improving,
                        key=lambda l: (improving[l][1].median, order[l]))
            decisions.append(Decision(node.id, label, best, results, True,
                                      ACCEPTED))
            config, best = improving[label][0], improving[label][1].median
        else:
            decisions.append(Decision(node.id, None, best, results, False,
                                      _rejection_reason(results, best)))
        if node.children:
            for child in node.children:
                visit(child, config, best)
        else:
            terminals.append((best, config))

    for root in plan.roots:
        visit(root, initial, baseline.median)

    if terminals:
        final_runtime, final = min(terminals, key=lambda t: t[0])
    else:
        final_runtime, final = baseline.median, initial
    return SessionTrace(plan.name, initial, baseline, tuple(decisions),
                        final, final_runtime)


def exhaustive_oracle(plan: TuningPlan, initial: Configuration,
                      executor: TrialExecutor, *, catalog: Catalog,
                      timeout: float | None = None,
                      ) -> tuple[Configuration, float]:
    """Minimum-runtime configuration over every accept/reject pattern.

    Each node contributes either nothing or one of its candidates; bundles
    fold in topological order. Test oracle for the greedy engine's
    optimality gap, not a product feature.
    """
    if not executor.deterministic:
        raise ValueError("exhaustive_oracle needs a deterministic executor")
    order = plan.topological_order()
    count = math.prod(len(plan.nodes[n].candidates) + 1 for n in order)
    if count > ORACLE_CAP:
        raise SearchSpaceTooLargeError(
            f"{count} reachable configurations exceed the {ORACLE_CAP} cap"
        )
    choice_lists = [(None, *plan.nodes[n].candidates) for n in order]
    seen: dict[str, float] = {}
    best: tuple[float, Configuration] | None = None
    for pattern in itertools.product(*choice_lists):
        config = initial
        feasible = True
        for node_id, bundle in zip(order, pattern):
            if bundle is None:
                continue
            try:
                config = overlay(config, bundle, node_id, catalog)
            except ConstraintViolationError:
                feasible = False
                break
        if not feasible:
            continue
        digest = config_digest(config, catalog)
        if digest in seen:
            continue
        result = measure_median(executor, config, catalog=catalog, reps=1,
                                timeout=timeout)
        if result.status != OK:
            continue
        seen[digest] = result.median
        if best is None or result.median < best[0]:
            best = (result.median, config)
    if best is None:
        raise ExecutorFailureError("no feasible configuration completed")
    return best[1], best[0]
