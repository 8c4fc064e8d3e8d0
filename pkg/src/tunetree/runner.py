"""Trial execution backends and the repetition/median measurement protocol.

A trial measures one configuration: the executor runs it ``reps`` times and
the median of the runtimes is reported (lower of the two middles for even
counts, so the statistic is always an observed runtime). The first crash or
timeout aborts the remaining repetitions; a crashing configuration is
rejected regardless, so extra repetitions would waste budget.

Backends: a replay table (recorded runtimes, for cluster-free reproduction),
and an external command harness. The simulator backend lives in
``workload``.
"""

from __future__ import annotations

import abc
import json
import os
import shlex
import signal
import statistics
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .catalog import Catalog, Configuration, Value, config_digest, to_properties, validate
from .errors import (
    DocumentError,
    MissingEntryError,
    SpawnFailureError,
    TemplateError,
)

OK = "ok"
CRASH = "crash"
TIMEOUT = "timeout"

INJECT_PROPERTIES = "properties-file"
INJECT_ARGS = "arg-substitution"
INJECT_ENV = "environment"
INJECT_MODES = (INJECT_PROPERTIES, INJECT_ARGS, INJECT_ENV)

CONFIG_PLACEHOLDER = "{CONFIG}"
TIMEOUT_EXIT_CODE = 124


@dataclass(frozen=True)
class RunOutcome:
    """Result of a single run: ok with a runtime, or crash, or timeout."""

    status: str
    runtime: float | None = None


@dataclass(frozen=True)
class TrialResult:
    """Aggregated outcome of measuring one configuration."""

    digest: str
    runtimes: tuple[float, ...]
    median: float | None
    status: str
    requested: int
    completed: int
    backend: str

    def to_dict(self) -> dict:
        return {
            "digest": self.digest,
            "runtimes": list(self.runtimes),
            "median_s": self.median,
            "status": self.status,
            "requested": self.requested,
            "completed": self.completed,
            "backend": self.backend,
        }

    @classmethod
    def from_dict(cls, obj: Mapping) -> "TrialResult":
        return cls(
            digest=obj["digest"],
            runtimes=tuple(obj["runtimes"]),
            median=obj["median_s"],
            status=obj["status"],
            requested=obj["requested"],
            completed=obj["completed"],
            backend=obj["backend"],
        )


class TrialExecutor(abc.ABC):
    """A backend that can measure one configuration at a time.

    ``deterministic`` promises identical outcomes for identical
    configuration digests; ``parallel_safe`` permits the sweep driver to
    fan independent trials out across workers.
    """

    name: str = "executor"
    deterministic: bool = False
    parallel_safe: bool = False

    @abc.abstractmethod
    def measure(self, config: Configuration,
                timeout: float | None = None) -> RunOutcome:
        """Run the configuration once."""


def measure_median(executor: TrialExecutor, config: Configuration, *,
                   catalog: Catalog, reps: int = 5,
                   timeout: float | None = None) -> TrialResult:
    """Measure a configuration ``reps`` times and aggregate the median.

    Deterministic backends are called once and the value replicated. The
    first crash or timeout aborts the remaining repetitions and sets the
    trial status; the median is then undefined.
    """
    if reps < 1:
        raise ValueError("reps must be at least 1")
    digest = config_digest(config, catalog)
    if executor.deterministic:
        outcome = executor.measure(config, timeout)
        if outcome.status != OK:
            return TrialResult(digest, (), None, outcome.status, reps, 0,
                               executor.name)
        runtimes = (outcome.runtime,) * reps
        return TrialResult(digest, runtimes, outcome.runtime, OK, reps, reps,
                           executor.name)
    runtimes = []
    for _ in range(reps):
        outcome = executor.measure(config, timeout)
        if outcome.status != OK:
            return TrialResult(digest, tuple(runtimes), None, outcome.status,
                               reps, len(runtimes), executor.name)
        runtimes.append(outcome.runtime)
    return TrialResult(digest, tuple(runtimes), statistics.median_low(runtimes),
                       OK, reps, reps, executor.name)


# --- replay backend ---------------------------------------------------------

FALLBACK_STRICT = "strict"
FALLBACK_NEAREST = "nearest-subset"
FALLBACK_MODES = (FALLBACK_STRICT, FALLBACK_NEAREST)


@dataclass(frozen=True)
class ReplayEntry:
    assignments: Mapping[str, Value]
    outcome: RunOutcome
    key: tuple[tuple[str, str], ...] = field(repr=False)
    digest: str = field(repr=False)


class ReplayTable:
    """Recorded configuration -> outcome mapping.

    Tables list only the configurations their source run actually measured,
    so lookups of unrecorded configurations resolve via ``fallback``:
    ``strict`` raises MissingEntryError; ``nearest-subset`` answers with the
    entry whose assignments form the largest subset of the query, ties
    broken by the entries' canonical serialization.
    """

    def __init__(self, name: str, entries: list[ReplayEntry], catalog: Catalog,
                 fallback: str = FALLBACK_STRICT, notes: str = ""):
        if fallback not in FALLBACK_MODES:
            raise DocumentError(f"unknown fallback mode: {fallback}")
        self.name = name
        self.notes = notes
        self.fallback = fallback
        self.entries = tuple(entries)
        self._catalog = catalog
        self._by_digest = {e.digest: e.outcome for e in self.entries}
        self.default_digest = config_digest(Configuration(), catalog)
        if self.default_digest not in self._by_digest:
            raise DocumentError(
                f"replay table {name} has no entry for the default configuration"
            )

    @staticmethod
    def _entry_key(assignments: Mapping[str, Value],
                   catalog: Catalog) -> tuple[tuple[str, str], ...]:
        return tuple(sorted(
            (name, catalog.get(name).format_value(value))
            for name, value in assignments.items()
        ))

    @classmethod
    def from_document(cls, doc: Mapping, catalog: Catalog,
                      fallback: str = FALLBACK_STRICT) -> "ReplayTable":
        if "entries" not in doc:
            raise DocumentError("replay table needs an 'entries' array")
        entries = []
        for obj in doc["entries"]:
            assignments = dict(obj["assignments"])
            config = Configuration(assignments)
            validate(config, catalog)
            raw = obj["outcome"]
            if raw == CRASH:
                outcome = RunOutcome(CRASH)
            elif isinstance(raw, Mapping) and "runtime" in raw:
                outcome = RunOutcome(OK, float(raw["runtime"]))
            else:
                raise DocumentError(f"bad replay outcome: {raw!r}")
            entries.append(ReplayEntry(
                assignments=assignments,
                outcome=outcome,
                key=cls._entry_key(assignments, catalog),
                digest=config_digest(config, catalog),
            ))
        return cls(doc.get("name", "replay"), entries, catalog,
                   fallback=fallback, notes=doc.get("notes", ""))

    @classmethod
    def from_file(cls, path: str | Path, catalog: Catalog,
                  fallback: str = FALLBACK_STRICT) -> "ReplayTable":
        with open(path, encoding="utf-8") as handle:
            try:
                doc = json.load(handle)
            except json.JSONDecodeError as err:
                raise DocumentError(f"{path}: {err}") from None
        return cls.from_document(doc, catalog, fallback=fallback)

    def to_document(self) -> dict:
        doc: dict = {"name": self.name, "entries": [
            {"assignments": dict(sorted(e.assignments.items())),
             "outcome": CRASH if e.outcome.status == CRASH
             else {"runtime": e.outcome.runtime}}
            for e in self.entries
        ]}
        if self.notes:
            doc["notes"] = self.notes
        return doc

    def lookup(self, config: Configuration) -> RunOutcome:
        digest = config_digest(config, self._catalog)
        hit = self._by_digest.get(digest)
        if hit is not None:
            return hit
        if self.fallback == FALLBACK_STRICT:
            raise MissingEntryError(
                f"replay table {self.name}: no entry for digest {digest[:12]}"
            )
        query = set(self._entry_key(config.settings, self._catalog))
        subsets = [e for e in self.entries if set(e.key) <= query]
        if not subsets:
            raise MissingEntryError(
                f"replay table {self.name}: no subset entry for digest {digest[:12]}"
            )
        largest = max(len(e.key) for e in subsets)
        winner = min((e for e in subsets if len(e.key) == largest),
                     key=lambda e: e.key)
        return winner.outcome


class ReplayExecutor(TrialExecutor):
    """Deterministic executor answering from a replay table."""

    deterministic = True
    parallel_safe = True

    def __init__(self, table: ReplayTable):
        self.table = table
        self.name = f"replay:{table.name}"

    def measure(self, config: Configuration,
                timeout: float | None = None) -> RunOutcome:
        return self.table.lookup(config)


# --- command backend --------------------------------------------------------

class CommandExecutor(TrialExecutor):
    """Runs an external command per trial and wall-clocks it.

    The template is split shell-style; ``{CONFIG}`` is replaced by the
    properties-file path or expanded to ``--conf name=value`` pairs,
    depending on the injection mode. In environment mode settings travel as
    ``TUNE_<NAME>`` variables (dots to underscores, upper-cased). Exit 0 is
    a runtime, exit 124 or exceeding the timeout is a timeout (the child's
    process group is killed), anything else is a crash.
    """

    deterministic = False

    def __init__(self, template: str, workdir: str | Path | None = None, *,
                 catalog: Catalog, inject: str = INJECT_PROPERTIES,
                 parallel_safe: bool = False, name: str = "command"):
        if inject not in INJECT_MODES:
            raise TemplateError(f"unknown injection mode: {inject}")
        self._argv = shlex.split(template)
        if not self._argv:
            raise TemplateError("empty command template")
        if inject == INJECT_PROPERTIES:
            if not any(CONFIG_PLACEHOLDER in token for token in self._argv):
                raise TemplateError(
                    f"template must reference {CONFIG_PLACEHOLDER} in "
                    f"{INJECT_PROPERTIES} mode"
                )
        if inject == INJECT_ARGS:
            if CONFIG_PLACEHOLDER not in self._argv:
                raise TemplateError(
                    f"template must carry a standalone {CONFIG_PLACEHOLDER} "
                    f"token in {INJECT_ARGS} mode"
                )
        self.template = template
        self.inject = inject
        self.workdir = str(workdir) if workdir is not None else None
        self.catalog = catalog
        self.parallel_safe = parallel_safe
        self.name = name

    def _materialize(self, config: Configuration) -> tuple[list[str], dict, str | None]:
        env = dict(os.environ)
        props_path: str | None = None
        if self.inject == INJECT_PROPERTIES:
            handle = tempfile.NamedTemporaryFile(
                "w", prefix="tunetree-", suffix=".properties", delete=False)
            with handle:
                handle.write(to_properties(config, self.catalog, render=True))
            props_path = handle.name
            argv = [token.replace(CONFIG_PLACEHOLDER, props_path)
                    for token in self._argv]
        elif self.inject == INJECT_ARGS:
            pairs = []
            for name in sorted(config.settings):
                rendered = self.catalog.get(name).format_value(
                    config.settings[name], render=True)
                pairs += ["--conf", f"{name}={rendered}"]
            argv = []
            for token in self._argv:
                if token == CONFIG_PLACEHOLDER:
                    argv.extend(pairs)
                else:
                    argv.append(token)
        else:
            for name in sorted(config.settings):
                rendered = self.catalog.get(name).format_value(
                    config.settings[name], render=True)
                env[f"TUNE_{name.replace('.', '_').upper()}"] = rendered
            argv = list(self._argv)
        return argv, env, props_path

    def measure(self, config: Configuration,
                timeout: float | None = None) -> RunOutcome:
        argv, env, props_path = self._materialize(config)
        try:
            try:
                proc = subprocess.Popen(
                    argv, cwd=self.workdir, env=env,
                    stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL,
                    start_new_session=True)
            except OSError as err:
                raise SpawnFailureError(f"cannot start {argv[0]}: {err}") from None
            start = time.monotonic()
            try:
                code = proc.wait(timeout=timeout)
            except subprocess.TimeoutExpired:
                self._kill_tree(proc)
                return RunOutcome(TIMEOUT)
            elapsed = time.monotonic() - start
            if code == 0:
                return RunOutcome(OK, elapsed)
            if code == TIMEOUT_EXIT_CODE:
                return RunOutcome(TIMEOUT)
            return RunOutcome(CRASH)
        finally:
            if props_path:
                try:
                    os.unlink(props_path)
                except OSError:
                    pass

    @staticmethod
    def _kill_tree(proc: subprocess.Popen) -> None:
        try:
            os.killpg(os.getpgid(proc.pid), signal.SIGKILL)
        except (ProcessLookupError, PermissionError):
            pass
        proc.wait()
