"""Synthetic workload models: multiplicative runtime surfaces.

A model owns a base runtime and a list of terms. Factor and piecewise
terms map the effective configuration (explicit settings over catalog
defaults) to multiplicative factors; interaction terms fire only when
every listed value matches; crash terms mark infeasible corners. Optional
noise makes repeated evaluation jittery; with amplitude 0 the model is a
pure function and the executor advertises itself as deterministic.

runtime = base * product(term factors) * (1 + jitter)

The built-in models are calibration data shipped as JSON files — they
reproduce observed directionality (which knobs matter, and roughly how
much), not any particular cluster.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from .catalog import Catalog, Configuration, Value, resolve_data_file
from .errors import DocumentError
from .runner import CRASH, OK, TIMEOUT, RunOutcome, TrialExecutor

BUILTIN_MODEL_NAMES = ("shuffle-heavy", "cpu-bound", "memory-tight")

_OPS = {
    "==": lambda a, b: a == b,
    "<=": lambda a, b: a <= b,
    ">=": lambda a, b: a >= b,
    "<": lambda a, b: a < b,
    ">": lambda a, b: a > b,
}


def _effective(config: Configuration, catalog: Catalog, name: str) -> Value:
    if name in config.settings:
        return config.settings[name]
    return catalog.get(name).default


def _canon(catalog: Catalog, name: str, value: Value) -> str:
    return catalog.get(name).format_value(value)


@dataclass(frozen=True)
class FactorTerm:
    """Per-value factor for one parameter; unlisted values contribute 1.0."""

    parameter: str
    factors: Mapping[str, float]   # canonical value string -> factor

    def __post_init__(self):
        for value, factor in self.factors.items():
            if factor <= 0:
                raise DocumentError(
                    f"factor term {self.parameter}={value}: factor must be > 0")

    def factor(self, config: Configuration, catalog: Catalog) -> float:
        value = _canon(catalog, self.parameter,
                       _effective(config, catalog, self.parameter))
        return self.factors.get(value, 1.0)


@dataclass(frozen=True)
class PiecewiseTerm:
    """Clamped linear interpolation over a numeric parameter."""

    parameter: str
    points: tuple[tuple[float, float], ...]   # (value, factor), ascending

    def __post_init__(self):
        if len(self.points) < 2:
            raise DocumentError(
                f"piecewise term for {self.parameter}: needs >= 2 points")
        xs = [x for x, _ in self.points]
        if xs != sorted(xs) or len(set(xs)) != len(xs):
            raise DocumentError(
                f"piecewise term for {self.parameter}: points must ascend")
        if any(y <= 0 for _, y in self.points):
            raise DocumentError(
                f"piecewise term for {self.parameter}: factors must be > 0")

    def factor(self, config: Configuration, catalog: Catalog) -> float:
        value = float(_effective(config, catalog, self.parameter))
        points = self.points
        if value <= points[0][0]:
            return points[0][1]
        if value >= points[-1][0]:
            return points[-1][1]
        for (x0, y0), (x1, y1) in zip(points, points[1:]):
            if x0 <= value <= x1:
                return y0 + (y1 - y0) * (value - x0) / (x1 - x0)
        return 1.0   # unreachable: points cover the clamped range


@dataclass(frozen=True)
class InteractionTerm:
    """Factor applied only when every listed parameter matches its value."""

    matches: Mapping[str, str]   # parameter -> canonical value string
    value: float

    def __post_init__(self):
        if len(self.matches) < 2:
            raise DocumentError("interaction term: needs >= 2 matched values")
        if self.value <= 0:
            raise DocumentError("interaction term: factor must be > 0")

    def factor(self, config: Configuration, catalog: Catalog) -> float:
        for name, wanted in self.matches.items():
            got = _canon(catalog, name, _effective(config, catalog, name))
            if got != wanted:
                return 1.0
        return self.value


@dataclass(frozen=True)
class CrashTerm:
    """Conjunction of comparisons; a config matching all of them crashes."""

    conditions: tuple[Mapping[str, object], ...]
    note: str = ""

    def __post_init__(self):
        if not self.conditions:
            raise DocumentError("crash term: needs >= 1 condition")
        for cond in self.conditions:
            if cond.get("op") not in _OPS:
                raise DocumentError(f"crash term: unknown op {cond.get('op')!r}")

    def matches(self, config: Configuration, catalog: Catalog) -> bool:
        for cond in self.conditions:
            actual = _effective(config, catalog, cond["parameter"])
            if not _OPS[cond["op"]](actual, cond["value"]):
                return False
        return True


EffectTerm = FactorTerm | PiecewiseTerm | InteractionTerm


@dataclass(frozen=True)
class WorkloadModel:
    name: str
    base_runtime: float
    terms: tuple[EffectTerm, ...] = ()
    crash_terms: tuple[CrashTerm, ...] = ()
    noise_amplitude: float = 0.0
    default_seed: int | None = None
    notes: str = ""

    def __post_init__(self):
        if self.base_runtime <= 0:
            raise DocumentError(f"model {self.name}: base runtime must be > 0")
        if not 0.0 <= self.noise_amplitude < 1.0:
            raise DocumentError(
                f"model {self.name}: noise amplitude outside [0, 1)")

    @property
    def pure(self) -> bool:
        return self.noise_amplitude == 0.0


def evaluate(model: WorkloadModel, config: Configuration, catalog: Catalog,
             seed: int | None = None) -> RunOutcome:
    """One simulated run. Crash terms are evaluated before any cost."""
    for term in model.crash_terms:
        if term.matches(config, catalog):
            return RunOutcome(CRASH)
    runtime = model.base_runtime
    for term in model.terms:
        runtime *= term.factor(config, catalog)
    if model.noise_amplitude > 0.0:
        amp = model.noise_amplitude
        runtime *= 1.0 + random.Random(seed).uniform(-amp, amp)
    return RunOutcome(OK, runtime)


class SimulatorExecutor(TrialExecutor):
    """Trial backend that evaluates a workload model instead of running jobs.

    Deterministic exactly when the model is noiseless. With noise, each
    call derives its jitter seed from the session seed plus a call counter,
    so one seed reproduces a whole session run-for-run.
    """

    def __init__(self, model: WorkloadModel, catalog: Catalog,
                 seed: int | None = None):
        self.model = model
        self.catalog = catalog
        self.seed = seed if seed is not None else model.default_seed
        self.calls = 0
        self.name = f"simulate:{model.name}"
        self.deterministic = model.pure
        self.parallel_safe = model.pure

    def measure(self, config: Configuration,
                timeout: float | None = None) -> RunOutcome:
        self.calls += 1
        if self.model.pure:
            outcome = evaluate(self.model, config, self.catalog)
        else:
            base = 0 if self.seed is None else self.seed
            outcome = evaluate(self.model, config, self.catalog,
                               seed=base + self.calls)
        if outcome.status == OK and timeout is not None \
                and outcome.runtime > timeout:
            return RunOutcome(TIMEOUT)
        return outcome


def _term_to_document(term) -> dict:
    if isinstance(term, FactorTerm):
        return {"kind": "factor", "parameter": term.parameter,
                "factors": dict(term.factors)}
    if isinstance(term, PiecewiseTerm):
        return {"kind": "piecewise", "parameter": term.parameter,
                "points": [list(p) for p in term.points]}
    if isinstance(term, InteractionTerm):
        return {"kind": "interaction", "matches": dict(term.matches),
                "factor": term.value}
    if isinstance(term, CrashTerm):
        doc: dict = {"kind": "crash",
                     "conditions": [dict(c) for c in term.conditions]}
        if term.note:
            doc["note"] = term.note
        return doc
    raise DocumentError(f"unknown term type {type(term).__name__}")


def _term_from_document(obj: Mapping):
    kind = obj.get("kind")
    if kind == "factor":
        return FactorTerm(obj["parameter"],
                          {k: float(v) for k, v in obj["factors"].items()})
    if kind == "piecewise":
        return PiecewiseTerm(
            obj["parameter"],
            tuple((float(x), float(y)) for x, y in obj["points"]))
    if kind == "interaction":
        return InteractionTerm(dict(obj["matches"]), float(obj["factor"]))
    if kind == "crash":
        return CrashTerm(tuple(dict(c) for c in obj["conditions"]),
                         obj.get("note", ""))
    raise DocumentError(
        "workload term kind must be one of factor, piecewise, interaction, "
        f"crash; got {kind!r}")


def model_to_document(model: WorkloadModel) -> dict:
    doc: dict = {
        "name": model.name,
        "base_runtime_s": model.base_runtime,
        "terms": ([_term_to_document(t) for t in model.terms]
                  + [_term_to_document(t) for t in model.crash_terms]),
    }
    if model.noise_amplitude > 0.0 or model.default_seed is not None:
        noise: dict = {"amplitude": model.noise_amplitude}
        if model.default_seed is not None:
            noise["default_seed"] = model.default_seed
        doc["noise"] = noise
    if model.notes:
        doc["notes"] = model.notes
    return doc


def model_from_document(doc: Mapping) -> WorkloadModel:
    try:
        parsed = [_term_from_document(t) for t in doc.get("terms", ())]
        noise = doc.get("noise", {})
        seed = noise.get("default_seed")
        return WorkloadModel(
            name=doc["name"],
            base_runtime=float(doc["base_runtime_s"]),
            terms=tuple(t for t in parsed if not isinstance(t, CrashTerm)),
            crash_terms=tuple(t for t in parsed if isinstance(t, CrashTerm)),
            noise_amplitude=float(noise.get("amplitude", 0.0)),
            default_seed=None if seed is None else int(seed),
            notes=doc.get("notes", ""),
        )
    except KeyError as missing:
        raise DocumentError(f"workload model missing field {missing}") from None


def load_model(path: str | Path) -> WorkloadModel:
    with open(path, encoding="utf-8") as handle:
        try:
            doc = json.load(handle)
        except json.JSONDecodeError as err:
            raise DocumentError(f"{path}: {err}") from None
    return model_from_document(doc)


def builtin_models() -> dict[str, WorkloadModel]:
    """The three shipped cost models, keyed by name."""
    return {
        name: load_model(resolve_data_file(f"{name}.json", kind="models"))
        for name in BUILTIN_MODEL_NAMES
    }
