"""Shared test fixtures: catalogs, counting executors, random generators."""

from __future__ import annotations

import random

import pytest

from tunetree.catalog import Catalog, Configuration, builtin_spark_catalog
from tunetree.runner import RunOutcome, TrialExecutor
from tunetree.workload import (
    CrashTerm,
    FactorTerm,
    InteractionTerm,
    PiecewiseTerm,
    WorkloadModel,
)

SER = "spark.serializer"
MGR = "spark.shuffle.manager"
CODEC = "spark.io.compression.codec"
COMPRESS = "spark.shuffle.compress"
SPILL = "spark.shuffle.spill.compress"
CONSOL = "spark.shuffle.consolidateFiles"
BUF = "spark.shuffle.file.buffer"
FLIGHT = "spark.reducer.maxSizeInFlight"
SHUF_FRAC = "spark.shuffle.memoryFraction"
STOR_FRAC = "spark.storage.memoryFraction"
RDD = "spark.rdd.compress"
PREFER = "spark.shuffle.io.preferDirectBufs"


@pytest.fixture(scope="session")
def catalog() -> Catalog:
    return builtin_spark_catalog()


class CountingExecutor(TrialExecutor):
    """Wraps another executor and counts measure() invocations."""

    def __init__(self, inner: TrialExecutor):
        self.inner = inner
        self.calls = 0
        self.name = inner.name
        self.deterministic = inner.deterministic
        self.parallel_safe = inner.parallel_safe

    def measure(self, config, timeout=None) -> RunOutcome:
        self.calls += 1
        return self.inner.measure(config, timeout)


class ScriptedExecutor(TrialExecutor):
    """Plays back a fixed outcome sequence; order-sensitive by design."""

    name = "scripted"
    deterministic = False
    parallel_safe = False

    def __init__(self, outcomes):
        self.outcomes = list(outcomes)
        self.calls = 0

    def measure(self, config, timeout=None) -> RunOutcome:
        outcome = self.outcomes[self.calls]
        self.calls += 1
        return outcome


def random_config(rng: random.Random, catalog: Catalog) -> Configuration:
    """A random valid configuration touching a random parameter subset."""
    settings = {}
    for param in catalog:
        if rng.random() < 0.5:
            continue
        if param.kind == "boolean":
            settings[param.name] = rng.choice((True, False))
        elif param.kind == "enumerated":
            settings[param.name] = rng.choice(param.values)
        elif param.unit == "fraction":
            settings[param.name] = round(rng.uniform(param.min, param.max), 3)
        else:
            settings[param.name] = rng.randint(int(param.min), int(param.max))
    # keep the memory pair legal: sum must stay within 1.0
    if SHUF_FRAC in settings or STOR_FRAC in settings:
        shuffle = settings.get(SHUF_FRAC, catalog.get(SHUF_FRAC).default)
        storage = settings.get(STOR_FRAC, catalog.get(STOR_FRAC).default)
        if shuffle + storage > 1.0:
            settings[SHUF_FRAC] = round(rng.uniform(0.0, 0.3), 3)
            settings[STOR_FRAC] = round(rng.uniform(0.0, 0.5), 3)
    return Configuration(settings)


# value anchors used by the random model builders below: for numerics we pin
# piecewise knots at the default plus the points a default sweep/plan probes
NUMERIC_KNOTS = {
    FLIGHT: (24.0, 48.0, 72.0, 96.0),
    BUF: (15.0, 16.0, 32.0, 48.0),
    SHUF_FRAC: (0.1, 0.2, 0.3, 0.4),
    STOR_FRAC: (0.3, 0.4, 0.6, 0.7, 0.9),
}


def random_separable_model(rng: random.Random, catalog: Catalog,
                           name: str = "separable") -> WorkloadModel:
    """Per-parameter factors only — no interactions, no crash regions."""
    terms = []
    for param in catalog:
        if param.kind == "boolean":
            other = str(not param.default).lower()
            terms.append(FactorTerm(param.name,
                                    {other: rng.uniform(0.6, 1.4)}))
        elif param.kind == "enumerated":
            factors = {v: rng.uniform(0.6, 1.4)
                       for v in param.values if v != param.default}
            terms.append(FactorTerm(param.name, factors))
        else:
            default = float(param.default)
            points = tuple(
                (knot, 1.0 if knot == default else rng.uniform(0.6, 1.4))
                for knot in NUMERIC_KNOTS[param.name]
            )
            terms.append(PiecewiseTerm(param.name, points))
    return WorkloadModel(name=name, base_runtime=rng.uniform(50.0, 500.0),
                         terms=tuple(terms))


def random_interacting_model(rng: random.Random, catalog: Catalog,
                             name: str = "interacting") -> WorkloadModel:
    """A separable core plus cross-parameter interactions and sometimes the
    starved-memory crash region."""
    base = random_separable_model(rng, catalog, name)
    pairs = [
        {SER: "kryo", MGR: "hash"},
        {SER: "kryo", COMPRESS: "false"},
        {MGR: "tungsten-sort", CODEC: "lzf"},
        {SHUF_FRAC: "0.4", STOR_FRAC: "0.4"},
        {CONSOL: "true", MGR: "hash"},
    ]
    interactions = [InteractionTerm(matches, rng.uniform(0.5, 1.6))
                    for matches in rng.sample(pairs, rng.randint(1, 3))]
    crash_terms = ()
    if rng.random() < 0.3:
        crash_terms = (CrashTerm(
            conditions=(
                {"parameter": SHUF_FRAC, "op": "<=", "value": 0.15},
                {"parameter": STOR_FRAC, "op": ">=", "value": 0.65},
            )),)
    return WorkloadModel(name=name, base_runtime=base.base_runtime,
                         terms=base.terms + tuple(interactions),
                         crash_terms=crash_terms)
