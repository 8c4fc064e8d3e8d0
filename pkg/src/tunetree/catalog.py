"""Parameter catalog, validated configurations, and the properties format.

A catalog is an ordered collection of ParameterDef entries plus optional
sweep groups (parameters measured jointly). The built-in catalog covers the
twelve Spark parameters this tool ships support for and lives in
``data/catalog-spark.json``; user catalogs load from the same document
format, so the engine itself carries no Spark-specific constants.

Configurations are sparse: a parameter absent from ``settings`` means "left
at its default". The one cross-parameter constraint is that the two memory
fractions may not sum above 1.0; sums above 0.8 are legal but reported as a
warning since the runtime reserves headroom.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator, Mapping, Sequence

from .errors import (
    ConstraintViolationError,
    DocumentError,
    IllegalValueError,
    UnknownParameterError,
)

Value = bool | int | float | str

BOOLEAN = "boolean"
ENUMERATED = "enumerated"
NUMERIC = "numeric"
KINDS = (BOOLEAN, ENUMERATED, NUMERIC)

FRACTION = "fraction"
# unit -> properties suffix; bytes are emitted bare, per Spark convention
BYTE_SUFFIX = {"bytes": "", "kilobytes": "k", "megabytes": "m"}
UNITS = (*BYTE_SUFFIX, FRACTION)

SHUFFLE_FRACTION = "spark.shuffle.memoryFraction"
STORAGE_FRACTION = "spark.storage.memoryFraction"
FRACTION_SUM_LIMIT = 1.0
FRACTION_HEADROOM = 0.8


@dataclass(frozen=True)
class ParameterDef:
    """One tunable parameter: value domain, default, and emission rules.

    ``render`` maps enumerated values to their external spelling (for
    example the serializer's short names to full class names); it affects
    only rendered emission, never identity or digests.
    """

    name: str
    kind: str
    default: Value
    values: tuple[str, ...] = ()
    unit: str | None = None
    min: float | None = None
    max: float | None = None
    notes: str = ""
    render: Mapping[str, str] = field(default_factory=dict)
    sweep_group: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DocumentError(f"{self.name}: unknown kind {self.kind!r}")
        if self.kind == BOOLEAN:
            if not isinstance(self.default, bool):
                raise DocumentError(f"{self.name}: boolean default required")
        elif self.kind == ENUMERATED:
            if not self.values:
                raise DocumentError(f"{self.name}: empty enumerated domain")
            if len(set(self.values)) != len(self.values):
                raise DocumentError(f"{self.name}: duplicate enumerated values")
            if self.default not in self.values:
                raise DocumentError(f"{self.name}: default outside domain")
        else:
            if self.unit not in UNITS:
                raise DocumentError(f"{self.name}: unknown unit {self.unit!r}")
            if self.min is None or self.max is None:
                raise DocumentError(f"{self.name}: numeric needs min and max")
            if not (self.min <= self.default <= self.max):  # type: ignore[operator]
                raise DocumentError(f"{self.name}: default outside [min, max]")
            if self.unit == FRACTION and not (0.0 <= self.min and self.max <= 1.0):
                raise DocumentError(f"{self.name}: fraction bounds outside [0, 1]")

    def check(self, value: Value) -> None:
        """Raise IllegalValueError unless value is legal for this parameter."""
        if self.kind == BOOLEAN:
            if not isinstance(value, bool):
                raise IllegalValueError(self.name, value, "expected a boolean")
        elif self.kind == ENUMERATED:
            if value not in self.values:
                raise IllegalValueError(
                    self.name, value, f"expected one of {', '.join(self.values)}"
                )
        else:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise IllegalValueError(self.name, value, "expected a number")
            if not (self.min <= float(value) <= self.max):  # type: ignore[operator]
                raise IllegalValueError(
                    self.name, value, f"outside [{self.min}, {self.max}]"
                )

    def granular(self, value: float) -> Value:
        """Snap a numeric value to the unit's granularity.

        Byte-sized units carry whole-number granularity; fractions carry
        three decimals, matching the properties emission format.
        """
        if self.unit == FRACTION:
            return round(float(value), 3)
        return int(round(float(value)))

    def format_value(self, value: Value, *, render: bool = False) -> str:
        """Canonical properties spelling of a legal value."""
        if self.kind == BOOLEAN:
            return "true" if value else "false"
        if self.kind == ENUMERATED:
            text = str(value)
            return self.render.get(text, text) if render else text
        if self.unit == FRACTION:
            text = f"{float(value):.3f}".rstrip("0")
            return text + "0" if text.endswith(".") else text
        return f"{int(round(float(value)))}{BYTE_SUFFIX[self.unit]}"

    def parse_value(self, text: str) -> Value:
        """Inverse of format_value; accepts rendered spellings too."""
        if self.kind == BOOLEAN:
            if text == "true":
                return True
            if text == "false":
                return False
            raise IllegalValueError(self.name, text, "expected true or false")
        if self.kind == ENUMERATED:
            for short, long in self.render.items():
                if text == long:
                    return short
            if text in self.values:
                return text
            raise IllegalValueError(
                self.name, text, f"expected one of {', '.join(self.values)}"
            )
        raw = text
        suffix = BYTE_SUFFIX.get(self.unit or "", "")
        if suffix and raw.endswith(suffix):
            raw = raw[: -len(suffix)]
        try:
            value = float(raw) if self.unit == FRACTION else int(raw)
        except ValueError:
            raise IllegalValueError(self.name, text, "unparseable number") from None
        self.check(value)
        return value


@dataclass(frozen=True)
class SweepGroup:
    """Parameters whose sensitivity is measured jointly, as one table row."""

    name: str
    label: str
    parameters: tuple[str, ...]
    candidates: tuple[Mapping[str, Value], ...]
    notes: str = ""


class Catalog:
    """Ordered, name-indexed collection of parameter definitions."""

    def __init__(self, parameters: Sequence[ParameterDef],
                 sweep_groups: Sequence[SweepGroup] = ()):
        self._defs = tuple(parameters)
        self._by_name = {p.name: p for p in self._defs}
        if len(self._by_name) != len(self._defs):
            raise DocumentError("duplicate parameter names in catalog")
        self.sweep_groups = tuple(sweep_groups)
        for group in self.sweep_groups:
            for name in group.parameters:
                if name not in self._by_name:
                    raise DocumentError(
                        f"sweep group {group.name}: unknown parameter {name}"
                    )

    def __iter__(self) -> Iterator[ParameterDef]:
        return iter(self._defs)

    def __len__(self) -> int:
        return len(self._defs)

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def __eq__(self, other: object) -> bool:
        return (isinstance(other, Catalog)
                and self._defs == other._defs
                and self.sweep_groups == other.sweep_groups)

    def names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self._defs)

    def get(self, name: str) -> ParameterDef:
        try:
            return self._by_name[name]
        except KeyError:
            raise UnknownParameterError(name) from None

    def group_for(self, name: str) -> SweepGroup | None:
        for group in self.sweep_groups:
            if name in group.parameters:
                return group
        return None

    def to_document(self) -> dict:
        parameters = []
        for p in self._defs:
            obj: dict[str, Any] = {"name": p.name, "kind": p.kind, "default": p.default}
            if p.kind == ENUMERATED:
                obj["values"] = list(p.values)
                if p.render:
                    obj["render"] = dict(p.render)
            if p.kind == NUMERIC:
                obj.update(unit=p.unit, min=p.min, max=p.max)
            if p.notes:
                obj["notes"] = p.notes
            if p.sweep_group:
                obj["sweep_group"] = p.sweep_group
            parameters.append(obj)
        doc: dict[str, Any] = {"parameters": parameters}
        if self.sweep_groups:
            doc["sweep_groups"] = [
                {"name": g.name, "label": g.label, "parameters": list(g.parameters),
                 "candidates": [dict(c) for c in g.candidates],
                 **({"notes": g.notes} if g.notes else {})}
                for g in self.sweep_groups
            ]
        return doc

    @classmethod
    def from_document(cls, doc: Mapping) -> "Catalog":
        if not isinstance(doc, Mapping) or "parameters" not in doc:
            raise DocumentError("catalog document needs a top-level 'parameters' array")
        defs = []
        for obj in doc["parameters"]:
            try:
                defs.append(ParameterDef(
                    name=obj["name"],
                    kind=obj["kind"],
                    default=obj["default"],
                    values=tuple(obj.get("values", ())),
                    unit=obj.get("unit"),
                    min=obj.get("min"),
                    max=obj.get("max"),
                    notes=obj.get("notes", ""),
                    render=dict(obj.get("render", {})),
                    sweep_group=obj.get("sweep_group"),
                ))
            except KeyError as missing:
                raise DocumentError(f"parameter entry missing field {missing}") from None
        groups = []
        for obj in doc.get("sweep_groups", ()):
            try:
                groups.append(SweepGroup(
                    name=obj["name"],
                    label=obj.get("label", obj["name"]),
                    parameters=tuple(obj["parameters"]),
                    candidates=tuple(dict(c) for c in obj["candidates"]),
                    notes=obj.get("notes", ""),
                ))
            except KeyError as missing:
                raise DocumentError(f"sweep group missing field {missing}") from None
        return cls(defs, groups)

    @classmethod
    def from_file(cls, path: str | Path) -> "Catalog":
        with open(path, encoding="utf-8") as handle:
            try:
                doc = json.load(handle)
            except json.JSONDecodeError as err:
                raise DocumentError(f"{path}: {err}") from None
        return cls.from_document(doc)


@dataclass(frozen=True)
class Configuration:
    """A sparse assignment of values to catalog parameters.

    ``provenance`` records where each setting came from: "default", "user",
    or the id of the plan node that introduced it. Treat instances as
    immutable values; overlay copies rather than mutating.
    """

    settings: Mapping[str, Value] = field(default_factory=dict)
    provenance: Mapping[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"settings": dict(sorted(self.settings.items())),
                "provenance": dict(sorted(self.provenance.items()))}

    @classmethod
    def from_dict(cls, obj: Mapping) -> "Configuration":
        return cls(dict(obj.get("settings", {})), dict(obj.get("provenance", {})))


@dataclass(frozen=True)
class SettingBundle:
    """A labelled set of assignments applied atomically by one plan node."""

    label: str
    assignments: Mapping[str, Value]

    def to_dict(self) -> dict:
        return {"label": self.label,
                "assignments": dict(sorted(self.assignments.items()))}

    @classmethod
    def from_dict(cls, obj: Mapping) -> "SettingBundle":
        return cls(obj["label"], dict(obj["assignments"]))


def _check_fraction_sum(settings: Mapping[str, Value]) -> None:
    if SHUFFLE_FRACTION in settings and STORAGE_FRACTION in settings:
        total = float(settings[SHUFFLE_FRACTION]) + float(settings[STORAGE_FRACTION])
        if total > FRACTION_SUM_LIMIT:
            raise ConstraintViolationError(
                f"{SHUFFLE_FRACTION} + {STORAGE_FRACTION} = {total:g} "
                f"exceeds {FRACTION_SUM_LIMIT}"
            )


def validate(config: Configuration, catalog: Catalog) -> None:
    """Raise a ValidationError unless every setting is legal."""
    for name, value in config.settings.items():
        catalog.get(name).check(value)
    _check_fraction_sum(config.settings)


def validate_bundle(bundle: SettingBundle, catalog: Catalog) -> None:
    """Bundle validity in isolation: same rules, at least one assignment."""
    if not bundle.assignments:
        raise DocumentError(f"bundle {bundle.label}: no assignments")
    for name, value in bundle.assignments.items():
        catalog.get(name).check(value)
    _check_fraction_sum(bundle.assignments)


def config_warnings(config: Configuration, catalog: Catalog) -> list[str]:
    """Report-level warnings for a valid configuration."""
    warnings = []
    settings = config.settings
    if SHUFFLE_FRACTION in settings or STORAGE_FRACTION in settings:
        shuffle = settings.get(SHUFFLE_FRACTION)
        storage = settings.get(STORAGE_FRACTION)
        if shuffle is None and SHUFFLE_FRACTION in catalog:
            shuffle = catalog.get(SHUFFLE_FRACTION).default
        if storage is None and STORAGE_FRACTION in catalog:
            storage = catalog.get(STORAGE_FRACTION).default
        if shuffle is not None and storage is not None:
            total = float(shuffle) + float(storage)
            if total > FRACTION_HEADROOM:
                warnings.append(
                    f"memory fractions sum to {total:g}; values above "
                    f"{FRACTION_HEADROOM} leave little heap headroom"
                )
    return warnings


def overlay(base: Configuration, bundle: SettingBundle, origin: str,
            catalog: Catalog) -> Configuration:
    """Apply a bundle on top of a configuration, tagging provenance.

    Neither input is mutated. Raises ConstraintViolationError when the
    merged configuration breaks a cross-parameter constraint.
    """
    settings = dict(base.settings)
    provenance = dict(base.provenance)
    for name, value in bundle.assignments.items():
        catalog.get(name).check(value)
        settings[name] = value
        provenance[name] = origin
    merged = Configuration(settings, provenance)
    validate(merged, catalog)
    return merged


def default_configuration(catalog: Catalog) -> Configuration:
    """Every catalog parameter pinned explicitly to its default."""
    return Configuration({p.name: p.default for p in catalog},
                         {p.name: "default" for p in catalog})


def to_properties(config: Configuration, catalog: Catalog, *,
                  render: bool = False) -> str:
    """Emit Spark properties text: ``<name> <value>`` per line, sorted.

    With ``render=True`` enumerated values use their external spelling
    (serializer class names); the plain form is the canonical one used for
    digests and round-trips. Both parse back identically.
    """
    lines = []
    for name in sorted(config.settings):
        value = config.settings[name]
        lines.append(f"{name} {catalog.get(name).format_value(value, render=render)}")
    return "".join(line + "\n" for line in lines)


def parse_properties(text: str, catalog: Catalog, *,
                     origin: str = "user") -> Configuration:
    """Parse properties text back into a validated Configuration."""
    settings: dict[str, Value] = {}
    provenance: dict[str, str] = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if " " not in line:
            raise DocumentError(f"properties line without a value: {line!r}")
        name, value_text = line.split(" ", 1)
        settings[name] = catalog.get(name).parse_value(value_text.strip())
        provenance[name] = origin
    config = Configuration(settings, provenance)
    validate(config, catalog)
    return config


def config_digest(config: Configuration, catalog: Catalog) -> str:
    """Stable digest of the canonical serialization (settings only)."""
    canonical = to_properties(config, catalog)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def data_dir() -> Path:
    """Directory of the shipped catalog, plan, model, and replay files."""
    return Path(__file__).parent / "data"


def resolve_data_file(name: str | Path, kind: str = "") -> Path:
    """Find a data file: explicit path, then TUNETREE_DATA_DIR, then shipped.

    ``kind`` is the shipped subdirectory to search ("replay", "models", or
    "" for the top level).
    """
    explicit = Path(name)
    if explicit.exists():
        return explicit
    candidates = []
    env = os.environ.get("TUNETREE_DATA_DIR")
    if env:
        candidates += [Path(env) / name, Path(env) / kind / name]
    base = data_dir()
    candidates += [base / kind / name, base / name]
    for path in candidates:
        if path.exists():
            return path
    raise DocumentError(f"data file not found: {name}")


def builtin_spark_catalog() -> Catalog:
    """The shipped twelve-parameter Spark catalog, loaded from its file."""
    return Catalog.from_file(data_dir() / "catalog-spark.json")
