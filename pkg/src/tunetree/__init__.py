"""tunetree — black-box configuration tuning for Spark-style jobs.

Walks a plan of candidate settings against a measurement backend (live
command, recorded replay table, or synthetic workload model), keeps what
beats the running best by a threshold, and writes a self-contained
session record. A sensitivity sweep mode scores per-parameter impact.
"""

from .catalog import (
    Catalog,
    Configuration,
    ParameterDef,
    SettingBundle,
    builtin_spark_catalog,
    config_digest,
    default_configuration,
    overlay,
    parse_properties,
    resolve_data_file,
    to_properties,
    validate,
)
from .errors import (
    ConstraintViolationError,
    DocumentError,
    EmptyCandidatesError,
    ExecutorFailureError,
    IllegalValueError,
    IoFailureError,
    MissingEntryError,
    NoValidValuesError,
    PlanInvalidError,
    SchemaVersionMismatchError,
    SearchSpaceTooLargeError,
    SpawnFailureError,
    TemplateError,
    TuneTreeError,
    UnknownParameterError,
    ValidationError,
)
from .plan import (
    Decision,
    PlanNode,
    SessionTrace,
    TuningPlan,
    canonical_spark_plan,
    exhaustive_oracle,
    load_plan,
    plan_from_document,
    plan_to_document,
    run_session,
)
from .runner import (
    CommandExecutor,
    ReplayExecutor,
    ReplayTable,
    RunOutcome,
    TrialExecutor,
    TrialResult,
    measure_median,
)
from .sensitivity import (
    ImpactRow,
    SweepRun,
    SweepSpec,
    candidate_values,
    impact_table,
    render_impact_csv,
    render_impact_json,
    run_sweep,
)
from .store import (
    SessionRecord,
    improvement_fraction,
    improvement_percent_json,
    improvement_percent_text,
    load,
    new_record,
    render_report,
    save,
)
from .workload import (
    SimulatorExecutor,
    WorkloadModel,
    builtin_models,
    evaluate,
    load_model,
)

__version__ = "1.0.0"

__all__ = [
    "Catalog",
    "CommandExecutor",
    "Configuration",
    "ConstraintViolationError",
    "Decision",
    "DocumentError",
    "EmptyCandidatesError",
    "ExecutorFailureError",
    "IllegalValueError",
    "ImpactRow",
    "IoFailureError",
    "MissingEntryError",
    "NoValidValuesError",
    "ParameterDef",
    "PlanInvalidError",
    "PlanNode",
    "ReplayExecutor",
    "ReplayTable",
    "RunOutcome",
    "SchemaVersionMismatchError",
    "SearchSpaceTooLargeError",
    "SessionRecord",
    "SessionTrace",
    "SettingBundle",
    "SimulatorExecutor",
    "SpawnFailureError",
    "SweepRun",
    "SweepSpec",
    "TemplateError",
    "TrialExecutor",
    "TrialResult",
    "TuneTreeError",
    "TuningPlan",
    "UnknownParameterError",
    "ValidationError",
    "WorkloadModel",
    "builtin_models",
    "builtin_spark_catalog",
    "candidate_values",
    "canonical_spark_plan",
    "config_digest",
    "default_configuration",
    "evaluate",
    "exhaustive_oracle",
    "impact_table",
    "improvement_fraction",
    "improvement_percent_json",
    "improvement_percent_text",
    "load",
    "load_model",
    "load_plan",
    "measure_median",
    "new_record",
    "overlay",
    "parse_properties",
    "plan_from_document",
    "plan_to_document",
    "render_impact_csv",
    "render_impact_json",
    "render_report",
    "resolve_data_file",
    "run_session",
    "run_sweep",
    "save",
    "to_properties",
    "validate",
]
