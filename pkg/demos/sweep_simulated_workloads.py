"""Sensitivity analysis across the three shipped workload models.

Each model is a multiplicative cost surface over the twelve catalog
parameters. A one-at-a-time sweep probes every parameter against the
default baseline and ranks them by mean absolute deviation — the same
statistic the impact tables in reports use. The point of running all three
models side by side: which knobs matter is a property of the workload, not
of Spark.
"""

from tunetree import (
    Configuration,
    SimulatorExecutor,
    SweepSpec,
    builtin_models,
    builtin_spark_catalog,
    canonical_spark_plan,
    impact_table,
    improvement_percent_text,
    run_session,
    run_sweep,
)

catalog = builtin_spark_catalog()

for name, model in builtin_models().items():
    executor = SimulatorExecutor(model, catalog)
    run = run_sweep(SweepSpec(), executor, catalog=catalog)
    rows = impact_table(run)

    print(f"--- {name} (base runtime {model.base_runtime:g} s) ---")
    for row in rows:
        flags = f"  [{', '.join(row.flags)}]" if row.flags else ""
        print(f"  {row.parameter:<55} {row.mean_abs_deviation:7.1%}{flags}")
    print()

# The sweep says what matters; the tuner acts on it. memory-tight responds
# to the serializer and the shuffle manager, but both sit just under the
# default 10% bar — a 5% bar lets the walk cash them in.
model = builtin_models()["memory-tight"]
for threshold in (0.10, 0.05):
    executor = SimulatorExecutor(model, catalog)
    trace = run_session(canonical_spark_plan(threshold), Configuration(),
                        executor, catalog=catalog, reps=1)
    accepted = [d.candidate for d in trace.decisions if d.accepted]
    print(f"memory-tight, threshold {threshold:.2f}: "
          f"{trace.baseline.median:g} s -> {trace.final_runtime:.6g} s "
          f"({improvement_percent_text(trace)}%), "
          f"accepted {accepted or 'nothing'}")
