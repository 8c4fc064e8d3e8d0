"""Tune a real subprocess: a stub job whose sleep time depends on its
properties file.

This is the command backend end to end — properties file materialized per
trial, wall-clock timing, crash detection via exit code — against a script
whose cost function we know exactly, so the outcome is checkable by eye:

    sleep = 0.8 s  * 0.5 if kryo  * 1.2 if tungsten-sort
                   * 0.75 if hash + consolidation
    disabling shuffle compression exits 1 (a crash)

Optimum reachable by the plan below: kryo + hash-consolidate = 0.3 s.
"""

import stat
import sys
import tempfile
from pathlib import Path

from tunetree import (
    CommandExecutor,
    Configuration,
    PlanNode,
    SettingBundle,
    TuningPlan,
    builtin_spark_catalog,
    new_record,
    render_report,
    run_session,
)

STUB = """\
#!/usr/bin/env python3
import sys, time

settings = {}
for line in open(sys.argv[1]):
    line = line.strip()
    if line and not line.startswith("#"):
        name, value = line.split(" ", 1)
        settings[name] = value

if settings.get("spark.shuffle.compress") == "false":
    sys.exit(1)

seconds = 0.8
if settings.get("spark.serializer", "").endswith("KryoSerializer"):
    seconds *= 0.5
if settings.get("spark.shuffle.manager") == "tungsten-sort":
    seconds *= 1.2
if settings.get("spark.shuffle.manager") == "hash" \\
        and settings.get("spark.shuffle.consolidateFiles") == "true":
    seconds *= 0.75
time.sleep(seconds)
"""

plan = TuningPlan("stub-demo", {
    "serializer": PlanNode(
        "serializer",
        (SettingBundle("kryo", {"spark.serializer": "kryo"}),),
        ("shuffle-manager",)),
    "shuffle-manager": PlanNode(
        "shuffle-manager",
        (SettingBundle("tungsten", {"spark.shuffle.manager": "tungsten-sort"}),
         SettingBundle("hash-consolidate",
                       {"spark.shuffle.manager": "hash",
                        "spark.shuffle.consolidateFiles": True})),
        ("shuffle-compress",)),
    "shuffle-compress": PlanNode(
        "shuffle-compress",
        (SettingBundle("no-compress", {"spark.shuffle.compress": False}),)),
}, ("serializer",), 0.1)

catalog = builtin_spark_catalog()

with tempfile.TemporaryDirectory(prefix="tunetree-demo-") as workdir:
    script = Path(workdir) / "job.py"
    script.write_text(STUB, encoding="utf-8")
    script.chmod(script.stat().st_mode | stat.S_IXUSR)

    executor = CommandExecutor(f"{sys.executable} {script} {{CONFIG}}",
                               catalog=catalog)
    print("running 6 real trials (about 2.5 s of sleeping)...\n")
    trace = run_session(plan, Configuration(), executor, catalog=catalog,
                        reps=1)

print(render_report(new_record(trace, plan, catalog, executor), catalog))
print("expected optimum: 0.30 s of sleep, plus a few ms of interpreter "
      "startup per trial.")
