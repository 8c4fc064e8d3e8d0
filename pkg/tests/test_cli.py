"""End-to-end command-line behaviour and exit codes."""

import json
import shutil

import pytest

from tunetree.catalog import builtin_spark_catalog, Catalog
from tunetree.cli import (
    EXIT_BACKEND,
    EXIT_NO_VALID_VALUES,
    EXIT_OK,
    EXIT_USAGE,
    main,
)

from conftest import MGR, RDD, SER

SUBCOMMANDS = ("tune", "sweep", "replay", "simulate", "report",
               "emit-plan", "emit-catalog")


def run_cli(*argv):
    return main(list(argv))


@pytest.fixture()
def kryo_properties(tmp_path):
    path = tmp_path / "kryo.properties"
    path.write_text("spark.serializer kryo\n", encoding="utf-8")
    return str(path)


def session_dir(out_dir):
    children = [p for p in out_dir.iterdir() if p.is_dir()]
    assert len(children) == 1
    return children[0]


# --- help and usage ---------------------------------------------------------


def test_help_exits_zero(capsys):
    for argv in ([], *([name] for name in SUBCOMMANDS)):
        with pytest.raises(SystemExit) as exc:
            main(argv + ["--help"])
        assert exc.value.code == 0
        assert "usage" in capsys.readouterr().out.lower()


def test_no_subcommand_is_usage_error(capsys):
    assert run_cli() == EXIT_USAGE
    assert "subcommand" in capsys.readouterr().err


def test_unknown_subcommand_is_usage_error(capsys):
    assert run_cli("transmogrify") == EXIT_USAGE


def test_missing_backend_flag_is_usage_error(capsys):
    assert run_cli("tune", "--canonical", "--backend", "replay") == EXIT_USAGE
    assert "--table" in capsys.readouterr().err
    assert run_cli("tune", "--canonical", "--backend", "sim") == EXIT_USAGE
    assert run_cli("tune", "--canonical", "--backend", "command") == EXIT_USAGE


def test_foreign_backend_flags_rejected(capsys):
    code = run_cli("tune", "--canonical", "--backend", "sim",
                   "--model", "cpu-bound", "--table", "sortbykey")
    assert code == EXIT_USAGE
    assert "--table" in capsys.readouterr().err


def test_canonical_and_plan_conflict(tmp_path, capsys):
    plan = tmp_path / "plan.json"
    plan.write_text("{}", encoding="utf-8")
    code = run_cli("tune", "--canonical", "--plan", str(plan),
                   "--backend", "replay", "--table", "casestudy-sortbykey")
    assert code == EXIT_USAGE


def test_missing_user_files_are_usage_errors(tmp_path):
    ghost = str(tmp_path / "ghost.json")
    assert run_cli("tune", "--plan", ghost, "--backend", "replay",
                   "--table", "casestudy-sortbykey") == EXIT_USAGE
    assert run_cli("sweep", "--all", "--backend", "replay",
                   "--table", "sortbykey", "--baseline", ghost) == EXIT_USAGE
    assert run_cli("sweep", "--spec", ghost, "--backend", "replay",
                   "--table", "sortbykey") == EXIT_USAGE
    assert run_cli("simulate", "--model", "cpu-bound",
                   "--config", ghost) == EXIT_USAGE


def test_unknown_fixture_name_is_usage_error(capsys):
    assert run_cli("tune", "--canonical", "--backend", "replay",
                   "--table", "no-such-table") == EXIT_USAGE


# --- tune: the recorded case studies ----------------------------------------


def test_tune_sortbykey_case_study(tmp_path, capsys):
    out = tmp_path / "sessions"
    code = run_cli("tune", "--canonical", "--backend", "replay",
                   "--table", "casestudy-sortbykey", "--out", str(out))
    assert code == EXIT_OK
    captured = capsys.readouterr()
    assert "baseline median: 218 s" in captured.out
    assert "final median: 120 s" in captured.out
    assert "improvement: 44%" in captured.out
    assert "accept kryo" in captured.out
    assert "accept hash-consolidate" in captured.out
    assert "accept balanced-0.4-0.4" in captured.out
    assert "session saved:" in captured.err

    record = json.loads(
        (session_dir(out) / "record.json").read_text(encoding="utf-8"))
    assert record["improvement_percent"] == 45.0
    final = record["trace"]["final"]["settings"]
    assert final == {
        "spark.serializer": "kryo",
        "spark.shuffle.manager": "hash",
        "spark.shuffle.consolidateFiles": True,
        "spark.shuffle.memoryFraction": 0.4,
        "spark.storage.memoryFraction": 0.4,
    }


def test_tune_kmeans_case_study(tmp_path, capsys):
    code = run_cli("tune", "--canonical", "--backend", "replay",
                   "--table", "casestudy-kmeans",
                   "--out", str(tmp_path / "s"))
    assert code == EXIT_OK
    captured = capsys.readouterr()
    assert "baseline median: 654 s" in captured.out
    assert "final median: 54 s" in captured.out
    assert "improvement: 91%" in captured.out
    record = json.loads(
        (session_dir(tmp_path / "s") / "record.json")
        .read_text(encoding="utf-8"))
    final = record["trace"]["final"]["settings"]
    # the serializer never clears the bar on this workload
    assert SER not in final
    assert final == {
        "spark.shuffle.memoryFraction": 0.1,
        "spark.storage.memoryFraction": 0.7,
        "spark.shuffle.spill.compress": False,
    }
    serializer = record["trace"]["decisions"][0]
    assert serializer["accepted"] is False
    assert serializer["reason"] == "below-threshold"


def test_tune_aggregate_case_study(tmp_path, capsys):
    code = run_cli("tune", "--canonical", "--threshold", "0.05",
                   "--backend", "replay", "--table", "casestudy-aggregate",
                   "--out", str(tmp_path / "s"))
    assert code == EXIT_OK
    captured = capsys.readouterr()
    assert "baseline median: 77.5 s" in captured.out
    assert "improvement: 21%" in captured.out


def test_tune_record_is_deterministic(tmp_path):
    def tune_once(label):
        out = tmp_path / label
        assert run_cli("tune", "--canonical", "--backend", "replay",
                       "--table", "casestudy-sortbykey",
                       "--out", str(out)) == EXIT_OK
        doc = json.loads(
            (session_dir(out) / "record.json").read_text(encoding="utf-8"))
        del doc["session_id"]
        del doc["created_utc"]
        return doc

    assert tune_once("a") == tune_once("b")


def test_tune_default_out_directory(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    assert run_cli("tune", "--canonical", "--backend", "replay",
                   "--table", "casestudy-sortbykey") == EXIT_OK
    capsys.readouterr()
    assert (tmp_path / "tunetree-sessions").is_dir()


def test_tune_simulator_backend(tmp_path, capsys):
    code = run_cli("tune", "--canonical", "--backend", "sim",
                   "--model", "shuffle-heavy", "--out", str(tmp_path / "s"))
    assert code == EXIT_OK
    captured = capsys.readouterr()
    assert "baseline median: 150 s" in captured.out
    assert "accept kryo" in captured.out
    assert "improvement: 35%" in captured.out


# --- sweep ------------------------------------------------------------------


def test_sweep_all_against_recorded_run(kryo_properties, capsys):
    code = run_cli("sweep", "--all", "--backend", "replay",
                   "--table", "sortbykey", "--fallback", "nearest-subset",
                   "--baseline", kryo_properties)
    assert code == EXIT_OK
    out = capsys.readouterr().out
    assert "baseline median: 150 s (16 values over 11 rows)" in out
    manager_line = next(l for l in out.splitlines()
                        if l.startswith(MGR + " "))
    assert "14.0%" in manager_line
    memory_line = next(l for l in out.splitlines()
                       if l.startswith("spark.shuffle.memoryFraction/"))
    assert "crashed-value-present" in memory_line
    serializer_line = next(l for l in out.splitlines()
                           if l.startswith(SER + " "))
    assert "0.0%" in serializer_line
    assert "below-5-percent" in serializer_line


def test_sweep_out_files(tmp_path, kryo_properties, capsys):
    out = tmp_path / "impact"
    code = run_cli("sweep", "--all", "--backend", "replay",
                   "--table", "sortbykey", "--fallback", "nearest-subset",
                   "--baseline", kryo_properties, "--out", str(out))
    assert code == EXIT_OK
    capsys.readouterr()
    csv_text = (out / "impact.csv").read_text(encoding="utf-8")
    lines = csv_text.splitlines()
    assert lines[0] == ("parameter,value,median_s,deviation,"
                        "mean_abs_deviation,flags")
    assert len(lines) == 17
    doc = json.loads((out / "impact.json").read_text(encoding="utf-8"))
    assert doc["schema"] == "v1"
    assert len(doc["rows"]) == 11
    # nothing outside the requested directory
    assert sorted(p.name for p in out.iterdir()) == \
        ["impact.csv", "impact.json"]


def test_sweep_params_subset(capsys):
    code = run_cli("sweep", "--params", MGR, "--backend", "replay",
                   "--table", "casestudy-sortbykey",
                   "--fallback", "nearest-subset")
    assert code == EXIT_OK
    out = capsys.readouterr().out
    assert "2 values over 1 row" in out


def test_sweep_spec_file(tmp_path, kryo_properties, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({
        "name": "flight-only",
        "parameters": ["spark.reducer.maxSizeInFlight"],
        "values": {"spark.reducer.maxSizeInFlight": [24, 96]},
    }), encoding="utf-8")
    code = run_cli("sweep", "--spec", str(spec), "--backend", "replay",
                   "--table", "sortbykey", "--fallback", "nearest-subset",
                   "--baseline", kryo_properties)
    assert code == EXIT_OK
    assert "2 values over 1 row" in capsys.readouterr().out


def test_sweep_param_selection_is_exclusive(capsys, kryo_properties,
                                            tmp_path):
    assert run_cli("sweep", "--backend", "replay",
                   "--table", "sortbykey") == EXIT_USAGE
    assert run_cli("sweep", "--all", "--params", MGR, "--backend", "replay",
                   "--table", "sortbykey") == EXIT_USAGE
    spec = tmp_path / "spec.json"
    spec.write_text("{}", encoding="utf-8")
    assert run_cli("sweep", "--spec", str(spec), "--all",
                   "--backend", "replay",
                   "--table", "sortbykey") == EXIT_USAGE


def test_sweep_unknown_parameter_is_usage_error(capsys):
    assert run_cli("sweep", "--params", "spark.warp.drive",
                   "--backend", "replay",
                   "--table", "sortbykey") == EXIT_USAGE


def test_sweep_jobs_needs_parallel_safe_backend(capsys):
    code = run_cli("sweep", "--all", "--backend", "command",
                   "--template", "true {CONFIG}", "--jobs", "4")
    assert code == EXIT_USAGE
    assert "--parallel-safe" in capsys.readouterr().err


def test_sweep_strict_table_miss_is_backend_error(capsys):
    # the recorded entries are one-change-from-kryo; probing from the
    # all-defaults baseline under strict fallback has no matching entry
    code = run_cli("sweep", "--params", MGR, "--backend", "replay",
                   "--table", "sortbykey")
    assert code == EXIT_BACKEND


def test_sweep_all_values_crashing_is_exit_three(tmp_path, capsys):
    table = tmp_path / "crashy.json"
    table.write_text(json.dumps({
        "name": "crashy",
        "entries": [
            {"assignments": {}, "outcome": {"runtime": 100.0}},
            {"assignments": {RDD: True}, "outcome": "crash"},
        ],
    }), encoding="utf-8")
    code = run_cli("sweep", "--params", RDD, "--backend", "replay",
                   "--table", str(table))
    assert code == EXIT_NO_VALID_VALUES
    assert RDD in capsys.readouterr().err


# --- replay and report ------------------------------------------------------


@pytest.fixture()
def saved_session(tmp_path, capsys):
    out = tmp_path / "sessions"
    assert run_cli("tune", "--canonical", "--backend", "replay",
                   "--table", "casestudy-sortbykey",
                   "--out", str(out)) == EXIT_OK
    capsys.readouterr()
    return session_dir(out)


def test_replay_reproduces_stored_session(saved_session, capsys):
    assert run_cli("replay", str(saved_session)) == EXIT_OK
    assert "traces identical" in capsys.readouterr().out


def test_replay_detects_divergence(saved_session, capsys):
    record_path = saved_session / "record.json"
    doc = json.loads(record_path.read_text(encoding="utf-8"))
    doc["trace"]["final_runtime_s"] = 1.0
    record_path.write_text(json.dumps(doc), encoding="utf-8")
    assert run_cli("replay", str(saved_session)) == EXIT_BACKEND
    assert "NOT reproduced" in capsys.readouterr().err


def test_replay_rejects_command_sessions(saved_session, capsys):
    record_path = saved_session / "record.json"
    doc = json.loads(record_path.read_text(encoding="utf-8"))
    doc["backend"] = {"kind": "command", "template": "run.sh {CONFIG}",
                      "inject": "properties-file", "workdir": None}
    record_path.write_text(json.dumps(doc), encoding="utf-8")
    assert run_cli("replay", str(saved_session)) == EXIT_USAGE
    assert "reproducible" in capsys.readouterr().err


def test_replay_missing_record_is_backend_error(tmp_path):
    assert run_cli("replay", str(tmp_path / "void")) == EXIT_BACKEND


def test_report_formats(saved_session, capsys):
    assert run_cli("report", str(saved_session)) == EXIT_OK
    assert "improvement: 44%" in capsys.readouterr().out

    assert run_cli("report", str(saved_session), "--format", "json") == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["schema"] == "v1"

    assert run_cli("report", str(saved_session), "--format", "csv") == EXIT_OK
    assert capsys.readouterr().out.startswith("node,candidate,")

    assert run_cli("report", str(saved_session),
                   "--format", "properties") == EXIT_OK
    out = capsys.readouterr().out
    assert "org.apache.spark.serializer.KryoSerializer" in out


def test_report_rejects_other_schema(saved_session, capsys):
    record_path = saved_session / "record.json"
    doc = json.loads(record_path.read_text(encoding="utf-8"))
    doc["schema"] = "v2"
    record_path.write_text(json.dumps(doc), encoding="utf-8")
    assert run_cli("report", str(saved_session)) == EXIT_USAGE


# --- simulate and emitters --------------------------------------------------


def test_simulate_default_and_config(kryo_properties, capsys):
    assert run_cli("simulate", "--model", "shuffle-heavy") == EXIT_OK
    assert capsys.readouterr().out.strip() == "shuffle-heavy: 150 s"
    assert run_cli("simulate", "--model", "shuffle-heavy",
                   "--config", kryo_properties) == EXIT_OK
    assert capsys.readouterr().out.strip() == "shuffle-heavy: 112.5 s"


def test_simulate_crash_region(tmp_path, capsys):
    starved = tmp_path / "starved.properties"
    starved.write_text("spark.shuffle.memoryFraction 0.1\n"
                       "spark.storage.memoryFraction 0.7\n",
                       encoding="utf-8")
    assert run_cli("simulate", "--model", "shuffle-heavy",
                   "--config", str(starved)) == EXIT_OK
    assert capsys.readouterr().out.strip() == "shuffle-heavy: crash"


def test_emit_plan_matches_shipped_file(capsys):
    from tunetree.plan import canonical_plan_path
    assert run_cli("emit-plan") == EXIT_OK
    emitted = json.loads(capsys.readouterr().out)
    with open(canonical_plan_path(), encoding="utf-8") as handle:
        assert emitted == json.load(handle)

    assert run_cli("emit-plan", "--threshold", "0.2") == EXIT_OK
    assert json.loads(capsys.readouterr().out)["threshold"] == 0.2


def test_emit_catalog_round_trips(capsys):
    assert run_cli("emit-catalog") == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert Catalog.from_document(doc) == builtin_spark_catalog()


def test_data_dir_override(tmp_path, monkeypatch, capsys):
    from tunetree.catalog import resolve_data_file
    override = tmp_path / "replay"
    override.mkdir()
    source = resolve_data_file("casestudy-sortbykey.json", kind="replay")
    shutil.copy(source, override / "mytable.json")
    monkeypatch.setenv("TUNETREE_DATA_DIR", str(tmp_path))
    code = run_cli("tune", "--canonical", "--backend", "replay",
                   "--table", "mytable", "--out", str(tmp_path / "s"))
    assert code == EXIT_OK
    assert "improvement: 44%" in capsys.readouterr().out
