import json
import os

import pytest
import yaml
from click.testing import CliRunner

from conflow.cli import main

from helpers import FIXTURES, two_process_script, two_process_text

DEFS = os.path.join(FIXTURES, "two_process.yaml")

TWO_GAP = """
format_version: 1
roles: []
params: {}
steps:
  - {id: C1}
  - {id: a}
  - {id: b}
  - {id: C2}
processes:
  - {type_id: P1, name: P1, segments: [{step: C1}, {step: a}, {step: C2}]}
  - {type_id: P2, name: P2, segments: [{step: C1}, {step: b}, {step: C2}]}
"""


@pytest.fixture
def runner():
    return CliRunner()


class TestValidate:
    def test_ok(self, runner):
        r = runner.invoke(main, ["validate", DEFS])
        assert r.exit_code == 0
        assert "ok: 2 process(es), 9 step(s), 6 role(s)" in r.output

    def test_broken_document_exits_one(self, runner, tmp_path):
        bad = tmp_path / "bad.yaml"
        bad.write_text(
            "format_version: 1\nsteps: []\n"
            "processes:\n  - {type_id: X, name: X, segments: [{step: ghost}]}\n"
        )
        r = runner.invoke(main, ["validate", str(bad)])
        assert r.exit_code == 1
        assert "ghost" in r.output

    def test_missing_file_is_usage_error(self, runner):
        assert runner.invoke(main, ["validate", "no-such.yaml"]).exit_code == 2


class TestBuildAndVerify:
    def test_build_emits_order(self, runner):
        r = runner.invoke(main, ["build", DEFS])
        assert r.exit_code == 0
        doc = json.loads(r.output)
        assert doc["order"][0] == "C1" and doc["order"][-1] == "C3"

    def test_build_writes_files(self, runner, tmp_path):
        out = tmp_path / "cm.json"
        dot = tmp_path / "cm.dot"
        r = runner.invoke(
            main,
            ["build", DEFS, "--strategy", "round-robin",
             "--out", str(out), "--graph", str(dot)],
        )
        assert r.exit_code == 0
        doc = json.loads(out.read_text())
        assert doc["anchors"] == ["C1", "C2", "C3"]
        by_process = json.loads(runner.invoke(main, ["build", DEFS]).output)
        assert doc["order"] != by_process["order"]
        assert dot.read_text().startswith("digraph")

    def test_verify_accepts_built_model(self, runner, tmp_path):
        out = tmp_path / "cm.json"
        runner.invoke(main, ["build", DEFS, "--out", str(out)])
        r = runner.invoke(main, ["verify", DEFS, str(out)])
        assert r.exit_code == 0
        assert r.output.strip() == "correct"

    def test_verify_rejects_swapped_order(self, runner, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(
            {"order": ["C1", "B1", "B2", "A3", "C2", "A5", "B3", "A4", "C3"]}
        ))
        r = runner.invoke(main, ["verify", DEFS, str(bad)])
        assert r.exit_code == 1
        assert r.output.startswith("incorrect:")
        assert "A4" in r.output and "A5" in r.output


class TestEnumerate:
    def test_two_gap_fixture_lists_both_orders(self, runner, tmp_path):
        defs = tmp_path / "two_gap.yaml"
        defs.write_text(TWO_GAP)
        r = runner.invoke(main, ["enumerate", str(defs)])
        assert r.exit_code == 0
        assert r.output.splitlines() == ["C1 a b C2", "C1 b a C2"]

    def test_bound(self, runner):
        r = runner.invoke(main, ["enumerate", DEFS, "--max-steps", "4"])
        assert r.exit_code == 1
        assert "error" in r.output


class TestSimulate:
    def test_replays_scripted_procedure(self, runner, tmp_path):
        cm = tmp_path / "cm.json"
        runner.invoke(main, ["build", DEFS, "--out", str(cm)])
        script = tmp_path / "script.yaml"
        script.write_text(yaml.safe_dump({"steps": two_process_script(False)}))
        r = runner.invoke(
            main,
            ["simulate", DEFS, str(cm), "--type", "A", "--script", str(script)],
        )
        assert r.exit_code == 0
        assert r.output.split() == ["C1", "A3", "C3"]

    def test_stuck_replay_fails(self, runner, tmp_path):
        cm = tmp_path / "cm.json"
        runner.invoke(main, ["build", DEFS, "--out", str(cm)])
        r = runner.invoke(main, ["simulate", DEFS, str(cm), "--type", "B"])
        assert r.exit_code == 1
        assert "ReplayStuck" in r.output


class TestReportAndUsers:
    def test_report_empty_store(self, runner, tmp_path):
        data = tmp_path / "data"
        data.mkdir()
        (data / "definitions").mkdir()
        (data / "definitions" / "current.yaml").write_text(two_process_text())
        r = runner.invoke(
            main, ["report", "counts_by_type_and_status", "--data-dir", str(data)]
        )
        assert r.exit_code == 0
        doc = json.loads(r.output)
        assert doc["rows"] == [["A", 0, 0], ["B", 0, 0]]
        r = runner.invoke(
            main,
            ["report", "counts_by_type_and_status", "--data-dir", str(data), "--csv"],
        )
        assert r.output.splitlines()[0] == "proc_type,current,archived"

    def test_unknown_report_kind(self, runner, tmp_path):
        r = runner.invoke(main, ["report", "bogus", "--data-dir", str(tmp_path)])
        assert r.exit_code == 1

    def test_useradd_writes_salted_digest(self, runner, tmp_path):
        r = runner.invoke(
            main,
            ["useradd", "alice", "--role", "clerk", "--role", "observer",
             "--data-dir", str(tmp_path), "--password", "secret"],
        )
        assert r.exit_code == 0
        doc = yaml.safe_load((tmp_path / "users.yaml").read_text())
        entry = doc["users"]["alice"]
        assert entry["roles"] == ["clerk", "observer"]
        assert "secret" not in (tmp_path / "users.yaml").read_text()
        assert len(entry["salt"]) == 32 and len(entry["digest"]) == 64
