"""CLI subcommands: script, simulate, replay, inspect; exit codes 0/1/2."""

from __future__ import annotations

import json

import pytest

from asncoord.cli import main
from asncoord.fuzz import simulate
from asncoord.model import serialize_log
from asncoord.scenario import ScriptParseError, run_script

from conftest import data_text

WALKTHROUGH = data_text("walkthrough.script")


class TestScriptRunner:
    def test_walkthrough_passes(self):
        result = run_script(WALKTHROUGH)
        assert result.ok
        assert result.commands_run == 14

    def test_empty_script_passes(self):
        result = run_script("")
        assert result.ok
        assert result.commands_run == 0

    def test_contradictory_assertion_fails(self):
        text = (
            "user stan\nuser alex\n"
            'stan create "Goal" as g\n'
            "stan offer g to=alex\n"
            "alex accept-handoff g\n"
            "assert owner g stan\n"
        )
        result = run_script(text)
        assert not result.ok
        assert "owner" in result.failures[0]
        assert "line 6" in result.failures[0]

    def test_rejected_command_aborts(self):
        text = 'user stan\nuser alex\nstan create "Goal" as g\nalex complete g\n'
        result = run_script(text)
        assert not result.ok
        assert "NotOwner" in result.failures[0]

    def test_undeclared_actor_is_parse_error(self):
        with pytest.raises(ScriptParseError):
            run_script('bob create "Goal"\n')

    def test_asserts_keep_running_after_failure(self):
        text = (
            "user stan\n"
            'stan create "Goal" as g\n'
            "assert status g completed\n"
            "assert owner g stan\n"
            "assert status g abandoned\n"
        )
        result = run_script(text)
        assert len(result.failures) == 2
        assert result.checks_run == 3


class TestCliExitCodes:
    def test_script_success(self, capsys):
        assert main(["script", "walkthrough"]) == 0
        assert "all checks passed" in capsys.readouterr().out

    def test_script_assertion_failure(self, tmp_path, capsys):
        script = tmp_path / "bad.script"
        script.write_text('user stan\nstan create "G" as g\nassert status g completed\n')
        assert main(["script", str(script)]) == 1
        assert "FAIL" in capsys.readouterr().out

    def test_script_parse_error(self, tmp_path, capsys):
        script = tmp_path / "broken.script"
        script.write_text("user stan\nstan frobnicate g\n")
        assert main(["script", str(script)]) == 2

    def test_missing_script_file(self, capsys):
        assert main(["script", "no-such-thing"]) == 2

    def test_usage_error(self):
        assert main(["simulate", "--users", "5"]) == 2
        assert main(["not-a-command"]) == 2

    def test_simulate_report_shape(self, capsys):
        assert main(["simulate", "--users", "3", "--commands", "150", "--seed", "4"]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["seed"] == 4
        assert report["accepted"] + sum(report["rejected"].values()) == 150
        assert report["invariant_violations"] == []

    def test_simulate_deterministic(self, capsys):
        assert main(["simulate", "--users", "4", "--commands", "200", "--seed", "9"]) == 0
        first = capsys.readouterr().out
        assert main(["simulate", "--users", "4", "--commands", "200", "--seed", "9"]) == 0
        assert capsys.readouterr().out == first

    def test_simulate_zero_commands(self, capsys):
        assert main(["simulate", "--users", "1", "--commands", "0", "--seed", "0"]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["events"] == 0

    def test_replay_and_inspect(self, tmp_path, capsys):
        _, engine = simulate(4, 150, seed=2)
        log = tmp_path / "fuzz.log"
        log.write_text(serialize_log(engine.events), encoding="utf-8")
        assert main(["replay", str(log)]) == 0
        out = capsys.readouterr().out
        assert f"events: {engine.state.cursor}" in out
        assert "violations: 0" in out
        assert main(["inspect", str(log)]) == 0
        assert main(["inspect", str(log), "--task", "t1"]) == 0
        assert "t1" in capsys.readouterr().out

    def test_replay_corrupt_log(self, tmp_path, capsys):
        log = tmp_path / "bad.log"
        log.write_text('{"nope": 1}\n{"still": "nope"}\n', encoding="utf-8")
        assert main(["replay", str(log)]) == 2
