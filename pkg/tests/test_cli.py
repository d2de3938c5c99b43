"""Command-line interface: subcommands, outputs, exit codes."""

import json

import pytest

from fedsim.cli import EXIT_CONFIG, EXIT_INCOMPLETE, EXIT_OK, EXIT_RUNTIME, main
from fedsim.metrics import MetricsRecord


def run_cli(*argv):
    return main(list(argv))


class TestPartitionCommand:
    def test_builtin_to_stdout(self, capsys):
        assert run_cli("partition", "--plan", "kitti-4") == EXIT_OK
        doc = json.loads(capsys.readouterr().out)
        assert doc["client_ids"] == ["C1", "C2", "C3", "C4"]
        assert doc["counts"][0][0] == 11508

    def test_scale_divisor(self, capsys):
        assert run_cli("partition", "--plan", "kitti-4", "--scale-divisor", "16") == EXIT_OK
        doc = json.loads(capsys.readouterr().out)
        assert doc["counts"][0][0] == 719

    def test_overlap_requires_arguments(self):
        assert run_cli("partition", "--plan", "overlap") == EXIT_CONFIG

    def test_overlap_to_file(self, tmp_path, capsys):
        out = tmp_path / "plan.json"
        code = run_cli("partition", "--plan", "overlap", "--clients", "8",
                       "--window", "5", "--out", str(out))
        assert code == EXIT_OK
        doc = json.loads(out.read_text())
        assert doc["assignment"]["C6"] == [6, 7, 8, 1, 2]

    def test_bad_plan_name(self, capsys):
        assert run_cli("partition", "--plan", "waymo-3") == EXIT_CONFIG


class TestRunResumeReport:
    def test_full_cycle_byte_identical(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        assert run_cli("scenarios", "--emit", "kitti-sync", "--out", str(cfg)) == EXIT_OK

        full = tmp_path / "full.jsonl"
        assert run_cli("run", "--config", str(cfg), "--seed", "1",
                       "--log", str(full)) == EXIT_OK

        part = tmp_path / "part.jsonl"
        cp = tmp_path / "cp.json"
        assert run_cli("run", "--config", str(cfg), "--seed", "1",
                       "--log", str(part), "--stop-after-round", "5",
                       "--checkpoint", str(cp)) == EXIT_OK
        assert run_cli("resume", "--config", str(cfg), "--checkpoint", str(cp),
                       "--seed", "1", "--log", str(part)) == EXIT_OK
        assert part.read_bytes() == full.read_bytes()

    def test_run_requires_config_or_scenario(self):
        assert run_cli("run") == EXIT_CONFIG

    def test_run_missing_config_file(self, tmp_path):
        assert run_cli("run", "--config", str(tmp_path / "nope.json")) == EXIT_CONFIG

    def test_run_scenario_writes_log(self, tmp_path, capsys):
        log = tmp_path / "m.jsonl"
        assert run_cli("run", "--scenario", "kitti-sync", "--seed", "0",
                       "--log", str(log)) == EXIT_OK
        lines = log.read_text().splitlines()
        assert lines
        MetricsRecord.from_line(lines[0])  # parseable
        assert "final accuracy" in capsys.readouterr().out

    def test_report_table(self, tmp_path, capsys):
        log = tmp_path / "m.jsonl"
        run_cli("run", "--scenario", "kitti-sync", "--seed", "0", "--log", str(log))
        capsys.readouterr()
        assert run_cli("report", str(log)) == EXIT_OK
        out = capsys.readouterr().out
        assert "final accuracy" in out

    def test_report_comparison(self, tmp_path, capsys):
        a = tmp_path / "a.jsonl"
        b = tmp_path / "b.jsonl"
        run_cli("run", "--scenario", "kitti-sync", "--seed", "0", "--log", str(a))
        run_cli("run", "--scenario", "kitti-sync", "--seed", "1", "--log", str(b))
        capsys.readouterr()
        assert run_cli("report", str(a), str(b), "--format", "csv") == EXIT_OK
        out = capsys.readouterr().out
        assert out.startswith("run_id,final_accuracy")

    def test_report_incomplete_exit_code(self, tmp_path, capsys):
        log = tmp_path / "cut.jsonl"
        full = tmp_path / "full.jsonl"
        run_cli("run", "--scenario", "kitti-sync", "--seed", "0", "--log", str(full))
        lines = full.read_text().splitlines()
        # drop everything from the last aggregate onwards: training without
        # aggregation marks the log incomplete
        cut = [ln for ln in lines if '"round": 10, "event": "aggregate"' not in ln
               and '"round": 10, "event": "eval"' not in ln]
        log.write_text("\n".join(cut) + "\n")
        assert run_cli("report", str(log)) == EXIT_INCOMPLETE

    def test_report_missing_file(self, capsys):
        assert run_cli("report", "/no/such/file.jsonl") == EXIT_RUNTIME


class TestCostsCommand:
    def test_calibrated_query(self, capsys):
        assert run_cli("costs", "--arch", "v8", "--res", "960", "--batch", "8") == EXIT_OK
        doc = json.loads(capsys.readouterr().out)
        assert doc["train_time_s"] == 2052.0
        assert doc["peak_mem_mib"] == 16290.0
        assert doc["estimated"] is False

    def test_uncalibrated_needs_flag(self, capsys):
        assert run_cli("costs", "--arch", "v8", "--res", "640", "--batch", "8") == EXIT_CONFIG
        assert run_cli("costs", "--arch", "v8", "--res", "640", "--batch", "8",
                       "--allow-extrapolation") == EXIT_OK
        doc = json.loads(capsys.readouterr().out)
        assert doc["estimated"] is True

    def test_validate(self, capsys):
        assert run_cli("costs", "--validate") == EXIT_OK

    def test_query_requires_all_parts(self):
        assert run_cli("costs", "--arch", "v8", "--res", "640") == EXIT_CONFIG


class TestScenariosCommand:
    def test_listing(self, capsys):
        assert run_cli("scenarios") == EXIT_OK
        out = capsys.readouterr().out
        assert "kitti-sync" in out
        assert "bdd-dropout-dual" in out

    def test_emit_round_trips(self, tmp_path, capsys):
        out = tmp_path / "cfg.json"
        assert run_cli("scenarios", "--emit", "overlap-60", "--out", str(out)) == EXIT_OK
        doc = json.loads(out.read_text())
        assert doc["plan"]["overlap"]["window"] == 5


class TestArgumentErrors:
    def test_unknown_subcommand(self, capsys):
        assert run_cli("launch") == EXIT_CONFIG

    def test_no_arguments(self, capsys):
        assert run_cli() == EXIT_CONFIG
