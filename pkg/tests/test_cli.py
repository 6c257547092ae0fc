"""CLI entry points and the wall-clock path end to end."""

from __future__ import annotations

import json

import pytest

from dictamux.bench import ScenarioConfig, run_scenario, scenario_to_dict
from dictamux.cli import bench_main
from dictamux.report import report_from_json
from dictamux.scheduler import BatchingPolicy
from test_server import fast_config


def tiny_scenario(mode: str = "multiplexed") -> ScenarioConfig:
    return ScenarioConfig(concurrency=2, duration_buckets_s=((8.0, 12.0),),
                          sessions_per_bucket=2, seed=5, mode=mode,
                          policy=BatchingPolicy(kind="dynamic"))


class TestBenchCli:
    def test_run_writes_json_report(self, tmp_path, capsys):
        cfg_path = tmp_path / "scenario.json"
        cfg_path.write_text(json.dumps(scenario_to_dict(tiny_scenario())))
        out_path = tmp_path / "report.json"
        rc = bench_main(["run", "--config", str(cfg_path),
                         "--format", "json", "--out", str(out_path)])
        assert rc == 0
        report = report_from_json(out_path.read_text())
        assert report.mode == "multiplexed"
        assert report.cells and report.cells[0].n > 0

    def test_run_flag_overrides(self, tmp_path):
        cfg_path = tmp_path / "scenario.json"
        cfg_path.write_text(json.dumps(scenario_to_dict(tiny_scenario())))
        out_path = tmp_path / "report.json"
        rc = bench_main(["run", "--config", str(cfg_path),
                         "--mode", "sequential", "--seed", "9",
                         "--format", "json", "--out", str(out_path)])
        assert rc == 0
        report = report_from_json(out_path.read_text())
        assert report.mode == "sequential"
        assert report.seed == 9

    def test_run_table_to_stdout(self, tmp_path, capsys):
        cfg_path = tmp_path / "scenario.json"
        cfg_path.write_text(json.dumps(scenario_to_dict(tiny_scenario())))
        rc = bench_main(["run", "--config", str(cfg_path)])
        assert rc == 0
        out = capsys.readouterr().out
        assert "p90_ms" in out and "8-12s" in out

    def test_compare_two_reports(self, tmp_path, capsys):
        for mode in ("multiplexed", "sequential"):
            cfg_path = tmp_path / f"{mode}.cfg.json"
            cfg_path.write_text(json.dumps(scenario_to_dict(tiny_scenario(mode))))
            rc = bench_main(["run", "--config", str(cfg_path),
                             "--format", "json",
                             "--out", str(tmp_path / f"{mode}.json")])
            assert rc == 0
        rc = bench_main(["compare", str(tmp_path / "sequential.json"),
                         str(tmp_path / "multiplexed.json"),
                         "--json-out", str(tmp_path / "cmp.json")])
        assert rc == 0
        out = capsys.readouterr().out
        assert "delta_ms" in out
        rows = json.loads((tmp_path / "cmp.json").read_text())
        assert rows and rows[0]["delta_ms"] < 0  # multiplexed is faster

    def test_missing_config_file_errors(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            bench_main(["run", "--config", str(tmp_path / "nope.json")])


class TestWallClock:
    def test_micro_scenario_against_live_server(self, live_server_factory):
        server = live_server_factory(fast_config(
            policy=BatchingPolicy(kind="dynamic", max_wait_ms=40.0)))
        cfg = ScenarioConfig(
            concurrency=2, duration_buckets_s=((3.0, 5.0),),
            sessions_per_bucket=2, seed=2, speech_silence_duty=0.6,
            clock="wall", server_url=server.ws_url)
        report = run_scenario(cfg)
        assert report.clock == "wall"
        (cell,) = report.cells
        assert cell.n >= 2
        assert 0 < cell.p90_ms < 10_000
        assert cell.p50_ms <= cell.p90_ms <= cell.max_ms
