"""
Tests for run configuration and the command-line interface.
"""

import json
from pathlib import Path

import pandas as pd
import pytest

from main import EXIT_CONFIG, EXIT_OK, StochNLSCLI
from stochnls import ConfigManager, ConfigurationError, RunConfig, parse_config
from stochnls.colors import Colors
from stochnls.utils import parse_step

DATA = Path(__file__).resolve().parent.parent / "data"


def run_cli(*argv) -> int:
    return StochNLSCLI().run(["--quiet", *argv])


class TestParseStep:

    @pytest.mark.parametrize("raw, value", [
        ("2^-8", 2.0 ** -8), ("2^(-3)", 0.125), (" 2 ^ -1 ", 0.5), (0.25, 0.25), ("1e-3", 1e-3),
    ])
    def test_formats(self, raw, value):
        assert parse_step(raw, "tau") == value

    @pytest.mark.parametrize("raw", ["half", True, None])
    def test_rejects(self, raw):
        with pytest.raises(ConfigurationError) as info:
            parse_step(raw, "tau")
        assert info.value.key == "tau"


class TestRunConfig:

    def test_defaults(self):
        config = parse_config(overrides={"command": "selftest"})
        assert config.command == "selftest"
        assert config.grid_points == 1024
        assert config.seed == 20210101
        assert config.schemes == ["split", "exp", "mid"]

    def test_convergence_file(self):
        config = parse_config(DATA / "fig3_convergence.yaml")
        assert config.command == "convergence"
        assert config.grid_points == 2 ** 10
        assert config.t_end == 1.0
        assert config.tau_ladder == [2.0 ** -k for k in range(10, 17)]
        assert config.tau_ref == 2.0 ** -18
        assert config.samples == 100

    @pytest.mark.parametrize("name", ["fig1_evolution.yaml", "fig2_conservation.yaml",
                                      "desk_convergence.yaml", "regularity.yaml", "selftest.yaml"])
    def test_sample_files_parse(self, name):
        assert parse_config(DATA / name).command in ("evolve", "conservation", "convergence",
                                                     "regularity", "selftest")

    def test_reference_coarser_than_ladder(self):
        with pytest.raises(ConfigurationError, match="does not divide") as info:
            parse_config(assignments=["command=convergence", "tau_ladder=[2^-4, 2^-5]",
                                      "tau_ref=2^-4"])
        assert info.value.key == "tau_ref"

    def test_unknown_key(self, tmp_path):
        target = tmp_path / "run.yaml"
        target.write_text("command: evolve\ntime_step: 0.1\n")
        with pytest.raises(ConfigurationError) as info:
            parse_config(target)
        assert info.value.key == "time_step"

    @pytest.mark.parametrize("assignment, key", [
        ("grid_points=abc", "grid_points"),
        ("grid_points=12", "grid_points"),
        ("samples=2.5", "samples"),
        ("dealias=1", "dealias"),
        ("schemes=[split, rk4]", "schemes"),
        ("command=plot", "command"),
        ("moment=0.5", "moment"),
        ("tau=2^-3", "tau"),
    ])
    def test_invalid_values_name_the_key(self, assignment, key):
        overrides = {"t_end": 1.0}
        if key == "tau":
            overrides["t_end"] = 0.3
        with pytest.raises(ConfigurationError) as info:
            parse_config(assignments=[assignment], overrides=overrides)
        assert info.value.key == key

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError, match="not found"):
            parse_config(tmp_path / "absent.yaml")

    def test_empty_file(self, tmp_path):
        target = tmp_path / "empty.yaml"
        target.write_text("")
        assert parse_config(target, overrides={"command": "selftest"}) == \
            RunConfig(command="selftest")

    def test_flags_override_assignments(self):
        config = parse_config(overrides={"seed": 7}, assignments=["seed=3", "workers=2"])
        assert config.seed == 7
        assert config.workers == 2

    def test_effective_config_round_trip(self, tmp_path):
        config = parse_config(DATA / "fig3_convergence.yaml", assignments=["sup_error=true"])
        echoed = ConfigManager.save_effective_config(config, tmp_path)
        assert parse_config(echoed) == config

    def test_manager_get_and_set(self):
        manager = ConfigManager()
        manager.set("samples", 8)
        assert manager.get("samples") == 8
        assert manager.get("missing", "fallback") == "fallback"
        with pytest.raises(ConfigurationError):
            manager.set("missing", 1)


class TestCommands:

    def test_evolve(self, tmp_path):
        status = run_cli("--command", "evolve", "--out", str(tmp_path),
                         "--set", "grid_points=32", "--set", "tau=2^-4",
                         "--set", "snapshot_every=4", "--set", "schemes=[split, mid]")
        assert status == EXIT_OK
        for name in ("effective_config.yaml", "summary.json", "run.log", "path.csv",
                     "split/diagnostics.csv", "mid/diagnostics.csv",
                     "split/snapshots/snapshot_00000016.csv"):
            assert (tmp_path / name).is_file(), name

        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["passed"] is True
        assert summary["schemes"]["split"]["steps"] == 16
        assert summary["invariants"][0]["name"] == "split_l2_conservation"

    def test_conservation(self, tmp_path):
        status = run_cli("--command", "conservation", "--out", str(tmp_path),
                         "--set", "grid_points=64", "--set", "tau=2^-6")
        assert status == EXIT_OK
        frame = pd.read_csv(tmp_path / "conservation.csv")
        assert list(frame.columns) == ["scheme", "t", "drift"]
        assert frame.loc[frame["scheme"] == "split", "drift"].max() <= 1e-10

    def test_convergence(self, tmp_path):
        status = run_cli("--command", "convergence", "--out", str(tmp_path), "--seed", "11",
                         "--set", "grid_points=16", "--set", "tau_ladder=[2^-3, 2^-4, 2^-5]",
                         "--set", "tau_ref=2^-7", "--set", "samples=3")
        assert status == EXIT_OK
        for name in ("convergence.csv", "slopes.csv", "moments.csv", "probability.csv"):
            assert (tmp_path / name).is_file(), name
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["seed"] == 11
        assert set(summary["slopes"]) == {"split", "exp", "mid"}

    def test_convergence_output_independent_of_workers(self, tmp_path):
        args = ["--command", "convergence", "--set", "grid_points=16",
                "--set", "tau_ladder=[2^-3, 2^-4, 2^-5]", "--set", "tau_ref=2^-7",
                "--set", "samples=4"]
        assert run_cli(*args, "--workers", "1", "--out", str(tmp_path / "serial")) == EXIT_OK
        assert run_cli(*args, "--workers", "2", "--out", str(tmp_path / "pooled")) == EXIT_OK
        assert (tmp_path / "serial" / "convergence.csv").read_bytes() == \
            (tmp_path / "pooled" / "convergence.csv").read_bytes()

    def test_exact_regime_is_flagged(self, tmp_path):
        status = run_cli("--command", "convergence", "--out", str(tmp_path),
                         "--set", "potential=zero", "--set", "schemes=[split, exp]",
                         "--set", "grid_points=16", "--set", "tau_ladder=[2^-3, 2^-4, 2^-5]",
                         "--set", "tau_ref=2^-7", "--set", "samples=2")
        assert status == EXIT_OK
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["exact_regime"] == {"split": True, "exp": True}
        assert summary["slopes"] == {"split": None, "exp": None}

    def test_regularity(self, tmp_path):
        status = run_cli("--command", "regularity", "--out", str(tmp_path),
                         "--set", "grid_points=16", "--set", "tau_ladder=[2^-2, 2^-3, 2^-4]",
                         "--set", "tau_ref=2^-6", "--set", "samples=3")
        assert status == EXIT_OK
        frame = pd.read_csv(tmp_path / "regularity.csv")
        assert list(frame.columns) == ["lag", "increment", "stderr", "samples"]

    def test_invalid_configuration_exits_2(self, tmp_path):
        assert run_cli("--command", "evolve", "--out", str(tmp_path),
                       "--set", "grid_points=12") == EXIT_CONFIG

    def test_malformed_assignment_exits_2(self, tmp_path):
        assert run_cli("--out", str(tmp_path), "--set", "grid_points") == EXIT_CONFIG

    def test_unknown_command_flag(self, tmp_path):
        with pytest.raises(SystemExit) as info:
            run_cli("--command", "plot", "--out", str(tmp_path))
        assert info.value.code == 2


@pytest.mark.slow
def test_selftest_command(tmp_path):
    assert run_cli("--command", "selftest", "--out", str(tmp_path)) == EXIT_OK
    frame = pd.read_csv(tmp_path / "invariants.csv")
    assert frame.loc[frame["severity"] == "hard", "passed"].all()


class TestColors:

    def test_status_labels(self):
        assert "PASS" in Colors.status(True)
        assert "FAIL" in Colors.status(False)
        assert "WARN" in Colors.status(False, hard=False)
        assert "PASS" in Colors.status(True, hard=False)
