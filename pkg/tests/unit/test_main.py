import json

import pytest
from click.testing import CliRunner

from dedem.__main__ import cli, parse_grid, parse_values
from dedem.fracture.sweeps import SweepKind


@pytest.fixture
def runner():
    return CliRunner()


def test_parse_grid():
    assert parse_grid(None, None, "80,100") == (80, 100)
    assert parse_grid(None, None, None) is None


def test_parse_values():
    assert parse_values(None, None, "0.1,0.5") == (0.1, 0.5)
    assert parse_values(None, None, None) is None


def test_lists_every_verb(runner):
    result = runner.invoke(cli, ["--help"])

    assert result.exit_code == 0
    for verb in ("solve", "propagate", "sif", "check-grad", "validate", "export-grid"):
        assert verb in result.output


def test_export_grid_prints_summary(runner, tmp_path):
    result = runner.invoke(
        cli,
        [
            "export-grid",
            "--scenario",
            "config/patch_test.toml",
            "--out",
            str(tmp_path),
            "--grid",
            "5,5",
        ],
    )

    assert result.exit_code == 0, result.stderr
    assert json.loads(result.stdout)["nodes"] == 25
    assert (tmp_path / "manifest.json").exists()


def test_bad_grid_is_a_usage_error(runner):
    result = runner.invoke(cli, ["export-grid", "--grid", "5x5"])

    assert result.exit_code == 2
    assert "expected NX,NY" in result.stderr


def test_scenario_error_exits_one(runner, tmp_path):
    result = runner.invoke(
        cli,
        [
            "validate",
            "--scenario",
            "tests/fixtures/bad-scenario.toml",
            "--out",
            str(tmp_path),
        ],
    )

    assert result.exit_code == 1
    error = json.loads(result.stderr.strip().splitlines()[-1])
    assert error["module"] == "config_io"
    assert error["type"] == "ScenarioError"
    assert error["error"].startswith("config_io: ")
    assert "crack outside domain" in error["error"]


def test_unexpected_error_exits_two(runner, tmp_path, mocker):
    mocker.patch("dedem.__main__.run", side_effect=RuntimeError("boom"))

    result = runner.invoke(cli, ["validate", "--out", str(tmp_path)])

    assert result.exit_code == 2
    assert json.loads(result.stderr.strip().splitlines()[-1])["error"] == "dedem: boom"


def test_options_reach_the_command(runner, tmp_path, mocker):
    run = mocker.patch("dedem.__main__.run")
    run.return_value.summary = {}

    runner.invoke(
        cli,
        [
            "propagate",
            "--scenario",
            "config/center_crack.toml",
            "--out",
            str(tmp_path),
            "--steps",
            "2",
            "--delta-a",
            "0.1",
            "--cold-start",
            "--epochs",
            "5",
        ],
    )

    (command,), _ = run.call_args
    assert command.verb.value == "propagate"
    assert command.steps == 2
    assert command.delta_a == 0.1
    assert command.cold_start
    assert command.epochs == 5
    assert command.deterministic is None


def test_sweep_options_reach_the_command(runner, tmp_path, mocker):
    run = mocker.patch("dedem.__main__.run")
    run.return_value.summary = {}

    result = runner.invoke(
        cli,
        [
            "sif",
            "--scenario",
            "config/interface_crack.toml",
            "--out",
            str(tmp_path),
            "--sweep",
            "modulus-ratio",
            "--values",
            "1,2,10",
        ],
    )

    assert result.exit_code == 0, result.stderr
    (command,), _ = run.call_args
    assert command.sweep is SweepKind.MODULUS_RATIO
    assert command.values == (1.0, 2.0, 10.0)


def test_bad_sweep_values_are_a_usage_error(runner):
    result = runner.invoke(cli, ["sif", "--sweep", "crack-size", "--values", "0.1;0.2"])

    assert result.exit_code == 2
    assert "comma-separated" in result.stderr
