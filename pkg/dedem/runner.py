"""
Execute CLI commands: load the scenario, run the requested verb and write its
artifacts plus a reproducibility manifest into the output directory.
"""

from __future__ import annotations

import hashlib
import json
import logging
import uuid
from pathlib import Path
from typing import Any, Callable

import numpy as np
import torch
from dockerflow.logging import request_id_context
from dockerflow.version import get_version
from pydantic import BaseModel, Field

from dedem import Operation
from dedem.autodiff import Recording, backward
from dedem.common.instrument import instrument
from dedem.configuration import list_presets, load_scenario
from dedem.energy import EnergyFunctional, field_snapshot
from dedem.errors import DedemError, ScenarioError
from dedem.fields import export_field, load_reference_field
from dedem.fracture.propagation import propagate, write_path
from dedem.fracture.sif import crack_size, extract_sif, rrmse, write_sif_report
from dedem.fracture.sweeps import SweepKind, sweep
from dedem.models import Scenario
from dedem.network import NetParams, init_params, save_snapshot
from dedem.optimizer import train, warm_start, write_loss_history
from dedem.quadrature import (
    QuadGrid,
    build_scenario_grid,
    build_uniform_grid,
    grid_table,
)

logger = logging.getLogger(__name__)

APP_DIR = Path(__file__).parents[1]
DEFAULT_DELTA_A = 0.15
GRADIENT_SAMPLES = 20


class Command(BaseModel, frozen=True):
    """One CLI invocation."""

    verb: Operation
    scenario: Path | None = None
    out: Path = Path("out")
    seed: int | None = None
    epochs: int | None = Field(default=None, ge=0)
    grid: tuple[int, int] | None = None
    deterministic: bool | None = None
    warm_start: Path | None = None
    reference: Path | None = None
    steps: int = Field(default=3, ge=0)
    delta_a: float = Field(default=DEFAULT_DELTA_A, gt=0)
    cold_start: bool = False
    samples: int = Field(default=GRADIENT_SAMPLES, ge=1)
    sweep: SweepKind | None = None
    values: tuple[float, ...] | None = None


class RunContext(BaseModel, frozen=True):
    run_id: str
    operation: Operation
    scenario: str | None = None


class Manifest(BaseModel, frozen=True):
    """Everything needed to reproduce the artifacts of one run."""

    run_id: str
    version: str
    verb: Operation
    scenario: str | None = None
    scenario_sha256: str | None = None
    seed: int | None = None
    overrides: dict[str, Any] = {}
    config: dict[str, Any] | None = None
    artifacts: list[str] = []


class RunResult(BaseModel, frozen=True):
    manifest: Manifest
    summary: dict[str, Any] = {}


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _version() -> str:
    info = get_version(APP_DIR) or {}
    return info.get("version", "unknown")


def _scenario(command: Command) -> Scenario:
    if command.scenario is None:
        raise ScenarioError(f"{command.verb.value} needs a scenario file")
    return load_scenario(command.scenario).with_overrides(
        seed=command.seed,
        max_epochs=command.epochs,
        grid=command.grid,
        deterministic=command.deterministic,
    )


def _initial(command: Command, scenario: Scenario) -> NetParams | None:
    if command.warm_start is None:
        return None
    return warm_start(command.warm_start, scenario.net_config)


def _write_json(destination: Path, payload: Any) -> None:
    destination.write_text(json.dumps(payload, indent=2, default=str), encoding="utf8")


def _field_points(scenario: Scenario) -> np.ndarray:
    return build_uniform_grid(scenario.grid.nx, scenario.grid.ny, scenario.domain).points


def run_solve(command: Command, scenario: Scenario) -> tuple[list[str], dict]:
    report = train(scenario, init=_initial(command, scenario))
    write_loss_history(report, command.out / "loss_history.csv")
    save_snapshot(report.best_params, command.out / "snapshot.json")
    field = field_snapshot(report.best_params, scenario, _field_points(scenario))
    export_field(field, command.out / "field.csv")
    artifacts = ["loss_history.csv", "snapshot.json", "field.csv"]
    summary: dict[str, Any] = {
        "epochs": report.epochs_run,
        "best_epoch": report.best_epoch,
        "best_loss": report.best_loss,
        "stopped_early": report.stopped_early,
        "breakdown": report.breakdown.model_dump() if report.breakdown else None,
    }
    if command.reference is not None:
        reference = load_reference_field(command.reference)
        compared = field_snapshot(report.best_params, scenario, reference.points)
        errors = rrmse(compared, reference)
        _write_json(command.out / "rrmse.json", errors)
        artifacts.append("rrmse.json")
        summary["rrmse"] = errors
    return artifacts, summary


def _sif_rows(rows, parameter: str) -> list[dict[str, Any]]:
    return [
        {
            "row": step,
            parameter: value,
            "crack": result.crack,
            "tip": result.tip,
            "K1": result.K1,
            "K2": result.K2,
            "method": result.method,
        }
        for step, value, result in rows
    ]


def run_sweep(command: Command, scenario: Scenario) -> tuple[list[str], dict]:
    assert command.sweep is not None
    if not command.values:
        raise ScenarioError(f"{command.sweep.value} sweep needs --values")
    rows = sweep(scenario, command.sweep, list(command.values))
    parameter = command.sweep.column
    write_sif_report(rows, command.out / "sif.csv", parameter=parameter)
    return ["sif.csv"], {"sweep": command.sweep.value, "sif": _sif_rows(rows, parameter)}


def run_sif(command: Command, scenario: Scenario) -> tuple[list[str], dict]:
    if command.sweep is not None:
        return run_sweep(command, scenario)
    tipped = [(path, which) for path in scenario.cracks for which in path.tips]
    if not tipped:
        raise ScenarioError("scenario has no crack tip to evaluate")
    report = train(scenario, init=_initial(command, scenario))
    save_snapshot(report.best_params, command.out / "snapshot.json")
    rows = []
    for step, (path, which) in enumerate(tipped):
        result = extract_sif(report.best_params, scenario, path.id, which=which)
        rows.append((step, crack_size(path), result))
    write_sif_report(rows, command.out / "sif.csv")
    summary = {"epochs": report.epochs_run, "sif": _sif_rows(rows, "a")}
    return ["snapshot.json", "sif.csv"], summary


def run_propagate(command: Command, scenario: Scenario) -> tuple[list[str], dict]:
    state = propagate(
        scenario,
        command.steps,
        command.delta_a,
        cold_start=command.cold_start,
        init=_initial(command, scenario),
    )
    write_path(state, command.out / "path.csv")
    artifacts = ["path.csv"]
    for step, params in enumerate(state.snapshots):
        name = f"snapshot_step{step}.json"
        save_snapshot(params, command.out / name)
        artifacts.append(name)
    summary = {
        "steps": len(state.steps),
        "terminated": state.terminated,
        "termination_reason": state.termination_reason,
        "theta_c": [entry.theta_c for entry in state.steps],
        "epochs": [entry.epochs for entry in state.steps],
    }
    return artifacts, summary


def gradient_check(
    scenario: Scenario,
    params: NetParams,
    samples: int = GRADIENT_SAMPLES,
    grid: QuadGrid | None = None,
) -> dict[str, Any]:
    """Recorded gradient of the energy against central differences on random coordinates."""
    grid = grid if grid is not None else build_scenario_grid(scenario)
    functional = EnergyFunctional(scenario, grid)
    values = params.values

    recording = Recording(values)
    loss, _ = functional(recording.parameters(), params)
    gradient = backward(loss)

    def energy(theta: np.ndarray) -> float:
        with torch.no_grad():
            return functional(Recording(theta).parameters(), params)[0].item()

    rng = np.random.default_rng(scenario.seed)
    indices = np.sort(rng.choice(len(values), size=min(samples, len(values)), replace=False))
    floor = 1e-8 * max(1.0, float(np.max(np.abs(gradient))))
    entries = []
    for index in indices:
        h = 1e-6 * (1.0 + abs(values[index]))
        plus, minus = values.copy(), values.copy()
        plus[index] += h
        minus[index] -= h
        estimate = (energy(plus) - energy(minus)) / (2 * h)
        exact = float(gradient[index])
        error = abs(exact - estimate) / max(abs(exact), abs(estimate), floor)
        entries.append(
            {"index": int(index), "recorded": exact, "finite_difference": estimate, "rel_err": error}
        )
    worst = max((entry["rel_err"] for entry in entries), default=0.0)
    return {"loss": loss.item(), "max_rel_err": worst, "entries": entries}


def run_check_grad(command: Command, scenario: Scenario) -> tuple[list[str], dict]:
    params = _initial(command, scenario) or init_params(scenario.net_config, scenario.seed)
    report = gradient_check(scenario, params, command.samples)
    _write_json(command.out / "check_grad.json", report)
    return ["check_grad.json"], {"max_rel_err": report["max_rel_err"]}


def run_export_grid(command: Command, scenario: Scenario) -> tuple[list[str], dict]:
    grid = build_scenario_grid(scenario)
    export_field(grid_table(grid), command.out / "grid.csv")
    return ["grid.csv"], {"nodes": len(grid), "weight_sum": float(np.sum(grid.weights))}


def run_validate(command: Command) -> tuple[list[str], dict]:
    paths = [command.scenario] if command.scenario else list_presets()
    checked = {}
    for path in paths:
        scenario = load_scenario(path)
        checked[str(path)] = {
            "cracks": [crack.id for crack in scenario.cracks],
            "materials": list(scenario.material),
            "parameters": scenario.net_config.parameter_count,
        }
    _write_json(command.out / "validate.json", checked)
    return ["validate.json"], {"scenarios": checked}


VERBS: dict[Operation, Callable[[Command, Scenario], tuple[list[str], dict]]] = {
    Operation.SOLVE: run_solve,
    Operation.SIF: run_sif,
    Operation.PROPAGATE: run_propagate,
    Operation.CHECK_GRAD: run_check_grad,
    Operation.EXPORT_GRID: run_export_grid,
}


@instrument(prefix="cli")
def run(command: Command) -> RunResult:
    """Run `command`, writing artifacts and `manifest.json` into `command.out`."""
    run_id = uuid.uuid4().hex
    request_id_context.set(run_id)
    context = RunContext(
        run_id=run_id,
        operation=command.verb,
        scenario=str(command.scenario) if command.scenario else None,
    )
    logger.info("Starting run", extra=context.model_dump())
    command.out.mkdir(parents=True, exist_ok=True)

    scenario = None
    try:
        if command.verb == Operation.VALIDATE:
            artifacts, summary = run_validate(command)
        else:
            scenario = _scenario(command)
            artifacts, summary = VERBS[command.verb](command, scenario)
    except DedemError:
        logger.exception("Run failed", extra=context.model_dump())
        raise

    overrides = command.model_dump(
        mode="json",
        include={
            "seed",
            "epochs",
            "grid",
            "deterministic",
            "warm_start",
            "steps",
            "delta_a",
            "sweep",
            "values",
        },
        exclude_none=True,
    )
    manifest = Manifest(
        run_id=run_id,
        version=_version(),
        verb=command.verb,
        scenario=context.scenario,
        scenario_sha256=_sha256(command.scenario) if command.scenario else None,
        seed=scenario.seed if scenario else None,
        overrides=overrides,
        config=scenario.model_dump(mode="json") if scenario else None,
        artifacts=artifacts,
    )
    (command.out / "manifest.json").write_text(
        manifest.model_dump_json(indent=2), encoding="utf8"
    )
    logger.info("Run finished", extra={**context.model_dump(), "artifacts": artifacts})
    return RunResult(manifest=manifest, summary=summary)
