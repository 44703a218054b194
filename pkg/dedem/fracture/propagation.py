"""
Quasi-static propagation: train, extract SIFs at the active tip, turn by the
kink angle and grow the crack by a fixed increment, step after step.
"""

import csv
import logging
import math
from pathlib import Path

import numpy as np

from dedem.common.instrument import instrument
from dedem.energy import material_index
from dedem.errors import DedemError, PropagationError
from dedem.models import Scenario
from dedem.network import NetParams
from dedem.optimizer import train

from .criteria import kink_angle
from .models import PropagationState, PropagationStep
from .sif import crack_size, sample_cod, sif_homogeneous

logger = logging.getLogger(__name__)


def _active_crack(scenario: Scenario):
    tipped = [(path, which) for path in scenario.cracks for which in path.tips]
    if len(tipped) != 1:
        raise PropagationError(
            f"propagation needs exactly one active tip, found {len(tipped)}", step=0
        )
    path, which = tipped[0]
    if which == "start":
        path = path.reversed()
        scenario = scenario.with_crack(path)
    return scenario, path


def _strictly_inside(scenario: Scenario, point: np.ndarray) -> bool:
    return scenario.domain.contains(point) and not scenario.domain.on_boundary(point)


@instrument(prefix="fracture")
def propagate(
    scenario: Scenario,
    n_steps: int,
    delta_a: float,
    cold_start: bool = False,
    init: NetParams | None = None,
) -> PropagationState:
    """Grow the single active crack tip for at most `n_steps` increments of `delta_a`."""
    if delta_a <= 0:
        raise PropagationError(f"step length must be positive, got {delta_a}", step=0)
    scenario, path = _active_crack(scenario)
    initial_path = path
    paths = []
    steps: list[PropagationStep] = []
    snapshots: list[NetParams] = []
    transfer: NetParams | None = init
    terminated, reason = False, None

    for step in range(n_steps):
        try:
            report = train(scenario, init=transfer)
            params = report.best_params
            if step == 0 and not cold_start:
                transfer = params

            tip = path.tip_point("end")
            material = scenario.materials[
                int(material_index(scenario.materials, tip[None, :])[0])
            ]
            samples = sample_cod(params, scenario, path.id)
            sif = sif_homogeneous(samples, material, crack_size(path))
            theta_c = kink_angle(sif.K1, sif.K2)
        except PropagationError:
            raise
        except DedemError as exception:
            raise PropagationError(str(exception), step=step) from exception

        snapshots.append(params)
        tangent = path.tip_tangent("end")
        angle = math.atan2(tangent[1], tangent[0]) + theta_c
        new_tip = tip + delta_a * np.array([math.cos(angle), math.sin(angle)])
        inside = _strictly_inside(scenario, new_tip)
        steps.append(
            PropagationStep(
                step=step,
                K1=sif.K1,
                K2=sif.K2,
                theta_c=theta_c,
                tip=(float(tip[0]), float(tip[1])),
                new_tip=(float(new_tip[0]), float(new_tip[1])) if inside else None,
                epochs=report.epochs_run,
                best_loss=report.best_loss,
            )
        )
        logger.info(
            "Propagation step %d",
            step,
            extra={
                "step": step,
                "K1": sif.K1,
                "K2": sif.K2,
                "theta_c": theta_c,
                "epochs": report.epochs_run,
            },
        )
        if not inside:
            terminated = True
            reason = f"tip would leave the domain at {tuple(new_tip)}"
            logger.info("Propagation terminated", extra={"step": step, "reason": reason})
            break

        path = path.extended(delta_a, angle)
        paths.append(path)
        try:
            scenario = scenario.with_crack(path)
        except ValueError as exception:
            raise PropagationError(str(exception), step=step) from exception

    return PropagationState(
        initial_path=initial_path,
        paths=paths,
        steps=steps,
        snapshots=snapshots,
        delta_a=delta_a,
        terminated=terminated,
        termination_reason=reason,
    )


def write_path(state: PropagationState, destination: str | Path) -> None:
    """Path CSV: one row per step with the tip it started from and its kink angle."""
    with open(destination, "w", encoding="utf8", newline="") as file:
        writer = csv.writer(file)
        writer.writerow(["step", "tip_x", "tip_y", "theta_c", "K1", "K2", "epochs"])
        for entry in state.steps:
            writer.writerow(
                [
                    entry.step,
                    format(entry.tip[0], ".17g"),
                    format(entry.tip[1], ".17g"),
                    format(entry.theta_c, ".17g"),
                    format(entry.K1, ".17g"),
                    format(entry.K2, ".17g"),
                    entry.epochs,
                ]
            )
        if state.steps and not state.terminated:
            tip = state.path.tip_point("end")
            writer.writerow(
                [len(state.steps), format(tip[0], ".17g"), format(tip[1], ".17g"), "", "", "", ""]
            )
