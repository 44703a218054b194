import csv

import numpy as np
import pytest

from dedem.errors import NonFiniteLossError, PropagationError
from dedem.fracture import propagation
from dedem.fracture.propagation import propagate, write_path


def test_propagation_grows_the_crack(scenario):
    state = propagate(scenario, n_steps=2, delta_a=0.1)

    assert not state.terminated
    assert len(state.steps) == 2
    assert len(state.snapshots) == 2
    assert state.path.length == pytest.approx(0.7)
    assert len(state.path.vertices) == 4
    assert state.steps[0].tip == pytest.approx((0.5, 0.0))
    assert state.steps[1].tip == pytest.approx(state.steps[0].new_tip)
    assert state.path.tip_flags == (False, True)


def test_step_length_and_direction(scenario):
    state = propagate(scenario, n_steps=1, delta_a=0.1)

    (step,) = state.steps
    moved = np.subtract(step.new_tip, step.tip)
    assert np.linalg.norm(moved) == pytest.approx(0.1)
    # initial tangent is +x1, so the global angle equals the kink angle
    assert np.arctan2(moved[1], moved[0]) == pytest.approx(step.theta_c)


def test_leaving_the_domain_terminates(scenario):
    state = propagate(scenario, n_steps=3, delta_a=2.0)

    assert state.terminated
    assert "leave the domain" in state.termination_reason
    assert len(state.steps) == 1
    assert state.steps[0].new_tip is None
    assert state.paths == []


def test_start_tip_is_reversed(scenario_factory, crack_section_factory):
    scenario = scenario_factory(
        crack={"c1": crack_section_factory(vertices=((0.5, 0.0), (1.0, 0.0)))}
    )

    state = propagate(scenario, n_steps=1, delta_a=2.0)

    assert state.initial_path.vertices[0] == (1.0, 0.0)
    assert state.steps[0].tip == pytest.approx((0.5, 0.0))


def test_needs_single_active_tip(scenario_factory, crack_section_factory):
    scenario = scenario_factory(
        crack={"c1": crack_section_factory(vertices=((0.2, 0.0), (0.8, 0.0)))}
    )

    with pytest.raises(PropagationError) as exc_info:
        propagate(scenario, n_steps=1, delta_a=0.1)

    assert exc_info.value.step == 0
    assert "exactly one active tip" in str(exc_info.value)


def test_step_length_must_be_positive(scenario):
    with pytest.raises(PropagationError):
        propagate(scenario, n_steps=1, delta_a=0.0)


def test_failures_carry_step_index(scenario, mocker):
    mocker.patch.object(propagation, "train", side_effect=NonFiniteLossError("energy blew up"))

    with pytest.raises(PropagationError) as exc_info:
        propagate(scenario, n_steps=2, delta_a=0.1)

    assert str(exc_info.value) == "step 0: energy blew up"
    assert isinstance(exc_info.value.__cause__, NonFiniteLossError)


def test_warm_start_uses_first_step(scenario, mocker):
    spy = mocker.spy(propagation, "train")

    state = propagate(scenario, n_steps=3, delta_a=0.05)

    inits = [call.kwargs["init"] for call in spy.call_args_list]
    assert inits[0] is None
    assert inits[1] is state.snapshots[0]
    assert inits[2] is state.snapshots[0]


def test_cold_start_reinitializes(scenario, mocker):
    spy = mocker.spy(propagation, "train")

    propagate(scenario, n_steps=2, delta_a=0.05, cold_start=True)

    assert [call.kwargs["init"] for call in spy.call_args_list] == [None, None]


def test_write_path(tmp_path, scenario):
    state = propagate(scenario, n_steps=2, delta_a=0.1)

    write_path(state, tmp_path / "path.csv")

    with open(tmp_path / "path.csv", newline="") as file:
        rows = list(csv.DictReader(file))
    assert len(rows) == 3
    assert float(rows[0]["tip_x"]) == 0.5
    assert rows[2]["theta_c"] == ""
    assert float(rows[2]["tip_x"]) == pytest.approx(state.path.tip_point("end")[0])
