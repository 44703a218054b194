import numpy as np
import pytest

from dedem.autodiff import Recording, dual_from_jacobian
from dedem.errors import NetworkShapeError
from dedem.models import NetConfig
from dedem.network import (
    evaluate_displacement,
    forward,
    init_params,
    load_snapshot,
    parameter_layout,
    save_snapshot,
)

AWAY_FROM_CRACK = np.array([[0.25, 0.5], [0.75, -0.4], [0.6, 0.1]])


@pytest.fixture
def params(scenario):
    return init_params(scenario.net_config, seed=0)


def test_layout_covers_parameter_count():
    config = NetConfig(input_dim=4, width=5, residual_blocks=2)

    layout = parameter_layout(config)

    assert layout["u1.stem.weight"] == (0, 20, (5, 4))
    assert max(stop for _, stop, _ in layout.values()) == config.parameter_count
    assert layout["u2.head.bias"][1] == config.parameter_count


def test_init_is_reproducible(scenario):
    first = init_params(scenario.net_config, seed=3)
    second = init_params(scenario.net_config, seed=3)
    other = init_params(scenario.net_config, seed=4)

    np.testing.assert_array_equal(first.values, second.values)
    assert not np.array_equal(first.values, other.values)


def test_init_zeroes_biases(params):
    for name in params.vector.layout:
        if name.endswith(".bias"):
            np.testing.assert_array_equal(params.vector.view(name), 0.0)
    assert np.any(params.vector.view("u1.stem.weight") != 0)


def test_forward_rejects_wrong_width(params):
    recording = Recording(params.values)
    plain = dual_from_jacobian(
        AWAY_FROM_CRACK, np.broadcast_to(np.eye(2), (3, 2, 2)), recording
    )

    with pytest.raises(NetworkShapeError):
        forward(recording.parameters(), params, plain)


def test_essential_conditions_hold_exactly(scenario, params):
    left = np.array([[0.0, -0.7], [0.0, 0.4]])
    bottom = np.array([[0.3, -1.0], [0.9, -1.0]])

    u_left, _ = evaluate_displacement(
        params, scenario.constraint, scenario.embedding_specs(), left
    )
    u_bottom, _ = evaluate_displacement(
        params, scenario.constraint, scenario.embedding_specs(), bottom
    )

    np.testing.assert_array_equal(u_left[:, 0], 0.0)
    np.testing.assert_array_equal(u_bottom[:, 1], 0.0)


def test_spatial_gradient_matches_finite_differences(scenario, params):
    specs = scenario.embedding_specs()
    _, gradient = evaluate_displacement(params, scenario.constraint, specs, AWAY_FROM_CRACK)

    h = 1e-6
    for axis in range(2):
        step = np.zeros(2)
        step[axis] = h
        plus, _ = evaluate_displacement(
            params, scenario.constraint, specs, AWAY_FROM_CRACK + step
        )
        minus, _ = evaluate_displacement(
            params, scenario.constraint, specs, AWAY_FROM_CRACK - step
        )
        np.testing.assert_allclose(
            gradient[:, :, axis], (plus - minus) / (2 * h), rtol=1e-5, atol=1e-12
        )


def test_displacement_jumps_across_crack_faces(scenario, params):
    specs = scenario.embedding_specs()
    behind = np.array([[0.2, 0.0]])
    ahead = np.array([[0.7, 0.0]])

    def jump(points):
        upper, _ = evaluate_displacement(
            params, scenario.constraint, specs, points, {"c1": np.ones(1)}
        )
        lower, _ = evaluate_displacement(
            params, scenario.constraint, specs, points, {"c1": -np.ones(1)}
        )
        return upper - lower

    assert np.linalg.norm(jump(behind)) > 0
    np.testing.assert_array_equal(jump(ahead), 0.0)


def test_snapshot_round_trip(tmp_path, params):
    destination = tmp_path / "snapshot.json"

    save_snapshot(params, destination)
    loaded = load_snapshot(destination)

    np.testing.assert_array_equal(loaded.values, params.values)
    assert loaded.config == params.config
    assert loaded.seed == 0


def test_snapshot_size_mismatch(tmp_path, params):
    destination = tmp_path / "snapshot.json"
    save_snapshot(params.model_copy(update={"config": NetConfig(width=3)}), destination)

    with pytest.raises(NetworkShapeError) as exc_info:
        load_snapshot(destination)

    assert "its config needs" in str(exc_info.value)


def test_unreadable_snapshot(tmp_path):
    with pytest.raises(NetworkShapeError):
        load_snapshot(tmp_path / "missing.json")
