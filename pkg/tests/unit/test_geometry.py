import math

import numpy as np
import pytest
from pydantic import ValidationError

from dedem.errors import GeometryError
from dedem.geometry import (
    CircleInterface,
    CrackPath,
    EmbeddingSpec,
    LineInterface,
    embed_inputs,
    sdf_polyline,
    strong_embedding,
    tip_tangential_sdf,
    weak_embedding,
)


@pytest.fixture
def interior_crack():
    return CrackPath(id="c", vertices=((0.0, 0.0), (0.5, 0.0)), tip_flags=(True, True))


def test_sdf_above_crack(crack_path):
    phi, gradient = sdf_polyline((0.3, 0.2), crack_path)

    assert phi == pytest.approx(0.2)
    np.testing.assert_allclose(gradient, [0.0, 1.0])


def test_sdf_on_crack_is_zero_with_normal_gradient(crack_path):
    phi, gradient = sdf_polyline((0.3, 0.0), crack_path)

    assert phi == 0.0
    np.testing.assert_allclose(gradient, [0.0, 1.0])


def test_sdf_beyond_tip(crack_path):
    phi, _ = sdf_polyline((0.8, 0.1), crack_path)

    assert phi == pytest.approx(math.hypot(0.3, 0.1))


def test_sdf_below_is_negative(crack_path):
    phi, gradient = sdf_polyline((0.2, -0.4), crack_path)

    assert phi == pytest.approx(-0.4)
    np.testing.assert_allclose(gradient, [0.0, -1.0])


@pytest.mark.parametrize(
    "point, expected", [((0.3, 0.1), 0.2), ((0.5, 0.7), 0.0), ((0.8, 0.0), -0.3)]
)
def test_tip_tangential_sdf(crack_path, point, expected):
    psi, gradient = tip_tangential_sdf(point, crack_path, "end")

    assert psi == pytest.approx(expected)
    np.testing.assert_allclose(gradient, [-1.0, 0.0])


def test_tip_tangential_sdf_requires_a_tip(crack_path):
    with pytest.raises(GeometryError):
        tip_tangential_sdf((0.0, 0.0), crack_path, "start")


def test_edge_crack_embedding_values(crack_path):
    upper, _ = strong_embedding((0.3, 1e-9), crack_path)
    lower, _ = strong_embedding((0.3, -1e-9), crack_path)

    assert upper == pytest.approx(0.04)
    assert lower == pytest.approx(-0.04)


def test_embedding_vanishes_ahead_of_tip(crack_path):
    value, gradient = strong_embedding((0.7, 0.3), crack_path)

    assert value == 0.0
    np.testing.assert_array_equal(gradient, [0.0, 0.0])


@pytest.mark.parametrize("y", [-0.7, -1e-8, 0.0, 0.4])
def test_embedding_is_zero_on_tip_plane(crack_path, y):
    value, gradient = strong_embedding((0.5, y), crack_path)

    assert value == 0.0
    np.testing.assert_array_equal(gradient, [0.0, 0.0])


def test_point_on_crack_takes_negative_side(crack_path):
    value, _ = strong_embedding((0.3, 0.0), crack_path)

    assert value == pytest.approx(-0.04)


def test_side_override(crack_path):
    value, _ = strong_embedding(np.array([[0.3, 0.0]]), crack_path, side=1.0)

    assert value[0] == pytest.approx(0.04)


def test_interior_crack_jump(interior_crack):
    rng = np.random.default_rng(0)
    for x in rng.uniform(0.01, 0.49, size=20):
        psi1, psi2 = x, 0.5 - x
        upper, _ = strong_embedding((x, 1e-8), interior_crack)
        lower, _ = strong_embedding((x, -1e-8), interior_crack)
        assert upper - lower == pytest.approx(2 * (psi1 * psi2) ** 2, rel=1e-8)


def test_through_crack_is_pure_sign():
    path = CrackPath(vertices=((0.0, 0.5), (1.0, 0.5)), tip_flags=(False, False))

    value, gradient = strong_embedding(np.array([[0.2, 0.7], [0.2, 0.3]]), path)

    np.testing.assert_array_equal(value, [1.0, -1.0])
    assert not gradient.any()


def test_strong_gradient_matches_finite_differences(interior_crack):
    rng = np.random.default_rng(1)
    h = 1e-7
    for point in rng.uniform([0.05, 0.05], [0.45, 0.4], size=(10, 2)):
        _, gradient = strong_embedding(point, interior_crack)
        for axis in range(2):
            step = np.zeros(2)
            step[axis] = h
            estimate = (
                strong_embedding(point + step, interior_crack)[0]
                - strong_embedding(point - step, interior_crack)[0]
            ) / (2 * h)
            assert gradient[axis] == pytest.approx(estimate, rel=1e-5, abs=1e-12)


def test_weak_embedding_line():
    shape = LineInterface(point=(0.0, 0.0), normal=(0.0, 1.0))

    value, gradient = weak_embedding((0.4, -0.3), shape)

    assert value == pytest.approx(0.3)
    np.testing.assert_allclose(gradient, [0.0, -1.0])


def test_weak_embedding_circle():
    shape = CircleInterface(center=(0.5, 0.5), radius=0.25)

    value, _ = weak_embedding((0.5, 0.9), shape)
    on_rim, _ = weak_embedding((0.75, 0.5), shape)

    assert value == pytest.approx(0.15)
    assert on_rim == 0.0


def test_weak_embedding_is_1_lipschitz():
    shape = CircleInterface(center=(0.5, 0.5), radius=0.25)
    rng = np.random.default_rng(2)
    a = rng.uniform(0, 1, size=(10_000, 2))
    b = rng.uniform(0, 1, size=(10_000, 2))

    difference = np.abs(weak_embedding(a, shape)[0] - weak_embedding(b, shape)[0])

    assert np.all(difference <= np.linalg.norm(a - b, axis=1) + 1e-15)


def test_embed_inputs_without_specs():
    augmented, jacobian = embed_inputs((0.3, 0.4), [])

    np.testing.assert_array_equal(augmented, [0.3, 0.4])
    np.testing.assert_array_equal(jacobian, np.eye(2))


def test_embed_inputs_interface_crack(crack_path):
    specs = [
        EmbeddingSpec(id="c1", kind="strong", crack=crack_path),
        EmbeddingSpec(
            id="bond", kind="weak", interface=LineInterface(point=(0, 0), normal=(0, 1))
        ),
    ]

    augmented, jacobian = embed_inputs((0.3, 0.1), specs)

    np.testing.assert_allclose(augmented, [0.3, 0.1, 0.04, 0.1])
    assert jacobian.shape == (4, 2)
    np.testing.assert_allclose(jacobian[2], [-0.4, 0.0])
    np.testing.assert_allclose(jacobian[3], [0.0, 1.0])


def test_extended_appends_vertex(crack_path):
    grown = crack_path.extended(0.15, math.pi / 2)

    assert len(grown.vertices) == 3
    np.testing.assert_allclose(grown.tip_point("end"), [0.5, 0.15])
    assert grown.length == pytest.approx(0.65)


def test_reversed_swaps_tips(crack_path):
    flipped = crack_path.reversed()

    assert flipped.tips == ["start"]
    np.testing.assert_allclose(flipped.tip_point("start"), [0.5, 0.0])


@pytest.mark.parametrize(
    "vertices",
    [
        ((0.0, 0.0), (0.0, 0.0)),
        ((0.0, 0.0), (1.0, 0.0), (0.5, 0.0)),
        ((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.5, -1.0)),
    ],
)
def test_invalid_polylines(vertices):
    with pytest.raises(ValidationError):
        CrackPath(vertices=vertices)


def test_interface_normal_must_be_unit():
    with pytest.raises(ValidationError):
        LineInterface(point=(0.0, 0.0), normal=(0.0, 2.0))
