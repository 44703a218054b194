"""
Crack and interface geometry, tracked with signed distance functions, and the
discontinuity embeddings appended to the network input.

All queries accept a single point ``(x1, x2)`` or an ``(N, 2)`` array and
return arrays shaped accordingly. The sign convention sgn(0) = -1 is shared
with the expression language: points exactly on a crack fall on its "-" side
unless an explicit side label is supplied.
"""

from __future__ import annotations

import math
from typing import Annotated, Literal, NamedTuple, Union

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from dedem import Point
from dedem.errors import GeometryError
from dedem.expressions import sgn

TipName = Literal["start", "end"]

UNIT_NORMAL_TOLERANCE = 1e-12


def _segments_intersect(p1, p2, q1, q2) -> bool:
    def orientation(a, b, c) -> float:
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    def on_segment(a, b, c) -> bool:
        return min(a[0], b[0]) <= c[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= c[
            1
        ] <= max(a[1], b[1])

    o1, o2 = orientation(p1, p2, q1), orientation(p1, p2, q2)
    o3, o4 = orientation(q1, q2, p1), orientation(q1, q2, p2)
    if (o1 * o2 < 0) and (o3 * o4 < 0):
        return True
    return (
        (o1 == 0 and on_segment(p1, p2, q1))
        or (o2 == 0 and on_segment(p1, p2, q2))
        or (o3 == 0 and on_segment(q1, q2, p1))
        or (o4 == 0 and on_segment(q1, q2, p2))
    )


class CrackPath(BaseModel, frozen=True):
    """Polyline crack; an endpoint lying on the domain boundary is not a tip."""

    id: str = "crack"
    vertices: tuple[Point, ...] = Field(..., min_length=2)
    tip_flags: tuple[bool, bool] = (True, True)

    @field_validator("vertices")
    @classmethod
    def validate_vertices(cls, vertices: tuple[Point, ...]):
        points = [np.asarray(v, dtype=np.float64) for v in vertices]
        for i in range(len(points) - 1):
            if np.array_equal(points[i], points[i + 1]):
                raise ValueError(f"consecutive vertices {i} and {i + 1} coincide")

        segments = list(zip(points[:-1], points[1:]))
        for i, (a0, a1) in enumerate(segments):
            for j in range(i + 1, len(segments)):
                b0, b1 = segments[j]
                if j == i + 1:
                    da, db = a1 - a0, b1 - b0
                    cross = da[0] * db[1] - da[1] * db[0]
                    if cross == 0 and np.dot(da, db) < 0:
                        raise ValueError(f"segments {i} and {j} overlap")
                    continue
                if _segments_intersect(a0, a1, b0, b1):
                    raise ValueError(f"segments {i} and {j} intersect")
        return vertices

    @property
    def points(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=np.float64)

    @property
    def length(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.points, axis=0), axis=1)))

    @property
    def tips(self) -> list[TipName]:
        names: tuple[TipName, TipName] = ("start", "end")
        return [name for name, flag in zip(names, self.tip_flags) if flag]

    def tip_point(self, which: TipName) -> np.ndarray:
        return self.points[0] if which == "start" else self.points[-1]

    def tip_tangent(self, which: TipName) -> np.ndarray:
        """Unit tangent of the tip segment, pointing out of the crack."""
        points = self.points
        direction = points[0] - points[1] if which == "start" else points[-1] - points[-2]
        return direction / np.linalg.norm(direction)

    def extended(self, length: float, angle: float) -> CrackPath:
        """Return a copy grown at its end tip by `length` along the global `angle`."""
        if not self.tip_flags[1]:
            raise GeometryError(f"crack {self.id!r}: end point is not a tip")
        tip = self.points[-1]
        new_tip = tip + length * np.array([math.cos(angle), math.sin(angle)])
        return self.model_copy(
            update={"vertices": (*self.vertices, (float(new_tip[0]), float(new_tip[1])))}
        )

    def reversed(self) -> CrackPath:
        return self.model_copy(
            update={
                "vertices": tuple(reversed(self.vertices)),
                "tip_flags": (self.tip_flags[1], self.tip_flags[0]),
            }
        )


class LineInterface(BaseModel, frozen=True):
    kind: Literal["line"] = "line"
    point: Point
    normal: Point

    @field_validator("normal")
    @classmethod
    def validate_normal(cls, normal: Point):
        if abs(math.hypot(*normal) - 1.0) > UNIT_NORMAL_TOLERANCE:
            raise ValueError("normal must have unit length")
        return normal


class CircleInterface(BaseModel, frozen=True):
    kind: Literal["circle"] = "circle"
    center: Point
    radius: float = Field(..., gt=0)


InterfaceShape = Annotated[
    Union[LineInterface, CircleInterface], Field(discriminator="kind")
]


class EmbeddingSpec(BaseModel, frozen=True):
    """One discontinuity descriptor, turned into one extra network input."""

    id: str
    kind: Literal["strong", "weak"]
    crack: CrackPath | None = None
    interface: InterfaceShape | None = None
    scale: float = Field(default=1.0, gt=0)

    @model_validator(mode="after")
    def check_geometry(self):
        if self.kind == "strong" and self.crack is None:
            raise ValueError("strong embedding requires a crack")
        if self.kind == "weak" and self.interface is None:
            raise ValueError("weak embedding requires an interface")
        return self


class EmbeddingValue(NamedTuple):
    value: np.ndarray
    gradient: np.ndarray


def _as_points(x) -> tuple[np.ndarray, bool]:
    points = np.asarray(x, dtype=np.float64)
    single = points.ndim == 1
    return np.atleast_2d(points), single


def _shape(single: bool, value: np.ndarray, gradient: np.ndarray):
    if single:
        return value[0], gradient[0]
    return value, gradient


def _closest_on_polyline(points: np.ndarray, path: CrackPath):
    """Closest point, distance and left normal of the nearest segment."""
    vertices = path.points
    starts, ends = vertices[:-1], vertices[1:]
    directions = ends - starts
    lengths_sq = np.sum(directions**2, axis=1)

    # (N, S) projections onto every segment
    relative = points[:, None, :] - starts[None, :, :]
    t = np.clip(np.einsum("nsk,sk->ns", relative, directions) / lengths_sq, 0.0, 1.0)
    closest = starts[None, :, :] + t[..., None] * directions[None, :, :]
    distances = np.linalg.norm(points[:, None, :] - closest, axis=2)

    # argmin keeps the earlier segment on ties
    nearest = np.argmin(distances, axis=1)
    rows = np.arange(len(points))
    unit = directions / np.sqrt(lengths_sq)[:, None]
    normals = np.stack([-unit[:, 1], unit[:, 0]], axis=1)
    return closest[rows, nearest], distances[rows, nearest], normals[nearest]


def sdf_polyline(x, path: CrackPath):
    """Signed distance to the crack polyline, positive left of the traversal."""
    points, single = _as_points(x)
    closest, distance, normal = _closest_on_polyline(points, path)
    offset = points - closest
    sign = sgn(np.einsum("nk,nk->n", normal, offset))
    phi = sign * distance

    on_path = distance == 0
    safe = np.where(on_path, 1.0, distance)
    gradient = np.where(
        on_path[:, None], normal, sign[:, None] * offset / safe[:, None]
    )
    return _shape(single, phi, gradient)


def nearest_normal(x, path: CrackPath) -> np.ndarray:
    """Left normal of the segment nearest to each point."""
    points, single = _as_points(x)
    _, _, normal = _closest_on_polyline(points, path)
    return normal[0] if single else normal


def tip_tangential_sdf(x, path: CrackPath, which_tip: TipName):
    """Signed distance to the plane through a tip, normal to the tip segment."""
    if which_tip not in path.tips:
        raise GeometryError(f"crack {path.id!r}: {which_tip} point is not a tip")
    points, single = _as_points(x)
    tangent = path.tip_tangent(which_tip)
    psi = (path.tip_point(which_tip) - points) @ tangent
    gradient = np.broadcast_to(-tangent, points.shape).copy()
    return _shape(single, psi, gradient)


def strong_embedding(x, path: CrackPath, side=None) -> EmbeddingValue:
    """Crack embedding relu²(ψ1ψ2)·sgn(φ) and its exact gradient.

    `side` (+1/-1, scalar or per point) overrides sgn(φ) for points lying on
    the crack.
    """
    points, single = _as_points(x)
    phi, _ = sdf_polyline(points, path)
    sign = sgn(phi) if side is None else np.broadcast_to(
        np.asarray(side, dtype=np.float64), phi.shape
    )

    tips = path.tips
    if not tips:
        value = sign.astype(np.float64)
        gradient = np.zeros_like(points)
        return EmbeddingValue(*_shape(single, value, gradient))

    if len(tips) == 1:
        product, d_product = tip_tangential_sdf(points, path, tips[0])
    else:
        psi1, d_psi1 = tip_tangential_sdf(points, path, "start")
        psi2, d_psi2 = tip_tangential_sdf(points, path, "end")
        product = psi1 * psi2
        d_product = psi2[:, None] * d_psi1 + psi1[:, None] * d_psi2

    ramp = np.maximum(product, 0.0)
    value = ramp**2 * sign
    gradient = (sign * 2.0 * ramp)[:, None] * d_product
    return EmbeddingValue(*_shape(single, value, gradient))


def interface_sdf(x, shape: LineInterface | CircleInterface):
    """Signed distance to a material interface (circle: negative inside)."""
    points, single = _as_points(x)
    match shape:
        case LineInterface(point=point, normal=normal):
            normal_vector = np.asarray(normal, dtype=np.float64)
            phi = (points - np.asarray(point)) @ normal_vector
            gradient = np.broadcast_to(normal_vector, points.shape).copy()
        case CircleInterface(center=center, radius=radius):
            offset = points - np.asarray(center)
            distance = np.linalg.norm(offset, axis=1)
            phi = distance - radius
            safe = np.where(distance == 0, 1.0, distance)
            gradient = np.where((distance == 0)[:, None], 0.0, offset / safe[:, None])
        case _:
            raise GeometryError(f"unsupported interface {shape!r}")
    return _shape(single, phi, gradient)


def weak_embedding(x, shape: LineInterface | CircleInterface) -> EmbeddingValue:
    """Ramp embedding |φ| for weak discontinuities, gradient sgn(φ)·∇φ."""
    points, single = _as_points(x)
    phi, d_phi = interface_sdf(points, shape)
    sign = sgn(phi)
    return EmbeddingValue(*_shape(single, phi * sign, sign[:, None] * d_phi))


def evaluate_spec(x, spec: EmbeddingSpec, side=None) -> EmbeddingValue:
    if spec.kind == "strong":
        assert spec.crack is not None
        value, gradient = strong_embedding(x, spec.crack, side=side)
    else:
        assert spec.interface is not None
        value, gradient = weak_embedding(x, spec.interface)
    return EmbeddingValue(value / spec.scale, gradient / spec.scale)


def embed_inputs(x, specs: list[EmbeddingSpec], sides: dict | None = None):
    """Augmented input (x1, x2, γ1..γn) and its Jacobian w.r.t. (x1, x2).

    `sides` maps a crack id to explicit side labels for points on that crack.
    """
    points, single = _as_points(x)
    sides = sides or {}
    columns = [points]
    jacobian_rows = [np.broadcast_to(np.eye(2), (len(points), 2, 2))]
    for spec in specs:
        value, gradient = evaluate_spec(points, spec, side=sides.get(spec.id))
        columns.append(value[:, None])
        jacobian_rows.append(gradient[:, None, :])
    augmented = np.concatenate(columns, axis=1)
    jacobian = np.concatenate(jacobian_rows, axis=1)
    if single:
        return augmented[0], jacobian[0]
    return augmented, jacobian
