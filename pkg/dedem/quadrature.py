"""
Composite-trapezoid quadrature on the rectangular domain: tensor grids,
refinement around crack tips, crack-aware node duplication and the 1D rules
used for edge and crack-face work terms.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from pydantic import BaseModel, ConfigDict

from dedem.autodiff import AdScalar
from dedem.errors import QuadratureError
from dedem.expressions import sgn
from dedem.fields import FieldTable
from dedem.geometry import CrackPath, nearest_normal, sdf_polyline
from dedem.models import Domain, RefinementSpec, Scenario

logger = logging.getLogger(__name__)

ON_CRACK_TOLERANCE = 1e-12
SIDE_OFFSET = 1e-8


class Lattice(BaseModel, frozen=True):
    """Tensor lattice a grid was built on; dropped once nodes are duplicated."""

    origin: tuple[float, float]
    spacing: tuple[float, float]
    shape: tuple[int, int]


class NodeSet(BaseModel, frozen=True):
    """Points with weights and one side label array per crack."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    points: np.ndarray
    weights: np.ndarray
    sides: dict[str, np.ndarray] = {}

    def __len__(self):
        return len(self.points)


class FaceSegment(NodeSet, frozen=True):
    """1D rule along one crack face; every node carries the face's side."""

    crack: str
    side: float


class QuadGrid(BaseModel, frozen=True):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    domain: Domain
    interior: NodeSet
    boundary_segments: dict[str, NodeSet]
    crack_face_segments: dict[str, FaceSegment] = {}
    lattice: Lattice | None = None

    @property
    def points(self) -> np.ndarray:
        return self.interior.points

    @property
    def weights(self) -> np.ndarray:
        return self.interior.weights

    @property
    def sides(self) -> dict[str, np.ndarray]:
        return self.interior.sides

    def __len__(self):
        return len(self.interior)


def trapezoid_weights(count: int, step: float) -> np.ndarray:
    weights = np.full(count, step)
    weights[[0, -1]] = step / 2
    return weights


def _edge_rules(domain: Domain, nx: int, ny: int) -> dict[str, NodeSet]:
    xs = np.linspace(*domain.x, nx)
    ys = np.linspace(*domain.y, ny)
    wx = trapezoid_weights(nx, domain.width / (nx - 1))
    wy = trapezoid_weights(ny, domain.height / (ny - 1))
    return {
        "bottom": NodeSet(points=np.column_stack([xs, np.full(nx, domain.y[0])]), weights=wx),
        "top": NodeSet(points=np.column_stack([xs, np.full(nx, domain.y[1])]), weights=wx),
        "left": NodeSet(points=np.column_stack([np.full(ny, domain.x[0]), ys]), weights=wy),
        "right": NodeSet(points=np.column_stack([np.full(ny, domain.x[1]), ys]), weights=wy),
    }


def build_uniform_grid(nx: int, ny: int, rect: Domain) -> QuadGrid:
    """Tensor-product trapezoid rule with nx × ny nodes, x-major ordering."""
    if nx < 2 or ny < 2:
        raise QuadratureError(f"grid needs at least 2×2 nodes, got {nx}×{ny}")
    if not (rect.width > 0 and rect.height > 0):
        raise QuadratureError("degenerate integration rectangle")
    h1, h2 = rect.width / (nx - 1), rect.height / (ny - 1)
    xs, ys = np.meshgrid(np.linspace(*rect.x, nx), np.linspace(*rect.y, ny), indexing="ij")
    weights = np.outer(trapezoid_weights(nx, h1), trapezoid_weights(ny, h2))
    return QuadGrid(
        domain=rect,
        interior=NodeSet(
            points=np.column_stack([xs.reshape(-1), ys.reshape(-1)]),
            weights=weights.reshape(-1),
        ),
        boundary_segments=_edge_rules(rect, nx, ny),
        lattice=Lattice(origin=(rect.x[0], rect.y[0]), spacing=(h1, h2), shape=(nx, ny)),
    )


def refine_near_tips(grid: QuadGrid, tips, spec: RefinementSpec | None) -> QuadGrid:
    """Subdivide factor × factor every cell whose center lies within `spec.radius` of a tip."""
    tips = np.asarray(tips, dtype=np.float64).reshape(-1, 2)
    if spec is None or len(tips) == 0:
        return grid
    if grid.lattice is None:
        raise QuadratureError("refinement needs a lattice grid (refine before relabelling)")

    nx, ny = grid.lattice.shape
    h1, h2 = grid.lattice.spacing
    x0, y0 = grid.lattice.origin
    factor = spec.factor

    centers_x = x0 + (np.arange(nx - 1) + 0.5) * h1
    centers_y = y0 + (np.arange(ny - 1) + 0.5) * h2
    cx, cy = np.meshgrid(centers_x, centers_y, indexing="ij")
    centers = np.stack([cx, cy], axis=-1)
    distance = np.min(
        np.linalg.norm(centers[:, :, None, :] - tips[None, None, :, :], axis=-1), axis=-1
    )
    refined = distance <= spec.radius

    # weights accumulated on the fine lattice, index (i·f + k, j·f + l)
    fine = np.zeros(((nx - 1) * factor + 1, (ny - 1) * factor + 1))
    coarse_corner = h1 * h2 / 4
    fine_corner = coarse_corner / factor**2
    offsets = np.arange(factor + 1)
    fine_cell = np.outer(
        trapezoid_weights(factor + 1, 1.0), trapezoid_weights(factor + 1, 1.0)
    ) * (4 * fine_corner)
    for i, j in np.argwhere(~refined):
        for di in (0, factor):
            for dj in (0, factor):
                fine[i * factor + di, j * factor + dj] += coarse_corner
    for i, j in np.argwhere(refined):
        rows = i * factor + offsets
        cols = j * factor + offsets
        fine[np.ix_(rows, cols)] += fine_cell

    index = np.argwhere(fine > 0)
    points = np.column_stack(
        [x0 + index[:, 0] * h1 / factor, y0 + index[:, 1] * h2 / factor]
    )
    logger.debug(
        "Refined %d of %d cells around %d tip(s)", int(refined.sum()), refined.size, len(tips)
    )
    return grid.model_copy(
        update={
            "interior": NodeSet(points=points, weights=fine[fine > 0]),
            "lattice": None,
        }
    )


def _split_on_crack(nodes: NodeSet, path: CrackPath, diagonal: float) -> NodeSet:
    """Label `nodes` against `path`, duplicating nodes that lie on it."""
    phi, _ = sdf_polyline(nodes.points, path)
    on_crack = np.abs(phi) <= ON_CRACK_TOLERANCE * diagonal
    labels = sgn(phi)
    if not np.any(on_crack):
        return nodes.model_copy(update={"sides": {**nodes.sides, path.id: labels}})

    keep = ~on_crack
    shift = SIDE_OFFSET * diagonal * nearest_normal(nodes.points[on_crack], path)
    points = np.concatenate(
        [nodes.points[keep], nodes.points[on_crack] + shift, nodes.points[on_crack] - shift]
    )
    halves = nodes.weights[on_crack] / 2
    weights = np.concatenate([nodes.weights[keep], halves, halves])
    count = int(on_crack.sum())

    sides = {
        key: np.concatenate([value[keep], value[on_crack], value[on_crack]])
        for key, value in nodes.sides.items()
    }
    sides[path.id] = np.concatenate([labels[keep], np.ones(count), -np.ones(count)])
    return NodeSet(points=points, weights=weights, sides=sides)


def crack_aware_relabel(grid: QuadGrid, cracks: list[CrackPath]) -> QuadGrid:
    """Give every node a side label per crack; on-crack nodes are split in two."""
    diagonal = grid.domain.diagonal
    interior = grid.interior
    boundary = dict(grid.boundary_segments)
    for path in cracks:
        interior = _split_on_crack(interior, path, diagonal)
        boundary = {
            edge: _split_on_crack(nodes, path, diagonal) for edge, nodes in boundary.items()
        }
    return grid.model_copy(
        update={"interior": interior, "boundary_segments": boundary, "lattice": None}
    )


def crack_face_segments(
    cracks: list[CrackPath], spacing: float
) -> dict[str, FaceSegment]:
    """Trapezoid rules along both faces of every crack, keyed '<id>+' / '<id>-'."""
    faces: dict[str, FaceSegment] = {}
    for path in cracks:
        points, weights = [], []
        vertices = path.points
        for start, end in zip(vertices[:-1], vertices[1:]):
            length = float(np.linalg.norm(end - start))
            intervals = max(2, math.ceil(length / spacing))
            t = np.linspace(0.0, 1.0, intervals + 1)
            points.append(start + t[:, None] * (end - start))
            weights.append(trapezoid_weights(intervals + 1, length / intervals))
        stacked, stacked_weights = np.concatenate(points), np.concatenate(weights)
        for suffix, side in (("+", 1.0), ("-", -1.0)):
            faces[f"{path.id}{suffix}"] = FaceSegment(
                points=stacked,
                weights=stacked_weights,
                crack=path.id,
                side=side,
            )
    return faces


def integrate(samples, weights, blocks: int = 1):
    """Σ wᵢ fᵢ; `blocks` > 1 sums contiguous blocks on worker threads."""
    if isinstance(weights, (QuadGrid, NodeSet)):
        weights = weights.weights
    if isinstance(samples, AdScalar):
        if samples.shape != (len(weights),):
            raise QuadratureError(
                f"{samples.shape} samples for {len(weights)} quadrature nodes"
            )
        return (samples * weights).sum()

    samples = np.asarray(samples, dtype=np.float64)
    if samples.shape != (len(weights),):
        raise QuadratureError(f"{samples.shape} samples for {len(weights)} quadrature nodes")
    products = samples * weights
    if blocks <= 1:
        return float(np.sum(products))
    chunks = np.array_split(products, blocks)
    with ThreadPoolExecutor(max_workers=blocks) as executor:
        partials = list(executor.map(np.sum, chunks))
    return float(sum(partials))


def build_scenario_grid(
    scenario: Scenario,
    nx: int | None = None,
    ny: int | None = None,
) -> QuadGrid:
    """Uniform grid → tip refinement → crack-aware relabelling → face rules."""
    nx = nx or scenario.grid.nx
    ny = ny or scenario.grid.ny
    cracks = scenario.cracks
    grid = build_uniform_grid(nx, ny, scenario.domain)
    spacing = min(scenario.domain.width / (nx - 1), scenario.domain.height / (ny - 1))

    tips = [path.tip_point(which) for path in cracks for which in path.tips]
    grid = refine_near_tips(grid, tips, scenario.grid.refinement(scenario.domain))
    grid = crack_aware_relabel(grid, cracks)
    grid = grid.model_copy(update={"crack_face_segments": crack_face_segments(cracks, spacing)})
    logger.info(
        "Built quadrature grid",
        extra={"nodes": len(grid), "nx": nx, "ny": ny, "cracks": len(cracks)},
    )
    return grid


def grid_table(grid: QuadGrid) -> FieldTable:
    """Interior nodes as a field table: weight plus one side column per crack."""
    columns = {"weight": grid.weights}
    columns.update({f"side_{key}": value for key, value in grid.sides.items()})
    return FieldTable(points=grid.points, columns=columns)
