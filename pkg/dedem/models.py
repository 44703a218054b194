"""
Python Module for Pydantic Models and validation
"""

from __future__ import annotations

import logging
import math
from typing import Annotated, Literal, Union

import numpy as np
from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    PlainSerializer,
    field_validator,
    model_validator,
)

from dedem import AnalysisMode, Point
from dedem.errors import DedemError
from dedem.expressions import Constant, ExpressionAst, parse_expression, to_text
from dedem.geometry import (
    CircleInterface,
    CrackPath,
    EmbeddingSpec,
    InterfaceShape,
    LineInterface,
)

logger = logging.getLogger(__name__)

EDGES = ("top", "bottom", "left", "right")
BOUNDARY_TOLERANCE = 1e-12


def _as_expression(value):
    if isinstance(value, str):
        try:
            return parse_expression(value)
        except DedemError as exception:
            raise ValueError(str(exception)) from exception
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return Constant(value=float(value))
    return value


Expression = Annotated[
    ExpressionAst,
    BeforeValidator(_as_expression),
    PlainSerializer(to_text, return_type=str),
]


class Domain(BaseModel, frozen=True):
    """Axis-aligned rectangle (m) and the 2D reduction used over it."""

    x: tuple[float, float]
    y: tuple[float, float]
    mode: AnalysisMode = AnalysisMode.PLANE_STRAIN

    @model_validator(mode="after")
    def check_extents(self):
        if not self.x[1] > self.x[0]:
            raise ValueError("domain width must be strictly positive")
        if not self.y[1] > self.y[0]:
            raise ValueError("domain height must be strictly positive")
        return self

    @property
    def width(self) -> float:
        return self.x[1] - self.x[0]

    @property
    def height(self) -> float:
        return self.y[1] - self.y[0]

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)

    def contains(self, point, tolerance: float = 0.0) -> bool:
        x1, x2 = point
        slack = tolerance * self.diagonal
        return (
            self.x[0] - slack <= x1 <= self.x[1] + slack
            and self.y[0] - slack <= x2 <= self.y[1] + slack
        )

    def on_boundary(self, point, tolerance: float = BOUNDARY_TOLERANCE) -> bool:
        x1, x2 = point
        slack = tolerance * self.diagonal
        near_edge = (
            abs(x1 - self.x[0]) <= slack
            or abs(x1 - self.x[1]) <= slack
            or abs(x2 - self.y[0]) <= slack
            or abs(x2 - self.y[1]) <= slack
        )
        return near_edge and self.contains(point, tolerance)


class WholeRegion(BaseModel, frozen=True):
    kind: Literal["whole"] = "whole"

    def contains(self, points: np.ndarray) -> np.ndarray:
        return np.ones(len(points), dtype=bool)


class HalfPlaneRegion(BaseModel, frozen=True):
    """Points strictly on the normal side of the line."""

    kind: Literal["half_plane"] = "half_plane"
    point: Point
    normal: Point

    def contains(self, points: np.ndarray) -> np.ndarray:
        return (points - np.asarray(self.point)) @ np.asarray(self.normal) > 0


class CircleRegion(BaseModel, frozen=True):
    """Closed disk."""

    kind: Literal["circle"] = "circle"
    center: Point
    radius: float = Field(..., gt=0)

    def contains(self, points: np.ndarray) -> np.ndarray:
        return np.linalg.norm(points - np.asarray(self.center), axis=1) - self.radius <= 0


Region = Annotated[
    Union[WholeRegion, HalfPlaneRegion, CircleRegion], Field(discriminator="kind")
]


class Material(BaseModel, frozen=True):
    """Isotropic linear-elastic material; E in GPa."""

    name: str = "material"
    E: float = Field(..., gt=0)
    nu: float = Field(..., gt=-1, lt=0.5)
    mode: AnalysisMode = AnalysisMode.PLANE_STRAIN
    region: Region = WholeRegion()

    @field_validator("region", mode="before")
    @classmethod
    def expand_region_shorthand(cls, region):
        if region == "whole":
            return {"kind": "whole"}
        return region

    @property
    def shear_modulus(self) -> float:
        """μ in GPa."""
        return self.E / (2.0 * (1.0 + self.nu))

    @property
    def kolosov(self) -> float:
        if self.mode == AnalysisMode.PLANE_STRAIN:
            return 3.0 - 4.0 * self.nu
        return (3.0 - self.nu) / (1.0 + self.nu)


class CrackSection(BaseModel, frozen=True):
    vertices: tuple[Point, ...] = Field(..., min_length=2)
    tips: tuple[bool, bool] | None = None


class ConstraintPair(BaseModel, frozen=True):
    """u = A·û + B for one displacement component (B in m)."""

    A: Expression
    B: Expression = Constant(value=0.0)


class Constraints(BaseModel, frozen=True):
    model_config = ConfigDict(extra="forbid")

    u1: ConstraintPair
    u2: ConstraintPair


class Traction(BaseModel, frozen=True):
    """Prescribed traction (MPa) on an edge or crack face."""

    t1: Expression = Constant(value=0.0)
    t2: Expression = Constant(value=0.0)


class BodyForce(BaseModel, frozen=True):
    b1: Expression = Constant(value=0.0)
    b2: Expression = Constant(value=0.0)


class NetConfig(BaseModel, frozen=True):
    """Per-component residual MLP shared by both displacement networks."""

    input_dim: int = Field(default=2, ge=2)
    width: int = Field(default=30, ge=1)
    residual_blocks: int = Field(default=2, ge=0)
    layers_per_block: Literal[2] = 2
    output_scale: float = Field(default=1.0, gt=0)

    @property
    def component_parameter_count(self) -> int:
        width = self.width
        return (
            width * self.input_dim
            + width
            + self.layers_per_block * self.residual_blocks * (width * width + width)
            + width
            + 1
        )

    @property
    def parameter_count(self) -> int:
        return 2 * self.component_parameter_count


class TrainConfig(BaseModel, frozen=True):
    """Adam schedule, early stopping and embedding switches."""

    model_config = ConfigDict(extra="forbid")

    lr0: float = Field(default=0.02, gt=0)
    decay_factor: float = Field(default=0.5, gt=0, le=1)
    decay_every: int = Field(default=5000, ge=1)
    patience: int = Field(default=1000, ge=1)
    max_epochs: int = Field(default=15000, ge=0)
    beta1: float = Field(default=0.9, gt=0, lt=1)
    beta2: float = Field(default=0.999, gt=0, lt=1)
    eps: float = Field(default=1e-8, gt=0)
    deterministic: bool = False
    seed: int = 0
    use_interface_embeddings: bool = True
    normalize_embeddings: bool = False
    log_every: int = Field(default=500, ge=1)

    @model_validator(mode="after")
    def check_patience(self):
        if self.max_epochs > 0 and self.patience > self.max_epochs:
            raise ValueError(
                f"patience ({self.patience}) exceeds max_epochs ({self.max_epochs})"
            )
        return self


class RefinementSpec(BaseModel, frozen=True):
    radius: float = Field(..., gt=0)
    factor: int = Field(default=4, ge=2)


class GridConfig(BaseModel, frozen=True):
    model_config = ConfigDict(extra="forbid")

    nx: int = Field(default=80, ge=2)
    ny: int = Field(default=100, ge=2)
    refine: bool = True
    refine_radius: float | None = Field(default=None, gt=0)
    refine_factor: int = Field(default=4, ge=2)

    def refinement(self, domain: Domain) -> RefinementSpec | None:
        if not self.refine:
            return None
        radius = self.refine_radius or 0.1 * min(domain.width, domain.height)
        return RefinementSpec(radius=radius, factor=self.refine_factor)


class Scenario(BaseModel, frozen=True):
    """One complete problem description, as read from a scenario file."""

    model_config = ConfigDict(extra="forbid")

    domain: Domain
    material: dict[str, Material] = Field(..., min_length=1)
    crack: dict[str, CrackSection] = {}
    interface: dict[str, InterfaceShape] = {}
    constraint: Constraints
    traction: dict[str, Traction] = {}
    body_force: BodyForce = BodyForce()
    network: NetConfig = NetConfig()
    train: TrainConfig = TrainConfig()
    grid: GridConfig = GridConfig()

    @model_validator(mode="after")
    def check_geometry(self):
        clashes = set(self.crack) & set(self.interface)
        if clashes:
            raise ValueError(f"crack and interface ids must be unique: {sorted(clashes)}")

        for crack_id, section in self.crack.items():
            for vertex in section.vertices:
                if not self.domain.contains(vertex, BOUNDARY_TOLERANCE):
                    raise ValueError(
                        f"crack outside domain: {crack_id!r} vertex {tuple(vertex)}"
                    )
            # raises on self-intersection
            path = self._crack_path(crack_id, section)
            endpoints = (path.vertices[0], path.vertices[-1])
            if not path.tips and not any(self.domain.on_boundary(p) for p in endpoints):
                raise ValueError(
                    f"crack {crack_id!r} needs at least one tip or one boundary endpoint"
                )

        tips = [
            tuple(path.tip_point(which)) for path in self.cracks for which in path.tips
        ]
        if len(set(tips)) != len(tips):
            raise ValueError("crack tips must be distinct points")

        for target in self.traction:
            if target in EDGES:
                continue
            if target[-1:] in ("+", "-") and target[:-1] in self.crack:
                continue
            raise ValueError(
                f"unknown traction target {target!r}; expected one of {EDGES} "
                "or '<crack id>+' / '<crack id>-'"
            )
        return self

    def _crack_path(self, crack_id: str, section: CrackSection) -> CrackPath:
        if section.tips is not None:
            flags = section.tips
        else:
            flags = (
                not self.domain.on_boundary(section.vertices[0]),
                not self.domain.on_boundary(section.vertices[-1]),
            )
        try:
            return CrackPath(id=crack_id, vertices=section.vertices, tip_flags=flags)
        except ValueError as exception:
            raise ValueError(f"crack {crack_id!r}: {exception}") from exception

    @property
    def cracks(self) -> list[CrackPath]:
        return [self._crack_path(key, section) for key, section in self.crack.items()]

    @property
    def interfaces(self) -> list[tuple[str, LineInterface | CircleInterface]]:
        return list(self.interface.items())

    @property
    def materials(self) -> list[Material]:
        """Materials in file order, carrying the domain's analysis mode."""
        return [
            material.model_copy(update={"name": name, "mode": self.domain.mode})
            for name, material in self.material.items()
        ]

    @property
    def seed(self) -> int:
        return self.train.seed

    def embedding_specs(self) -> list[EmbeddingSpec]:
        """One strong spec per crack, then one weak spec per interface."""
        specs = [
            EmbeddingSpec(id=path.id, kind="strong", crack=path) for path in self.cracks
        ]
        if self.train.use_interface_embeddings:
            scale = self.domain.diagonal if self.train.normalize_embeddings else 1.0
            specs.extend(
                EmbeddingSpec(id=key, kind="weak", interface=shape, scale=scale)
                for key, shape in self.interfaces
            )
        return specs

    @property
    def net_config(self) -> NetConfig:
        """Network section with `input_dim` derived from the embeddings."""
        return self.network.model_copy(
            update={"input_dim": 2 + len(self.embedding_specs())}
        )

    def with_crack(self, path: CrackPath) -> Scenario:
        """Copy with the crack `path.id` replaced by `path`."""
        sections = dict(self.crack)
        sections[path.id] = CrackSection(vertices=path.vertices, tips=path.tip_flags)
        return self.model_validate({**self.model_dump(), "crack": sections})

    def with_overrides(
        self,
        seed: int | None = None,
        max_epochs: int | None = None,
        grid: tuple[int, int] | None = None,
        deterministic: bool | None = None,
    ) -> Scenario:
        """Copy with CLI overrides applied and re-validated."""
        data = self.model_dump()
        if seed is not None:
            data["train"]["seed"] = seed
        if max_epochs is not None:
            data["train"]["max_epochs"] = max_epochs
            data["train"]["patience"] = min(data["train"]["patience"], max(max_epochs, 1))
        if deterministic is not None:
            data["train"]["deterministic"] = deterministic
        if grid is not None:
            data["grid"]["nx"], data["grid"]["ny"] = grid
        return self.model_validate(data)
