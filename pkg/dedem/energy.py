"""
Constitutive law, strain and stress evaluation, and assembly of the total
potential energy used as the training loss.

Units: E in GPa is folded into the stiffness as MPa, lengths stay in m, so
integrals come out in MPa·m² and are scaled by 1e6 to N·m per unit thickness.
"""

from __future__ import annotations

import logging
from typing import NamedTuple

import numpy as np
from pydantic import BaseModel, computed_field

from dedem import AnalysisMode
from dedem.autodiff import AdScalar, Recording
from dedem.errors import MaterialError, NonFiniteLossError
from dedem.expressions import evaluate_many
from dedem.fields import FieldTable
from dedem.models import EDGES, Material, Scenario
from dedem.network import Displacement, NetParams, displacement, evaluate_displacement
from dedem.quadrature import NodeSet, QuadGrid, integrate

logger = logging.getLogger(__name__)

GPA_TO_MPA = 1e3
MPA_M2_TO_NM = 1e6


class StrainState(NamedTuple):
    """Voigt strain (ε11, ε22, γ12 = 2ε12)."""

    e11: object
    e22: object
    g12: object


class StressState(NamedTuple):
    """Voigt stress (σ11, σ22, σ12) in MPa."""

    s11: object
    s22: object
    s12: object


class EnergyBreakdown(BaseModel, frozen=True):
    """Energy terms in N·m per unit thickness."""

    strain_energy: float
    boundary_traction_work: float = 0.0
    crack_traction_work: float = 0.0
    body_work: float = 0.0

    @computed_field  # type: ignore[prop-decorator]
    @property
    def total(self) -> float:
        return (
            self.strain_energy
            - self.boundary_traction_work
            - self.crack_traction_work
            - self.body_work
        )


def elastic_matrix(material: Material) -> np.ndarray:
    """3×3 Voigt stiffness in MPa."""
    E, nu = material.E * GPA_TO_MPA, material.nu
    if material.mode == AnalysisMode.PLANE_STRAIN:
        if 1.0 - 2.0 * nu <= 0:
            raise MaterialError(f"nu = {nu} is incompressible in plane strain")
        factor = E / ((1.0 + nu) * (1.0 - 2.0 * nu))
        return factor * np.array(
            [[1.0 - nu, nu, 0.0], [nu, 1.0 - nu, 0.0], [0.0, 0.0, (1.0 - 2.0 * nu) / 2.0]]
        )
    if abs(nu) >= 1.0:
        raise MaterialError(f"nu = {nu} outside (-1, 1) in plane stress")
    factor = E / (1.0 - nu**2)
    return factor * np.array([[1.0, nu, 0.0], [nu, 1.0, 0.0], [0.0, 0.0, (1.0 - nu) / 2.0]])


def strain_from_grad(gradient) -> StrainState:
    """Small strain from ∂u_i/∂x_j given as a 2×2 nested sequence or (…, 2, 2) array."""
    if isinstance(gradient, np.ndarray):
        return StrainState(
            gradient[..., 0, 0],
            gradient[..., 1, 1],
            gradient[..., 0, 1] + gradient[..., 1, 0],
        )
    return StrainState(gradient[0][0], gradient[1][1], gradient[0][1] + gradient[1][0])


def stress_from_strain(strain: StrainState, stiffness: np.ndarray) -> StressState:
    """σ = C ε for a (3, 3) or per-node (N, 3, 3) stiffness."""
    components = []
    for row in range(3):
        total = None
        for column in range(3):
            term = stiffness[..., row, column] * strain[column]
            total = term if total is None else total + term
        components.append(total)
    return StressState(*components)


def strain_energy_density(strain: StrainState, material) -> object:
    """½ εᵀ C ε in MPa; `material` is a Material or a stiffness array."""
    stiffness = elastic_matrix(material) if isinstance(material, Material) else material
    stress = stress_from_strain(strain, stiffness)
    total = None
    for component in range(3):
        term = strain[component] * stress[component]
        total = term if total is None else total + term
    return 0.5 * total


def comparison_stress(stress: StressState):
    """Comparison stress √((σ11 − σ22)²/2 + 3σ12²)."""
    s11, s22, s12 = (np.asarray(value, dtype=np.float64) for value in stress)
    return np.sqrt((s11 - s22) ** 2 / 2.0 + 3.0 * s12**2)


von_mises = comparison_stress


def material_index(materials: list[Material], points: np.ndarray) -> np.ndarray:
    """Index of the material governing each point; later regions win."""
    index = np.full(len(points), -1)
    for position, material in enumerate(materials):
        index[material.region.contains(points)] = position
    uncovered = np.flatnonzero(index < 0)
    if len(uncovered):
        node = int(uncovered[0])
        raise MaterialError(
            f"no material region covers node {node} at {tuple(points[node])}"
        )
    return index


def stiffness_at(materials: list[Material], points: np.ndarray) -> np.ndarray:
    matrices = np.stack([elastic_matrix(material) for material in materials])
    return matrices[material_index(materials, points)]


class _LoadedNodes(NamedTuple):
    nodes: NodeSet
    sides: dict
    t1: np.ndarray
    t2: np.ndarray


class EnergyFunctional:
    """Potential energy of one scenario on one grid, with node data precomputed."""

    def __init__(self, scenario: Scenario, grid: QuadGrid):
        self.scenario = scenario
        self.grid = grid
        self.specs = scenario.embedding_specs()
        self.stiffness = stiffness_at(scenario.materials, grid.points)

        body = scenario.body_force
        self.body = (
            evaluate_many(body.b1, grid.points)[0],
            evaluate_many(body.b2, grid.points)[0],
        )
        self.has_body_force = bool(np.any(self.body[0]) or np.any(self.body[1]))

        self.edge_loads = []
        self.face_loads = []
        for target, traction in scenario.traction.items():
            if target in EDGES:
                nodes = grid.boundary_segments[target]
                sides = nodes.sides
                load = self.edge_loads
            else:
                nodes = grid.crack_face_segments[target]
                sides = {nodes.crack: np.full(len(nodes), nodes.side)}
                load = self.face_loads
            load.append(
                _LoadedNodes(
                    nodes,
                    sides,
                    evaluate_many(traction.t1, nodes.points)[0],
                    evaluate_many(traction.t2, nodes.points)[0],
                )
            )

    def _traction_work(self, theta: AdScalar, params: NetParams, loads) -> AdScalar:
        work = theta.recording.constant(0.0)
        for load in loads:
            u = displacement(
                theta,
                params,
                self.scenario.constraint,
                self.specs,
                load.nodes.points,
                load.sides,
            )
            work = work + integrate(u.u1.v * load.t1 + u.u2.v * load.t2, load.nodes)
        return work * MPA_M2_TO_NM

    def density(
        self, theta: AdScalar, params: NetParams
    ) -> tuple[AdScalar, Displacement]:
        """Strain energy density (MPa) at every interior node, and the displacement."""
        u = displacement(
            theta,
            params,
            self.scenario.constraint,
            self.specs,
            self.grid.points,
            self.grid.sides,
        )
        return strain_energy_density(strain_from_grad(u.gradient()), self.stiffness), u

    def __call__(
        self, theta: AdScalar, params: NetParams
    ) -> tuple[AdScalar, EnergyBreakdown]:
        density, u = self.density(theta, params)
        if not density.is_finite():
            node = int(np.flatnonzero(~np.isfinite(density.value))[0])
            raise NonFiniteLossError(
                f"non-finite strain energy density at node {node} "
                f"{tuple(self.grid.points[node])}",
                node=node,
            )
        strain = integrate(density, self.grid) * MPA_M2_TO_NM

        if self.has_body_force:
            body = integrate(u.u1.v * self.body[0] + u.u2.v * self.body[1], self.grid)
            body = body * MPA_M2_TO_NM
        else:
            body = theta.recording.constant(0.0)
        boundary = self._traction_work(theta, params, self.edge_loads)
        crack = self._traction_work(theta, params, self.face_loads)

        loss = strain - boundary - crack - body
        if not loss.is_finite():
            raise NonFiniteLossError("non-finite potential energy")
        breakdown = EnergyBreakdown(
            strain_energy=strain.item(),
            boundary_traction_work=boundary.item(),
            crack_traction_work=crack.item(),
            body_work=body.item(),
        )
        return loss, breakdown


def potential_energy(
    params: NetParams,
    scenario: Scenario,
    grid: QuadGrid,
    recording: Recording | None = None,
) -> tuple[AdScalar, EnergyBreakdown]:
    """Recorded total potential energy, ready for `backward`."""
    recording = recording or Recording(params.values)
    return EnergyFunctional(scenario, grid)(recording.parameters(), params)


FIELD_COLUMNS = ("u1", "u2", "u_mag", "sigma11", "sigma22", "sigma12", "von_mises")


def field_snapshot(
    params: NetParams, scenario: Scenario, points, sides: dict | None = None
) -> FieldTable:
    """Displacements (m) and stresses (MPa) on caller-given points."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    u, gradient = evaluate_displacement(
        params, scenario.constraint, scenario.embedding_specs(), points, sides
    )
    stress = stress_from_strain(
        strain_from_grad(gradient), stiffness_at(scenario.materials, points)
    )
    values = (
        u[:, 0],
        u[:, 1],
        np.hypot(u[:, 0], u[:, 1]),
        *stress,
        comparison_stress(stress),
    )
    return FieldTable(points=points, columns=dict(zip(FIELD_COLUMNS, values)))
