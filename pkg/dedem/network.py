"""
The neural trial function: one residual MLP per displacement component over
embedded inputs, wrapped by hard-constrained essential boundary conditions.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import NamedTuple

import numpy as np
import torch
from pydantic import BaseModel, ValidationError

from dedem.autodiff import (
    AdScalar,
    LayoutEntry,
    ParamVector,
    Recording,
    SpatialDual,
    dual_from_jacobian,
)
from dedem.errors import NetworkShapeError
from dedem.expressions import evaluate_many
from dedem.geometry import EmbeddingSpec, embed_inputs
from dedem.models import ConstraintPair, Constraints, NetConfig

logger = logging.getLogger(__name__)

COMPONENTS = ("u1", "u2")


def parameter_layout(config: NetConfig) -> dict[str, LayoutEntry]:
    """Flat layout: per component stem, residual blocks, then head."""
    shapes: list[tuple[str, tuple[int, ...]]] = []
    for component in COMPONENTS:
        shapes.append((f"{component}.stem.weight", (config.width, config.input_dim)))
        shapes.append((f"{component}.stem.bias", (config.width,)))
        for block in range(config.residual_blocks):
            for layer in range(config.layers_per_block):
                prefix = f"{component}.block{block}.layer{layer}"
                shapes.append((f"{prefix}.weight", (config.width, config.width)))
                shapes.append((f"{prefix}.bias", (config.width,)))
        shapes.append((f"{component}.head.weight", (1, config.width)))
        shapes.append((f"{component}.head.bias", (1,)))

    layout: dict[str, LayoutEntry] = {}
    cursor = 0
    for name, shape in shapes:
        size = int(np.prod(shape))
        layout[name] = (cursor, cursor + size, shape)
        cursor += size
    return layout


class NetParams(BaseModel, frozen=True):
    config: NetConfig
    seed: int | None = None
    vector: ParamVector

    @property
    def values(self) -> np.ndarray:
        return self.vector.values

    def with_values(self, values) -> NetParams:
        return self.model_copy(update={"vector": self.vector.with_values(values)})


def init_params(config: NetConfig, seed: int) -> NetParams:
    """Glorot-uniform weights, zero biases, reproducible from `seed`."""
    layout = parameter_layout(config)
    generator = torch.Generator().manual_seed(seed)
    values = np.zeros(config.parameter_count, dtype=np.float64)
    for name, (start, stop, shape) in layout.items():
        if name.endswith(".weight"):
            weight = torch.empty(shape, dtype=torch.float64)
            torch.nn.init.xavier_uniform_(weight, generator=generator)
            values[start:stop] = weight.numpy().reshape(-1)
    return NetParams(
        config=config, seed=seed, vector=ParamVector(values=values, layout=layout)
    )


def _weights(theta: AdScalar, layout: dict[str, LayoutEntry], name: str) -> AdScalar:
    start, stop, shape = layout[name]
    return theta[start:stop].reshape(*shape)


def forward(theta: AdScalar, params: NetParams, x_aug: SpatialDual) -> dict[str, SpatialDual]:
    """Evaluate û for both components on a batch of embedded inputs (N, input_dim)."""
    config = params.config
    if x_aug.v.shape[-1] != config.input_dim:
        raise NetworkShapeError(
            f"input has {x_aug.v.shape[-1]} features, network expects {config.input_dim}"
        )
    if theta.shape != (config.parameter_count,):
        raise NetworkShapeError(
            f"expected {config.parameter_count} parameters, got {theta.shape}"
        )

    layout = params.vector.layout
    outputs = {}
    for component in COMPONENTS:

        def layer(name: str, inputs: SpatialDual) -> SpatialDual:
            return inputs.linear(
                _weights(theta, layout, f"{component}.{name}.weight"),
                _weights(theta, layout, f"{component}.{name}.bias"),
            )

        hidden = layer("stem", x_aug).tanh()
        for block in range(config.residual_blocks):
            branch = hidden
            for index in range(config.layers_per_block):
                branch = layer(f"block{block}.layer{index}", branch).tanh()
            hidden = hidden + branch
        head = layer("head", hidden)
        outputs[component] = head[..., 0] * config.output_scale
    return outputs


def apply_hard_constraint(
    u_hat: SpatialDual, pair: ConstraintPair, points: np.ndarray
) -> SpatialDual:
    """u = A·û + B with spatial channels by the product rule."""
    recording = u_hat.recording
    a_value, a_gradient = evaluate_many(pair.A, points)
    b_value, b_gradient = evaluate_many(pair.B, points)
    factor = dual_from_jacobian(a_value, a_gradient, recording)
    offset = dual_from_jacobian(b_value, b_gradient, recording)
    return u_hat * factor + offset


class Displacement(NamedTuple):
    u1: SpatialDual
    u2: SpatialDual

    def gradient(self) -> list[list]:
        """∂u_i/∂x_j as nested channels."""
        return [[self.u1.dx1, self.u1.dx2], [self.u2.dx1, self.u2.dx2]]


def displacement(
    theta: AdScalar,
    params: NetParams,
    constraints: Constraints,
    specs: list[EmbeddingSpec],
    points,
    sides: dict | None = None,
) -> Displacement:
    """embed_inputs → forward → apply_hard_constraint on a batch of points."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    augmented, jacobian = embed_inputs(points, specs, sides)
    x_aug = dual_from_jacobian(augmented, jacobian, theta.recording)
    u_hat = forward(theta, params, x_aug)
    return Displacement(
        apply_hard_constraint(u_hat["u1"], constraints.u1, points),
        apply_hard_constraint(u_hat["u2"], constraints.u2, points),
    )


def evaluate_displacement(
    params: NetParams,
    constraints: Constraints,
    specs: list[EmbeddingSpec],
    points,
    sides: dict | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Plain values: u (N, 2) and ∂u_i/∂x_j (N, 2, 2)."""
    recording = Recording(params.values)
    with torch.no_grad():
        result = displacement(
            recording.parameters(), params, constraints, specs, points, sides
        )
    u = np.stack([result.u1.v.value, result.u2.v.value], axis=-1)
    gradient = np.stack(
        [
            np.stack([result.u1.dx1.value, result.u1.dx2.value], axis=-1),
            np.stack([result.u2.dx1.value, result.u2.dx2.value], axis=-1),
        ],
        axis=-2,
    )
    return u, gradient


class Snapshot(BaseModel, frozen=True):
    """Parameter snapshot file: network config, seed, flat values."""

    config: NetConfig
    seed: int | None = None
    values: list[float]


def save_snapshot(params: NetParams, destination: str | Path) -> None:
    snapshot = Snapshot(
        config=params.config, seed=params.seed, values=params.values.tolist()
    )
    Path(destination).write_text(snapshot.model_dump_json(indent=1), encoding="utf8")
    logger.debug("Saved %d parameters to %s", len(params.values), destination)


def load_snapshot(source: str | Path) -> NetParams:
    try:
        snapshot = Snapshot.model_validate_json(Path(source).read_text(encoding="utf8"))
    except (OSError, ValidationError) as exception:
        raise NetworkShapeError(f"cannot load snapshot {source}: {exception}") from exception
    if len(snapshot.values) != snapshot.config.parameter_count:
        raise NetworkShapeError(
            f"snapshot {source} holds {len(snapshot.values)} values, "
            f"its config needs {snapshot.config.parameter_count}"
        )
    return NetParams(
        config=snapshot.config,
        seed=snapshot.seed,
        vector=ParamVector(
            values=snapshot.values, layout=parameter_layout(snapshot.config)
        ),
    )
