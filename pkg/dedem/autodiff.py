"""
Nested differentiation for the energy functional.

A `Recording` owns the trainable parameters as one float64 leaf tensor.
`AdScalar` wraps tensors derived from it (scalars or node batches, evaluated
elementwise) and `SpatialDual` carries a value together with its two first
spatial-derivative channels, each channel itself an `AdScalar`. Calling
`backward` on any channel differentiates it with respect to the parameters,
which is how mixed derivatives ∂(∂u/∂x)/∂θ reach the optimizer.

Kink conventions: d relu/dv = 0 at v = 0 and d|v|/dv = -1 at v = 0.
"""

from __future__ import annotations

from functools import wraps
from typing import Any, Callable, TypeVar, Union

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from dedem.errors import (
    AutodiffError,
    EvaluationError,
    RecordingConsumedError,
    RecordingMismatchError,
)

DTYPE = torch.float64

Numeric = Union[float, int, np.ndarray, torch.Tensor]
LayoutEntry = tuple[int, int, tuple[int, ...]]


class ParamVector(BaseModel, frozen=True):
    """Flat parameter array plus the name → (start, stop, shape) layout."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    values: np.ndarray
    layout: dict[str, LayoutEntry]

    @field_validator("values", mode="before")
    @classmethod
    def as_flat_array(cls, values: Numeric) -> np.ndarray:
        return np.array(values, dtype=np.float64).reshape(-1)

    @model_validator(mode="after")
    def check_layout(self) -> ParamVector:
        cursor = 0
        for name, (start, stop, shape) in sorted(
            self.layout.items(), key=lambda item: item[1][0]
        ):
            if start != cursor:
                raise ValueError(f"layout gap or overlap before {name!r} at {start}")
            if stop - start != int(np.prod(shape, dtype=np.int64)):
                raise ValueError(f"layout entry {name!r} does not match shape {shape}")
            cursor = stop
        if cursor != len(self.values):
            raise ValueError(
                f"layout covers {cursor} entries, parameter vector has {len(self.values)}"
            )
        return self

    def __len__(self) -> int:
        return len(self.values)

    def view(self, name: str) -> np.ndarray:
        start, stop, shape = self.layout[name]
        return self.values[start:stop].reshape(shape)

    def with_values(self, values: Numeric) -> ParamVector:
        values = np.array(values, dtype=np.float64).reshape(-1)
        if len(values) != len(self.values):
            raise AutodiffError(
                f"expected {len(self.values)} parameters, got {len(values)}"
            )
        return ParamVector(values=values, layout=self.layout)


class Recording:
    """Single-owner record of one evaluation of a function of θ."""

    def __init__(self, theta: Numeric):
        self.theta = torch.tensor(
            np.asarray(theta, dtype=np.float64), dtype=DTYPE
        ).requires_grad_(True)
        self.consumed = False

    def parameters(self) -> AdScalar:
        return AdScalar(self.theta, self)

    def constant(self, value: Numeric) -> AdScalar:
        return AdScalar(torch.as_tensor(value, dtype=DTYPE), self)

    def zeros(self, shape: tuple[int, ...]) -> AdScalar:
        return AdScalar(torch.zeros(shape, dtype=DTYPE), self)


_Method = TypeVar("_Method", bound=Callable[..., Any])


def _defer_to_dual(method: _Method) -> _Method:
    @wraps(method)
    def wrapper(self: AdScalar, other: Any) -> Any:
        if isinstance(other, SpatialDual):
            return NotImplemented
        return method(self, other)

    return wrapper  # type: ignore[return-value]


def _check_domain(violated: torch.Tensor, primitive: str, message: str) -> None:
    if bool(torch.any(violated)):
        raise EvaluationError(primitive, message)


class AdScalar:
    """Recorded value; arithmetic is elementwise with numpy broadcasting."""

    __array_ufunc__ = None

    def __init__(self, value: torch.Tensor, recording: Recording):
        self.tensor = value
        self.recording = recording

    def __repr__(self) -> str:
        return f"AdScalar({self.tensor.detach().numpy()!r})"

    @property
    def value(self) -> np.ndarray:
        return self.tensor.detach().numpy().copy()

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.tensor.shape)

    def item(self) -> float:
        return float(self.tensor.detach())

    def is_finite(self) -> bool:
        return bool(torch.all(torch.isfinite(self.tensor.detach())))

    def _lift(self, other: AdScalar | Numeric) -> torch.Tensor:
        if isinstance(other, AdScalar):
            if other.recording is not self.recording:
                raise RecordingMismatchError("operands belong to different recordings")
            return other.tensor
        return torch.as_tensor(other, dtype=DTYPE)

    def _wrap(self, tensor: torch.Tensor) -> AdScalar:
        return AdScalar(tensor, self.recording)

    @_defer_to_dual
    def __add__(self, other: AdScalar | Numeric) -> AdScalar:
        return self._wrap(self.tensor + self._lift(other))

    __radd__ = __add__

    @_defer_to_dual
    def __sub__(self, other: AdScalar | Numeric) -> AdScalar:
        return self._wrap(self.tensor - self._lift(other))

    @_defer_to_dual
    def __rsub__(self, other: AdScalar | Numeric) -> AdScalar:
        return self._wrap(self._lift(other) - self.tensor)

    @_defer_to_dual
    def __mul__(self, other: AdScalar | Numeric) -> AdScalar:
        return self._wrap(self.tensor * self._lift(other))

    __rmul__ = __mul__

    @_defer_to_dual
    def __truediv__(self, other: AdScalar | Numeric) -> AdScalar:
        denominator = self._lift(other)
        _check_domain(denominator == 0, "div", "division by zero")
        return self._wrap(self.tensor / denominator)

    @_defer_to_dual
    def __rtruediv__(self, other: AdScalar | Numeric) -> AdScalar:
        _check_domain(self.tensor == 0, "div", "division by zero")
        return self._wrap(self._lift(other) / self.tensor)

    def __neg__(self) -> AdScalar:
        return self._wrap(-self.tensor)

    def __pow__(self, exponent: float) -> AdScalar:
        if isinstance(exponent, (AdScalar, SpatialDual)):
            raise AutodiffError("power is supported by constant exponents only")
        if float(exponent) != int(exponent):
            _check_domain(self.tensor < 0, "pow", "fractional power of a negative value")
        if exponent < 0:
            _check_domain(self.tensor == 0, "pow", "negative power of zero")
        return self._wrap(self.tensor**exponent)

    @_defer_to_dual
    def __matmul__(self, other: AdScalar | Numeric) -> AdScalar:
        return self._wrap(self.tensor @ self._lift(other))

    @_defer_to_dual
    def __rmatmul__(self, other: AdScalar | Numeric) -> AdScalar:
        return self._wrap(self._lift(other) @ self.tensor)

    def __getitem__(self, index: Any) -> AdScalar:
        return self._wrap(self.tensor[index])

    @property
    def T(self) -> AdScalar:
        return self._wrap(self.tensor.T)

    def reshape(self, *shape: int) -> AdScalar:
        return self._wrap(self.tensor.reshape(*shape))

    def sum(self, axis: int | None = None) -> AdScalar:
        if axis is None:
            return self._wrap(self.tensor.sum())
        return self._wrap(self.tensor.sum(dim=axis))

    def tanh(self) -> AdScalar:
        return self._wrap(torch.tanh(self.tensor))

    def exp(self) -> AdScalar:
        return self._wrap(torch.exp(self.tensor))

    def log(self) -> AdScalar:
        _check_domain(self.tensor <= 0, "ln", "logarithm of a non-positive value")
        return self._wrap(torch.log(self.tensor))

    def sqrt(self) -> AdScalar:
        _check_domain(self.tensor < 0, "sqrt", "square root of a negative value")
        return self._wrap(torch.sqrt(self.tensor))

    def relu(self) -> AdScalar:
        return self._wrap(torch.relu(self.tensor))

    def sign(self) -> torch.Tensor:
        """sgn(v) with sgn(0) = -1, detached."""
        detached = self.tensor.detach()
        return torch.where(detached > 0, 1.0, -1.0).to(DTYPE)

    def abs(self) -> AdScalar:
        return self._wrap(self.tensor * self.sign())

    def minimum(self, other: AdScalar | Numeric) -> AdScalar:
        """Elementwise min; ties select `self`."""
        other_tensor = self._lift(other)
        return self._wrap(torch.where(self.tensor <= other_tensor, self.tensor, other_tensor))

    def maximum(self, other: AdScalar | Numeric) -> AdScalar:
        """Elementwise max; ties select `self`."""
        other_tensor = self._lift(other)
        return self._wrap(torch.where(self.tensor >= other_tensor, self.tensor, other_tensor))


def record(
    function: Callable[[AdScalar], AdScalar], theta: Numeric
) -> tuple[AdScalar, Recording]:
    """Evaluate `function` on a fresh recording seeded from `theta`."""
    recording = Recording(theta)
    output = function(recording.parameters())
    if not isinstance(output, AdScalar):
        raise AutodiffError(f"recorded function returned {type(output).__name__}")
    if output.recording is not recording:
        raise RecordingMismatchError("output does not belong to this recording")
    return output, recording


def backward(output: AdScalar) -> np.ndarray:
    """Gradient of a scalar `output` w.r.t. the recording's parameters."""
    recording = output.recording
    if recording.consumed:
        raise RecordingConsumedError("backward was already called on this recording")
    if output.tensor.numel() != 1:
        raise AutodiffError(f"backward needs a scalar, got shape {output.shape}")
    recording.consumed = True
    if not output.tensor.requires_grad:
        return np.zeros(recording.theta.shape, dtype=np.float64)
    (gradient,) = torch.autograd.grad(
        output.tensor.reshape(()), recording.theta, allow_unused=True
    )
    if gradient is None:
        return np.zeros(recording.theta.shape, dtype=np.float64)
    return gradient.detach().numpy().copy()


class SpatialDual:
    """Value with forward-mode channels ∂/∂x1 and ∂/∂x2."""

    __array_ufunc__ = None

    def __init__(self, v: AdScalar, dx1: AdScalar, dx2: AdScalar):
        if not (v.recording is dx1.recording is dx2.recording):
            raise RecordingMismatchError("dual channels belong to different recordings")
        self.v = v
        self.dx1 = dx1
        self.dx2 = dx2

    def __repr__(self) -> str:
        return f"SpatialDual(v={self.v!r}, dx1={self.dx1!r}, dx2={self.dx2!r})"

    @property
    def recording(self) -> Recording:
        return self.v.recording

    @classmethod
    def constant(cls, value: AdScalar | Numeric, recording: Recording) -> SpatialDual:
        """Lift a constant in x (possibly θ-dependent) with zero derivative channels."""
        lifted = value if isinstance(value, AdScalar) else recording.constant(value)
        zeros = recording.zeros(lifted.shape)
        return cls(lifted, zeros, zeros)

    def _lift(self, other: SpatialDual | AdScalar | Numeric) -> SpatialDual:
        if isinstance(other, SpatialDual):
            if other.recording is not self.recording:
                raise RecordingMismatchError("operands belong to different recordings")
            return other
        if isinstance(other, AdScalar) and other.recording is not self.recording:
            raise RecordingMismatchError("operands belong to different recordings")
        return SpatialDual.constant(other, self.recording)

    def _chain(self, value: AdScalar, derivative: AdScalar) -> SpatialDual:
        return SpatialDual(value, derivative * self.dx1, derivative * self.dx2)

    def __add__(self, other: SpatialDual | AdScalar | Numeric) -> SpatialDual:
        b = self._lift(other)
        return SpatialDual(self.v + b.v, self.dx1 + b.dx1, self.dx2 + b.dx2)

    __radd__ = __add__

    def __sub__(self, other: SpatialDual | AdScalar | Numeric) -> SpatialDual:
        b = self._lift(other)
        return SpatialDual(self.v - b.v, self.dx1 - b.dx1, self.dx2 - b.dx2)

    def __rsub__(self, other: SpatialDual | AdScalar | Numeric) -> SpatialDual:
        return self._lift(other) - self

    def __mul__(self, other: SpatialDual | AdScalar | Numeric) -> SpatialDual:
        b = self._lift(other)
        return SpatialDual(
            self.v * b.v,
            self.dx1 * b.v + self.v * b.dx1,
            self.dx2 * b.v + self.v * b.dx2,
        )

    __rmul__ = __mul__

    def __truediv__(self, other: SpatialDual | AdScalar | Numeric) -> SpatialDual:
        b = self._lift(other)
        quotient = self.v / b.v
        return SpatialDual(
            quotient,
            (self.dx1 - quotient * b.dx1) / b.v,
            (self.dx2 - quotient * b.dx2) / b.v,
        )

    def __rtruediv__(self, other: SpatialDual | AdScalar | Numeric) -> SpatialDual:
        return self._lift(other) / self

    def __neg__(self) -> SpatialDual:
        return SpatialDual(-self.v, -self.dx1, -self.dx2)

    def __pow__(self, exponent: float) -> SpatialDual:
        return self._chain(self.v**exponent, exponent * self.v ** (exponent - 1))

    def __getitem__(self, index: Any) -> SpatialDual:
        return SpatialDual(self.v[index], self.dx1[index], self.dx2[index])

    def linear(self, weight: AdScalar, bias: AdScalar | None = None) -> SpatialDual:
        """Affine map over the last axis: v @ Wᵀ + b."""
        value = self.v @ weight.T
        if bias is not None:
            value = value + bias
        return SpatialDual(value, self.dx1 @ weight.T, self.dx2 @ weight.T)

    def tanh(self) -> SpatialDual:
        value = self.v.tanh()
        return self._chain(value, 1.0 - value * value)

    def exp(self) -> SpatialDual:
        value = self.v.exp()
        return self._chain(value, value)

    def log(self) -> SpatialDual:
        return self._chain(self.v.log(), 1.0 / self.v)

    def sqrt(self) -> SpatialDual:
        value = self.v.sqrt()
        return self._chain(value, 0.5 / value)

    def relu(self) -> SpatialDual:
        step = torch.where(self.v.tensor.detach() > 0, 1.0, 0.0).to(DTYPE)
        return self._chain(self.v.relu(), self.recording.constant(step))

    def abs(self) -> SpatialDual:
        sign = self.v.sign()
        return self._chain(self.v.abs(), self.recording.constant(sign))


DUAL_OPS: dict[str, Callable[..., SpatialDual]] = {
    "add": SpatialDual.__add__,
    "sub": SpatialDual.__sub__,
    "mul": SpatialDual.__mul__,
    "div": SpatialDual.__truediv__,
    "pow": SpatialDual.__pow__,
    "neg": SpatialDual.__neg__,
    "tanh": SpatialDual.tanh,
    "exp": SpatialDual.exp,
    "log": SpatialDual.log,
    "sqrt": SpatialDual.sqrt,
    "relu": SpatialDual.relu,
    "abs": SpatialDual.abs,
}


def dual_ops(
    a: SpatialDual, b: SpatialDual | AdScalar | Numeric | None, op: str
) -> SpatialDual:
    """Apply the named operation; unary operations ignore `b`."""
    try:
        operation = DUAL_OPS[op]
    except KeyError:
        raise AutodiffError(f"unsupported op {op!r}") from None
    if b is None:
        return operation(a)
    return operation(a, b)


def spatial_seed(x: Numeric, recording: Recording) -> tuple[SpatialDual, SpatialDual]:
    """Coordinates as duals: x1 with (1, 0) and x2 with (0, 1) channels."""
    points = np.asarray(x, dtype=np.float64)
    x1, x2 = points[..., 0], points[..., 1]
    ones, zeros = np.ones_like(x1), np.zeros_like(x1)
    first = SpatialDual(
        recording.constant(x1), recording.constant(ones), recording.constant(zeros)
    )
    second = SpatialDual(
        recording.constant(x2), recording.constant(zeros), recording.constant(ones)
    )
    return first, second


def dual_from_jacobian(
    values: np.ndarray, jacobian: np.ndarray, recording: Recording
) -> SpatialDual:
    """Dual input whose channels are the columns of a (…, n, 2) Jacobian."""
    return SpatialDual(
        recording.constant(values),
        recording.constant(np.ascontiguousarray(jacobian[..., 0])),
        recording.constant(np.ascontiguousarray(jacobian[..., 1])),
    )
