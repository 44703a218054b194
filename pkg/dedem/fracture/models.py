import logging
from typing import Literal

from pydantic import BaseModel, Field, field_validator

from dedem import Point
from dedem.geometry import CrackPath
from dedem.network import NetParams

logger = logging.getLogger(__name__)


class CodSample(BaseModel, frozen=True):
    """Face jump at distance `r` (m) behind the tip, in the tip-segment frame."""

    r: float = Field(..., gt=0)
    delta1: float
    delta2: float


class LinearFit(BaseModel, frozen=True):
    intercept: float
    slope: float
    r_squared: float


class SifResult(BaseModel, frozen=True):
    """Extrapolated SIFs in MPa·√mm."""

    K1: float
    K2: float
    fit1: LinearFit
    fit2: LinearFit
    window: tuple[float, float] | None = None
    a: float | None = None
    method: Literal["homogeneous", "bimaterial"] = "homogeneous"
    crack: str | None = None
    tip: Literal["start", "end"] | None = None

    @field_validator("window")
    @classmethod
    def validate_window(cls, window):
        if window is not None and not (0 < window[0] <= window[1] < 1):
            raise ValueError(f"window {window} must lie within (0, 1)")
        return window


class BimaterialConstants(BaseModel, frozen=True):
    """Dundurs β, oscillation index ε, shear moduli (GPa) and Kolosov constants."""

    beta: float = Field(..., gt=-1, lt=1)
    epsilon: float
    mu1: float = Field(..., gt=0)
    mu2: float = Field(..., gt=0)
    kappa1: float
    kappa2: float


class PropagationStep(BaseModel, frozen=True):
    step: int
    K1: float
    K2: float
    theta_c: float
    tip: Point
    new_tip: Point | None = None
    epochs: int
    best_loss: float | None = None


class PropagationState(BaseModel, frozen=True):
    initial_path: CrackPath
    paths: list[CrackPath] = []
    steps: list[PropagationStep] = []
    snapshots: list[NetParams] = []
    delta_a: float = Field(..., gt=0)
    terminated: bool = False
    termination_reason: str | None = None

    @property
    def path(self) -> CrackPath:
        return self.paths[-1] if self.paths else self.initial_path
