"""
Discontinuity-embedded deep energy method for 2D linear-elastic fracture.

Cracks and material interfaces are described by signed distance functions,
turned into extra network inputs, and the network is trained by minimizing
the total potential energy.
"""

from enum import Enum


class AnalysisMode(str, Enum):
    """Two-dimensional reduction of the elastic problem."""

    PLANE_STRESS = "plane_stress"
    PLANE_STRAIN = "plane_strain"


class Operation(str, Enum):
    """Enumeration of the operations logged during a run."""

    SOLVE = "solve"
    PROPAGATE = "propagate"
    SIF = "sif"
    CHECK_GRAD = "check-grad"
    VALIDATE = "validate"
    EXPORT_GRID = "export-grid"


Point = tuple[float, float]
