"""Custom exceptions for DEDEM"""


class DedemError(Exception):
    """Base error; `module` qualifies the message surfaced by the CLI."""

    module = "dedem"


class ScenarioError(DedemError):
    """Scenario file could not be parsed or violates an invariant"""

    module = "config_io"


class ExpressionSyntaxError(ScenarioError):
    """Expression text is not part of the constraint mini-language"""


class ExpressionEvaluationError(DedemError):
    """Expression evaluation left its mathematical domain"""

    module = "config_io"


class FieldTableError(DedemError):
    """Field table is malformed or cannot be written"""

    module = "config_io"


class GeometryError(DedemError):
    """Invalid query on crack or interface geometry"""

    module = "geometry_embedding"


class AutodiffError(DedemError):
    """Misuse of a recording"""

    module = "autodiff_core"


class EvaluationError(AutodiffError):
    """A recorded primitive left its domain (division by zero, log/sqrt)"""

    def __init__(self, primitive: str, message: str = "domain violation"):
        self.primitive = primitive
        super().__init__(f"{primitive}: {message}")


class RecordingMismatchError(AutodiffError):
    """Arithmetic mixed values from two recordings"""


class RecordingConsumedError(AutodiffError):
    """`backward` was already called on this recording"""


class NetworkShapeError(DedemError):
    """Inputs or parameters do not match the network configuration"""

    module = "network"


class WarmStartError(NetworkShapeError):
    """Snapshot configuration does not match the scenario network"""


class QuadratureError(DedemError):
    """Grid cannot be built or samples do not match its nodes"""

    module = "quadrature"


class MaterialError(DedemError):
    """Elastic constants outside their admissible range"""

    module = "elasticity_energy"


class NonFiniteLossError(DedemError):
    """The assembled energy is NaN or infinite"""

    module = "elasticity_energy"

    def __init__(self, message: str, node: int | None = None):
        self.node = node
        super().__init__(message)


class NonFiniteGradientError(DedemError):
    """The parameter gradient contains NaN or infinite entries"""

    module = "optimizer"


class SifError(DedemError):
    """Stress intensity factors cannot be extracted from the samples"""

    module = "fracture_post"


class KinkAngleError(SifError):
    """No propagation direction for a vanishing SIF pair"""


class PropagationError(DedemError):
    """A propagation step failed"""

    module = "fracture_post"

    def __init__(self, message: str, step: int):
        self.step = step
        super().__init__(f"step {step}: {message}")
