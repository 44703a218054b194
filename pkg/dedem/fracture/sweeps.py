"""
Parameter sweeps over a base scenario: the crack size ratio a/b of a
center crack and the modulus ratio E1/E2 of an interface crack. Each point
is trained from scratch and reported as one row of the SIF report.
"""

import logging
from enum import Enum
from typing import Callable

from dedem.common.instrument import instrument
from dedem.errors import ScenarioError
from dedem.geometry import CrackPath
from dedem.models import Scenario
from dedem.optimizer import train

from .models import SifResult
from .sif import crack_size, extract_sif, point_behind_tip

logger = logging.getLogger(__name__)


class SweepKind(str, Enum):
    CRACK_SIZE = "crack-size"
    MODULUS_RATIO = "modulus-ratio"

    @property
    def column(self) -> str:
        return "a/b" if self is SweepKind.CRACK_SIZE else "E1/E2"


def _swept_crack(scenario: Scenario) -> CrackPath:
    cracks = scenario.cracks
    if len(cracks) != 1:
        raise ScenarioError(f"a sweep needs exactly one crack, found {len(cracks)}")
    return cracks[0]


def with_crack_size(scenario: Scenario, ratio: float) -> Scenario:
    """Copy whose crack is scaled to a = ratio·b, b being the domain width.

    Edge cracks keep their boundary endpoint, interior cracks their midpoint.
    """
    if not 0 < ratio < 1:
        raise ScenarioError(f"a/b must lie in (0, 1), got {ratio}")
    path = _swept_crack(scenario)
    points = path.points
    if len(path.tips) == 0:
        raise ScenarioError(f"crack {path.id!r} has no tip to move")
    if len(path.tips) == 1:
        anchor = points[0] if path.tip_flags[1] else points[-1]
    else:
        anchor = point_behind_tip(path, "start", path.length / 2)
    factor = ratio * scenario.domain.width / crack_size(path)
    vertices = anchor + factor * (points - anchor)
    scaled = CrackPath(
        id=path.id,
        vertices=tuple((float(x), float(y)) for x, y in vertices),
        tip_flags=path.tip_flags,
    )
    return scenario.with_crack(scaled)


def with_modulus_ratio(scenario: Scenario, ratio: float) -> Scenario:
    """Copy with E of the second material set to ratio × E of the first."""
    if ratio <= 0:
        raise ScenarioError(f"E1/E2 must be positive, got {ratio}")
    if len(scenario.material) != 2:
        raise ScenarioError(
            f"a modulus sweep needs two materials, found {len(scenario.material)}"
        )
    data = scenario.model_dump()
    base, swept = list(data["material"])
    data["material"][swept]["E"] = ratio * data["material"][base]["E"]
    return scenario.model_validate(data)


VARIANTS: dict[SweepKind, Callable[[Scenario, float], Scenario]] = {
    SweepKind.CRACK_SIZE: with_crack_size,
    SweepKind.MODULUS_RATIO: with_modulus_ratio,
}


@instrument(prefix="fracture")
def sweep(
    scenario: Scenario, kind: SweepKind, values: list[float]
) -> list[tuple[int, float, SifResult]]:
    """Train one network per value and extract the SIFs of the swept crack."""
    variant = VARIANTS[kind]
    scenarios = [variant(scenario, value) for value in values]
    rows = []
    for step, (value, point) in enumerate(zip(values, scenarios)):
        report = train(point)
        result = extract_sif(report.best_params, point)
        rows.append((step, float(value), result))
        logger.info(
            "Sweep point %s = %g",
            kind.column,
            value,
            extra={
                "step": step,
                "K1": result.K1,
                "K2": result.K2,
                "epochs": report.epochs_run,
            },
        )
    return rows
