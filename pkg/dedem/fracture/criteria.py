"""
Maximum circumferential stress criterion for the propagation direction.
"""

import logging
import math

from dedem.errors import KinkAngleError

logger = logging.getLogger(__name__)

NEWTON_STEPS = 3
STATIONARY_TOLERANCE = 1e-6


def circumferential_stress(K1: float, K2: float, theta: float) -> float:
    """σθ·√(2πr) at the tip: cos(θ/2)·[K1 cos²(θ/2) − 1.5 K2 sin θ]."""
    half = math.cos(theta / 2)
    return half * (K1 * half**2 - 1.5 * K2 * math.sin(theta))


def stationarity_residual(K1: float, K2: float, theta: float) -> float:
    return K1 * math.sin(theta) + K2 * (3 * math.cos(theta) - 1)


def _polish(K1: float, K2: float, theta: float) -> float:
    for _ in range(NEWTON_STEPS):
        slope = K1 * math.cos(theta) - 3 * K2 * math.sin(theta)
        if slope == 0:
            break
        theta -= stationarity_residual(K1, K2, theta) / slope
    return theta


def kink_angle(K1: float, K2: float) -> float:
    """Propagation angle (rad) relative to the current tip tangent.

    A closed crack (K1 < 0 with K2 = 0) has no tensile maximum of σθ and is
    rejected, as is K1 = K2 = 0.
    """
    if K1 == 0 and K2 == 0:
        raise KinkAngleError("kink angle undefined for K1 = K2 = 0")
    if K2 == 0:
        if K1 < 0:
            raise KinkAngleError(
                f"crack is closed (K1={K1}, K2=0), no opening direction"
            )
        return 0.0

    root = math.sqrt(K1**4 + 8 * K1**2 * K2**2)
    scale = abs(K1) + abs(K2)
    candidates = []
    for numerator in (3 * K2**2 + root, 3 * K2**2 - root):
        cosine = min(1.0, max(-1.0, numerator / (K1**2 + 9 * K2**2)))
        for sign in (1.0, -1.0):
            theta = _polish(K1, K2, sign * math.acos(cosine))
            if abs(theta) >= math.pi:
                continue
            if abs(stationarity_residual(K1, K2, theta)) <= STATIONARY_TOLERANCE * scale:
                candidates.append(theta)
    if not candidates:
        raise KinkAngleError(f"no stationary direction for K1={K1}, K2={K2}")
    theta_c = max(candidates, key=lambda theta: circumferential_stress(K1, K2, theta))
    logger.debug("Kink angle %.6f rad", theta_c, extra={"K1": K1, "K2": K2})
    return theta_c
