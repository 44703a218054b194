"""
Stress intensity factors by displacement extrapolation: crack-opening
sampling behind a tip, the homogeneous and interface-crack relations, the
reference center-crack formula and the field rRMSE metric.

Internal lengths are in m and moduli in MPa; reported K are in MPa·√mm.
"""

import csv
import logging
import math
from pathlib import Path

import numpy as np

from dedem.common.instrument import instrument
from dedem.energy import material_index
from dedem.errors import FieldTableError, SifError
from dedem.fields import FieldTable
from dedem.geometry import CrackPath, LineInterface, TipName, interface_sdf
from dedem.models import Material, Scenario
from dedem.network import NetParams, evaluate_displacement

from .models import BimaterialConstants, CodSample, LinearFit, SifResult

logger = logging.getLogger(__name__)

SQRT_M_TO_SQRT_MM = math.sqrt(1000.0)
GPA_TO_MPA = 1e3
DEFAULT_SAMPLES = 12
POINT_TOLERANCE = 1e-9


def crack_size(path: CrackPath) -> float:
    """Crack length for an edge crack, half-length for an interior one."""
    return path.length if len(path.tips) == 1 else path.length / 2


def default_window(a: float, b: float) -> tuple[float, float]:
    return (0.3, 0.35) if a / b > 0.2 else (0.4, 0.8)


def active_tip(path: CrackPath, which: TipName | None = None) -> TipName:
    """Tip named by `which`; by default the end tip when it is one, else the start."""
    if not path.tips:
        raise SifError(f"crack {path.id!r} has no tip")
    if which is None:
        return "end" if path.tip_flags[1] else "start"
    if which not in path.tips:
        raise SifError(f"{which} of crack {path.id!r} is not a tip")
    return which


def tip_frame(path: CrackPath, which) -> tuple[np.ndarray, np.ndarray, float]:
    """Tangent e1 (out of the crack), normal e2 and the side label facing e2."""
    e1 = path.tip_tangent(which)
    e2 = np.array([-e1[1], e1[0]])
    points = path.points
    traversal = points[-1] - points[-2] if which == "end" else points[1] - points[0]
    left = np.array([-traversal[1], traversal[0]])
    return e1, e2, 1.0 if float(e2 @ left) > 0 else -1.0


def point_behind_tip(path: CrackPath, which, r: float) -> np.ndarray:
    """Point reached by walking `r` along the crack from the tip."""
    points = path.points if which == "start" else path.points[::-1]
    remaining = r
    for start, end in zip(points[:-1], points[1:]):
        length = float(np.linalg.norm(end - start))
        if remaining <= length:
            return start + (end - start) * (remaining / length)
        remaining -= length
    raise SifError(f"r = {r} lies beyond crack {path.id!r} (length {path.length})")


def _find_crack(scenario: Scenario, crack_id: str | None) -> CrackPath:
    cracks = {path.id: path for path in scenario.cracks}
    if crack_id is None:
        if not cracks:
            raise SifError("scenario has no crack")
        crack_id = next(iter(cracks))
    try:
        return cracks[crack_id]
    except KeyError:
        raise SifError(f"unknown crack {crack_id!r}") from None


def sample_cod(
    params: NetParams,
    scenario: Scenario,
    crack_id: str | None = None,
    window: tuple[float, float] | None = None,
    n_samples: int = DEFAULT_SAMPLES,
    which: TipName | None = None,
) -> list[CodSample]:
    """Face jumps at `n_samples` distances r ∈ window·a behind a tip (`active_tip`)."""
    path = _find_crack(scenario, crack_id)
    which = active_tip(path, which)
    a = crack_size(path)
    window = window or default_window(a, scenario.domain.width)
    if not (0 < window[0] <= window[1] < 1):
        raise SifError(f"window {window} outside the crack length")

    radii = np.linspace(window[0] * a, window[1] * a, n_samples)
    points = np.stack([point_behind_tip(path, which, r) for r in radii])
    e1, e2, upper = tip_frame(path, which)

    specs = scenario.embedding_specs()
    faces = []
    for side in (upper, -upper):
        u, _ = evaluate_displacement(
            params,
            scenario.constraint,
            specs,
            points,
            sides={path.id: np.full(n_samples, side)},
        )
        faces.append(u)
    jump = faces[0] - faces[1]
    return [
        CodSample(r=float(r), delta1=float(d @ e1), delta2=float(d @ e2))
        for r, d in zip(radii, jump)
    ]


def _fit(regressor: np.ndarray, values: np.ndarray) -> LinearFit:
    design = np.column_stack([np.ones_like(regressor), regressor])
    (intercept, slope), *_ = np.linalg.lstsq(design, values, rcond=None)
    residual = values - design @ np.array([intercept, slope])
    ss_res = float(residual @ residual)
    ss_tot = float(np.sum((values - values.mean()) ** 2))
    if ss_tot > 0:
        r_squared = 1.0 - ss_res / ss_tot
    else:
        r_squared = 1.0 if ss_res == 0 else 0.0
    return LinearFit(intercept=float(intercept), slope=float(slope), r_squared=r_squared)


def _unpack(samples: list[CodSample]):
    samples = sorted(samples, key=lambda sample: sample.r)
    r = np.array([sample.r for sample in samples])
    if len(np.unique(r)) < 2:
        raise SifError("extrapolation needs at least 2 distinct distances")
    delta1 = np.array([sample.delta1 for sample in samples])
    delta2 = np.array([sample.delta2 for sample in samples])
    return r, delta1, delta2


def _window(r: np.ndarray, a: float | None):
    return None if a is None else (float(r[0] / a), float(r[-1] / a))


@instrument(prefix="fracture")
def sif_homogeneous(
    samples: list[CodSample], material: Material, a: float | None = None
) -> SifResult:
    """K̃ = μ/(κ+1)·√(2π/r)·δ fitted by K + c·r; δ2 gives K1 and δ1 gives K2."""
    r, delta1, delta2 = _unpack(samples)
    mu = material.shear_modulus * GPA_TO_MPA
    factor = mu / (material.kolosov + 1.0) * np.sqrt(2.0 * np.pi / r)
    fit1 = _fit(r, factor * delta2)
    fit2 = _fit(r, factor * delta1)
    return SifResult(
        K1=fit1.intercept * SQRT_M_TO_SQRT_MM,
        K2=fit2.intercept * SQRT_M_TO_SQRT_MM,
        fit1=fit1,
        fit2=fit2,
        window=_window(r, a),
        a=a,
    )


def dundurs(m1: Material, m2: Material) -> BimaterialConstants:
    """Second Dundurs parameter and oscillation index; material 1 lies above the crack."""
    mu1, mu2 = m1.shear_modulus, m2.shear_modulus
    kappa1, kappa2 = m1.kolosov, m2.kolosov
    beta = (mu1 * (kappa2 - 1) - mu2 * (kappa1 - 1)) / (
        mu1 * (kappa2 + 1) + mu2 * (kappa1 + 1)
    )
    epsilon = math.log((1 - beta) / (1 + beta)) / (2 * math.pi)
    return BimaterialConstants(
        beta=beta, epsilon=epsilon, mu1=mu1, mu2=mu2, kappa1=kappa1, kappa2=kappa2
    )


def bimaterial_matrix(r, constants: BimaterialConstants, a: float) -> np.ndarray:
    """(…, 2, 2) map from (δ1, δ2) to (K̃1, K̃2) in MPa·√m; Q uses r/a."""
    r = np.asarray(r, dtype=np.float64)
    eps = constants.epsilon
    mu1, mu2 = constants.mu1 * GPA_TO_MPA, constants.mu2 * GPA_TO_MPA
    D = (
        2 * mu1 * mu2 * math.cosh(math.pi * eps)
        / (mu1 * (1 + constants.kappa2) + mu2 * (1 + constants.kappa1))
        * np.sqrt(2 * np.pi / r)
    )
    Q = eps * np.log(r / a)
    cos_q, sin_q = np.cos(Q), np.sin(Q)
    alpha = cos_q + 2 * eps * sin_q
    gamma = 2 * eps * cos_q - sin_q
    matrix = np.stack(
        [
            np.stack([sin_q - 2 * eps * cos_q, alpha], axis=-1),
            np.stack([alpha, gamma], axis=-1),
        ],
        axis=-2,
    )
    return D[..., None, None] * matrix


@instrument(prefix="fracture")
def sif_bimaterial(
    samples: list[CodSample], constants: BimaterialConstants, a: float
) -> SifResult:
    """Interface-crack extrapolation with oscillatory fit terms."""
    r, delta1, delta2 = _unpack(samples)
    k_tilde = bimaterial_matrix(r, constants, a) @ np.stack([delta1, delta2], axis=-1)[..., None]
    k1_tilde, k2_tilde = k_tilde[:, 0, 0], k_tilde[:, 1, 0]

    Q = constants.epsilon * np.log(r / a)
    regressor1 = r * np.sin(Q)
    regressor2 = r * np.cos(Q)
    # sin Q vanishes identically for ε = 0
    if np.max(np.abs(regressor1)) <= 1e-14 * np.max(r):
        regressor1 = r
    fit1 = _fit(regressor1, k1_tilde)
    fit2 = _fit(regressor2, k2_tilde)
    return SifResult(
        K1=fit1.intercept * SQRT_M_TO_SQRT_MM,
        K2=fit2.intercept * SQRT_M_TO_SQRT_MM,
        fit1=fit1,
        fit2=fit2,
        window=_window(r, a),
        a=a,
        method="bimaterial",
    )


def tada_k1(sigma: float, a: float, b: float) -> float:
    """Reference K1 (MPa·√mm) of a center crack of half-length a in a strip of half-width b."""
    if not 0 < a < b:
        raise SifError(f"reference formula needs 0 < a < b, got a={a}, b={b}")
    ratio = a / b
    bracket = 1 - 0.025 * ratio**2 + 0.06 * ratio**4
    return sigma * math.sqrt(math.pi * a * 1000.0) * bracket * math.sqrt(
        1 / math.cos(math.pi * ratio / 2)
    )


def _interface_materials(scenario: Scenario, path: CrackPath, which):
    """(upper, lower) materials when the tip segment lies on a line interface."""
    if len(scenario.material) < 2:
        return None
    tip = path.tip_point(which)
    behind = point_behind_tip(path, which, min(path.length, crack_size(path)) / 2)
    for _, shape in scenario.interfaces:
        if not isinstance(shape, LineInterface):
            continue
        phi, _ = interface_sdf(np.stack([tip, behind]), shape)
        if np.all(np.abs(phi) <= POINT_TOLERANCE * scenario.domain.diagonal):
            e1, e2, _ = tip_frame(path, which)
            offset = 1e-6 * scenario.domain.diagonal
            probes = np.stack([behind + offset * e2, behind - offset * e2])
            materials = scenario.materials
            upper, lower = material_index(materials, probes)
            if upper != lower:
                return materials[upper], materials[lower]
    return None


def extract_sif(
    params: NetParams,
    scenario: Scenario,
    crack_id: str | None = None,
    window: tuple[float, float] | None = None,
    n_samples: int = DEFAULT_SAMPLES,
    which: TipName | None = None,
) -> SifResult:
    """Sample the COD and apply the interface relation when the crack lies on one."""
    path = _find_crack(scenario, crack_id)
    which = active_tip(path, which)
    a = crack_size(path)
    samples = sample_cod(params, scenario, path.id, window, n_samples, which)
    pair = _interface_materials(scenario, path, which)
    if pair is not None:
        result = sif_bimaterial(samples, dundurs(*pair), a)
    else:
        tip = path.tip_point(which)[None, :]
        material = scenario.materials[int(material_index(scenario.materials, tip)[0])]
        result = sif_homogeneous(samples, material, a)
    result = result.model_copy(update={"crack": path.id, "tip": which})
    logger.info(
        "Extracted SIFs",
        extra={
            "crack": path.id,
            "tip": which,
            "K1": result.K1,
            "K2": result.K2,
            "method": result.method,
        },
    )
    return result


def lattice_weights(points: np.ndarray) -> np.ndarray | None:
    """Tensor trapezoid weights when `points` fill a full lattice, else None."""
    xs, x_index = np.unique(points[:, 0], return_inverse=True)
    ys, y_index = np.unique(points[:, 1], return_inverse=True)
    if len(xs) < 2 or len(ys) < 2 or len(xs) * len(ys) != len(points):
        return None
    if len(set(zip(x_index.tolist(), y_index.tolist()))) != len(points):
        return None

    def weights_1d(values: np.ndarray) -> np.ndarray:
        gaps = np.diff(values)
        weights = np.zeros(len(values))
        weights[:-1] += gaps / 2
        weights[1:] += gaps / 2
        return weights

    return weights_1d(xs)[x_index] * weights_1d(ys)[y_index]


def rrmse(
    field: FieldTable, reference: FieldTable, weights=None
) -> dict[str, float]:
    """Weighted relative RMS error per shared column; key "u" combines u1 and u2."""
    if len(field) != len(reference) or not np.allclose(
        field.points, reference.points, rtol=0, atol=POINT_TOLERANCE
    ):
        raise FieldTableError("field and reference point sets differ")
    if weights is None:
        weights = lattice_weights(reference.points)
    if weights is None:
        weights = np.ones(len(reference))
    weights = np.asarray(weights, dtype=np.float64)

    def ratio(names: list[str]) -> float:
        error = sum(weights @ (field[n] - reference[n]) ** 2 for n in names)
        norm = sum(weights @ reference[n] ** 2 for n in names)
        if norm == 0:
            return 0.0 if error == 0 else math.inf
        return math.sqrt(error / norm)

    shared = [name for name in reference.names if name in field.columns]
    result = {name: ratio([name]) for name in shared}
    if "u1" in shared and "u2" in shared:
        result["u"] = ratio(["u1", "u2"])
    return result


def write_sif_report(
    rows: list[tuple[int, float, SifResult]],
    destination: str | Path,
    parameter: str = "a",
) -> None:
    """CSV with one line per (step, value, result); `parameter` names the value column."""
    with open(destination, "w", encoding="utf8", newline="") as file:
        writer = csv.writer(file)
        writer.writerow(
            [
                "step",
                parameter,
                "K1",
                "K2",
                "r_squared_1",
                "r_squared_2",
                "window_min",
                "window_max",
                "method",
                "crack",
                "tip",
            ]
        )
        for step, size, result in rows:
            window = result.window or (math.nan, math.nan)
            writer.writerow(
                [
                    step,
                    format(size, ".17g"),
                    format(result.K1, ".17g"),
                    format(result.K2, ".17g"),
                    format(result.fit1.r_squared, ".17g"),
                    format(result.fit2.r_squared, ".17g"),
                    format(window[0], ".17g"),
                    format(window[1], ".17g"),
                    result.method,
                    result.crack or "",
                    result.tip or "",
                ]
            )
