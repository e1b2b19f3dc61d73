"""Manufactured and analytic solutions with error norms and rate regression.

Sign convention: `operator` is L_d[u](x) = int K (u(y) - u(x)) dy (or its
local limit), and the static problem reads -L_h[u] = f, so the returned
forcing is the negative of the operator value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "ManufacturedCase",
    "nonlocal_poly_case",
    "local_trig_case",
    "patch_linear_case",
    "eval_nonlocal_poly",
    "eval_local_trig",
    "eval_typeI",
    "typeI_shear_modulus",
    "error_norms",
    "convergence_slope",
]


@dataclass(frozen=True)
class ManufacturedCase:
    """Consistent displacement/forcing pair for one verification problem.

    `operator(points, delta)` is the exact nonlocal (or local-limit)
    operator value at each point; `forcing` is its negative, ready for the
    static right-hand side.  `local` marks pairs where the forcing is the
    delta -> 0 limit (the discrete solution then converges to the local
    solution, not the nonlocal one).
    """

    tag: str
    displacement: Callable[[np.ndarray], np.ndarray]
    operator: Callable[[np.ndarray, float], np.ndarray]
    local: bool

    def forcing(self, points: np.ndarray, delta: float) -> np.ndarray:
        return -self.operator(points, delta)


def _poly_operator(points: np.ndarray, delta: float) -> np.ndarray:
    """Closed-form nonlocal operator of <(1-x)^6 + (1-y)^6, 0> for kappa = 1.

    Derived by polar moments of the bond kernel; cross-checked against
    dense numeric integration of the ball integral (see tests).
    """
    x = points[:, 0]
    y = points[:, 1]
    ox = (54.0 * (1.0 - x) ** 4 + 18.0 * (1.0 - y) ** 4
          + (27.0 * (1.0 - x) ** 2 + 5.4 * (1.0 - y) ** 2) * delta**2
          + (9.0 / 7.0) * delta**4)
    return np.column_stack([ox, np.zeros_like(ox)])


def eval_nonlocal_poly(x, y, delta: float):
    """(forcing, displacement) of the degree-six polynomial case at one point."""
    pts = np.array([[float(x), float(y)]])
    disp = np.array([(1.0 - x) ** 6 + (1.0 - y) ** 6, 0.0])
    return -_poly_operator(pts, delta)[0], disp


def nonlocal_poly_case() -> ManufacturedCase:
    def displacement(points):
        return np.column_stack([(1.0 - points[:, 0]) ** 6 + (1.0 - points[:, 1]) ** 6,
                                np.zeros(points.shape[0])])
    return ManufacturedCase(tag="nonlocal-poly", displacement=displacement,
                            operator=_poly_operator, local=False)


def _trig_operator(points: np.ndarray, delta: float) -> np.ndarray:
    del delta  # local limit; the nonlocal value differs by O(delta^2)
    return -1.2 * _trig_displacement(points)


def _trig_displacement(points: np.ndarray) -> np.ndarray:
    x = points[:, 0]
    y = points[:, 1]
    return np.column_stack([np.sin(x) * np.sin(y), np.cos(x) * np.cos(y)])


def eval_local_trig(x, y):
    """(forcing, displacement) of the trigonometric case at one point (kappa = 1)."""
    pts = np.array([[float(x), float(y)]])
    return -_trig_operator(pts, 0.0)[0], _trig_displacement(pts)[0]


def local_trig_case() -> ManufacturedCase:
    return ManufacturedCase(tag="local-trig", displacement=_trig_displacement,
                            operator=_trig_operator, local=True)


def patch_linear_case() -> ManufacturedCase:
    """Linear field with a traction-free x = 0 plane (kappa = 1, nu = 1/4)."""
    def displacement(points):
        x = points[:, 0]
        y = points[:, 1]
        return np.column_stack([x + y, -x - 3.0 * y])

    def operator(points, delta):
        del delta
        return np.zeros((points.shape[0], 2))

    return ManufacturedCase(tag="patch-linear", displacement=displacement,
                            operator=operator, local=True)


def typeI_shear_modulus(bulk: float, nu: float = 0.25) -> float:
    return 3.0 * bulk * (1.0 - 2.0 * nu) / (2.0 * (1.0 + nu))


def eval_typeI(x, y, sigma0: float = 1.0, a: float = 1.0, bulk: float = 4.0e4,
               nu: float = 0.25) -> np.ndarray:
    """Displacement of a length-2a crack under biaxial far-field load sigma0.

    Angles are measured from the positive x axis in (-pi, pi] with the
    branch cut along the crack, so passing y = +-0.0 selects the upper or
    lower crack face.  Points exactly at a tip raise (sqrt(r1 r2)
    vanishes there).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    scalar = x.ndim == 0 and y.ndim == 0
    x, y = np.atleast_1d(x), np.atleast_1d(y)
    mu = typeI_shear_modulus(bulk, nu)
    kol = 3.0 - 4.0 * nu

    r = np.hypot(x, y)
    theta = np.arctan2(y, x)
    r1 = np.hypot(x - a, y)
    theta1 = np.arctan2(y, x - a)
    r2 = np.hypot(x + a, y)
    theta2 = np.arctan2(y, x + a)
    if np.any(r1 == 0.0) or np.any(r2 == 0.0):
        raise ValueError("displacement field evaluated exactly at a crack tip")

    root = np.sqrt(r1 * r2)
    half = 0.5 * (theta1 + theta2)
    swing = theta - half
    u = (0.5 * (kol - 1.0) * sigma0 * root * np.cos(half)
         - sigma0 * r**2 / root * np.sin(theta) * np.sin(swing)) / (2.0 * mu)
    v = (0.5 * (kol + 1.0) * sigma0 * root * np.sin(half)
         - sigma0 * r**2 / root * np.sin(theta) * np.cos(swing)) / (2.0 * mu)
    out = np.column_stack([u, v])
    return out[0] if scalar else out


def error_norms(numeric: np.ndarray, exact: np.ndarray,
                subset: np.ndarray | None = None) -> tuple[float, float]:
    """(l2, sup) of the pointwise vector error magnitude over `subset`.

    l2 is the root mean square sqrt(sum |F_p|^2 / N); sup is max |F_p|.
    """
    err = np.asarray(numeric, dtype=float) - np.asarray(exact, dtype=float)
    if subset is not None:
        err = err[subset]
    if err.size == 0:
        raise ValueError("empty particle subset")
    mag = np.linalg.norm(np.atleast_2d(err), axis=-1) if err.ndim > 1 else np.abs(err)
    return float(np.sqrt(np.mean(mag**2))), float(mag.max())


def convergence_slope(resolutions, errors, points: int = 3) -> float:
    """Least-squares slope of log(error) vs log(h) on the finest `points` levels.

    Returns NaN when any participating error is zero to round-off (exact
    reproduction; the power regression is undefined there).
    """
    h = np.asarray(resolutions, dtype=float)
    e = np.asarray(errors, dtype=float)
    if h.size < 2 or h.size != e.size:
        raise ValueError("need matching resolution/error sequences with >= 2 entries")
    order = np.argsort(h)
    h, e = h[order], e[order]
    take = min(points, h.size)
    h, e = h[:take], e[:take]
    if np.any(e <= 0.0):
        return math.nan
    slope, _ = np.polyfit(np.log(h), np.log(e), 1)
    return float(slope)
