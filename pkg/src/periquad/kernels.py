"""Radial kernels for bond-based peridynamics and material calibration.

The microelastic brittle bond kernel is the 2x2 matrix c * (xi xi^T)/|xi|^3
acting on relative displacements, where xi is the bond vector in the
reference configuration.  The material constant c ties the kernel to the
bulk modulus and the horizon; the critical bond strain s0 ties the damage
model to the fracture energy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "MaterialModel",
    "PeridynamicKernel",
    "material_constant",
    "kernel_matrix",
    "critical_strain",
]


@dataclass(frozen=True)
class MaterialModel:
    """Elastic/fracture parameters of a bond-based material.

    The Poisson ratio is fixed at 1/4, the only value consistent with a
    bond-based (central-force) model; the shear modulus is derived from
    kappa and nu.
    """

    bulk_modulus: float           # Pa
    density: float = 0.0          # kg/m^3 (only needed for dynamics)
    fracture_energy: float | None = None  # G_c, J/m^2
    poisson_ratio: float = 0.25
    dimension: int = 2

    def __post_init__(self):
        if self.bulk_modulus <= 0.0:
            raise ValueError("bulk modulus must be positive")
        if self.dimension not in (2, 3):
            raise ValueError(f"unsupported dimension {self.dimension}")

    @property
    def shear_modulus(self) -> float:
        k, nu = self.bulk_modulus, self.poisson_ratio
        return 3.0 * k * (1.0 - 2.0 * nu) / (2.0 * (1.0 + nu))


def material_constant(bulk_modulus: float, delta: float, dimension: int = 2) -> float:
    """Bond stiffness constant c for horizon delta.

    c = 72*kappa/(5*pi*delta^3) in 2D and 18*kappa/(pi*delta^4) in 3D,
    scaling as delta^-(d+1) so the nonlocal operator limits to linear
    elasticity with Poisson ratio 1/4.
    """
    if bulk_modulus <= 0.0 or delta <= 0.0:
        raise ValueError("bulk modulus and horizon must be positive")
    if dimension == 2:
        return 72.0 * bulk_modulus / (5.0 * math.pi * delta**3)
    if dimension == 3:
        return 18.0 * bulk_modulus / (math.pi * delta**4)
    raise ValueError(f"unsupported dimension {dimension}")


def kernel_matrix(xi, c: float = 1.0) -> np.ndarray:
    """Matrix kernel c * (xi xi^T)/|xi|^3 for a single bond vector."""
    xi = np.asarray(xi, dtype=float)
    r = float(np.hypot(xi[0], xi[1]))
    if r == 0.0:
        raise ValueError("kernel is singular at xi = 0; exclude the center")
    return (c / r**3) * np.outer(xi, xi)


def critical_strain(mat: MaterialModel, delta: float) -> float:
    """Critical bond strain s0 calibrated against the fracture energy G_c."""
    if mat.fracture_energy is None:
        raise ValueError("material has no fracture energy G_c")
    if delta <= 0.0:
        raise ValueError("horizon must be positive")
    gc = mat.fracture_energy
    mu = mat.shear_modulus
    k = mat.bulk_modulus
    if mat.dimension == 2:
        denom = (6.0 * mu / math.pi + 16.0 / (9.0 * math.pi**2) * (k - 2.0 * mu)) * delta
    else:
        denom = (3.0 * mu + (3.0 / 4.0) ** 4 * (k - 5.0 * mu / 3.0)) * delta
    return math.sqrt(gc / denom)


@dataclass(frozen=True)
class PeridynamicKernel:
    """Bond kernel with horizon delta and precomputed constant c.

    singularity_order (alpha) records that entries blow up as |xi|^-1 at
    the center: xi xi^T/|xi|^3 has a bounded numerator over |xi|^1.  The
    quadrature module uses (delta, c, alpha) only, keeping it agnostic to
    the concrete kernel.
    """

    delta: float
    c: float
    dimension: int = 2
    singularity_order: int = 1

    def __post_init__(self):
        if self.delta <= 0.0:
            raise ValueError("horizon must be positive")

    @classmethod
    def from_material(cls, mat: MaterialModel, delta: float) -> "PeridynamicKernel":
        return cls(delta=delta, c=material_constant(mat.bulk_modulus, delta, mat.dimension),
                   dimension=mat.dimension)

    def matrix(self, xi) -> np.ndarray:
        return kernel_matrix(xi, self.c)

    def matrix_components(self, xi: np.ndarray):
        """Vectorized (k11, k12, k22) for an (N, 2) array of bond vectors."""
        x1 = xi[:, 0]
        x2 = xi[:, 1]
        r = np.hypot(x1, x2)
        if np.any(r == 0.0):
            raise ValueError("kernel is singular at xi = 0; exclude the center")
        inv_r3 = self.c / r**3
        return x1 * x1 * inv_r3, x1 * x2 * inv_r3, x2 * x2 * inv_r3
