"""Global system assembly for the static and implicit-dynamic problems.

Interior particle rows discretize -sum_j K_ij (u_j - u_i) w~_{j,i} = f_i
with damage-masked weights w~; boundary (collar) rows are identity rows
carrying the Dirichlet value.  The matrix is generally nonsymmetric
because w_{j,i} != w_{i,j}.  Degrees of freedom interleave as
(ux_0, uy_0, ux_1, uy_1, ...).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "GlobalSystem",
    "FloatingParticleError",
    "SolveError",
    "assemble_static",
    "dynamic_matrix",
    "dynamic_rhs",
    "apply_dirichlet",
    "solve_linear",
    "export_matrix",
]


class FloatingParticleError(RuntimeError):
    """A particle with every bond broken carries a nonzero static load."""


class SolveError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


@dataclass
class GlobalSystem:
    matrix: sp.csr_matrix          # (2N, 2N)
    rhs: np.ndarray                # (2N,)
    boundary: np.ndarray           # global particle ids with Dirichlet rows
    n_points: int

    def residual_norm(self, u_flat: np.ndarray) -> float:
        return float(np.linalg.norm(self.matrix @ u_flat - self.rhs))


def _field_on(points, spec) -> np.ndarray:
    if callable(spec):
        return np.asarray(spec(points), dtype=float)
    arr = np.asarray(spec, dtype=float)
    if arr.shape != (points.shape[0], 2):
        raise ValueError(f"field shape {arr.shape} does not match {points.shape[0]} points")
    return arr


def _row_scale(kernel) -> float:
    # interior equations are divided by c*delta so stiffness rows are O(1)
    # like the identity collar rows; the encoded equations are unchanged.
    return 1.0 / (kernel.c * kernel.delta)


def _stiffness_coo(cloud, kernel, rule, bonds):
    """COO triplets of the interior operator rows (diagonal + off-diagonal)."""
    indptr, indices = rule.indptr, rule.indices
    counts = np.diff(indptr)
    centers = np.repeat(cloud.interior, counts)
    w = rule.weights if bonds is None else rule.weights * ~bonds.broken
    w = w * _row_scale(kernel)
    xi = cloud.positions[indices] - cloud.positions[centers]
    k11, k12, k22 = kernel.matrix_components(xi)
    k11 = k11 * w
    k12 = k12 * w
    k22 = k22 * w

    rows = np.concatenate([2 * centers, 2 * centers, 2 * centers + 1, 2 * centers + 1,
                           2 * centers, 2 * centers, 2 * centers + 1, 2 * centers + 1])
    cols = np.concatenate([2 * indices, 2 * indices + 1, 2 * indices, 2 * indices + 1,
                           2 * centers, 2 * centers + 1, 2 * centers, 2 * centers + 1])
    vals = np.concatenate([-k11, -k12, -k12, -k22, k11, k12, k12, k22])
    return rows, cols, vals


def _boundary_identity(boundary):
    rows = np.concatenate([2 * boundary, 2 * boundary + 1])
    return rows, rows.copy(), np.ones(rows.size)


def _all_broken_rows(rule, bonds) -> np.ndarray:
    if bonds is None:
        return np.zeros(np.diff(rule.indptr).size, dtype=bool)
    unbroken = np.add.reduceat((~bonds.broken).astype(np.int64), rule.indptr[:-1])
    return unbroken == 0


def assemble_static(cloud, kernel, rule, bonds, body_force, dirichlet) -> GlobalSystem:
    """Static system: stiffness rows for interior, identity rows for the collar.

    `body_force` and `dirichlet` may be callables of positions or arrays
    aligned with the interior / boundary index sets.  A fully damaged
    interior particle raises if its load is nonzero; with zero load its
    row is pinned to u = 0 (the static problem has no inertia to fix it).
    """
    n2 = 2 * cloud.n_points
    f = _field_on(cloud.positions[cloud.interior], body_force) * _row_scale(kernel)
    rows, cols, vals = _stiffness_coo(cloud, kernel, rule, bonds)

    floating = _all_broken_rows(rule, bonds)
    if np.any(floating):
        loads = np.linalg.norm(f[floating], axis=1)
        if np.any(loads > 0.0):
            bad = cloud.interior[floating][loads > 0.0][0]
            raise FloatingParticleError(
                f"particle {int(bad)} has all bonds broken but nonzero body force")
        warnings.warn(f"{int(floating.sum())} floating particle(s) pinned to u = 0",
                      RuntimeWarning, stacklevel=2)
        pin = cloud.interior[floating]
        prows = np.concatenate([2 * pin, 2 * pin + 1])
        rows = np.concatenate([rows, prows])
        cols = np.concatenate([cols, prows])
        vals = np.concatenate([vals, np.ones(prows.size)])

    brows, bcols, bvals = _boundary_identity(cloud.boundary)
    matrix = sp.coo_matrix(
        (np.concatenate([vals, bvals]),
         (np.concatenate([rows, brows]), np.concatenate([cols, bcols]))),
        shape=(n2, n2)).tocsr()

    rhs = np.zeros(n2)
    rhs[2 * cloud.interior] = f[:, 0]
    rhs[2 * cloud.interior + 1] = f[:, 1]
    if np.any(floating):
        pin = cloud.interior[floating]
        rhs[2 * pin] = 0.0
        rhs[2 * pin + 1] = 0.0
    ub = _field_on(cloud.positions[cloud.boundary], dirichlet)
    rhs[2 * cloud.boundary] = ub[:, 0]
    rhs[2 * cloud.boundary + 1] = ub[:, 1]
    return GlobalSystem(matrix=matrix, rhs=rhs, boundary=cloud.boundary,
                        n_points=cloud.n_points)


def dynamic_matrix(cloud, kernel, rule, bonds, rho: float, dt: float) -> sp.csr_matrix:
    """Implicit-step matrix rho/dt^2 * I (interior) + stiffness + identity collar rows."""
    n2 = 2 * cloud.n_points
    rows, cols, vals = _stiffness_coo(cloud, kernel, rule, bonds)
    idofs = np.concatenate([2 * cloud.interior, 2 * cloud.interior + 1])
    inertia = rho / dt**2 * _row_scale(kernel)
    brows, bcols, bvals = _boundary_identity(cloud.boundary)
    return sp.coo_matrix(
        (np.concatenate([vals, np.full(idofs.size, inertia), bvals]),
         (np.concatenate([rows, idofs, brows]),
          np.concatenate([cols, idofs, bcols]))),
        shape=(n2, n2)).tocsr()


def dynamic_rhs(cloud, kernel, rho: float, dt: float, u_curr: np.ndarray,
                u_prev: np.ndarray, body_force, dirichlet) -> np.ndarray:
    rhs = np.zeros(2 * cloud.n_points)
    f = _field_on(cloud.positions[cloud.interior], body_force)
    drive = ((rho / dt**2) * (2.0 * u_curr[cloud.interior] - u_prev[cloud.interior])
             + f) * _row_scale(kernel)
    rhs[2 * cloud.interior] = drive[:, 0]
    rhs[2 * cloud.interior + 1] = drive[:, 1]
    ub = _field_on(cloud.positions[cloud.boundary], dirichlet)
    rhs[2 * cloud.boundary] = ub[:, 0]
    rhs[2 * cloud.boundary + 1] = ub[:, 1]
    return rhs


def apply_dirichlet(system: GlobalSystem, ids: np.ndarray, values: np.ndarray) -> GlobalSystem:
    """Replace the rows of `ids` with identity rows carrying `values`.

    Every id must belong to the system's boundary set.
    """
    ids = np.asarray(ids, dtype=np.int64)
    values = np.asarray(values, dtype=float).reshape(ids.size, 2)
    if not np.isin(ids, system.boundary).all():
        bad = ids[~np.isin(ids, system.boundary)][0]
        raise ValueError(f"particle {int(bad)} is not a boundary particle")
    mat = system.matrix.tolil(copy=True)
    rhs = system.rhs.copy()
    for pid, val in zip(ids, values):
        for d in (0, 1):
            row = 2 * int(pid) + d
            mat.rows[row] = [row]
            mat.data[row] = [1.0]
            rhs[row] = val[d]
    return GlobalSystem(matrix=mat.tocsr(), rhs=rhs, boundary=system.boundary,
                        n_points=system.n_points)


def solve_linear(system: GlobalSystem, rel_tol: float = 1e-10,
                 max_iter: int | None = None) -> np.ndarray:
    """Solve to the residual contract; returns the (N, 2) displacement field.

    Uses a sparse direct factorization (max_iter is accepted for
    interface compatibility with iterative drop-ins and ignored here).
    """
    del max_iter
    lu = spla.splu(system.matrix.tocsc())
    u = lu.solve(system.rhs)
    scale = max(float(np.linalg.norm(system.rhs)), 1e-300)
    res = system.residual_norm(u)
    if res > rel_tol * scale:
        raise SolveError(f"linear solve residual {res:.3e} exceeds "
                         f"{rel_tol:.1e} * ||b|| = {rel_tol * scale:.3e}", res)
    return u.reshape(-1, 2)


def export_matrix(system: GlobalSystem, path) -> None:
    """Coordinate-triplet text dump: `row col value` per line."""
    coo = system.matrix.tocoo()
    with open(path, "w") as fh:
        fh.write(f"{coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r} {c} {v!r}\n")
