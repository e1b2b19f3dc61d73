"""Small dense solves for per-stencil weight problems.

The constrained QP  min ||w||^2  s.t.  B w = g  is solved through the
Schur complement S = B B^T:  w = B^T S^+ g, with the pseudoinverse
truncating eigenvalues of S below rank_tol times the largest.  A few
iterative-refinement passes (reusing the eigendecomposition) push the
constraint residual down to machine level even when cond(S) is large.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "InfeasibleConstraintsError",
    "min_norm_solve",
    "residual_inf_norm",
    "psd_pseudo_solve",
]

DEFAULT_RANK_TOL = 1e-10
_REFINE_STEPS = 4


class InfeasibleConstraintsError(RuntimeError):
    """Constraint system has no solution; carries the residual norm."""

    def __init__(self, residual: float):
        super().__init__(f"constraints infeasible, residual inf-norm {residual:.3e}")
        self.residual = residual


def _check_finite(B: np.ndarray) -> np.ndarray:
    B = np.asarray(B, dtype=float)
    if not np.all(np.isfinite(B)):
        raise ValueError("matrix contains non-finite entries")
    return B


def psd_pseudo_solve(evals: np.ndarray, evecs: np.ndarray, rhs: np.ndarray,
                     rank_tol: float) -> tuple[np.ndarray, int]:
    """Apply the truncated pseudoinverse of a PSD matrix given its eigensystem."""
    cut = rank_tol * max(float(evals[-1]), 0.0)
    keep = evals > cut
    inv = np.zeros_like(evals)
    inv[keep] = 1.0 / evals[keep]
    y = evecs @ (inv * (evecs.T @ rhs))
    return y, int(np.count_nonzero(keep))


def min_norm_solve(B: np.ndarray, g: np.ndarray,
                   rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Minimal-Euclidean-norm w with B w = g (projected onto range(B)).

    For g in range(B) this is the unique minimal-norm solution; otherwise
    B w equals the orthogonal projection of g onto range(B).  An all-zero
    B with nonzero g raises :class:`InfeasibleConstraintsError`.
    """
    B = _check_finite(B)
    g = np.asarray(g, dtype=float)
    if B.ndim != 2 or g.shape != (B.shape[0],):
        raise ValueError("shape mismatch between B and g")
    if not np.any(B):
        if np.any(g):
            raise InfeasibleConstraintsError(float(np.abs(g).max()))
        return np.zeros(B.shape[1])
    S = B @ B.T
    evals, evecs = np.linalg.eigh(S)
    y, _ = psd_pseudo_solve(evals, evecs, g, rank_tol)
    w = B.T @ y
    # refinement: S is formed from B so the normal-equations solve alone
    # leaves a residual ~ eps*cond(S)*|g|; a few corrections fix that.
    for _ in range(_REFINE_STEPS):
        r = g - B @ w
        if np.abs(r).max() <= 1e-15 * max(np.abs(g).max(), 1e-300):
            break
        dy, _ = psd_pseudo_solve(evals, evecs, r, rank_tol)
        w = w + B.T @ dy
    return w


def residual_inf_norm(B: np.ndarray, w: np.ndarray, g: np.ndarray) -> float:
    B = np.asarray(B, dtype=float)
    return float(np.abs(B @ np.asarray(w, dtype=float) - np.asarray(g, dtype=float)).max())
