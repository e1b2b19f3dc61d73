"""Optimization-based quadrature weights for singular compactly-supported kernels.

For each interior particle the weights w minimize sum(w^2) subject to
exact integration of a reproducing set: the plain constant plus every
kernel-weighted scaled Taylor monomial K_ab(xi) * (xi/delta)^gamma/gamma!
with |gamma| <= n and tensor component (a, b), a <= b.  The constraint
matrix rows are scaled by delta^2/c to keep entries O(1); the matching
exact ball integrals have a closed polar form whose angular factors are
Wallis integrals and whose radial factor is delta^(|gamma|+1)/(|gamma|+1).

The componentwise basis is algebraically redundant (different (a,b,gamma)
can produce the same monomial xi^beta / |xi|^3); the truncated
pseudoinverse of the Schur complement handles the redundancy, and a
reduced basis over distinct monomials is available for cross-checking.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .kernels import PeridynamicKernel
from .linalg import DEFAULT_RANK_TOL

__all__ = [
    "BasisFunction",
    "ReproducingSpace",
    "QuadratureRule",
    "UnisolvencyError",
    "build_basis",
    "exact_moments",
    "numeric_moments",
    "generate_weights",
    "apply_operator",
    "apply_operator_all",
]

_COMPONENTS = ((1, 1), (1, 2), (2, 2))
RESIDUAL_REL_TOL = 1e-12


class UnisolvencyError(RuntimeError):
    """A stencil cannot satisfy the reproducing constraints."""


@dataclass(frozen=True)
class BasisFunction:
    """One member of the reproducing set.

    kind "constant": the function 1.
    kind "kernel": K_ab(xi) * (xi/delta)^gamma / gamma!.
    kind "kernel_mono": xi^beta / |xi|^3 (reduced, factorial-free variant).
    """

    kind: str
    component: tuple[int, int] | None = None
    gamma: tuple[int, int] | None = None
    beta: tuple[int, int] | None = None


def _monomials(n: int) -> list[tuple[int, int]]:
    out = []
    for deg in range(n + 1):
        for g1 in range(deg, -1, -1):
            out.append((g1, deg - g1))
    return out


@dataclass(frozen=True)
class ReproducingSpace:
    """Reproducing set for one kernel, order and center.

    Ball moments are translation invariant, so the center only enters
    through xi = y - center at evaluation time.
    """

    kernel: PeridynamicKernel
    order: int
    center: tuple[float, float]
    functions: tuple[BasisFunction, ...]

    @property
    def dim(self) -> int:
        return len(self.functions)

    def evaluate_at(self, points: np.ndarray) -> np.ndarray:
        return self.evaluate_displacements(np.asarray(points, dtype=float)
                                           - np.asarray(self.center, dtype=float))

    def evaluate_displacements(self, xi: np.ndarray) -> np.ndarray:
        """Scaled basis values, shape (len(xi), dim); kernel rows carry delta^2/c."""
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        d = self.kernel.delta
        x1, x2 = xi[:, 0], xi[:, 1]
        r = np.hypot(x1, x2)
        if np.any(r == 0.0):
            raise ValueError("basis is singular at the center; exclude it")
        inv_r3 = d**2 / r**3
        pref = {(1, 1): x1 * x1 * inv_r3,
                (1, 2): x1 * x2 * inv_r3,
                (2, 2): x2 * x2 * inv_r3}
        t1, t2 = x1 / d, x2 / d
        max_pow = self.order + 2
        p1 = np.ones((max_pow + 1, xi.shape[0]))
        p2 = np.ones((max_pow + 1, xi.shape[0]))
        for k in range(1, max_pow + 1):
            p1[k] = p1[k - 1] * t1
            p2[k] = p2[k - 1] * t2
        out = np.empty((xi.shape[0], self.dim))
        for col, bf in enumerate(self.functions):
            if bf.kind == "constant":
                out[:, col] = 1.0
            elif bf.kind == "kernel":
                g1, g2 = bf.gamma
                out[:, col] = pref[bf.component] * p1[g1] * p2[g2] \
                    / (math.factorial(g1) * math.factorial(g2))
            else:  # kernel_mono
                b1, b2 = bf.beta
                out[:, col] = (d**2 * x1**b1 * x2**b2) / (r**3 * d**(b1 + b2 - 2))
        return out


def build_basis(kernel: PeridynamicKernel, n: int, center=(0.0, 0.0),
                reduced: bool = False, parity_completion: bool = False) -> ReproducingSpace:
    """Reproducing set of order n (componentwise, or reduced to distinct monomials).

    With `parity_completion` and even n, the odd monomial block |gamma| =
    n+1 is appended.  Its exact ball integrals all vanish (odd total
    powers), so on a symmetric stencil the extra constraints are satisfied
    for free; imposing them keeps the rule exact on those channels when
    lattice perturbation breaks the symmetry.  The completed even-n set
    spans the same functions as the order n+1 set, which is why an odd
    order buys no rate over the completed even order below it.
    """
    if n < 1:
        raise ValueError("reproduction order must be >= 1")
    orders = _monomials(n)
    if parity_completion and n % 2 == 0:
        orders = orders + [(g1, n + 1 - g1) for g1 in range(n + 1, -1, -1)]
    funcs: list[BasisFunction] = [BasisFunction(kind="constant")]
    if reduced:
        seen = set()
        for ab in _COMPONENTS:
            for g in orders:
                beta = (g[0] + (ab[0] == 1) + (ab[1] == 1),
                        g[1] + (ab[0] == 2) + (ab[1] == 2))
                if beta not in seen:
                    seen.add(beta)
                    funcs.append(BasisFunction(kind="kernel_mono", beta=beta))
    else:
        for ab in _COMPONENTS:
            for g in orders:
                funcs.append(BasisFunction(kind="kernel", component=ab, gamma=g))
    return ReproducingSpace(kernel=kernel, order=n, center=tuple(center),
                            functions=tuple(funcs))


def _wallis(p: int, q: int) -> float:
    """Integral of cos^p(t) sin^q(t) over [0, 2pi]."""
    if p % 2 or q % 2:
        return 0.0
    return 2.0 * math.gamma((p + 1) / 2) * math.gamma((q + 1) / 2) \
        / math.gamma((p + q) / 2 + 1)


def exact_moments(space: ReproducingSpace) -> np.ndarray:
    """Closed-form ball integrals of the (scaled) basis, via polar coordinates.

    For a kernel entry the powers of cos/sin come from the tensor
    component plus the monomial; odd powers kill the angular factor, the
    rest are Wallis integrals.  The constant integrates to the ball area.
    """
    d = space.kernel.delta
    g = np.empty(space.dim)
    for col, bf in enumerate(space.functions):
        if bf.kind == "constant":
            g[col] = math.pi * d**2
        elif bf.kind == "kernel":
            g1, g2 = bf.gamma
            a, b = bf.component
            p = g1 + (a == 1) + (b == 1)
            q = g2 + (a == 2) + (b == 2)
            m = g1 + g2
            g[col] = d**3 * _wallis(p, q) / ((m + 1) * math.factorial(g1) * math.factorial(g2))
        else:
            b1, b2 = bf.beta
            g[col] = d**3 * _wallis(b1, b2) / (b1 + b2 - 1)
    return g


def numeric_moments(space: ReproducingSpace, n_r: int = 24, n_theta: int = 64) -> np.ndarray:
    """Tensor Gauss rule in (r, theta) for the same integrals.

    The polar Jacobian r cancels the kernel's 1/r singularity, so the
    radial integrand is a plain polynomial and the rule is effectively
    exact at moderate orders.  Serves both as the fallback for kernels
    without a closed form and as the independent oracle for
    :func:`exact_moments`.
    """
    d = space.kernel.delta
    if n_r < space.order + 2 or n_theta < 2 * (space.order + 3):
        raise ValueError("quadrature order too low for the requested basis")
    gr, wr = np.polynomial.legendre.leggauss(n_r)
    gt, wt = np.polynomial.legendre.leggauss(n_theta)
    r = 0.5 * d * (gr + 1.0)
    wr = 0.5 * d * wr
    th = math.pi * (gt + 1.0)
    wt = math.pi * wt
    R, T = np.meshgrid(r, th, indexing="ij")
    W = np.outer(wr, wt) * R          # jacobian
    pts = np.column_stack([(R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()])
    values = space.evaluate_displacements(pts)
    return values.T @ W.ravel()


@dataclass
class QuadratureRule:
    """Per-stencil weights with constraint diagnostics.

    Weights are concatenated in the same CSR layout as the cloud
    stencils.  A stencil is flagged invalid when its constraint residual
    exceeds RESIDUAL_REL_TOL * ||g||_inf.
    """

    order: int
    interior: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray
    residuals: np.ndarray
    ranks: np.ndarray
    cond_estimates: np.ndarray
    moments: np.ndarray
    interior_pos: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.interior_pos is None:
            lookup = np.full(int(self.interior.max()) + 1, -1, dtype=np.int64)
            lookup[self.interior] = np.arange(self.interior.size)
            self.interior_pos = lookup

    @property
    def g_inf_norm(self) -> float:
        return float(np.abs(self.moments).max())

    @property
    def valid_mask(self) -> np.ndarray:
        return self.residuals <= RESIDUAL_REL_TOL * self.g_inf_norm

    @property
    def all_valid(self) -> bool:
        return bool(self.valid_mask.all())

    def weights_for(self, particle_id: int) -> np.ndarray:
        row = self.interior_pos[particle_id]
        if row < 0:
            raise KeyError(f"particle {particle_id} is not interior")
        return self.weights[self.indptr[row]:self.indptr[row + 1]]

    def diagnostics_to_csv(self, path) -> None:
        sizes = np.diff(self.indptr)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["i", "stencil_size", "residual", "rank", "cond_estimate"])
            for row, pid in enumerate(self.interior):
                writer.writerow([int(pid), int(sizes[row]), repr(float(self.residuals[row])),
                                 int(self.ranks[row]), repr(float(self.cond_estimates[row]))])


def generate_weights(cloud, kernel: PeridynamicKernel, n: int,
                     rank_tol: float = DEFAULT_RANK_TOL, threads: int = 1,
                     strict: bool = True, parity_completion: bool = False) -> QuadratureRule:
    """Solve the constrained QP for every interior stencil.

    Batched over particles: build all basis rows bond-wise, form each
    Schur complement S_i = B_i B_i^T, eigendecompose the whole stack at
    once, and apply the truncated pseudoinverse with refinement.  The
    result is independent of `threads` (each stencil is solved from its
    own data, written to a disjoint slice).
    """
    space = build_basis(kernel, n, parity_completion=parity_completion)
    g = exact_moments(space)
    g_inf = float(np.abs(g).max())
    k = space.dim

    indptr = cloud.stencil_indptr
    indices = cloud.stencil_indices
    n_int = cloud.interior.size
    counts = np.diff(indptr)
    if np.any(counts == 0):
        bad = int(cloud.interior[np.argmin(counts)])
        raise UnisolvencyError(f"particle {bad} has an empty stencil")

    centers_per_bond = np.repeat(np.arange(n_int), counts)
    xi = cloud.positions[indices] - cloud.positions[cloud.interior[centers_per_bond]]
    phi = space.evaluate_displacements(xi)      # (n_bonds, k)

    S = np.empty((n_int, k, k))

    def fill_block(lo: int, hi: int) -> None:
        for row in range(lo, hi):
            block = phi[indptr[row]:indptr[row + 1]]
            S[row] = block.T @ block

    if threads > 1 and n_int > 1:
        bounds = np.linspace(0, n_int, threads + 1).astype(int)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(fill_block, bounds[t], bounds[t + 1])
                       for t in range(threads)]
            for f in futures:
                f.result()
    else:
        fill_block(0, n_int)

    evals, evecs = np.linalg.eigh(S)
    cut = rank_tol * np.maximum(evals[:, -1], 0.0)
    keep = evals > cut[:, None]
    inv = np.where(keep, 1.0 / np.where(keep, evals, 1.0), 0.0)
    ranks = keep.sum(axis=1).astype(np.int64)
    smallest_kept = np.where(keep, evals, np.inf).min(axis=1)
    cond = np.where(np.isfinite(smallest_kept) & (smallest_kept > 0),
                    evals[:, -1] / smallest_kept, np.inf)

    def pinv_apply(rhs: np.ndarray) -> np.ndarray:
        # rhs: (n_int, k) -> V diag(inv) V^T rhs, batched
        tmp = np.einsum("pik,pi->pk", evecs, rhs)
        return np.einsum("pik,pk->pi", evecs, inv * tmp)

    y = pinv_apply(np.broadcast_to(g, (n_int, k)))
    w = np.einsum("bk,bk->b", phi, y[centers_per_bond])

    for _ in range(4):
        bw = np.add.reduceat(phi * w[:, None], indptr[:-1], axis=0)
        r = g[None, :] - bw
        res = np.abs(r).max(axis=1)
        if res.max() <= 1e-15 * g_inf:
            break
        dy = pinv_apply(r)
        w = w + np.einsum("bk,bk->b", phi, dy[centers_per_bond])

    bw = np.add.reduceat(phi * w[:, None], indptr[:-1], axis=0)
    residuals = np.abs(g[None, :] - bw).max(axis=1)

    rule = QuadratureRule(order=n, interior=cloud.interior, indptr=indptr,
                          indices=indices, weights=w, residuals=residuals,
                          ranks=ranks, cond_estimates=cond, moments=g)
    if strict and not rule.all_valid:
        row = int(np.argmax(residuals))
        raise UnisolvencyError(
            f"particle {int(cloud.interior[row])} (stencil size {int(counts[row])}) "
            f"fails the reproducing constraints: residual {residuals[row]:.3e} "
            f"> {RESIDUAL_REL_TOL:.0e} * ||g||_inf = {RESIDUAL_REL_TOL * g_inf:.3e}")
    return rule


def apply_operator(rule: QuadratureRule, cloud, kernel: PeridynamicKernel,
                   u: np.ndarray, i: int) -> np.ndarray:
    """Discrete operator sum_j K(x_i, x_j)(u_j - u_i) w_{j,i} at particle i."""
    row = rule.interior_pos[i]
    if row < 0:
        raise KeyError(f"particle {i} is not interior")
    lo, hi = rule.indptr[row], rule.indptr[row + 1]
    neigh = rule.indices[lo:hi]
    w = rule.weights[lo:hi]
    xi = cloud.positions[neigh] - cloud.positions[i]
    k11, k12, k22 = kernel.matrix_components(xi)
    du = u[neigh] - u[i]
    return np.array([np.sum((k11 * du[:, 0] + k12 * du[:, 1]) * w),
                     np.sum((k12 * du[:, 0] + k22 * du[:, 1]) * w)])


def apply_operator_all(rule: QuadratureRule, cloud, kernel: PeridynamicKernel,
                       u: np.ndarray, weights: np.ndarray | None = None) -> np.ndarray:
    """Vectorized operator application at every interior particle.

    `weights` overrides the stored weights (used for damage-masked sums).
    """
    w = rule.weights if weights is None else weights
    centers = np.repeat(cloud.interior, np.diff(rule.indptr))
    xi = cloud.positions[rule.indices] - cloud.positions[centers]
    k11, k12, k22 = kernel.matrix_components(xi)
    du = u[rule.indices] - u[centers]
    fx = (k11 * du[:, 0] + k12 * du[:, 1]) * w
    fy = (k12 * du[:, 0] + k22 * du[:, 1]) * w
    out = np.empty((cloud.interior.size, 2))
    out[:, 0] = np.add.reduceat(fx, rule.indptr[:-1])
    out[:, 1] = np.add.reduceat(fy, rule.indptr[:-1])
    return out
