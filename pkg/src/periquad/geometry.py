"""Point clouds discretizing a box domain and its Dirichlet collar.

Particles are laid on a Cartesian lattice (optionally perturbed by a
seeded uniform jitter), split into interior points (inside the box) and
boundary points (in the collar of thickness delta outside it), and given
fixed-radius neighbor stencils.  Sides of the box listed as traction-free
get no collar; stray perturbed points beyond such a side are dropped.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

__all__ = [
    "Domain2D",
    "LatticeSpec",
    "PointCloud",
    "build_perturbed_lattice",
    "fill_distance",
    "segment_intersects_bond",
    "bonds_crossing_segment",
    "brute_force_stencils",
]

_SIDES = ("left", "right", "bottom", "top")


def _as_segment(seg) -> np.ndarray:
    arr = np.asarray(seg, dtype=float).reshape(2, 2)
    return arr


@dataclass(frozen=True)
class Domain2D:
    """Axis-aligned box with crack segments and traction-free edge segments.

    ``collar`` is the Dirichlet collar thickness; leave it None to let the
    lattice builder set it to M*h.
    """

    lower: tuple[float, float]
    upper: tuple[float, float]
    collar: float | None = None
    cracks: tuple = ()
    traction_free: tuple = ()

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if not np.all(hi > lo):
            raise ValueError("upper corner must strictly dominate lower corner")
        if self.collar is not None and self.collar <= 0.0:
            raise ValueError("collar thickness must be positive")
        object.__setattr__(self, "cracks", tuple(_as_segment(s) for s in self.cracks))
        object.__setattr__(self, "traction_free",
                           tuple(_as_segment(s) for s in self.traction_free))

    @property
    def extent(self) -> np.ndarray:
        return np.asarray(self.upper, dtype=float) - np.asarray(self.lower, dtype=float)

    def side_segment(self, side: str) -> np.ndarray:
        (lx, ly), (ux, uy) = self.lower, self.upper
        return _as_segment({
            "left": ((lx, ly), (lx, uy)),
            "right": ((ux, ly), (ux, uy)),
            "bottom": ((lx, ly), (ux, ly)),
            "top": ((lx, uy), (ux, uy)),
        }[side])

    def collar_suppressed_sides(self) -> frozenset[str]:
        """Sides fully covered by a traction-free segment get no collar."""
        tol = 1e-9 * float(np.max(self.extent))
        suppressed = set()
        for side in _SIDES:
            a, b = self.side_segment(side)
            for seg in self.traction_free:
                if _point_on_segment(a, seg, tol) and _point_on_segment(b, seg, tol):
                    suppressed.add(side)
                    break
        return frozenset(suppressed)


@dataclass(frozen=True)
class LatticeSpec:
    """Lattice resolution, jitter fraction of h, and RNG seed."""

    counts: tuple[int, int]
    perturbation: float = 0.1
    seed: int = 0

    def __post_init__(self):
        nx, ny = self.counts
        if nx < 2 or ny < 2:
            raise ValueError("need at least 2 lattice points per axis")
        if not (0.0 <= self.perturbation < 0.5):
            raise ValueError("perturbation fraction must lie in [0, 0.5)")


@dataclass
class PointCloud:
    """Particles, interior/boundary split, and fixed-radius stencils.

    ``h`` is the resolution length scale (the lattice spacing for
    lattice-built clouds; the measured sup-min fill distance is available
    through :func:`fill_distance`).  Stencils are stored CSR-style over
    the interior particles, neighbor ids sorted ascending; the center is
    never its own neighbor.
    """

    positions: np.ndarray            # (N, 2)
    interior: np.ndarray             # sorted global ids
    boundary: np.ndarray             # sorted global ids
    h: float
    q: float
    delta: float
    stencil_indptr: np.ndarray       # (n_interior + 1,)
    stencil_indices: np.ndarray      # neighbor global ids, concatenated
    domain: Domain2D
    interior_pos: np.ndarray = field(default=None, repr=False)  # global id -> row in `interior`

    def __post_init__(self):
        if self.interior_pos is None:
            lookup = np.full(self.n_points, -1, dtype=np.int64)
            lookup[self.interior] = np.arange(self.interior.size)
            self.interior_pos = lookup

    @property
    def n_points(self) -> int:
        return self.positions.shape[0]

    def stencil(self, particle_id: int) -> np.ndarray:
        row = self.interior_pos[particle_id]
        if row < 0:
            raise KeyError(f"particle {particle_id} is not interior")
        return self.stencil_indices[self.stencil_indptr[row]:self.stencil_indptr[row + 1]]

    def to_csv(self, path) -> None:
        is_interior = np.zeros(self.n_points, dtype=bool)
        is_interior[self.interior] = True
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", "x", "y", "region"])
            for i in range(self.n_points):
                writer.writerow([i, repr(float(self.positions[i, 0])),
                                 repr(float(self.positions[i, 1])),
                                 "interior" if is_interior[i] else "boundary"])


def build_perturbed_lattice(domain: Domain2D, spec: LatticeSpec, M: float) -> PointCloud:
    """Perturbed Cartesian lattice covering the box and its collar.

    The horizon is set to delta = M*h with h the (largest) lattice
    spacing; collar sides get ceil(M) extra lattice layers, trimmed to the
    points actually within distance delta of the box.  Deterministic for a
    fixed spec: jitter is drawn from PCG64(seed) in lattice index order
    (y-major), one uniform pair per generated point.
    """
    if M <= 0.0:
        raise ValueError("horizon ratio M must be positive")
    lo = np.asarray(domain.lower, dtype=float)
    hi = np.asarray(domain.upper, dtype=float)
    nx, ny = spec.counts
    hx = (hi[0] - lo[0]) / (nx - 1)
    hy = (hi[1] - lo[1]) / (ny - 1)
    h = max(hx, hy)
    delta = M * h
    if domain.collar is not None and not math.isclose(domain.collar, delta, rel_tol=1e-9):
        raise ValueError(f"domain collar {domain.collar} != M*h = {delta}")

    suppressed = domain.collar_suppressed_sides()
    ext = int(math.ceil(M - 1e-12))
    ext_l = 0 if "left" in suppressed else ext
    ext_r = 0 if "right" in suppressed else ext
    ext_b = 0 if "bottom" in suppressed else ext
    ext_t = 0 if "top" in suppressed else ext

    ii = np.arange(-ext_l, nx + ext_r)
    jj = np.arange(-ext_b, ny + ext_t)
    # y-major enumeration: row j sweeps all i
    gx, gy = np.meshgrid(ii, jj, indexing="xy")
    nominal = np.column_stack([lo[0] + gx.ravel() * hx, lo[1] + gy.ravel() * hy])

    rng = np.random.Generator(np.random.PCG64(spec.seed))
    jitter = rng.uniform(-spec.perturbation * h, spec.perturbation * h,
                         size=nominal.shape) if spec.perturbation > 0.0 else 0.0
    pts = nominal + jitter

    inside = np.all((pts >= lo) & (pts <= hi), axis=1)
    ex_lo = np.maximum(lo - pts, 0.0)   # positive where the point undershoots
    ex_hi = np.maximum(pts - hi, 0.0)
    dx = ex_lo[:, 0] + ex_hi[:, 0]
    dy = ex_lo[:, 1] + ex_hi[:, 1]
    dist = np.hypot(dx, dy)
    in_collar = ~inside & (dist <= delta * (1.0 + 1e-12))

    side_ok = np.ones(pts.shape[0], dtype=bool)
    if suppressed:
        beyond = {
            "left": ex_lo[:, 0] > 0.0,
            "right": ex_hi[:, 0] > 0.0,
            "bottom": ex_lo[:, 1] > 0.0,
            "top": ex_hi[:, 1] > 0.0,
        }
        for side in suppressed:
            side_ok &= ~beyond[side]
    keep = inside | (in_collar & side_ok)

    positions = pts[keep]
    inside = inside[keep]
    if not np.any(inside):
        raise ValueError("no interior points: domain smaller than one lattice cell")
    ids = np.arange(positions.shape[0])
    interior = ids[inside]
    boundary = ids[~inside]

    indptr, indices = _cell_list_stencils(positions, interior, delta)
    q = _separation_distance(positions)
    return PointCloud(positions=positions, interior=interior, boundary=boundary,
                      h=h, q=q, delta=delta, stencil_indptr=indptr,
                      stencil_indices=indices, domain=domain)


def _separation_distance(positions: np.ndarray) -> float:
    if positions.shape[0] < 2:
        return math.inf
    d, _ = cKDTree(positions).query(positions, k=2)
    return 0.5 * float(d[:, 1].min())


def _cell_list_stencils(positions: np.ndarray, centers: np.ndarray, delta: float):
    """Fixed-radius search on a uniform grid of cell size delta."""
    origin = positions.min(axis=0)
    cell = np.floor((positions - origin) / delta).astype(np.int64)
    ncy = int(cell[:, 1].max()) + 2
    key = cell[:, 0] * ncy + cell[:, 1]
    order = np.argsort(key, kind="stable")
    sorted_key = key[order]
    uniq, starts = np.unique(sorted_key, return_index=True)
    ends = np.append(starts[1:], sorted_key.size)

    indptr = np.zeros(centers.size + 1, dtype=np.int64)
    chunks = []
    offsets = [dx * ncy + dy for dx in (-1, 0, 1) for dy in (-1, 0, 1)]
    for row, c in enumerate(centers):
        ck = key[c]
        cand = []
        for off in offsets:
            b = np.searchsorted(uniq, ck + off)
            if b < uniq.size and uniq[b] == ck + off:
                cand.append(order[starts[b]:ends[b]])
        cand = np.concatenate(cand) if cand else np.empty(0, dtype=np.int64)
        d = np.hypot(positions[cand, 0] - positions[c, 0],
                     positions[cand, 1] - positions[c, 1])
        neigh = cand[(d > 0.0) & (d <= delta)]
        neigh.sort()
        chunks.append(neigh)
        indptr[row + 1] = indptr[row] + neigh.size
    indices = np.concatenate(chunks) if chunks else np.empty(0, dtype=np.int64)
    return indptr, indices


def brute_force_stencils(positions: np.ndarray, centers: np.ndarray, delta: float):
    """O(N^2) reference search, same output layout as the cell list."""
    indptr = np.zeros(centers.size + 1, dtype=np.int64)
    chunks = []
    for row, c in enumerate(centers):
        d = np.hypot(positions[:, 0] - positions[c, 0], positions[:, 1] - positions[c, 1])
        neigh = np.flatnonzero((d > 0.0) & (d <= delta))
        chunks.append(neigh)
        indptr[row + 1] = indptr[row] + neigh.size
    return indptr, np.concatenate(chunks) if chunks else np.empty(0, dtype=np.int64)


def fill_distance(cloud: PointCloud, probe_resolution: float) -> float:
    """Sup-min distance from the populated region to the particle set.

    Approximated on a probe grid of the given spacing over the box plus
    the active collar sides; monotone nonincreasing in the probe spacing.
    """
    if probe_resolution >= cloud.q:
        raise ValueError("probe resolution must be finer than the separation distance")
    dom = cloud.domain
    lo = np.asarray(dom.lower, dtype=float)
    hi = np.asarray(dom.upper, dtype=float)
    delta = cloud.delta
    suppressed = dom.collar_suppressed_sides()
    pad_l = 0.0 if "left" in suppressed else delta
    pad_r = 0.0 if "right" in suppressed else delta
    pad_b = 0.0 if "bottom" in suppressed else delta
    pad_t = 0.0 if "top" in suppressed else delta
    xs = np.arange(lo[0] - pad_l, hi[0] + pad_r + probe_resolution / 2, probe_resolution)
    ys = np.arange(lo[1] - pad_b, hi[1] + pad_t + probe_resolution / 2, probe_resolution)
    gx, gy = np.meshgrid(xs, ys, indexing="xy")
    probes = np.column_stack([gx.ravel(), gy.ravel()])

    inside = np.all((probes >= lo) & (probes <= hi), axis=1)
    ex_lo = np.maximum(lo - probes, 0.0)
    ex_hi = np.maximum(probes - hi, 0.0)
    dist = np.hypot(ex_lo[:, 0] + ex_hi[:, 0], ex_lo[:, 1] + ex_hi[:, 1])
    ok = inside | (dist <= delta)
    if suppressed:
        beyond = {
            "left": ex_lo[:, 0] > 0.0,
            "right": ex_hi[:, 0] > 0.0,
            "bottom": ex_lo[:, 1] > 0.0,
            "top": ex_hi[:, 1] > 0.0,
        }
        for side in suppressed:
            ok &= ~beyond[side]
    probes = probes[ok]
    d, _ = cKDTree(cloud.positions).query(probes, k=1)
    return float(d.max())


# ---------------------------------------------------------------------------
# Segment predicates
# ---------------------------------------------------------------------------

def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _point_on_segment(p, seg, tol: float = 0.0) -> bool:
    a, b = seg
    if abs(_cross(a, b, p)) > tol * max(1.0, np.hypot(b[0] - a[0], b[1] - a[1])):
        return False
    return (min(a[0], b[0]) - tol <= p[0] <= max(a[0], b[0]) + tol
            and min(a[1], b[1]) - tol <= p[1] <= max(a[1], b[1]) + tol)


def segment_intersects_bond(p, q, seg) -> bool:
    """True iff bond pq meets segment seg, counting touching/collinear contact.

    Grazing contact (an endpoint of one segment on the other, collinear
    overlap) counts as intersection so that bonds touching a crack tip
    break conservatively.  A zero-length bond never intersects.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    a, b = _as_segment(seg)
    if p[0] == q[0] and p[1] == q[1]:
        return False
    o1 = _cross(p, q, a)
    o2 = _cross(p, q, b)
    o3 = _cross(a, b, p)
    o4 = _cross(a, b, q)
    if ((o1 > 0) != (o2 > 0)) and ((o3 > 0) != (o4 > 0)) and o1 != 0 and o2 != 0 \
            and o3 != 0 and o4 != 0:
        return True
    if o1 == 0 and _point_on_segment(a, (p, q)):
        return True
    if o2 == 0 and _point_on_segment(b, (p, q)):
        return True
    if o3 == 0 and _point_on_segment(p, (a, b)):
        return True
    if o4 == 0 and _point_on_segment(q, (a, b)):
        return True
    return False


def point_segment_distance(points: np.ndarray, seg) -> np.ndarray:
    """Euclidean distance from each point to a line segment."""
    a, b = _as_segment(seg)
    d = b - a
    L2 = float(d @ d)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if L2 == 0.0:
        return np.hypot(pts[:, 0] - a[0], pts[:, 1] - a[1])
    t = np.clip(((pts - a) @ d) / L2, 0.0, 1.0)
    proj = a + t[:, None] * d
    return np.hypot(pts[:, 0] - proj[:, 0], pts[:, 1] - proj[:, 1])


def bonds_crossing_segment(p: np.ndarray, q: np.ndarray, seg) -> np.ndarray:
    """Vectorized :func:`segment_intersects_bond` for (N, 2) endpoint arrays."""
    a, b = _as_segment(seg)
    px, py = p[:, 0], p[:, 1]
    qx, qy = q[:, 0], q[:, 1]
    o1 = (qx - px) * (a[1] - py) - (qy - py) * (a[0] - px)
    o2 = (qx - px) * (b[1] - py) - (qy - py) * (b[0] - px)
    ex, ey = b[0] - a[0], b[1] - a[1]
    o3 = ex * (py - a[1]) - ey * (px - a[0])
    o4 = ex * (qy - a[1]) - ey * (qx - a[0])
    proper = (np.sign(o1) * np.sign(o2) < 0) & (np.sign(o3) * np.sign(o4) < 0)

    def on_bond(c, o):
        return (o == 0.0) & (np.minimum(px, qx) <= c[0]) & (c[0] <= np.maximum(px, qx)) \
            & (np.minimum(py, qy) <= c[1]) & (c[1] <= np.maximum(py, qy))

    def on_seg(cx, cy, o):
        return (o == 0.0) & (min(a[0], b[0]) <= cx) & (cx <= max(a[0], b[0])) \
            & (min(a[1], b[1]) <= cy) & (cy <= max(a[1], b[1]))

    touch = on_bond(a, o1) | on_bond(b, o2) | on_seg(px, py, o3) | on_seg(qx, qy, o4)
    degenerate = (px == qx) & (py == qy)
    return (proper | touch) & ~degenerate
