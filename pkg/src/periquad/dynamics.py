"""Implicit time stepping with the prototype microelastic brittle damage model.

Bonds carry an irreversible broken/unbroken state overlaying the
stencils.  Cracks and traction-free edges are preprocessed by breaking
every bond whose segment crosses them; during stepping any bond whose
strain exceeds the critical value s0 breaks at the end of the step.
Quadrature weights are never regenerated, only zeroed through the mask.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import splu

from . import assembly
from .geometry import bonds_crossing_segment

__all__ = [
    "BondTable",
    "SimulationState",
    "ImplicitDynamics",
    "preprocess_cracks",
    "bond_strain",
    "bond_strains",
    "step_implicit",
    "fragment_count",
    "measure_crack_angle",
    "write_snapshot",
]


@dataclass
class BondTable:
    """Broken/unbroken state per directed stencil entry.

    The state is a property of the undirected bond: breaking (i, j) also
    breaks (j, i) when j is interior (`reverse` maps a directed entry to
    its mirror, -1 when the neighbor has no stencil of its own).
    """

    indptr: np.ndarray
    indices: np.ndarray
    interior: np.ndarray
    broken: np.ndarray           # bool, per directed entry
    reverse: np.ndarray

    @classmethod
    def pristine(cls, cloud) -> "BondTable":
        indptr, indices = cloud.stencil_indptr, cloud.stencil_indices
        counts = np.diff(indptr)
        centers = np.repeat(cloud.interior, counts)
        n = cloud.n_points
        key = centers * n + indices
        mirror = indices * n + centers
        order = np.argsort(key, kind="stable")
        pos = np.searchsorted(key, mirror, sorter=order)
        pos = np.clip(pos, 0, key.size - 1)
        found = key[order[pos]] == mirror
        reverse = np.where(found, order[pos], -1)
        return cls(indptr=indptr, indices=indices, interior=cloud.interior,
                   broken=np.zeros(indices.size, dtype=bool), reverse=reverse)

    @property
    def n_broken(self) -> int:
        return int(self.broken.sum())

    def break_bonds(self, mask: np.ndarray) -> int:
        """Mark `mask` entries broken, mirrored to the reverse direction.

        Returns how many directed entries changed state.
        """
        new = mask & ~self.broken
        rev = self.reverse[new.nonzero()[0]]
        rev = rev[rev >= 0]
        before = self.n_broken
        self.broken[new] = True
        self.broken[rev] = True
        return self.n_broken - before

    def damage(self, n_points: int) -> np.ndarray:
        """Fraction of initially present bonds now broken, per particle."""
        counts = np.diff(self.indptr)
        out = np.zeros(n_points)
        frac = np.add.reduceat(self.broken.astype(float), self.indptr[:-1]) / counts
        out[self.interior] = frac
        return out

    def copy(self) -> "BondTable":
        return BondTable(indptr=self.indptr, indices=self.indices,
                         interior=self.interior, broken=self.broken.copy(),
                         reverse=self.reverse)


def preprocess_cracks(cloud, bonds: BondTable | None, cracks=(), free_surfaces=()) -> BondTable:
    """Break every bond crossing a crack or traction-free segment.

    Crossing masks for the two directions of a bond are OR-ed so grazing
    contact breaks the pair consistently.
    """
    if bonds is None:
        bonds = BondTable.pristine(cloud)
    counts = np.diff(bonds.indptr)
    centers = np.repeat(bonds.interior, counts)
    p = cloud.positions[centers]
    q = cloud.positions[bonds.indices]
    hit = np.zeros(bonds.indices.size, dtype=bool)
    for seg in tuple(cracks) + tuple(free_surfaces):
        hit |= bonds_crossing_segment(p, q, seg)
    mirrored = hit.copy()
    has_rev = bonds.reverse >= 0
    mirrored[has_rev] |= hit[bonds.reverse[has_rev]]
    bonds.break_bonds(mirrored)
    return bonds


def bond_strain(x_i, x_j, u_i, u_j, mode: str = "deformed") -> float:
    """Strain of the bond (x_i, x_j) under displacements (u_i, u_j).

    "deformed": (|x_j + u_j - x_i - u_i| - |x_j - x_i|) / |x_j - x_i|,
    the PMB stretch (zero under rigid motion).  "relative-displacement"
    is the literal |u_j - u_i| / |x_j - x_i| variant kept behind this
    switch for comparison.
    """
    xi = np.asarray(x_j, dtype=float) - np.asarray(x_i, dtype=float)
    r = float(np.hypot(xi[0], xi[1]))
    if r == 0.0:
        raise ValueError("coincident reference positions")
    du = np.asarray(u_j, dtype=float) - np.asarray(u_i, dtype=float)
    if mode == "deformed":
        return (float(np.hypot(xi[0] + du[0], xi[1] + du[1])) - r) / r
    if mode == "relative-displacement":
        return (float(np.hypot(du[0], du[1])) - r) / r
    raise ValueError(f"unknown strain mode {mode!r}")


def bond_strains(cloud, bonds: BondTable, u: np.ndarray, mode: str = "deformed") -> np.ndarray:
    """Vectorized strains for every directed bond entry."""
    counts = np.diff(bonds.indptr)
    centers = np.repeat(bonds.interior, counts)
    xi = cloud.positions[bonds.indices] - cloud.positions[centers]
    r = np.hypot(xi[:, 0], xi[:, 1])
    du = u[bonds.indices] - u[centers]
    if mode == "deformed":
        stretched = np.hypot(xi[:, 0] + du[:, 0], xi[:, 1] + du[:, 1])
    elif mode == "relative-displacement":
        stretched = np.hypot(du[:, 0], du[:, 1])
    else:
        raise ValueError(f"unknown strain mode {mode!r}")
    return (stretched - r) / r


@dataclass
class SimulationState:
    """Displacements at the trailing time levels plus the damage state.

    u_next holds the most recently solved level (None before the first
    step); after a step the levels rotate so u_curr is always u^n.
    """

    u_prev: np.ndarray
    u_curr: np.ndarray
    t: float
    step: int
    dt: float
    bonds: BondTable
    u_next: np.ndarray | None = None


class ImplicitDynamics:
    """Backward time integrator for the collocated nonlocal equation.

    Solves rho (u^{n+1} - 2u^n + u^{n-1})/dt^2 = L_h[u^{n+1}] + f with the
    start-of-step bond mask, then sweeps strains at u^{n+1} and breaks
    every bond with s > s0.  The factorization is reused while the bond
    table is unchanged.
    """

    def __init__(self, cloud, kernel, rule, rho: float, s0: float,
                 dirichlet, body_force=None, strain_mode: str = "deformed"):
        self.cloud = cloud
        self.kernel = kernel
        self.rule = rule
        self.rho = rho
        self.s0 = s0
        self.dirichlet = dirichlet          # callable(points, t) -> (n, 2)
        self.body_force = body_force or (lambda pts: np.zeros((pts.shape[0], 2)))
        self.strain_mode = strain_mode
        self._lu = None
        self._lu_dt = None

    def _factorize(self, bonds: BondTable, dt: float) -> None:
        mat = assembly.dynamic_matrix(self.cloud, self.kernel, self.rule, bonds,
                                      self.rho, dt)
        self._lu = splu(mat.tocsc())
        self._lu_dt = dt

    def step(self, state: SimulationState) -> SimulationState:
        dt = state.dt
        t_next = (state.step + 1) * dt
        if self._lu is None or self._lu_dt != dt:
            self._factorize(state.bonds, dt)
        rhs = assembly.dynamic_rhs(
            self.cloud, self.kernel, self.rho, dt, state.u_curr, state.u_prev,
            self.body_force, lambda pts: self.dirichlet(pts, t_next))
        u_next = self._lu.solve(rhs).reshape(-1, 2)

        bonds = state.bonds.copy()
        s = bond_strains(self.cloud, bonds, u_next, self.strain_mode)
        changed = bonds.break_bonds((s > self.s0) & ~bonds.broken)
        if changed:
            self._lu = None            # stiffness changed; refactor next step
        return SimulationState(u_prev=state.u_curr, u_curr=u_next, t=t_next,
                               step=state.step + 1, dt=dt, bonds=bonds,
                               u_next=u_next)


def step_implicit(state: SimulationState, builder: ImplicitDynamics,
                  s0: float | None = None) -> SimulationState:
    """One implicit step; s0 overrides the builder's critical strain."""
    if s0 is not None and s0 != builder.s0:
        builder = replace_s0(builder, s0)
    return builder.step(state)


def replace_s0(builder: ImplicitDynamics, s0: float) -> ImplicitDynamics:
    clone = ImplicitDynamics(builder.cloud, builder.kernel, builder.rule, builder.rho,
                             s0, builder.dirichlet, builder.body_force,
                             builder.strain_mode)
    return clone


def measure_crack_angle(cloud, damage: np.ndarray, tip, notch_segment, radius: float,
                        threshold: float = 0.35, exclusion: float | None = None) -> float:
    """Angle (degrees) between the grown crack and the pre-notch line.

    Fits a total-least-squares line (principal direction) through the
    particles with damage >= threshold within `radius` of the tip,
    excluding the band within `exclusion` of the notch itself whose
    damage comes from the preprocessing, not the propagating crack.
    Returns NaN when fewer than five particles qualify.
    """
    from .geometry import point_segment_distance

    tip = np.asarray(tip, dtype=float)
    seg = np.asarray(notch_segment, dtype=float)
    if exclusion is None:
        exclusion = cloud.delta + 0.5 * cloud.h
    d_tip = np.hypot(cloud.positions[:, 0] - tip[0], cloud.positions[:, 1] - tip[1])
    sel = (damage >= threshold) & (d_tip <= radius) \
        & (point_segment_distance(cloud.positions, seg) > exclusion)
    pts = cloud.positions[sel]
    if pts.shape[0] < 5:
        return math.nan
    centered = pts - pts.mean(axis=0)
    cov = centered.T @ centered
    _, vecs = np.linalg.eigh(cov)
    direction = vecs[:, -1]
    axis = seg[1] - seg[0]
    axis = axis / np.hypot(axis[0], axis[1])
    cosang = min(abs(float(direction @ axis)), 1.0)
    return math.degrees(math.acos(cosang))


def fragment_count(bonds: BondTable, cloud, min_size: int = 4) -> int:
    """Connected components of the unbroken-bond graph, ignoring dust.

    Components smaller than `min_size` particles do not count.
    """
    counts = np.diff(bonds.indptr)
    centers = np.repeat(bonds.interior, counts)
    live = ~bonds.broken
    n = cloud.n_points
    rows = centers[live]
    cols = bonds.indices[live]
    adj = sp.coo_matrix((np.ones(rows.size, dtype=np.int8), (rows, cols)), shape=(n, n))
    ncomp, labels = connected_components(adj, directed=False)
    sizes = np.bincount(labels, minlength=ncomp)
    return int(np.count_nonzero(sizes >= min_size))


def write_snapshot(path, cloud, u: np.ndarray, damage: np.ndarray) -> None:
    """CSV snapshot `id,x,y,ux,uy,damage` for downstream plotting."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "x", "y", "ux", "uy", "damage"])
        for i in range(cloud.n_points):
            writer.writerow([i, repr(float(cloud.positions[i, 0])),
                             repr(float(cloud.positions[i, 1])),
                             repr(float(u[i, 0])), repr(float(u[i, 1])),
                             repr(float(damage[i]))])
