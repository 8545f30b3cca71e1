"""Structured polar triangulation of the coupler cross-section.

Outside the shaft every annulus is meshed as rings x spokes on a uniform
angular grid, each quad split into two triangles. Quads in the upper half
plane and the lower half plane use mirrored diagonals, so the mesh is
symmetric under ``theta -> -theta``.

The shaft disk is a coarsening core: the spoke count is halved through
transition layers while it stays even, the remaining (possibly odd) spoke
count is marched inwards with near-square elements and closed with a fan at
the axis. On a ring with an odd spoke count the quad straddling
``theta = pi`` is its own mirror image and is split into four triangles
around a centre node.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .geometry import TWO_PI, Region, RegionMap, region_at

CORE_MIN_SPOKES = 6
TRANSITION_ASPECT = 1.2


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class MeshDensity:
    """Angular divisions and radial layer counts outside the shaft core."""

    n_theta: int = 360
    inner_yoke: int = 10
    airgap: int = 3
    cs: int = 4
    outer_yoke: int = 6
    core_stop: float = 0.25

    def __post_init__(self):
        for name in ("inner_yoke", "airgap", "cs", "outer_yoke"):
            if getattr(self, name) < 1:
                raise MeshError(f"density.{name} must be >= 1 radial layer")
        if self.n_theta < 4:
            raise MeshError("density.n_theta must be >= 4")
        if not 0 < self.core_stop < 1:
            raise MeshError("density.core_stop must lie in (0, 1)")

    @property
    def layers(self) -> tuple[int, int, int, int]:
        return (self.inner_yoke, self.airgap, self.cs, self.outer_yoke)

    def scaled(self, factor: int) -> "MeshDensity":
        return MeshDensity(self.n_theta * factor, *(n * factor for n in self.layers), self.core_stop)


@dataclass(frozen=True)
class Mesh:
    nodes: np.ndarray
    elements: np.ndarray
    region: np.ndarray
    magnet: np.ndarray
    boundary: np.ndarray
    region_map: RegionMap
    n_theta: int
    band: tuple[float, float]
    core_plan: tuple = field(default=(), repr=False)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def r_out(self) -> float:
        return self.region_map.r_out

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.elements]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def areas(self) -> np.ndarray:
        return np.abs(self.signed_areas)

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.nodes[self.elements].mean(axis=1)

    @cached_property
    def gradients(self) -> np.ndarray:
        """Shape-function gradients, array (E, 2, 3): ``grad N_i = G[:, :, i]``."""
        p = self.nodes[self.elements]
        x, y = p[..., 0], p[..., 1]
        two_a = 2.0 * self.signed_areas
        b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
        c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
        return np.stack([b, c], axis=1) / two_a[:, None, None]

    @cached_property
    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique edges (K, 2) and per-element edge ids (E, 3); local edge i is opposite vertex i."""
        e = self.elements
        local = np.stack([e[:, [1, 2]], e[:, [2, 0]], e[:, [0, 1]]], axis=1).reshape(-1, 2)
        uniq, inverse = np.unique(np.sort(local, axis=1), axis=0, return_inverse=True)
        return uniq, inverse.reshape(-1, 3)

    def mask(self, kind: Region) -> np.ndarray:
        return self.region == int(kind)

    def band_mask(self) -> np.ndarray:
        r = np.hypot(*self.centroids.T)
        lo, hi = self.band
        return self.mask(Region.AIRGAP) & (r > lo) & (r < hi)


def _ring_nodes(r: float, n: int) -> np.ndarray:
    t = TWO_PI * np.arange(n) / n
    return np.column_stack([r * np.cos(t), r * np.sin(t)])


def core_plan(R: float, n: int, stop: float = 0.25) -> list[tuple[float, int]]:
    """Ring radii and spoke counts of the shaft core, outermost first."""
    rings = [(R, n)]
    r = R
    while n % 2 == 0 and n // 2 >= CORE_MIN_SPOKES:
        dr = TRANSITION_ASPECT * TWO_PI * r / n
        if r - dr < stop * R:
            break
        r -= dr
        n //= 2
        rings.append((r, n))
    while TWO_PI / n < 0.5:
        dr = TWO_PI * r / n
        if r - dr < stop * R:
            break
        r -= dr
        rings.append((r, n))
    return rings


class _Builder:
    def __init__(self):
        self.nodes: list[np.ndarray] = []
        self.count = 0
        self.tris: list[tuple[int, int, int]] = []
        self.tri_seg: list[tuple[int, float]] = []

    def add_nodes(self, pts) -> np.ndarray:
        pts = np.atleast_2d(pts)
        ids = np.arange(self.count, self.count + len(pts))
        self.nodes.append(pts)
        self.count += len(pts)
        return ids

    def tri(self, a, b, c, layer, theta):
        self.tris.append((a, b, c))
        self.tri_seg.append((layer, theta))


def _layer(bld: _Builder, inner, outer, r_in, r_out, n, layer):
    """Quads between two rings of equal spoke count."""
    dt = TWO_PI / n
    for j in range(n):
        j1 = (j + 1) % n
        a0, a1, b0, b1 = inner[j], inner[j1], outer[j], outer[j1]
        tm = (j + 0.5) * dt
        s = math.sin(tm)
        if s > 1e-9:
            bld.tri(a0, a1, b1, layer, tm)
            bld.tri(a0, b1, b0, layer, tm)
        elif s < -1e-9:
            bld.tri(a0, a1, b0, layer, tm)
            bld.tri(a1, b1, b0, layer, tm)
        else:
            rc = 0.5 * (r_in + r_out) * math.cos(0.5 * dt)
            c = bld.add_nodes([rc * math.cos(tm), rc * math.sin(tm)])[0]
            for p, q in ((a0, a1), (a1, b1), (b1, b0), (b0, a0)):
                bld.tri(p, q, c, layer, tm)


def generate_mesh(rmap: RegionMap, density: MeshDensity | None = None) -> Mesh:
    """Conforming, region-tagged triangulation of the full 360-degree domain."""
    density = density or MeshDensity()
    n = density.n_theta
    rmap = rmap.aligned_to(n)
    radii = rmap.interfaces
    spec = rmap.spec

    bld = _Builder()
    # structured part: rings from R_sh outwards
    ring_r = [radii[0]]
    ring_annulus = []
    for a, layers in enumerate(density.layers, start=1):
        r0, r1 = radii[a - 1], radii[a]
        for i in range(1, layers + 1):
            ring_r.append(r0 + (r1 - r0) * i / layers)
            ring_annulus.append(a)
    rings = [bld.add_nodes(_ring_nodes(r, n)) for r in ring_r]
    for i, annulus in enumerate(ring_annulus):
        _layer(bld, rings[i], rings[i + 1], ring_r[i], ring_r[i + 1], n, annulus)

    # shaft core
    plan = core_plan(radii[0], n, density.core_stop)
    outer = rings[0]
    for (r_o, n_o), (r_i, n_i) in zip(plan[:-1], plan[1:]):
        inner = bld.add_nodes(_ring_nodes(r_i, n_i))
        if n_i == n_o:
            _layer(bld, inner, outer, r_i, r_o, n_i, 0)
        else:
            for j in range(n_i):
                a0, a1 = inner[j], inner[(j + 1) % n_i]
                b0, b1, b2 = outer[2 * j], outer[2 * j + 1], outer[(2 * j + 2) % n_o]
                bld.tri(a0, b1, b0, 0, 0.0)
                bld.tri(a0, a1, b1, 0, 0.0)
                bld.tri(a1, b2, b1, 0, 0.0)
        outer = inner
    centre = bld.add_nodes([0.0, 0.0])[0]
    n_c = plan[-1][1]
    for j in range(n_c):
        bld.tri(centre, outer[j], outer[(j + 1) % n_c], 0, 0.0)

    nodes = np.vstack(bld.nodes)
    elements = np.array(bld.tris, dtype=np.int64)
    p = nodes[elements]
    d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    flip = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0] < 0
    elements[flip] = elements[flip][:, [0, 2, 1]]

    region = np.empty(len(elements), dtype=np.int64)
    magnet = np.full(len(elements), -1, dtype=np.int64)
    r_mag = spec.r_magnet_mean
    kinds = {0: Region.SHAFT, 2: Region.AIRGAP, 3: Region.CS, 4: Region.OUTER_YOKE}
    for e, (annulus, theta) in enumerate(bld.tri_seg):
        if annulus == 1:
            tag = region_at(rmap, r_mag, theta)
            region[e] = int(tag.kind)
            if tag.kind is Region.PM:
                magnet[e] = tag.index
        else:
            region[e] = int(kinds[annulus])

    g0, g1 = radii[1], radii[2]
    k = density.airgap
    mid = k // 2
    band = (g0 + (g1 - g0) * mid / k, g0 + (g1 - g0) * (mid + 1) / k)
    boundary = rings[-1].copy()
    return _freeze(Mesh(nodes, elements, region, magnet, boundary, rmap, n, band, tuple(plan)))


def _freeze(mesh: Mesh) -> Mesh:
    for arr in (mesh.nodes, mesh.elements, mesh.region, mesh.magnet, mesh.boundary):
        arr.flags.writeable = False
    return mesh


def refine_uniform(mesh: Mesh) -> Mesh:
    """Red refinement: every triangle split into four.

    Midpoints of edges lying on a material interface or on the outer
    boundary are projected back onto the circle.
    """
    edges, el_edges = mesh.edges
    p = mesh.nodes
    mids = 0.5 * (p[edges[:, 0]] + p[edges[:, 1]])
    r_a = np.hypot(*p[edges[:, 0]].T)
    r_b = np.hypot(*p[edges[:, 1]].T)
    for R in mesh.region_map.interfaces:
        tol = 1e-9 * R
        on = (np.abs(r_a - R) < tol) & (np.abs(r_b - R) < tol)
        if np.any(on):
            rm = np.hypot(*mids[on].T)
            mids[on] *= (R / rm)[:, None]
    nodes = np.vstack([p, mids])
    m = el_edges + len(p)
    v = mesh.elements
    # local edge i is opposite vertex i
    children = np.concatenate([
        np.column_stack([v[:, 0], m[:, 2], m[:, 1]]),
        np.column_stack([v[:, 1], m[:, 0], m[:, 2]]),
        np.column_stack([v[:, 2], m[:, 1], m[:, 0]]),
        np.column_stack([m[:, 0], m[:, 1], m[:, 2]]),
    ])
    region = np.tile(mesh.region, 4)
    magnet = np.tile(mesh.magnet, 4)
    R = mesh.r_out
    rn = np.hypot(*nodes.T)
    boundary = np.flatnonzero(np.abs(rn - R) < 1e-9 * R)
    return _freeze(Mesh(nodes, children, region, magnet, boundary, mesh.region_map,
                        mesh.n_theta * 2, mesh.band, mesh.core_plan))


@dataclass(frozen=True)
class QualityReport:
    min_quality: float
    mean_quality: float
    min_area: float
    inverted: tuple[int, ...]
    degenerate: tuple[int, ...]
    region_counts: dict

    def lines(self) -> list[str]:
        out = [
            f"min_quality,{self.min_quality:.6f}",
            f"mean_quality,{self.mean_quality:.6f}",
            f"min_area_m2,{self.min_area:.6e}",
            f"inverted,{len(self.inverted)}",
            f"degenerate,{len(self.degenerate)}",
        ]
        out += [f"count_{k},{v}" for k, v in self.region_counts.items()]
        return out


def triangle_quality(pts: np.ndarray) -> np.ndarray:
    """Normalised radius ratio ``2 r_in / R_circ`` (1 for equilateral, 0 for degenerate)."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 3, 2)
    a = np.linalg.norm(pts[:, 1] - pts[:, 2], axis=1)
    b = np.linalg.norm(pts[:, 2] - pts[:, 0], axis=1)
    c = np.linalg.norm(pts[:, 0] - pts[:, 1], axis=1)
    d1, d2 = pts[:, 1] - pts[:, 0], pts[:, 2] - pts[:, 0]
    area = 0.5 * np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    denom = a * b * c
    with np.errstate(divide="ignore", invalid="ignore"):
        q = 16.0 * area**2 / (denom * (a + b + c))
    return np.where(denom > 0, np.nan_to_num(q), 0.0)


def mesh_quality(mesh: Mesh) -> QualityReport:
    q = triangle_quality(mesh.nodes[mesh.elements])
    sa = mesh.signed_areas
    scale = mesh.r_out**2
    counts = {Region(k).name: int(np.sum(mesh.region == k)) for k in np.unique(mesh.region)}
    return QualityReport(
        min_quality=float(q.min()),
        mean_quality=float(q.mean()),
        min_area=float(np.abs(sa).min()),
        inverted=tuple(int(i) for i in np.flatnonzero(sa < 0)),
        degenerate=tuple(int(i) for i in np.flatnonzero(np.abs(sa) <= 1e-14 * scale)),
        region_counts=counts,
    )
