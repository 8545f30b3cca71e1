"""Parametric region map of the radial-flux spoke-type IPM coupler.

The cross-section is a stack of concentric annuli, from the axis outwards:
shaft, inner yoke (pole pieces with embedded spoke magnets), air gap,
conductive sheet (CS) and outer yoke. Only the inner-yoke annulus is split
angularly; every other annulus holds a single region.

Magnet ``k`` is centred on ``theta = 2*pi*k/N_pm`` and magnetised along the
local tangential direction with polarity ``(-1)**k``; pole piece ``k`` sits
between magnets ``k`` and ``k+1``.
"""
from __future__ import annotations

import bisect
import enum
import math
from dataclasses import asdict, dataclass, field
from typing import Iterator

TWO_PI = 2.0 * math.pi


class GeometryError(ValueError):
    """Invalid or geometrically infeasible coupler description."""


class Region(enum.IntEnum):
    SHAFT = 0
    POLE_IRON = 1
    PM = 2
    AIRGAP = 3
    CS = 4
    OUTER_YOKE = 5
    POCKET = 6  # air between a magnet and a pole piece when pm_embrace < 1


@dataclass(frozen=True)
class RegionTag:
    kind: Region
    index: int = -1
    polarity: int = 0

    def __str__(self) -> str:
        if self.kind is Region.PM:
            return f"PM({self.index},{'+' if self.polarity > 0 else '-'})"
        if self.index >= 0:
            return f"{self.kind.name}({self.index})"
        return self.kind.name


@dataclass(frozen=True)
class CouplerSpec:
    """Geometric and material description of the coupler, SI units."""

    h_m: float = 5e-3
    g: float = 0.5e-3
    L_cs: float = 1e-3
    L_yp: float = 20e-3
    L_ys: float = 8e-3
    R_sh: float = 15e-3
    H_ov: float = 10e-3
    L_ax: float = 40e-3
    N_pm: int = 6
    pm_grade: str = "N35"
    pm_embrace: float = 1.0
    slip_direction: int = 1

    LENGTHS = ("h_m", "g", "L_cs", "L_yp", "L_ys", "R_sh", "L_ax")

    def __post_init__(self) -> None:
        for name in self.LENGTHS:
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise GeometryError(f"{name} must be a positive length, got {value!r}")
        if not (math.isfinite(self.H_ov) and self.H_ov >= 0):
            raise GeometryError(f"H_ov must be non-negative, got {self.H_ov!r}")
        if int(self.N_pm) != self.N_pm or self.N_pm < 2 or self.N_pm % 2:
            raise GeometryError(f"N_pm must be an even integer >= 2, got {self.N_pm!r}")
        if not 0 < self.pm_embrace <= 1:
            raise GeometryError(f"pm_embrace must lie in (0, 1], got {self.pm_embrace!r}")
        if self.slip_direction not in (1, -1):
            raise GeometryError(f"slip_direction must be +1 or -1, got {self.slip_direction!r}")
        pitch_width = self.pole_pitch_angle * self.r_magnet_mean
        if self.h_m >= pitch_width:
            raise GeometryError(
                f"magnets overlap: h_m={self.h_m:.6g} m is not smaller than the pole-arc "
                f"width {pitch_width:.6g} m at the mean inner-yoke radius"
            )

    @property
    def pole_pairs(self) -> int:
        return self.N_pm // 2

    @property
    def pole_pitch_angle(self) -> float:
        return TWO_PI / self.N_pm

    @property
    def r_magnet_mean(self) -> float:
        return self.R_sh + 0.5 * self.L_yp

    @property
    def r_cs_mean(self) -> float:
        return self.R_sh + self.L_yp + self.g + 0.5 * self.L_cs

    @property
    def pole_pitch_cs(self) -> float:
        """Pole pitch (m) at the mean radius of the conductive sheet."""
        return self.pole_pitch_angle * self.r_cs_mean

    def to_dict(self) -> dict:
        return asdict(self)


def radial_build(spec: CouplerSpec) -> list[float]:
    """Interface radii (m): shaft, inner yoke, air gap, CS and outer yoke outer radii."""
    radii = [spec.R_sh]
    for thickness in (spec.L_yp, spec.g, spec.L_cs, spec.L_ys):
        radii.append(radii[-1] + thickness)
    return radii


ANNULUS_KINDS = (Region.SHAFT, None, Region.AIRGAP, Region.CS, Region.OUTER_YOKE)


@dataclass(frozen=True)
class Sector:
    start: float
    stop: float
    tag: RegionTag

    @property
    def arc(self) -> float:
        return self.stop - self.start


@dataclass(frozen=True)
class RegionMap:
    """Immutable annular region map.

    ``sectors[i]`` lists the angular arcs of annulus ``i`` (between
    ``interfaces[i-1]`` and ``interfaces[i]``, with the axis as the inner
    bound of annulus 0). Arcs are half-open ``[start, stop)`` and tile
    ``[0, 2*pi)``.
    """

    spec: CouplerSpec
    interfaces: tuple[float, ...]
    magnet_arc: float
    iron_arc: float
    sectors: tuple[tuple[Sector, ...], ...] = field(repr=False)

    @property
    def pole_pairs(self) -> int:
        return self.spec.N_pm // 2

    @property
    def r_out(self) -> float:
        return self.interfaces[-1]

    @property
    def magnet_annulus(self) -> int:
        return 1

    def annulus_bounds(self, i: int) -> tuple[float, float]:
        return (0.0 if i == 0 else self.interfaces[i - 1], self.interfaces[i])

    def magnet_centres(self) -> list[float]:
        return [k * self.spec.pole_pitch_angle for k in range(self.spec.N_pm)]

    def pole_centres(self) -> list[float]:
        return [(k + 0.5) * self.spec.pole_pitch_angle for k in range(self.spec.N_pm)]

    def iter_tags(self) -> Iterator[RegionTag]:
        seen = set()
        for annulus in self.sectors:
            for s in annulus:
                if s.tag not in seen:
                    seen.add(s.tag)
                    yield s.tag

    def aligned_to(self, n_theta: int) -> "RegionMap":
        """Copy whose sector boundaries fall on a uniform grid of ``n_theta`` spokes.

        Magnet and pole-iron arcs are rounded to an even number of grid
        divisions so that both stay centred on a spoke.
        """
        n_pm = self.spec.N_pm
        if n_theta % (2 * n_pm):
            raise GeometryError(f"n_theta={n_theta} must be divisible by 2*N_pm={2 * n_pm}")
        per_pitch = n_theta // n_pm
        dtheta = TWO_PI / n_theta
        n_mag = max(2, 2 * round(self.magnet_arc / dtheta / 2))
        if n_mag >= per_pitch:
            raise GeometryError(
                f"magnet arc {self.magnet_arc:.6g} rad leaves no pole iron on a "
                f"{n_theta}-spoke grid"
            )
        n_iron = 2 * round(self.iron_arc / dtheta / 2)
        n_iron = min(max(n_iron, 2), per_pitch - n_mag)
        return _make_map(self.spec, n_mag * dtheta, n_iron * dtheta)


def _make_map(spec: CouplerSpec, magnet_arc: float, iron_arc: float) -> RegionMap:
    radii = radial_build(spec)
    pitch = spec.pole_pitch_angle
    pocket = 0.5 * (pitch - magnet_arc - iron_arc)
    half = 0.5 * magnet_arc
    arcs: list[Sector] = []
    for k in range(spec.N_pm):
        centre = k * pitch
        pm = RegionTag(Region.PM, k, 1 if k % 2 == 0 else -1)
        if k == 0:
            arcs.append(Sector(0.0, half, pm))
        else:
            arcs.append(Sector(centre - half, centre + half, pm))
        edge = centre + half
        if pocket > 1e-15:
            arcs.append(Sector(edge, edge + pocket, RegionTag(Region.POCKET, 2 * k)))
            edge += pocket
        arcs.append(Sector(edge, edge + iron_arc, RegionTag(Region.POLE_IRON, k)))
        edge += iron_arc
        if pocket > 1e-15:
            arcs.append(Sector(edge, edge + pocket, RegionTag(Region.POCKET, 2 * k + 1)))
    arcs.append(Sector(TWO_PI - half, TWO_PI, RegionTag(Region.PM, 0, 1)))
    sectors = []
    for kind in ANNULUS_KINDS:
        if kind is None:
            sectors.append(tuple(arcs))
        else:
            sectors.append((Sector(0.0, TWO_PI, RegionTag(kind)),))
    return RegionMap(spec, tuple(radii), magnet_arc, iron_arc, tuple(sectors))


def build_region_map(spec: CouplerSpec, n_theta: int | None = None) -> RegionMap:
    """Region map with spoke magnets of tangential thickness ``h_m``.

    The magnet arc is ``h_m`` measured at the mean inner-yoke radius. When
    ``n_theta`` is given, the map is aligned to that angular grid.
    """
    magnet_arc = spec.h_m / spec.r_magnet_mean
    free = spec.pole_pitch_angle - magnet_arc
    if free <= 0:
        raise GeometryError(
            f"magnet arc {magnet_arc:.6g} rad exceeds pole pitch {spec.pole_pitch_angle:.6g} rad"
        )
    rmap = _make_map(spec, magnet_arc, spec.pm_embrace * free)
    return rmap.aligned_to(n_theta) if n_theta is not None else rmap


def _annulus_index(rmap: RegionMap, r: float) -> int:
    if r < 0 or r > rmap.r_out * (1 + 1e-12):
        raise GeometryError(f"r={r!r} lies outside the domain [0, {rmap.r_out}]")
    return min(bisect.bisect_left(rmap.interfaces, r), len(rmap.interfaces) - 1)


def region_at(rmap: RegionMap, r: float, theta: float) -> RegionTag:
    """Region containing the polar point ``(r, theta)``.

    Points on a circular interface belong to the inner annulus; points on an
    angular boundary belong to the sector counterclockwise of it.
    """
    annulus = rmap.sectors[_annulus_index(rmap, r)]
    if len(annulus) == 1:
        return annulus[0].tag
    t = math.fmod(theta, TWO_PI)
    if t < 0:
        t += TWO_PI
    if t >= TWO_PI:
        t = 0.0
    starts = [s.start for s in annulus]
    return annulus[bisect.bisect_right(starts, t) - 1].tag
