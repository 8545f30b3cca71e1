"""Derived quantities of a converged field: B, H, eddy currents, torque, loss, demag margin.

Sign conventions: torques are reported as the torque transmitted to the
magnet rotor, multiplied by the slip-direction sign, so ``torque * omega_slip``
equals the ohmic loss and torque is positive for positive slip.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .fem import QUAD_MID, QUAD_MID_W, FieldSolution, SolverError, SolverOptions, solve_steady
from .geometry import Region, build_region_map
from .materials import MU0
from .mesh import Mesh, MeshDensity, generate_mesh

log = logging.getLogger(__name__)

CURVE_HEADER = ("omega_slip_rad_s", "torque_Nm", "loss_W", "avgJ_A_mm2", "maxJ_A_mm2", "demag_margin_A_m")
THERMAL_LIMIT_A_MM2 = 45.0
ASYMMETRY_DEFINITION = (
    "asymmetry = max|J| over leading half-poles / max|J| over trailing half-poles; "
    "half-poles split each pole pitch at the pole-piece centre, leading = ahead in "
    "the direction the sheet moves relative to the magnets"
)


@dataclass(frozen=True)
class ElementFields:
    B: np.ndarray   # (E, 2) T
    H: np.ndarray   # (E, 2) A/m
    J: np.ndarray   # (E,) A/m^2 at the element centroid

    @property
    def B_mag(self) -> np.ndarray:
        return np.hypot(*self.B.T)


def _grad(sol: FieldSolution) -> np.ndarray:
    return np.einsum("eki,ei->ek", sol.mesh.gradients, sol.A[sol.mesh.elements])


def _dtheta_at(points: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """dA/dtheta = x dA/dy - y dA/dx at the given points of each element."""
    return points[..., 0] * grad[:, None, 1] - points[..., 1] * grad[:, None, 0]


def element_fields(sol: FieldSolution) -> ElementFields:
    grad = _grad(sol)
    B = np.column_stack([grad[:, 1], -grad[:, 0]])
    elem = sol.elem
    H = sol.nu[:, None] * B
    pm = elem.B_r > 0
    H[pm] = sol.nu[pm, None] * (B[pm] - elem.B_r[pm, None] * elem.mhat[pm])
    c = sol.mesh.centroids
    dth = c[:, 0] * grad[:, 1] - c[:, 1] * grad[:, 0]
    J = -elem.sigma * sol.omega * dth
    return ElementFields(B, H, J)


def _cs_quadrature(sol: FieldSolution):
    mesh = sol.mesh
    cs = np.flatnonzero(sol.elem.sigma > 0)
    pts = np.einsum("qk,ekd->eqd", QUAD_MID, mesh.nodes[mesh.elements[cs]])
    grad = _grad(sol)[cs]
    dth = _dtheta_at(pts, grad)
    J = -sol.elem.sigma[cs, None] * sol.omega * dth
    return cs, dth, J


def torque_lorentz(sol: FieldSolution) -> float:
    """Torque from the Lorentz force density J x B in the sheet (r B_r = dA/dtheta)."""
    cs, dth, J = _cs_quadrature(sol)
    if len(cs) == 0:
        return 0.0
    on_sheet = sol.elem.length * np.sum(sol.mesh.areas[cs] * ((J * dth) @ QUAD_MID_W))
    return -sol.slip_sign * float(on_sheet)


def ohmic_loss(sol: FieldSolution) -> float:
    cs, _, J = _cs_quadrature(sol)
    if len(cs) == 0:
        return 0.0
    sigma = sol.elem.sigma[cs]
    return float(sol.elem.length * np.sum(sol.mesh.areas[cs] * ((J**2) @ QUAD_MID_W) / sigma))


def torque_arkkio(sol: FieldSolution) -> float:
    """Maxwell-stress torque averaged over the middle element layer of the air gap."""
    mesh = sol.mesh
    band = np.flatnonzero(mesh.band_mask())
    if len(band) == 0:
        raise SolverError("air-gap band for the Arkkio torque not found in mesh")
    lo, hi = mesh.band
    grad = _grad(sol)[band]
    Bx, By = grad[:, 1], -grad[:, 0]
    pts = np.einsum("qk,ekd->eqd", QUAD_MID, mesh.nodes[mesh.elements[band]])
    r = np.hypot(pts[..., 0], pts[..., 1])
    c, s = pts[..., 0] / r, pts[..., 1] / r
    Br = Bx[:, None] * c + By[:, None] * s
    Bt = -Bx[:, None] * s + By[:, None] * c
    integral = np.sum(mesh.areas[band] * ((r * Br * Bt) @ QUAD_MID_W))
    return sol.slip_sign * float(sol.elem.length / (MU0 * (hi - lo)) * integral)


@dataclass(frozen=True)
class DemagResult:
    margin: float
    worst_element: int
    H_rev_max: float


def reverse_field(sol: FieldSolution, fields: ElementFields | None = None):
    """Element ids of the magnets and the field component opposing magnetisation."""
    fields = fields or element_fields(sol)
    pm = np.flatnonzero(sol.mesh.magnet >= 0)
    H_rev = -np.einsum("ek,ek->e", fields.H[pm], sol.elem.mhat[pm])
    return pm, H_rev


def demag_margin(sol: FieldSolution, H_c: float | None = None) -> DemagResult:
    if H_c is None:
        H_c = sol.materials.pm.H_c if sol.materials is not None else float(sol.elem.H_c.max())
    pm, H_rev = reverse_field(sol)
    if len(pm) == 0:
        return DemagResult(math.inf, -1, -math.inf)
    i = int(np.argmax(H_rev))
    return DemagResult(float(H_c - H_rev[i]), int(pm[i]), float(H_rev[i]))


@dataclass(frozen=True)
class CurrentStats:
    avg: float
    max: float
    asymmetry: float


def current_density_stats(sol: FieldSolution, fields: ElementFields | None = None) -> CurrentStats:
    """Area-weighted mean and peak |J| in the sheet (A/mm^2) plus half-pole asymmetry."""
    fields = fields or element_fields(sol)
    mesh = sol.mesh
    cs = np.flatnonzero(mesh.mask(Region.CS))
    J = np.abs(fields.J[cs]) * 1e-6
    area = mesh.areas[cs]
    avg = float(np.sum(J * area) / np.sum(area))
    peak = float(J.max()) if len(J) else 0.0
    if peak == 0.0 or sol.omega == 0.0:
        return CurrentStats(avg, peak, 1.0)
    pitch = mesh.region_map.spec.pole_pitch_angle
    theta = np.arctan2(mesh.centroids[cs, 1], mesh.centroids[cs, 0])
    rel = np.mod(theta, pitch) - 0.5 * pitch  # position relative to the pole-piece centre
    ahead = rel * np.sign(sol.omega) > 0
    behind = rel * np.sign(sol.omega) < 0
    lead = J[ahead].max(initial=0.0)
    trail = J[behind].max(initial=0.0)
    return CurrentStats(avg, peak, float(lead / trail) if trail > 0 else math.inf)


def airgap_fundamental(sol: FieldSolution, harmonic: int | None = None) -> float:
    """Amplitude of the pole-pair harmonic of B_r over the Arkkio band (T)."""
    mesh = sol.mesh
    p = harmonic or mesh.region_map.pole_pairs
    band = np.flatnonzero(mesh.band_mask())
    grad = _grad(sol)[band]
    c = mesh.centroids[band]
    theta = np.arctan2(c[:, 1], c[:, 0])
    Br = (grad[:, 1] * c[:, 0] - grad[:, 0] * c[:, 1]) / np.hypot(c[:, 0], c[:, 1])
    w = mesh.areas[band]
    coeff = 2.0 * np.sum(w * Br * np.exp(-1j * p * theta)) / np.sum(w)
    return float(abs(coeff))


def ring_fundamental(mesh: Mesh, A: np.ndarray, radius: float, harmonic: int) -> complex:
    """Complex harmonic coefficient of nodal A on the node ring at ``radius``."""
    r = np.hypot(*mesh.nodes.T)
    on = np.flatnonzero(np.abs(r - radius) < 1e-9 * radius)
    if len(on) < 2 * harmonic + 1:
        raise ValueError(f"no node ring at r={radius}")
    theta = np.arctan2(mesh.nodes[on, 1], mesh.nodes[on, 0])
    return 2.0 * np.mean(A[on] * np.exp(-1j * harmonic * theta))


def outer_yoke_probe(sol: FieldSolution, fields: ElementFields | None = None) -> tuple[float, float]:
    """Max |B| in the outer yoke at the inter-pole closing points and at mid-pole."""
    fields = fields or element_fields(sol)
    mesh = sol.mesh
    oy = np.flatnonzero(mesh.mask(Region.OUTER_YOKE))
    theta = np.arctan2(mesh.centroids[oy, 1], mesh.centroids[oy, 0])
    pitch = mesh.region_map.spec.pole_pitch_angle
    window = 1.5 * 2 * math.pi / mesh.n_theta
    B = fields.B_mag[oy]

    def near(offset):
        d = np.mod(theta - offset + 0.5 * pitch, pitch) - 0.5 * pitch
        return B[np.abs(d) < window].max()

    return float(near(0.0)), float(near(0.5 * pitch))


@dataclass
class SweepRow:
    omega: float
    torque: float = math.nan
    torque_lorentz: float = math.nan
    loss: float = math.nan
    avgJ: float = math.nan
    maxJ: float = math.nan
    asymmetry: float = math.nan
    demag_margin: float = math.nan
    iterations: int = 0
    error: str | None = None

    @property
    def converged(self) -> bool:
        return self.error is None


@dataclass
class TorqueSpeedCurve:
    rows: list[SweepRow] = field(default_factory=list)
    thermal_limit_A_mm2: float = THERMAL_LIMIT_A_MM2

    @property
    def ok(self) -> list[SweepRow]:
        return [r for r in self.rows if r.converged]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.ok])

    def peak(self) -> SweepRow:
        return max(self.ok, key=lambda r: r.torque)

    def thermal_limit_slip(self, threshold: float | None = None) -> float | None:
        """Slip (rad/s) where the mean |J| first reaches ``threshold``, linearly interpolated."""
        threshold = self.thermal_limit_A_mm2 if threshold is None else threshold
        rows = [r for r in self.ok if r.omega >= 0]
        for a, b in zip(rows[:-1], rows[1:]):
            if a.avgJ < threshold <= b.avgJ:
                return a.omega + (threshold - a.avgJ) * (b.omega - a.omega) / (b.avgJ - a.avgJ)
        if rows and rows[0].avgJ >= threshold:
            return rows[0].omega
        return None

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CURVE_HEADER)
        for r in self.rows:
            w.writerow([f"{v:.9g}" for v in (r.omega, r.torque, r.loss, r.avgJ, r.maxJ, r.demag_margin)])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "TorqueSpeedCurve":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = tuple(next(reader))
            if header != CURVE_HEADER:
                raise ValueError(f"unexpected curve header {header}")
            rows = []
            for rec in reader:
                w, t, p, a, m, d = (float(v) for v in rec)
                rows.append(SweepRow(w, t, math.nan, p, a, m, math.nan, d))
        return cls(rows)


def evaluate(sol: FieldSolution) -> SweepRow:
    fields = element_fields(sol)
    stats = current_density_stats(sol, fields)
    return SweepRow(
        omega=sol.omega_slip,
        torque=torque_arkkio(sol),
        torque_lorentz=torque_lorentz(sol),
        loss=ohmic_loss(sol),
        avgJ=stats.avg,
        maxJ=stats.max,
        asymmetry=stats.asymmetry,
        demag_margin=demag_margin(sol).margin,
        iterations=sol.iterations,
    )


def sweep_torque_speed(spec, materials, slips, opts: SolverOptions | None = None,
                       density: MeshDensity | None = None, mesh: Mesh | None = None,
                       jobs: int = 1, warm_start: bool = True) -> TorqueSpeedCurve:
    """Torque-speed curve over ascending slip speeds on a single shared mesh.

    Warm starts chain consecutive points and force sequential execution;
    with ``jobs > 1`` and ``warm_start=False`` points run on a thread pool.
    A point that fails to converge is recorded with its error and skipped.
    """
    slips = [float(s) for s in slips]
    if any(b < a for a, b in zip(slips[:-1], slips[1:])):
        raise ValueError("slip speeds must be sorted ascending")
    opts = opts or SolverOptions()
    if mesh is None:
        mesh = generate_mesh(build_region_map(spec), density or MeshDensity())

    def run(w, initial=None):
        try:
            sol = solve_steady(mesh, materials, w, opts, initial=initial)
        except (SolverError, ValueError) as exc:
            log.warning("slip %g rad/s failed: %s", w, exc)
            return SweepRow(w, error=str(exc)), None
        return evaluate(sol), sol

    rows: list[SweepRow] = []
    if warm_start or jobs <= 1:
        prev = None
        for w in slips:
            row, sol = run(w, prev.A if (warm_start and prev is not None) else None)
            rows.append(row)
            if sol is not None:
                prev = sol
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = [r for r, _ in pool.map(run, slips)]
    return TorqueSpeedCurve(rows)
