"""Closed-form reference solutions used to verify the field solver and the fast model.

* ``slab_eddy_force``: traveling-wave field over a thin conducting sheet
  between two ideal iron backings (planar, linear).
* ``harmonic_cylinder_field``: magnetostatic field of a ``cos(p*theta)``
  current sheet in concentric linear annuli with ``A = 0`` on the outer radius.
* ``mms_case``: manufactured solution of the convected diffusion operator on
  a disk.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fem import ElementMaterials
from .materials import MU0, NU0
from .mesh import Mesh


class OracleError(ValueError):
    pass


# -- moving slab ---------------------------------------------------------

@dataclass(frozen=True)
class SlabCaseParams:
    B0: float         # no-load normal flux density amplitude at the sheet, T
    tau_p: float      # pole pitch, m
    v: float          # sheet velocity relative to the field, m/s
    sigma_s: float    # sheet conductance sigma*thickness, S
    gap: float        # iron-to-iron clearance, m

    def __post_init__(self):
        if not self.tau_p > 0:
            raise OracleError(f"tau_p must be positive, got {self.tau_p!r}")
        if not self.sigma_s >= 0:
            raise OracleError(f"sigma_s must be non-negative, got {self.sigma_s!r}")
        if not self.gap > 0:
            raise OracleError(f"gap must be positive, got {self.gap!r}")

    @property
    def k(self) -> float:
        return math.pi / self.tau_p


def slab_eddy_force(p: SlabCaseParams) -> tuple[float, float]:
    """Time-averaged shear stress (N/m^2) and loss per area (W/m^2) on the sheet.

    The sheet lies on one iron face, the field source on the other. With
    ``s = mu0*sigma_s*v`` the sheet current is ``sigma_s*v*B_y`` and

        B_y = B0 / (1 + j*s*coth(k*gap))

    so the stress is ``sigma_s*v*B0**2 / (2*(1 + (s*coth(k*gap))**2))`` and
    the loss is stress times ``v``. The stress peaks at
    ``v = tanh(k*gap) / (mu0*sigma_s)``.
    """
    s = MU0 * p.sigma_s * p.v / math.tanh(p.k * p.gap)
    stress = 0.5 * p.sigma_s * p.v * p.B0**2 / (1.0 + s * s)
    return stress, stress * p.v


def slab_peak_velocity(tau_p: float, sigma_s: float, gap: float) -> float:
    return math.tanh(math.pi / tau_p * gap) / (MU0 * sigma_s)


# -- concentric cylinders --------------------------------------------------

@dataclass(frozen=True)
class CylinderField:
    """``A(r, theta) = f(r) cos(p theta)`` with ``f = a r^p + b r^-p`` per annulus."""

    K: float
    p: int
    radii: tuple[float, ...]
    mu_r: tuple[float, ...]
    sheet_radius: float
    a: np.ndarray
    b: np.ndarray

    def _annulus(self, r):
        return np.minimum(np.searchsorted(self.radii, r, side="left"), len(self.radii) - 1)

    def f(self, r):
        r = np.asarray(r, dtype=float)
        i = self._annulus(r)
        rs = r / self.radii[-1]
        with np.errstate(divide="ignore"):
            neg = np.where(self.b[i] != 0, self.b[i] * rs ** (-self.p), 0.0)
        return self.a[i] * rs**self.p + neg

    def df(self, r):
        r = np.asarray(r, dtype=float)
        i = self._annulus(r)
        R = self.radii[-1]
        rs = r / R
        with np.errstate(divide="ignore", invalid="ignore"):
            neg = np.where(self.b[i] != 0, -self.p * self.b[i] * rs ** (-self.p - 1), 0.0)
            pos = np.where(self.a[i] != 0, self.p * self.a[i] * rs ** (self.p - 1), 0.0)
        return (pos + neg) / R

    def A(self, r, theta):
        return self.f(r) * np.cos(self.p * np.asarray(theta))

    def B(self, r, theta):
        """``(B_r, B_theta)`` at polar points."""
        r = np.asarray(r, dtype=float)
        theta = np.asarray(theta, dtype=float)
        Br = -self.p * self.f(r) / r * np.sin(self.p * theta)
        Bt = -self.df(r) * np.cos(self.p * theta)
        return Br, Bt

    def Br_amplitude(self, r):
        return self.p * np.abs(self.f(r)) / np.asarray(r, dtype=float)


def harmonic_cylinder_field(K: float, p: int, radii, mu_r, sheet_radius: float) -> CylinderField:
    """Field of the current sheet ``K cos(p theta)`` (A/m) at ``sheet_radius``.

    ``radii`` are the outer radii of the annuli (the first annulus contains
    the axis) and ``mu_r`` their relative permeabilities. The sheet must lie
    on one of the interior interfaces; ``A = 0`` on ``radii[-1]``.
    """
    radii = tuple(float(r) for r in radii)
    mu_r = tuple(float(m) for m in mu_r)
    if len(radii) != len(mu_r) or not radii:
        raise OracleError("radii and mu_r must have the same non-zero length")
    if radii[0] <= 0 or any(b <= a for a, b in zip(radii[:-1], radii[1:])):
        raise OracleError(f"radii must be positive and strictly increasing, got {radii}")
    if any(m <= 0 for m in mu_r):
        raise OracleError("relative permeabilities must be positive")
    if int(p) != p or p < 1:
        raise OracleError(f"p must be a positive integer, got {p!r}")
    p = int(p)
    matches = [j for j, r in enumerate(radii[:-1]) if abs(r - sheet_radius) <= 1e-12 * radii[-1]]
    if not matches:
        raise OracleError(f"sheet radius {sheet_radius} is not an interior interface of {radii}")
    js = matches[0]

    n = len(radii)
    R = radii[-1]
    # unknowns: a_0..a_{n-1}, b_1..b_{n-1} (b_0 = 0 keeps the axis regular)
    size = 2 * n - 1

    def col_a(i):
        return i

    def col_b(i):
        return n + i - 1

    M = np.zeros((size, size))
    rhs = np.zeros(size)
    row = 0
    for j in range(n - 1):
        rs = radii[j] / R
        # continuity of f
        M[row, col_a(j)] = rs**p
        if j > 0:
            M[row, col_b(j)] = rs**-p
        M[row, col_a(j + 1)] = -(rs**p)
        M[row, col_b(j + 1)] = -(rs**-p)
        row += 1
        # H_theta = -nu f'; outer minus inner equals K (times R/p to scale)
        nu_in, nu_out = NU0 / mu_r[j], NU0 / mu_r[j + 1]
        M[row, col_a(j + 1)] = -nu_out * rs ** (p - 1)
        M[row, col_b(j + 1)] = nu_out * rs ** (-p - 1)
        M[row, col_a(j)] = nu_in * rs ** (p - 1)
        if j > 0:
            M[row, col_b(j)] = -nu_in * rs ** (-p - 1)
        rhs[row] = K * R / p if j == js else 0.0
        row += 1
    M[row, col_a(n - 1)] = 1.0
    if n > 1:
        M[row, col_b(n - 1)] = 1.0
    coef = np.linalg.solve(M, rhs)
    a = coef[:n].copy()
    b = np.concatenate([[0.0], coef[n:]])
    return CylinderField(K, p, radii, mu_r, radii[js], a, b)


def sheet_load(mesh: Mesh, radius: float, K: float, p: int) -> np.ndarray:
    """Nodal load of the line current ``K cos(p theta)`` on the node ring at ``radius``."""
    edges, _ = mesh.edges
    r = np.hypot(*mesh.nodes.T)
    on = np.abs(r - radius) < 1e-9 * radius
    ring = edges[on[edges[:, 0]] & on[edges[:, 1]]]
    if len(ring) == 0:
        raise OracleError(f"no mesh edges on r={radius}")
    # 3-point Gauss on each chord, linear shape functions
    g = np.array([0.5 - math.sqrt(0.15), 0.5, 0.5 + math.sqrt(0.15)])
    w = np.array([5.0, 8.0, 5.0]) / 18.0
    p0, p1 = mesh.nodes[ring[:, 0]], mesh.nodes[ring[:, 1]]
    length = np.linalg.norm(p1 - p0, axis=1)
    pts = p0[:, None, :] + g[None, :, None] * (p1 - p0)[:, None, :]
    vals = K * np.cos(p * np.arctan2(pts[..., 1], pts[..., 0]))
    f = np.zeros(mesh.n_nodes)
    np.add.at(f, ring[:, 0], length * ((vals * (1 - g)) @ w))
    np.add.at(f, ring[:, 1], length * ((vals * g) @ w))
    return f


def annular_materials(mesh: Mesh, mu_r, length: float = 1.0) -> ElementMaterials:
    """Linear, unmagnetised, non-conducting media with one permeability per annulus."""
    radii = np.asarray(mesh.region_map.interfaces)
    mu_r = np.asarray(mu_r, dtype=float)
    if mu_r.shape != radii.shape:
        raise OracleError(f"need {len(radii)} permeabilities, got {mu_r.size}")
    rc = np.hypot(*mesh.centroids.T)
    idx = np.minimum(np.searchsorted(radii, rc), len(radii) - 1)
    E = mesh.n_elements
    z = np.zeros(E)
    return ElementMaterials(NU0 / mu_r[idx], np.full(E, -1, dtype=np.int64), (), z.copy(),
                            np.zeros((E, 2)), z.copy(), z.copy(), length)


# -- manufactured solution --------------------------------------------------

@dataclass(frozen=True)
class MMSCase:
    """Exact ``A = (r/R)^k (1 - (r/R)^2) cos(k theta)`` for

        -nu lap(A) + sigma_omega * dA/dtheta = source
    """

    k: int
    R: float
    nu: float
    sigma_omega: float

    def exact(self, x, y):
        if self.k == 0:
            return np.zeros_like(np.asarray(x, dtype=float))
        z = (np.asarray(x) + 1j * np.asarray(y)) / self.R
        rho2 = np.abs(z) ** 2
        return np.real(z**self.k) * (1.0 - rho2)

    def source(self, x, y):
        if self.k == 0:
            return np.zeros_like(np.asarray(x, dtype=float))
        k = self.k
        z = (np.asarray(x) + 1j * np.asarray(y)) / self.R
        zk = z**k
        rho2 = np.abs(z) ** 2
        diffusion = 4.0 * self.nu * (k + 1) * np.real(zk) / self.R**2
        # dA/dtheta = -k f sin(k theta)
        convection = -self.sigma_omega * k * np.imag(zk) * (1.0 - rho2)
        return diffusion + convection


def mms_case(k: int, R: float = 1.0, nu: float = 1.0, sigma_omega: float = 0.0) -> MMSCase:
    if int(k) != k or k < 0:
        raise OracleError(f"wavenumber k must be a non-negative integer, got {k!r}")
    if not R > 0:
        raise OracleError("R must be positive")
    return MMSCase(int(k), float(R), float(nu), float(sigma_omega))


def l2_error(mesh: Mesh, A: np.ndarray, exact) -> float:
    """L2 norm of ``A_h - exact`` with a degree-4 rule per element."""
    from .fem import QUAD6, QUAD6_W

    pts = np.einsum("qk,ekd->eqd", QUAD6, mesh.nodes[mesh.elements])
    Ah = np.einsum("qk,ek->eq", QUAD6, A[mesh.elements])
    err = Ah - exact(pts[..., 0], pts[..., 1])
    return float(math.sqrt(np.sum(mesh.areas * ((err**2) @ QUAD6_W))))
