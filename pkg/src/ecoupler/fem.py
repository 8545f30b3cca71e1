"""Steady nonlinear magneto-quasistatic solver in the magnet reference frame.

Unknown: nodal out-of-plane vector potential ``A`` on first-order triangles.
Governing equation, with the sheet moving at angular speed ``omega``::

    -div(nu(|B|^2) grad A) + sigma_eff * omega * dA/dtheta = curl(H_c m) + s

The magnet term enters as equivalent current sheets ``K = H_c (m x n)`` on
the edges bounding each magnet. ``A = 0`` on the outer radius.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import Region
from .materials import MU0, NU0, LinearMaterial, MaterialMap
from .mesh import Mesh

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


class ConvergenceError(SolverError):
    def __init__(self, message: str, history: list[float]):
        super().__init__(f"{message}; residual history: " + ", ".join(f"{r:.3e}" for r in history))
        self.history = list(history)


@dataclass(frozen=True)
class SolverOptions:
    newton_tol: float = 1e-8
    max_newton_iters: int = 40
    backtrack: float = 0.5
    max_halvings: int = 8
    stabilization: str = "none"  # or "streamline"
    linear_solver: str = "direct"  # or "iterative"
    max_slip: float = 1000.0

    def __post_init__(self):
        if not self.newton_tol > 0:
            raise ValueError("newton_tol must be positive")
        if self.max_newton_iters < 1:
            raise ValueError("max_newton_iters must be >= 1")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtrack factor must lie in (0, 1)")
        if self.stabilization not in ("none", "streamline"):
            raise ValueError(f"unknown stabilization {self.stabilization!r}")
        if self.linear_solver not in ("direct", "iterative"):
            raise ValueError(f"unknown linear solver {self.linear_solver!r}")


@dataclass(frozen=True)
class ElementMaterials:
    """Per-element constitutive data resolved from a MaterialMap."""

    nu_lin: np.ndarray      # constant reluctivity, NaN where a B-H curve applies
    curve_id: np.ndarray    # index into ``curves`` or -1
    curves: tuple
    sigma: np.ndarray       # effective conductivity S/m
    mhat: np.ndarray        # (E, 2) magnetisation direction (zero outside magnets)
    H_c: np.ndarray         # coercivity per element, A/m (zero outside magnets)
    B_r: np.ndarray         # remanence per element, T
    length: float           # axial length, m

    @property
    def magnetization(self) -> np.ndarray:
        return self.H_c[:, None] * self.mhat

    def reluctivity(self, B2: np.ndarray):
        nu = self.nu_lin.copy()
        dnu = np.zeros_like(nu)
        for cid, curve in enumerate(self.curves):
            sel = self.curve_id == cid
            if np.any(sel):
                nu[sel], dnu[sel] = curve.reluctivity(B2[sel])
        return nu, dnu


def magnet_directions(mesh: Mesh) -> np.ndarray:
    """Unit tangential magnetisation of each element's magnet (zeros elsewhere)."""
    out = np.zeros((mesh.n_elements, 2))
    sel = mesh.magnet >= 0
    k = mesh.magnet[sel]
    theta = k * mesh.region_map.spec.pole_pitch_angle
    pol = np.where(k % 2 == 0, 1.0, -1.0)
    out[sel, 0] = -pol * np.sin(theta)
    out[sel, 1] = pol * np.cos(theta)
    return out


def resolve_materials(mesh: Mesh, materials: MaterialMap, magnetized: bool = True) -> ElementMaterials:
    E = mesh.n_elements
    nu_lin = np.full(E, NU0)
    curve_id = np.full(E, -1, dtype=np.int64)
    curves: list = []

    def assign(mask, mat):
        if isinstance(mat, LinearMaterial):
            nu_lin[mask] = NU0 / mat.mu_r
            return
        if mat not in curves:
            curves.append(mat)
        nu_lin[mask] = np.nan
        curve_id[mask] = curves.index(mat)

    assign(mesh.mask(Region.POLE_IRON) | mesh.mask(Region.OUTER_YOKE), materials.iron)
    assign(mesh.mask(Region.SHAFT), materials.shaft_material)
    pm = mesh.mask(Region.PM)
    nu_lin[pm] = materials.pm.nu
    sigma = np.where(mesh.mask(Region.CS), materials.conductor.sigma_eff, 0.0)
    mhat = magnet_directions(mesh)
    scale = 1.0 if magnetized else 0.0
    H_c = np.where(pm, materials.pm.H_c * scale, 0.0)
    B_r = np.where(pm, materials.pm.B_r * scale, 0.0)
    return ElementMaterials(nu_lin, curve_id, tuple(curves), sigma, mhat, H_c, B_r,
                            mesh.region_map.spec.L_ax)


def uniform_materials(mesh: Mesh, nu: float, sigma: float = 0.0, length: float = 1.0) -> ElementMaterials:
    """Homogeneous linear medium over the whole mesh (verification cases)."""
    E = mesh.n_elements
    z = np.zeros(E)
    return ElementMaterials(np.full(E, nu), np.full(E, -1, dtype=np.int64), (), np.full(E, sigma),
                            np.zeros((E, 2)), z, z.copy(), length)


# 6-point, degree-4 rule on the reference triangle (barycentric, weights sum to 1)
_Q6_A, _Q6_B = 0.445948490915965, 0.091576213509771
_Q6_WA, _Q6_WB = 0.223381589678011, 0.109951743655322
QUAD6 = np.array([
    [_Q6_A, _Q6_A, 1 - 2 * _Q6_A], [_Q6_A, 1 - 2 * _Q6_A, _Q6_A], [1 - 2 * _Q6_A, _Q6_A, _Q6_A],
    [_Q6_B, _Q6_B, 1 - 2 * _Q6_B], [_Q6_B, 1 - 2 * _Q6_B, _Q6_B], [1 - 2 * _Q6_B, _Q6_B, _Q6_B],
])
QUAD6_W = np.array([_Q6_WA] * 3 + [_Q6_WB] * 3)
# edge-midpoint rule, exact for quadratics
QUAD_MID = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
QUAD_MID_W = np.full(3, 1.0 / 3.0)


def source_load(mesh: Mesh, func) -> np.ndarray:
    """Consistent nodal load ``int s N_i`` for a distributed source ``s(x, y)``."""
    p = mesh.nodes[mesh.elements]
    pts = np.einsum("qk,ekd->eqd", QUAD6, p)
    vals = func(pts[..., 0], pts[..., 1])
    contrib = np.einsum("eq,qk,q->ek", vals, QUAD6, QUAD6_W) * mesh.areas[:, None]
    f = np.zeros(mesh.n_nodes)
    np.add.at(f, mesh.elements, contrib)
    return f


def magnet_edge_currents(mesh: Mesh, magnetization: np.ndarray):
    """Equivalent surface currents on magnet boundary edges.

    Returns ``(edge_ids, K)`` with ``K = (M x n)_z`` in A/m on each edge
    where the magnetisation jumps.
    """
    edges, el_edges = mesh.edges
    sel = np.flatnonzero(np.any(magnetization != 0, axis=1))
    K_len = np.zeros(len(edges))
    p = mesh.nodes[mesh.elements[sel]]
    M = magnetization[sel]
    for i in range(3):
        t = p[:, (i + 2) % 3] - p[:, (i + 1) % 3]
        # outward normal times edge length for a counterclockwise triangle
        nx, ny = t[:, 1], -t[:, 0]
        np.add.at(K_len, el_edges[sel, i], M[:, 0] * ny - M[:, 1] * nx)
    length = np.linalg.norm(mesh.nodes[edges[:, 1]] - mesh.nodes[edges[:, 0]], axis=1)
    ids = np.flatnonzero(np.abs(K_len) > 1e-12 * max(np.abs(K_len).max(initial=0.0), 1e-300))
    return ids, K_len[ids] / length[ids]


def magnet_load(mesh: Mesh, magnetization: np.ndarray) -> np.ndarray:
    edges, _ = mesh.edges
    ids, K = magnet_edge_currents(mesh, magnetization)
    length = np.linalg.norm(mesh.nodes[edges[ids, 1]] - mesh.nodes[edges[ids, 0]], axis=1)
    f = np.zeros(mesh.n_nodes)
    half = 0.5 * K * length
    np.add.at(f, edges[ids, 0], half)
    np.add.at(f, edges[ids, 1], half)
    return f


def free_dofs(mesh: Mesh) -> np.ndarray:
    mask = np.ones(mesh.n_nodes, dtype=bool)
    mask[mesh.boundary] = False
    return np.flatnonzero(mask)


class _System:
    """Fixed sparsity pattern and linear operators for one mesh/material set."""

    def __init__(self, mesh: Mesh, elem: ElementMaterials, omega: float, opts: SolverOptions,
                 load: np.ndarray | None):
        self.mesh = mesh
        self.elem = elem
        self.omega = omega
        free = free_dofs(mesh)
        self.free = free
        self.index = np.full(mesh.n_nodes, -1, dtype=np.int64)
        self.index[free] = np.arange(len(free))
        el = mesh.elements
        rows = np.repeat(el, 3, axis=1).ravel()
        cols = np.tile(el, (1, 3)).ravel()
        ri, ci = self.index[rows], self.index[cols]
        self.keep = (ri >= 0) & (ci >= 0)
        self.rows, self.cols = ri[self.keep], ci[self.keep]
        self.n = len(free)
        G = mesh.gradients
        self.G = G
        self.GtG = np.einsum("eki,ekj->eij", G, G)
        self.nonlinear = elem.curve_id >= 0

        f = magnet_load(mesh, elem.magnetization)
        if load is not None:
            f = f + load
        self.f = f[free]

        self.conv = self._matrix(self._convection_blocks(opts))

    def _convection_blocks(self, opts: SolverOptions) -> np.ndarray:
        mesh, elem = self.mesh, self.elem
        E = mesh.n_elements
        blocks = np.zeros((E, 3, 3))
        cond = elem.sigma > 0
        if self.omega == 0.0 or not np.any(cond):
            return blocks
        p = mesh.nodes[mesh.elements[cond]]
        area = mesh.areas[cond]
        G = self.G[cond]
        # int N_i x dS = area/12 * (sum x + x_i)
        xbar = (p[..., 0].sum(axis=1)[:, None] + p[..., 0]) * area[:, None] / 12.0
        ybar = (p[..., 1].sum(axis=1)[:, None] + p[..., 1]) * area[:, None] / 12.0
        sig = elem.sigma[cond] * self.omega
        blocks[cond] = sig[:, None, None] * (
            -ybar[:, :, None] * G[:, 0, None, :] + xbar[:, :, None] * G[:, 1, None, :]
        )
        if opts.stabilization == "streamline":
            c = mesh.centroids[cond]
            b = sig[:, None] * np.column_stack([-c[:, 1], c[:, 0]])
            bn = np.linalg.norm(b, axis=1)
            h = np.sqrt(2.0 * area)
            nu = elem.nu_lin[cond]
            pe = bn * h / (2.0 * nu)
            xi = np.where(pe > 1e-8, 1.0 / np.tanh(np.maximum(pe, 1e-8)) - 1.0 / np.maximum(pe, 1e-8), pe / 3.0)
            tau = np.where(bn > 0, h / (2.0 * np.maximum(bn, 1e-300)) * xi, 0.0)
            bg = np.einsum("ek,eki->ei", b, G)
            blocks[cond] += (tau * area)[:, None, None] * bg[:, :, None] * bg[:, None, :]
        return blocks

    def _matrix(self, blocks: np.ndarray) -> sp.csr_matrix:
        data = blocks.reshape(-1)[self.keep]
        return sp.csr_matrix((data, (self.rows, self.cols)), shape=(self.n, self.n))

    def full(self, a_free: np.ndarray) -> np.ndarray:
        A = np.zeros(self.mesh.n_nodes)
        A[self.free] = a_free
        return A

    def fields(self, A: np.ndarray):
        grad = np.einsum("eki,ei->ek", self.G, A[self.mesh.elements])
        B2 = np.einsum("ek,ek->e", grad, grad)
        nu, dnu = self.elem.reluctivity(B2)
        bad = np.flatnonzero(~np.isfinite(nu))
        if len(bad):
            raise SolverError(f"non-finite reluctivity in element {int(bad[0])}")
        return grad, nu, dnu

    def residual(self, a_free: np.ndarray, want_jacobian: bool = False):
        A = self.full(a_free)
        grad, nu, dnu = self.fields(A)
        area = self.mesh.areas
        flux = np.einsum("eki,ek->ei", self.G, grad)  # G^T grad A, per element
        r_el = (area * nu)[:, None] * flux
        r = np.zeros(self.mesh.n_nodes)
        np.add.at(r, self.mesh.elements, r_el)
        R = r[self.free] + self.conv @ a_free - self.f
        if not want_jacobian:
            return R, nu
        blocks = (area * nu)[:, None, None] * self.GtG
        nl = self.nonlinear & (dnu != 0)
        if np.any(nl):
            w = (2.0 * area[nl] * dnu[nl])[:, None, None]
            blocks[nl] += w * flux[nl][:, :, None] * flux[nl][:, None, :]
        return R, nu, self._matrix(blocks) + self.conv

    def solve_linear(self, J: sp.csr_matrix, rhs: np.ndarray, opts: SolverOptions) -> np.ndarray:
        if opts.linear_solver == "direct":
            try:
                lu = spla.splu(J.tocsc())
            except RuntimeError as exc:
                raise SolverError(
                    f"singular system ({exc}); check that the outer-radius Dirichlet set "
                    f"({len(self.mesh.boundary)} nodes) is non-empty"
                ) from None
            return lu.solve(rhs)
        ilu = spla.spilu(J.tocsc(), drop_tol=1e-5, fill_factor=20)
        M = spla.LinearOperator(J.shape, ilu.solve)
        x, info = spla.gmres(J, rhs, M=M, rtol=1e-12, restart=200, maxiter=2000)
        if info != 0:
            raise SolverError(f"iterative linear solver failed (info={info})")
        return x


@dataclass
class FieldSolution:
    mesh: Mesh
    elem: ElementMaterials
    A: np.ndarray
    omega_slip: float
    omega: float
    nu: np.ndarray
    residual_history: list[float] = field(default_factory=list)
    iterations: int = 0
    peclet_max: float = 0.0
    materials: MaterialMap | None = None

    @property
    def final_residual(self) -> float:
        return self.residual_history[-1] if self.residual_history else 0.0

    @property
    def slip_sign(self) -> int:
        return self.mesh.region_map.spec.slip_direction


def peclet_numbers(mesh: Mesh, elem: ElementMaterials, omega: float, nu: np.ndarray) -> np.ndarray:
    """Mesh Peclet number sigma*mu*|omega|*r*h_theta/2 per conducting element."""
    cond = elem.sigma > 0
    r = np.hypot(*mesh.centroids[cond].T)
    h_theta = r * 2.0 * math.pi / mesh.n_theta
    return elem.sigma[cond] / nu[cond] * abs(omega) * r * h_theta / 2.0


def assemble(mesh: Mesh, materials, A_current: np.ndarray, omega_slip: float,
             opts: SolverOptions | None = None, load: np.ndarray | None = None):
    """Residual and Newton Jacobian restricted to the free (non-Dirichlet) nodes."""
    opts = opts or SolverOptions()
    elem = _as_elem(mesh, materials)
    omega = omega_slip * mesh.region_map.spec.slip_direction
    system = _System(mesh, elem, omega, opts, load)
    A_current = np.asarray(A_current, dtype=float)
    if A_current.shape != (mesh.n_nodes,):
        raise ValueError(f"A_current must have {mesh.n_nodes} entries, got {A_current.shape}")
    R, _, J = system.residual(A_current[system.free], want_jacobian=True)
    return R, J


def _as_elem(mesh, materials) -> ElementMaterials:
    if isinstance(materials, ElementMaterials):
        return materials
    if isinstance(materials, MaterialMap):
        return resolve_materials(mesh, materials)
    raise TypeError(f"unsupported material description {type(materials).__name__}")


def solve_steady(mesh: Mesh, materials, omega_slip: float, opts: SolverOptions | None = None,
                 initial: np.ndarray | None = None, load: np.ndarray | None = None) -> FieldSolution:
    """Newton solution of the steady problem at slip speed ``omega_slip`` (rad/s)."""
    opts = opts or SolverOptions()
    if abs(omega_slip) > opts.max_slip:
        raise ValueError(f"|omega_slip|={abs(omega_slip):g} rad/s exceeds max_slip={opts.max_slip:g}")
    elem = _as_elem(mesh, materials)
    omega = omega_slip * mesh.region_map.spec.slip_direction
    system = _System(mesh, elem, omega, opts, load)
    scale = float(np.linalg.norm(system.f))
    a = np.zeros(system.n) if initial is None else np.asarray(initial, dtype=float)[system.free].copy()
    history: list[float] = []
    if scale == 0.0:
        a[:] = 0.0
        _, nu = system.residual(a)
        return FieldSolution(mesh, elem, system.full(a), omega_slip, omega, nu, [0.0], 0,
                             materials=materials if isinstance(materials, MaterialMap) else None)

    R, nu, J = system.residual(a, want_jacobian=True)
    norm = float(np.linalg.norm(R))
    history.append(norm / scale)
    it = 0
    while history[-1] > opts.newton_tol:
        if it >= opts.max_newton_iters:
            raise ConvergenceError(f"Newton did not converge in {opts.max_newton_iters} iterations", history)
        da = system.solve_linear(J, -R, opts)
        step = 1.0
        for _ in range(opts.max_halvings + 1):
            trial = a + step * da
            R_try, _ = system.residual(trial)
            n_try = float(np.linalg.norm(R_try))
            if n_try < norm:
                break
            step *= opts.backtrack
        else:
            raise ConvergenceError("line search failed to reduce the residual", history)
        a = trial
        it += 1
        R, nu, J = system.residual(a, want_jacobian=True)
        norm = float(np.linalg.norm(R))
        history.append(norm / scale)
        log.debug("newton it=%d step=%.3g rel_residual=%.3e", it, step, history[-1])

    pe = peclet_numbers(mesh, elem, omega, nu)
    pe_max = float(pe.max()) if len(pe) else 0.0
    log.info("solve omega_slip=%g rad/s: %d Newton iterations, residual %.2e, max mesh Peclet %.3g",
             omega_slip, it, history[-1], pe_max)
    return FieldSolution(mesh, elem, system.full(a), omega_slip, omega, nu, history, it, pe_max,
                         materials=materials if isinstance(materials, MaterialMap) else None)
