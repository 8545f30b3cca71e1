"""Magnetic equivalent circuit of the spoke rotor and a first-harmonic torque model.

Each pole contributes three nodes (pole-piece body, pole surface, yoke
above the pole) and five branch kinds: spoke magnet, pole iron, air gap,
outer-yoke segment and the shaft leakage path around the magnet's inner end.
The network is solved for node potentials and branch fluxes together, so
saturating iron branches need no inverse B-H lookup.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .fem import ConvergenceError, SolverOptions
from .geometry import CouplerSpec, GeometryError, build_region_map, radial_build
from .materials import MU0, LinearMaterial, MaterialMap
from .oracles import SlabCaseParams, slab_eddy_force
from .postprocess import SweepRow, TorqueSpeedCurve

log = logging.getLogger(__name__)

DEFAULT_UTILIZATION = 0.9


class Branch(enum.IntEnum):
    MAGNET = 0
    POLE_IRON = 1
    AIRGAP = 2
    YOKE = 3
    LEAKAGE = 4


@dataclass(frozen=True)
class MagneticNetwork:
    """Branch list of the full ring of ``n_poles`` cells.

    ``drop(branch) = U[src] - U[dst] + mmf = R(phi) * phi`` where ``R`` is
    ``length / (mu * area)`` and ``mu`` comes from the branch material.
    Node 0 is the potential reference.
    """

    n_poles: int
    n_nodes: int
    src: np.ndarray
    dst: np.ndarray
    kind: np.ndarray
    length: np.ndarray
    area: np.ndarray
    mu_r: np.ndarray        # linear relative permeability, NaN for B-H branches
    mmf: np.ndarray         # A-turns
    curve: object           # B-H curve shared by the iron branches
    gap_area: float         # A_g, the pole-arc face area of one air-gap branch
    pitch_area: float       # one pole pitch at the mean gap radius times L_ax
    pole_embrace: float     # pole arc / pole pitch
    utilization: float

    def __post_init__(self):
        if np.any(self.area <= 0) or np.any(self.length <= 0):
            raise GeometryError("magnetic network has a branch with non-positive length or area")

    @property
    def n_branches(self) -> int:
        return len(self.src)

    def branches(self, kind: Branch) -> np.ndarray:
        return np.flatnonzero(self.kind == int(kind))

    def reluctance(self, phi: np.ndarray):
        """Chord reluctance ``R(phi)`` and the derivative of ``R(phi)*phi``."""
        R = np.empty(self.n_branches)
        dF = np.empty(self.n_branches)
        lin = ~np.isnan(self.mu_r)
        R[lin] = self.length[lin] / (MU0 * self.mu_r[lin] * self.area[lin])
        dF[lin] = R[lin]
        nl = ~lin
        if np.any(nl):
            B = phi[nl] / self.area[nl]
            nu, dnu = self.curve.reluctivity(B * B)
            R[nl] = nu * self.length[nl] / self.area[nl]
            # d(nu(B^2) B)/dB = nu + 2 B^2 dnu
            dF[nl] = (nu + 2.0 * B * B * dnu) * self.length[nl] / self.area[nl]
        return R, dF

    def with_mmf_scale(self, factor: float) -> "MagneticNetwork":
        return replace(self, mmf=self.mmf * factor)

    def without(self, kind: Branch) -> "MagneticNetwork":
        """Copy with every branch of ``kind`` removed (open circuit)."""
        keep = self.kind != int(kind)
        return replace(self, src=self.src[keep], dst=self.dst[keep], kind=self.kind[keep],
                       length=self.length[keep], area=self.area[keep], mu_r=self.mu_r[keep],
                       mmf=self.mmf[keep])


def _mu_r_of(material) -> float:
    """Linear permeability of a material; B-H curves use their initial slope."""
    if isinstance(material, LinearMaterial):
        return material.mu_r
    return float(material.mu_r_init)


def build_network(spec: CouplerSpec, materials: MaterialMap | None = None, *,
                  leakage: bool = True, gap_area_scale: float = 1.0,
                  utilization: float = DEFAULT_UTILIZATION) -> MagneticNetwork:
    """Reluctance network for ``spec``; lengths and areas follow the region map."""
    materials = materials or MaterialMap.for_spec(spec)
    if not 0 < utilization <= 1:
        raise GeometryError(f"utilization must lie in (0, 1], got {utilization!r}")
    if not gap_area_scale > 0:
        raise GeometryError(f"gap_area_scale must be positive, got {gap_area_scale!r}")
    rmap = build_region_map(spec)
    r_sh, r_rotor, r_gap, r_cs, r_out = radial_build(spec)
    L = spec.L_ax
    pitch = spec.pole_pitch_angle
    n = spec.N_pm
    iron_curve = materials.iron
    iron_mu = math.nan if not isinstance(iron_curve, LinearMaterial) else iron_curve.mu_r
    mag_gap = spec.g + spec.L_cs
    r_gap_mean = r_rotor + 0.5 * mag_gap
    gap_area = rmap.iron_arc * r_gap_mean * L * gap_area_scale
    if gap_area <= 0:
        raise GeometryError("pole arc vanishes; the air-gap branch has no area")

    pole_width = rmap.iron_arc * spec.r_magnet_mean
    tip_gap = rmap.magnet_arc * r_sh            # magnet width at its inner end
    face = 0.5 * rmap.iron_arc * r_sh           # pole inner face available on each side
    mu_shaft = _mu_r_of(materials.shaft_material)
    # two coplanar faces bridged through a half-space: P = mu L / pi * ln(1 + pi x / w)
    leak_perm_factor = math.log1p(math.pi * face / tip_gap) / math.pi

    src, dst, kind, length, area, mu_r, mmf = ([] for _ in range(7))

    def add(a, b, k, l, A, m, f=0.0):
        src.append(a)
        dst.append(b)
        kind.append(int(k))
        length.append(l)
        area.append(A)
        mu_r.append(m)
        mmf.append(f)

    def P(k):
        return 3 * (k % n)

    def G(k):
        return 3 * (k % n) + 1

    def Y(k):
        return 3 * (k % n) + 2

    H_c = materials.pm.H_c
    for k in range(n):
        sign = 1.0 if k % 2 == 0 else -1.0
        # magnet k sits between pole pieces k-1 and k; +theta magnetisation pushes flux k-1 -> k
        add(P(k - 1), P(k), Branch.MAGNET, spec.h_m, spec.L_yp * L, materials.pm.mu_r, sign * H_c * spec.h_m)
        if leakage:
            add(P(k - 1), P(k), Branch.LEAKAGE, 1.0, leak_perm_factor * L, mu_shaft)
        add(P(k), G(k), Branch.POLE_IRON, 0.5 * spec.L_yp, pole_width * L, iron_mu)
        add(G(k), Y(k), Branch.AIRGAP, mag_gap, gap_area, 1.0)
        add(Y(k), Y(k + 1), Branch.YOKE, pitch * 0.5 * (r_cs + r_out), spec.L_ys * L, iron_mu)

    # leakage branches carry their shape factor in ``area`` with unit length
    arr = lambda x, t=float: np.asarray(x, dtype=t)  # noqa: E731
    return MagneticNetwork(
        n_poles=n, n_nodes=3 * n,
        src=arr(src, np.int64), dst=arr(dst, np.int64), kind=arr(kind, np.int64),
        length=arr(length), area=arr(area), mu_r=arr(mu_r), mmf=arr(mmf),
        curve=iron_curve, gap_area=gap_area,
        pitch_area=pitch * r_gap_mean * L, pole_embrace=rmap.iron_arc / pitch,
        utilization=utilization,
    )


@dataclass(frozen=True)
class NetworkSolution:
    net: MagneticNetwork
    U: np.ndarray           # node potentials, A
    phi: np.ndarray         # branch fluxes, Wb
    iterations: int
    residual_history: list

    def node_balance(self) -> np.ndarray:
        out = np.zeros(self.net.n_nodes)
        np.add.at(out, self.net.src, -self.phi)
        np.add.at(out, self.net.dst, self.phi)
        return out

    def flux_density(self) -> np.ndarray:
        return self.phi / self.net.area

    def gap_flux(self) -> float:
        """Mean |flux| crossing one air-gap branch."""
        return float(np.mean(np.abs(self.phi[self.net.branches(Branch.AIRGAP)])))


def _residual(net: MagneticNetwork, U: np.ndarray, phi: np.ndarray):
    R, dF = net.reluctance(phi)
    branch = U[net.src] - U[net.dst] + net.mmf - R * phi
    kcl = np.zeros(net.n_nodes)
    np.add.at(kcl, net.src, -phi)
    np.add.at(kcl, net.dst, phi)
    return np.concatenate([kcl[1:], branch]), dF


def _jacobian(net: MagneticNetwork, dF: np.ndarray) -> np.ndarray:
    nb, nn = net.n_branches, net.n_nodes
    J = np.zeros((nn - 1 + nb, nn - 1 + nb))
    rows = np.arange(nb)
    inc = np.zeros((nn, nb))
    inc[net.src, rows] -= 1.0
    inc[net.dst, rows] += 1.0
    J[: nn - 1, nn - 1:] = inc[1:]
    J[nn - 1:, : nn - 1] = -inc[1:].T
    J[nn - 1 + rows, nn - 1 + rows] = -dF
    return J


def solve_network(net: MagneticNetwork, opts: SolverOptions | None = None) -> NetworkSolution:
    """Newton iteration on potentials and fluxes with backtracking.

    Converged when the residual, relative to the magnet MMF and the flux a
    magnet would drive through its own reluctance, drops below
    ``1e-4 * opts.newton_tol`` (1e-12 by default), which keeps node flux
    imbalance below 1e-10 of the flux scale.
    """
    opts = opts or SolverOptions()
    nn, nb = net.n_nodes, net.n_branches
    x = np.zeros(nn - 1 + nb)
    mmf_scale = float(np.max(np.abs(net.mmf), initial=0.0))
    if mmf_scale == 0.0:
        return NetworkSolution(net, np.zeros(nn), np.zeros(nb), 0, [0.0])
    R0, _ = net.reluctance(np.zeros(nb))
    phi_scale = mmf_scale / float(np.min(R0))
    weights = np.concatenate([np.full(nn - 1, 1.0 / phi_scale), np.full(nb, 1.0 / mmf_scale)])
    tol = 1e-4 * opts.newton_tol

    def unpack(v):
        return np.concatenate([[0.0], v[: nn - 1]]), v[nn - 1:]

    F, dF = _residual(net, *unpack(x))
    norm = float(np.linalg.norm(F * weights))
    history = [norm]
    it = 0
    while norm > tol:
        if it >= opts.max_newton_iters:
            raise ConvergenceError(f"network Newton did not converge in {opts.max_newton_iters} iterations",
                                   history)
        dx = np.linalg.solve(_jacobian(net, dF), -F)
        step = 1.0
        for _ in range(opts.max_halvings + 1):
            trial = x + step * dx
            F_try, dF_try = _residual(net, *unpack(trial))
            n_try = float(np.linalg.norm(F_try * weights))
            if n_try < norm:
                break
            step *= opts.backtrack
        else:
            raise ConvergenceError("network line search failed to reduce the residual", history)
        x, F, dF, norm = trial, F_try, dF_try, n_try
        it += 1
        history.append(norm)
    U, phi = unpack(x)
    log.debug("network solved in %d iterations, residual %.2e", it, norm)
    return NetworkSolution(net, U, phi, it, history)


def mec_airgap_flux(sol: NetworkSolution) -> float:
    """No-load fundamental amplitude of the air-gap flux density (T).

    The gap field over a pole is taken as a rectangle of height
    ``utilization * phi_gap / A_g`` spanning the pole embrace ``alpha``;
    its first harmonic has amplitude ``(4/pi) * height * sin(alpha*pi/2)``.
    """
    net = sol.net
    height = net.utilization * sol.gap_flux() / net.gap_area
    return 4.0 / math.pi * height * math.sin(0.5 * math.pi * net.pole_embrace)


def rotor_reaction_gap(sol: NetworkSolution) -> float:
    """Extra clearance (m) the reaction field sees in the rotor.

    Reaction flux that enters one pole piece must return through the two
    adjacent magnets and leakage paths, whose mid-points sit at zero potential
    for an alternating pole pattern. That incremental reluctance, referred
    to one pole pitch of gap surface, is expressed as an air length.
    """
    net = sol.net
    _, dF = net.reluctance(sol.phi)
    mag = net.branches(Branch.MAGNET)
    leak = net.branches(Branch.LEAKAGE)
    pole = net.branches(Branch.POLE_IRON)
    perm = 4.0 / float(np.mean(dF[mag]))
    if len(leak):
        perm += 4.0 / float(np.mean(dF[leak]))
    R_rotor = 1.0 / perm + float(np.mean(dF[pole]))
    return MU0 * net.pitch_area * R_rotor


@dataclass(frozen=True)
class SlabTorqueModel:
    B0: float
    tau_p: float
    sigma_s: float
    gap: float
    radius: float
    length: float
    thickness: float

    def row(self, omega: float) -> SweepRow:
        v = omega * self.radius
        stress, loss_area = slab_eddy_force(SlabCaseParams(self.B0, self.tau_p, v, self.sigma_s, self.gap))
        area = 2.0 * math.pi * self.radius * self.length
        torque = stress * area * self.radius
        loss = loss_area * area
        # sheet current amplitude sigma_s*v*|B_y|, from the stress
        K = math.sqrt(2.0 * abs(stress) * self.sigma_s * abs(v)) if v else 0.0
        J_peak = K / self.thickness * 1e-6
        return SweepRow(omega, torque, torque, loss, 2.0 / math.pi * J_peak, J_peak, math.nan, math.nan)


def slab_model(B_g0: float, spec: CouplerSpec, materials: MaterialMap,
               extra_gap: float = 0.0) -> SlabTorqueModel:
    if not B_g0 > 0:
        raise ValueError(f"B_g0 must be positive, got {B_g0!r}")
    return SlabTorqueModel(
        B0=B_g0,
        tau_p=spec.pole_pitch_cs,
        sigma_s=materials.conductor.sigma_eff * spec.L_cs,
        gap=spec.g + spec.L_cs + extra_gap,
        radius=spec.r_cs_mean,
        length=spec.L_ax,
        thickness=spec.L_cs,
    )


def mec_torque_curve(B_g0: float, spec: CouplerSpec, materials: MaterialMap, slips,
                     extra_gap: float = 0.0) -> TorqueSpeedCurve:
    """Torque-speed curve of the moving-sheet layer model driven by ``B_g0``.

    ``extra_gap`` adds rotor-side clearance for the reaction field (see
    ``rotor_reaction_gap``). Demag margin is not modelled and is left NaN.
    """
    model = slab_model(B_g0, spec, materials, extra_gap)
    return TorqueSpeedCurve([model.row(float(w)) for w in slips])


def mec_curve(spec: CouplerSpec, materials: MaterialMap, slips,
              utilization: float = DEFAULT_UTILIZATION) -> tuple[float, TorqueSpeedCurve]:
    """Network solve, fundamental extraction and torque curve in one call."""
    sol = solve_network(build_network(spec, materials, utilization=utilization))
    B_g0 = mec_airgap_flux(sol)
    return B_g0, mec_torque_curve(B_g0, spec, materials, slips, rotor_reaction_gap(sol))
