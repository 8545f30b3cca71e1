"""FEM-versus-oracle studies shared by the ``oracle`` command and the test suite."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .fem import SolverOptions, solve_steady, source_load, uniform_materials
from .geometry import CouplerSpec, build_region_map
from .mesh import MeshDensity, generate_mesh, refine_uniform
from .oracles import (SlabCaseParams, annular_materials, harmonic_cylinder_field, l2_error, mms_case,
                      sheet_load, slab_eddy_force)
from .postprocess import airgap_fundamental

# linear stand-in for the coupler: iron annuli at constant permeability, no magnets
LINEAR_MU_R = (1.0, 1000.0, 1.0, 1.0, 1000.0)
SHEET_K = 1e5  # A/m


@dataclass(frozen=True)
class CylinderComparison:
    fem: float
    oracle: float

    @property
    def rel_error(self) -> float:
        return self.fem / self.oracle - 1.0


def cylinder_comparison(spec: CouplerSpec | None = None, density: MeshDensity | None = None,
                        refine: int = 0) -> CylinderComparison:
    """Air-gap B_r fundamental for a pole-pair current sheet on the rotor surface."""
    spec = spec or CouplerSpec()
    mesh = generate_mesh(build_region_map(spec), density or MeshDensity())
    for _ in range(refine):
        mesh = refine_uniform(mesh)
    p = spec.pole_pairs
    r_sheet = spec.R_sh + spec.L_yp
    elem = annular_materials(mesh, LINEAR_MU_R)
    sol = solve_steady(mesh, elem, 0.0, load=sheet_load(mesh, r_sheet, SHEET_K, p))
    field = harmonic_cylinder_field(SHEET_K, p, mesh.region_map.interfaces, LINEAR_MU_R, r_sheet)
    lo, hi = mesh.band
    # the FEM value averages over the band elements; average the oracle the same way
    ref = quad(lambda r: field.Br_amplitude(r) * r, lo, hi)[0] / (0.5 * (hi * hi - lo * lo))
    return CylinderComparison(airgap_fundamental(sol), float(ref))


@dataclass(frozen=True)
class MMSStudy:
    k: int
    sigma_omega: float
    n_elements: tuple
    errors: tuple

    @property
    def orders(self) -> tuple:
        e = self.errors
        return tuple(math.log2(a / b) for a, b in zip(e[:-1], e[1:]))


MMS_DENSITY = MeshDensity(n_theta=48, inner_yoke=4, airgap=1, cs=1, outer_yoke=2)


def mms_study(k: int = 3, peclet: float = 0.0, levels: int = 3, spec: CouplerSpec | None = None,
              density: MeshDensity = MMS_DENSITY) -> MMSStudy:
    """L2 errors of the manufactured solution over ``levels`` uniform refinements.

    ``peclet`` is ``sigma*omega*R^2/nu`` for the disk of radius ``R``.
    """
    spec = spec or CouplerSpec()
    mesh = generate_mesh(build_region_map(spec), density)
    R = mesh.r_out
    case = mms_case(k, R=R, nu=1.0, sigma_omega=peclet / R**2)
    sizes, errors = [], []
    opts = SolverOptions(max_slip=math.inf)
    for level in range(levels):
        if level:
            mesh = refine_uniform(mesh)
        elem = uniform_materials(mesh, 1.0, sigma=case.sigma_omega)
        sol = solve_steady(mesh, elem, 1.0, opts, load=source_load(mesh, case.source))
        sizes.append(mesh.n_elements)
        errors.append(l2_error(mesh, sol.A, case.exact))
    return MMSStudy(k, case.sigma_omega, tuple(sizes), tuple(errors))


def slab_table(B0: float = 0.9, tau_p: float = 0.0377, sigma_s: float = 3.8e4, gap: float = 1.5e-3,
               velocities=None) -> list[tuple[float, float, float]]:
    """Rows of (v, stress, loss) for the moving-sheet layer model."""
    if velocities is None:
        velocities = np.linspace(-20.0, 20.0, 41)
    rows = []
    for v in velocities:
        stress, loss = slab_eddy_force(SlabCaseParams(B0, tau_p, float(v), sigma_s, gap))
        rows.append((float(v), stress, loss))
    return rows
