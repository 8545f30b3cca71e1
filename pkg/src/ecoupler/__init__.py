"""Steady-state simulator for a radial-flux spoke-type IPM eddy-current coupler."""
from .geometry import CouplerSpec, Region, RegionMap, build_region_map, region_at
from .materials import BHCurve, MaterialMap, PMProps, russell_norsworthy
from .mesh import Mesh, MeshDensity, generate_mesh, mesh_quality, refine_uniform
from .fem import FieldSolution, SolverOptions, solve_steady
from .postprocess import TorqueSpeedCurve, evaluate, sweep_torque_speed

__all__ = [
    "BHCurve", "CouplerSpec", "FieldSolution", "MaterialMap", "Mesh", "MeshDensity", "PMProps",
    "Region", "RegionMap", "SolverOptions", "TorqueSpeedCurve", "build_region_map", "evaluate",
    "generate_mesh", "mesh_quality", "refine_uniform", "region_at", "russell_norsworthy",
    "solve_steady", "sweep_torque_speed",
]
__version__ = "0.1.0"
