"""JSON run configuration: coupler in mm, unit-tagged slip speeds, solver and mesh knobs.

Schema (all sections optional except ``coupler``)::

    {
      "coupler":   {"h_m": 5, "g": 0.5, "L_cs": 1, "L_yp": 20, "L_ys": 8, "R_sh": 15,
                    "H_ov": 10, "L_ax": 40, "N_pm": 6, "pm_grade": "N35",
                    "pm_embrace": 1.0, "slip_direction": 1},          # lengths in mm
      "materials": {"sigma": 5.8e7, "H_c": 870000, "mu_r": 1.05, "bh_curve": null,
                    "shaft": "nonmagnetic", "end_effect": true},
      "mesh":      {"n_theta": 360, "inner_yoke": 10, "airgap": 3, "cs": 4,
                    "outer_yoke": 6, "core_stop": 0.25, "refine": 0},
      "solver":    {"newton_tol": 1e-8, "max_newton_iters": 40, "backtrack": 0.5,
                    "max_halvings": 8, "stabilization": "none", "linear_solver": "direct",
                    "max_slip": 1000, "warm_start": false},
      "sweep":     {"unit": "rad/s", "range": {"start": 0, "stop": 480, "num": 25}}
                   or {"unit": "rpm", "list": [100, 200, 400]},
      "slip":      {"value": 0, "unit": "rad/s"},
      "mec":       {"utilization": 0.9},
      "thresholds": {"thermal_J_A_mm2": 45, "min_demag_margin_A_m": 0},
      "output_dir": "out"
    }
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np

from .fem import SolverOptions
from .geometry import CouplerSpec
from .materials import DEFAULT_HC, DEFAULT_PM_MU_R, DEFAULT_SIGMA_CU, BHCurve, LinearMaterial, MaterialMap
from .mesh import MeshDensity

UNITS = {"rad/s": 1.0, "rpm": 2.0 * math.pi / 60.0}
MM = 1e-3
LENGTH_KEYS = CouplerSpec.LENGTHS + ("H_ov",)


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def to_rad_s(value: float, unit: str, key: str = "unit") -> float:
    if unit not in UNITS:
        raise ConfigError(key, f"unknown speed unit {unit!r}; use one of {sorted(UNITS)}")
    return float(value) * UNITS[unit]


_SLIP_RE = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(rad/s|rpm)?\s*$")


def parse_slip(text: str) -> float:
    """``'100rpm'``, ``'20 rad/s'`` or a bare number (rad/s) to rad/s."""
    m = _SLIP_RE.match(str(text))
    if not m:
        raise ConfigError("--slip", f"cannot parse {text!r}; expected VALUE[rad/s|rpm]")
    return to_rad_s(float(m.group(1)), m.group(2) or "rad/s", "--slip")


@dataclass(frozen=True)
class MaterialConfig:
    sigma: float = DEFAULT_SIGMA_CU
    H_c: float = DEFAULT_HC
    mu_r: float = DEFAULT_PM_MU_R
    bh_curve: str | None = None
    shaft: str = "nonmagnetic"
    end_effect: bool = True


@dataclass(frozen=True)
class MeshConfig:
    n_theta: int = 360
    inner_yoke: int = 10
    airgap: int = 3
    cs: int = 4
    outer_yoke: int = 6
    core_stop: float = 0.25
    refine: int = 0


@dataclass(frozen=True)
class SolverConfig:
    newton_tol: float = 1e-8
    max_newton_iters: int = 40
    backtrack: float = 0.5
    max_halvings: int = 8
    stabilization: str = "none"
    linear_solver: str = "direct"
    max_slip: float = 1000.0
    warm_start: bool = False


@dataclass(frozen=True)
class SweepConfig:
    unit: str = "rad/s"
    range: dict | None = None
    list: tuple | None = None

    def slips(self) -> list[float]:
        """Slip speeds in rad/s, ascending."""
        if self.list is not None:
            vals = [to_rad_s(v, self.unit, "sweep.unit") for v in self.list]
        else:
            r = self.range
            vals = [to_rad_s(v, self.unit, "sweep.unit") for v in np.linspace(r["start"], r["stop"], int(r["num"]))]
        return sorted(vals)

    def to_dict(self) -> dict:
        out = {"unit": self.unit}
        if self.range is not None:
            out["range"] = dict(self.range)
        if self.list is not None:
            out["list"] = list(self.list)
        return out


@dataclass(frozen=True)
class SlipConfig:
    value: float = 0.0
    unit: str = "rad/s"

    @property
    def rad_s(self) -> float:
        return to_rad_s(self.value, self.unit, "slip.unit")


@dataclass(frozen=True)
class Thresholds:
    thermal_J_A_mm2: float = 45.0
    min_demag_margin_A_m: float = 0.0


@dataclass(frozen=True)
class MecConfig:
    utilization: float = 0.9


@dataclass(frozen=True)
class RunConfig:
    coupler: CouplerSpec = field(default_factory=CouplerSpec)
    materials: MaterialConfig = field(default_factory=MaterialConfig)
    mesh: MeshConfig = field(default_factory=MeshConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    sweep: SweepConfig = field(default_factory=lambda: SweepConfig(range={"start": 0.0, "stop": 480.0, "num": 25}))
    slip: SlipConfig = field(default_factory=SlipConfig)
    mec: MecConfig = field(default_factory=MecConfig)
    thresholds: Thresholds = field(default_factory=Thresholds)
    output_dir: str = "out"
    base_dir: str = field(default=".", compare=False, repr=False)

    # -- derived objects -------------------------------------------------

    def material_map(self) -> MaterialMap:
        m = self.materials
        iron = BHCurve.from_csv(self._resolve(m.bh_curve), mu_r_init=None) if m.bh_curve else BHCurve.default()
        mats = MaterialMap.for_spec(self.coupler, sigma=m.sigma, H_c=m.H_c, mu_r=m.mu_r, iron=iron,
                                    end_effect=m.end_effect)
        shaft = LinearMaterial(1.0) if m.shaft == "nonmagnetic" else iron
        return mats.replace(shaft=shaft)

    def density(self) -> MeshDensity:
        d = self.mesh
        return MeshDensity(d.n_theta, d.inner_yoke, d.airgap, d.cs, d.outer_yoke, d.core_stop)

    def solver_options(self) -> SolverOptions:
        s = self.solver
        return SolverOptions(s.newton_tol, s.max_newton_iters, s.backtrack, s.max_halvings,
                             s.stabilization, s.linear_solver, s.max_slip)

    def _resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    # -- serialisation ---------------------------------------------------

    def to_dict(self) -> dict:
        spec = self.coupler.to_dict()
        coupler = {k: (spec[k] / MM if k in LENGTH_KEYS else spec[k]) for k in spec}
        return {
            "coupler": coupler,
            "materials": asdict(self.materials),
            "mesh": asdict(self.mesh),
            "solver": asdict(self.solver),
            "sweep": self.sweep.to_dict(),
            "slip": asdict(self.slip),
            "mec": asdict(self.mec),
            "thresholds": asdict(self.thresholds),
            "output_dir": self.output_dir,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"


def _section(cls, data, name: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(name, "expected an object")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"{name}.{unknown[0]}", "unknown key")
    defaults = cls()
    kwargs = {}
    for key, value in data.items():
        ref = getattr(defaults, key)
        if isinstance(ref, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"{name}.{key}", f"expected true/false, got {value!r}")
        elif isinstance(ref, int):
            if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
                raise ConfigError(f"{name}.{key}", f"expected an integer, got {value!r}")
            value = int(value)
        elif isinstance(ref, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ConfigError(f"{name}.{key}", f"expected a finite number, got {value!r}")
            value = float(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(name, str(exc)) from None


def _coupler(data) -> CouplerSpec:
    if not isinstance(data, dict):
        raise ConfigError("coupler", "expected an object with the coupler dimensions")
    known = {f.name for f in fields(CouplerSpec)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"coupler.{unknown[0]}", "unknown key")
    kwargs = {}
    for key, value in data.items():
        if key in LENGTH_KEYS or key in ("pm_embrace", "N_pm", "slip_direction"):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"coupler.{key}", f"expected a number, got {value!r}")
        kwargs[key] = value * MM if key in LENGTH_KEYS else value
    try:
        return CouplerSpec(**kwargs)
    except ValueError as exc:
        field_name = str(exc).split()[0]
        raise ConfigError(f"coupler.{field_name}" if field_name in known else "coupler", str(exc)) from None


def _sweep(data) -> SweepConfig:
    if data is None:
        return RunConfig().sweep
    if not isinstance(data, dict):
        raise ConfigError("sweep", "expected an object")
    unknown = sorted(set(data) - {"unit", "range", "list"})
    if unknown:
        raise ConfigError(f"sweep.{unknown[0]}", "unknown key")
    unit = data.get("unit", "rad/s")
    if unit not in UNITS:
        raise ConfigError("sweep.unit", f"unknown speed unit {unit!r}; use one of {sorted(UNITS)}")
    has_range, has_list = "range" in data, "list" in data
    if has_range == has_list:
        raise ConfigError("sweep", "give exactly one of 'range' or 'list'")
    if has_list:
        vals = data["list"]
        if not isinstance(vals, list) or not vals or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in vals):
            raise ConfigError("sweep.list", "expected a non-empty list of numbers")
        return SweepConfig(unit, None, tuple(float(v) for v in vals))
    r = data["range"]
    if not isinstance(r, dict) or set(r) != {"start", "stop", "num"}:
        raise ConfigError("sweep.range", "expected {start, stop, num}")
    if not isinstance(r["num"], int) or r["num"] < 2:
        raise ConfigError("sweep.range.num", "expected an integer >= 2")
    if not r["stop"] > r["start"]:
        raise ConfigError("sweep.range.stop", "must exceed start")
    return SweepConfig(unit, {"start": float(r["start"]), "stop": float(r["stop"]), "num": int(r["num"])}, None)


def config_from_dict(data: dict, base_dir: str = ".") -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("<root>", "expected a JSON object")
    allowed = {"coupler", "materials", "mesh", "solver", "sweep", "slip", "mec", "thresholds", "output_dir"}
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(unknown[0], "unknown key")
    if "coupler" not in data:
        raise ConfigError("coupler", "missing required section")
    materials = _section(MaterialConfig, data.get("materials"), "materials")
    if materials.shaft not in ("nonmagnetic", "iron"):
        raise ConfigError("materials.shaft", f"expected 'nonmagnetic' or 'iron', got {materials.shaft!r}")
    if not materials.sigma >= 0:
        raise ConfigError("materials.sigma", "must be non-negative")
    if not materials.H_c > 0:
        raise ConfigError("materials.H_c", "must be positive")
    if not materials.mu_r >= 1:
        raise ConfigError("materials.mu_r", "must be >= 1")
    mesh = _section(MeshConfig, data.get("mesh"), "mesh")
    if mesh.refine < 0:
        raise ConfigError("mesh.refine", "must be >= 0")
    solver = _section(SolverConfig, data.get("solver"), "solver")
    slip = _section(SlipConfig, data.get("slip"), "slip")
    to_rad_s(slip.value, slip.unit, "slip.unit")
    output_dir = data.get("output_dir", "out")
    if not isinstance(output_dir, str) or not output_dir:
        raise ConfigError("output_dir", "expected a non-empty path string")
    cfg = RunConfig(
        coupler=_coupler(data["coupler"]),
        materials=materials,
        mesh=mesh,
        solver=solver,
        sweep=_sweep(data.get("sweep")),
        slip=slip,
        mec=_section(MecConfig, data.get("mec"), "mec"),
        thresholds=_section(Thresholds, data.get("thresholds"), "thresholds"),
        output_dir=output_dir,
        base_dir=base_dir,
    )
    # surface range errors in derived objects with their config keys
    try:
        cfg.solver_options()
    except ValueError as exc:
        raise ConfigError("solver", str(exc)) from None
    try:
        cfg.density()
    except ValueError as exc:
        raise ConfigError("mesh", str(exc)) from None
    if not 0 < cfg.mec.utilization <= 1:
        raise ConfigError("mec.utilization", "must lie in (0, 1]")
    return cfg


def load_config(path=None) -> RunConfig:
    """Parse a JSON config file; ``None`` loads the bundled reference-device config."""
    if path is None:
        ref = resources.files("ecoupler") / "data" / "tableI.json"
        return config_from_dict(json.loads(ref.read_text()), ".")
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {p}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("--config", f"{p}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    return config_from_dict(data, str(p.parent))
