"""Constitutive data: nonlinear lamination steel, NdFeB magnets, sheet conductor."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator

MU0 = 4e-7 * math.pi
NU0 = 1.0 / MU0

DEFAULT_MU_R_INIT = 4000.0
DEFAULT_SIGMA_CU = 5.8e7
DEFAULT_HC = 870e3
DEFAULT_PM_MU_R = 1.05


class MaterialError(ValueError):
    pass


@dataclass(frozen=True)
class LinearMaterial:
    mu_r: float = 1.0

    def reluctivity(self, B2):
        B2 = np.asarray(B2, dtype=float)
        return np.full_like(B2, NU0 / self.mu_r), np.zeros_like(B2)


class BHCurve:
    """Single-valued B-H curve with a monotone cubic reluctivity in ``B**2``.

    Beyond the last sample the material is treated as fully saturated
    (incremental permeability ``mu0``).
    """

    def __init__(self, B, H, mu_r_init: float | None = None, name: str = "custom"):
        B = np.asarray(B, dtype=float)
        H = np.asarray(H, dtype=float)
        if B.shape != H.shape or B.ndim != 1 or B.size < 3:
            raise MaterialError("B-H curve needs at least 3 matching samples")
        if B[0] != 0.0 or H[0] != 0.0:
            raise MaterialError("B-H curve must start at the origin (0, 0)")
        if np.any(np.diff(B) <= 0) or np.any(np.diff(H) <= 0):
            raise MaterialError("B and H samples must be strictly increasing")
        self.name = name
        self.B = B
        self.H = H
        nu = np.empty_like(B)
        nu[1:] = H[1:] / B[1:]
        nu[0] = NU0 / mu_r_init if mu_r_init is not None else nu[1]
        if np.any(np.diff(nu) < -1e-9 * nu[1:]):
            raise MaterialError("reluctivity H/B must be non-decreasing in B (no initial-permeability hump)")
        if nu[-1] >= NU0:
            raise MaterialError("last B-H sample is already below vacuum permeability")
        self.mu_r_init = NU0 / nu[0]
        s = B**2
        slopes = PchipInterpolator(s, nu).derivative()(s)
        # match the saturated extrapolation slope for a C1 junction
        self._h_excess = H[-1] - B[-1] / MU0
        slopes[-1] = -self._h_excess / (2.0 * B[-1] ** 3)
        self._spline = CubicHermiteSpline(s, nu, slopes)
        self._dspline = self._spline.derivative()
        self._s_max = s[-1]

    def __repr__(self) -> str:
        return f"BHCurve({self.name!r}, {self.B.size} points, mu_r_init={self.mu_r_init:.0f})"

    @classmethod
    def from_csv(cls, path, mu_r_init: float | None = None) -> "BHCurve":
        """Two-column CSV (B in T, H in A/m) with a header row."""
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if len(rows) < 2:
            raise MaterialError(f"{path}: expected a header row and samples")
        try:
            data = np.array([[float(v) for v in row[:2]] for row in rows[1:] if row], dtype=float)
        except ValueError as exc:
            raise MaterialError(f"{path}: non-numeric sample ({exc})") from None
        return cls(data[:, 0], data[:, 1], mu_r_init=mu_r_init, name=Path(path).stem)

    @classmethod
    def default(cls) -> "BHCurve":
        ref = resources.files("ecoupler") / "data" / "m_grade_steel.csv"
        with resources.as_file(ref) as path:
            return cls.from_csv(path, mu_r_init=DEFAULT_MU_R_INIT)

    def reluctivity(self, B2):
        B2 = np.asarray(B2, dtype=float)
        if np.any(B2 < 0):
            raise MaterialError("B^2 must be non-negative")
        inside = B2 <= self._s_max
        nu = np.empty_like(B2)
        dnu = np.empty_like(B2)
        nu[inside] = self._spline(B2[inside])
        dnu[inside] = self._dspline(B2[inside])
        b = np.sqrt(B2[~inside])
        nu[~inside] = NU0 + self._h_excess / b
        dnu[~inside] = -self._h_excess / (2.0 * b**3)
        return nu, dnu

    def H_of_B(self, B):
        B = np.asarray(B, dtype=float)
        nu, _ = self.reluctivity(B**2)
        return nu * B


def reluctivity(material, B2):
    """Return ``(nu, dnu/dB2)`` for a linear material or a B-H curve."""
    return material.reluctivity(B2)


@dataclass(frozen=True)
class PMProps:
    H_c: float = DEFAULT_HC
    mu_r: float = DEFAULT_PM_MU_R

    def __post_init__(self):
        if not self.H_c > 0:
            raise MaterialError(f"coercivity H_c must be positive, got {self.H_c!r}")
        if not self.mu_r >= 1:
            raise MaterialError(f"recoil permeability mu_r must be >= 1, got {self.mu_r!r}")

    @property
    def B_r(self) -> float:
        return MU0 * self.mu_r * self.H_c

    @property
    def nu(self) -> float:
        return NU0 / self.mu_r


def pm_properties(H_c: float, mu_r: float) -> PMProps:
    return PMProps(H_c=H_c, mu_r=mu_r)


def russell_norsworthy(L_ax: float, tau_p: float, H_ov: float) -> float:
    """End-effect factor for a conducting sheet of finite axial length with overhang."""
    x = math.pi * L_ax / (2.0 * tau_p)
    t = math.tanh(x)
    return 1.0 - t / (x * (1.0 + t * math.tanh(math.pi * H_ov / tau_p)))


@dataclass(frozen=True)
class ConductorProps:
    sigma: float = DEFAULT_SIGMA_CU
    k_end: float = 1.0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise MaterialError(f"sigma must be non-negative, got {self.sigma!r}")
        if not 0 < self.k_end <= 1:
            raise MaterialError(f"k_end must lie in (0, 1], got {self.k_end!r}")

    @property
    def sigma_eff(self) -> float:
        return self.sigma * self.k_end


@dataclass(frozen=True)
class MaterialMap:
    """Assignment of constitutive laws to coupler regions."""

    iron: object = field(default_factory=BHCurve.default)
    shaft: object = field(default_factory=LinearMaterial)
    pm: PMProps = field(default_factory=PMProps)
    conductor: ConductorProps = field(default_factory=ConductorProps)

    @classmethod
    def for_spec(cls, spec, sigma: float = DEFAULT_SIGMA_CU, H_c: float = DEFAULT_HC,
                 mu_r: float = DEFAULT_PM_MU_R, iron=None, end_effect: bool = True) -> "MaterialMap":
        k_end = russell_norsworthy(spec.L_ax, spec.pole_pitch_cs, spec.H_ov) if end_effect else 1.0
        return cls(
            iron=iron if iron is not None else BHCurve.default(),
            pm=PMProps(H_c, mu_r),
            conductor=ConductorProps(sigma, k_end),
        )

    @property
    def shaft_material(self):
        return self.shaft if self.shaft is not None else self.iron

    def replace(self, **changes) -> "MaterialMap":
        from dataclasses import replace

        return replace(self, **changes)
