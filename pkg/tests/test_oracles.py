import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize_scalar

from ecoupler.materials import MU0, NU0
from ecoupler.oracles import (OracleError, SlabCaseParams, harmonic_cylinder_field, l2_error, mms_case,
                              slab_eddy_force, slab_peak_velocity)

TAU, SIG, GAP, B0 = 0.0377, 3.8e4, 1.5e-3, 0.9


def stress(v, sigma_s=SIG, gap=GAP):
    return slab_eddy_force(SlabCaseParams(B0, TAU, v, sigma_s, gap))[0]


def test_slab_at_rest():
    assert slab_eddy_force(SlabCaseParams(B0, TAU, 0.0, SIG, GAP)) == (0.0, 0.0)


def test_slab_low_speed_limit():
    v = 1e-4
    assert stress(v) == pytest.approx(0.5 * SIG * v * B0**2, rel=1e-6)


def test_slab_high_speed_decay():
    v1, v2 = 1e4, 2e4
    assert stress(v2) / stress(v1) == pytest.approx(0.5, rel=1e-3)


def test_slab_peak_location_matches_numeric_maximum():
    res = minimize_scalar(lambda v: -stress(v), bounds=(0.01, 200.0), method="bounded",
                          options={"xatol": 1e-8})
    assert res.x == pytest.approx(slab_peak_velocity(TAU, SIG, GAP), rel=1e-5)


def test_slab_peak_inverse_in_conductance():
    assert slab_peak_velocity(TAU, 2 * SIG, GAP) == pytest.approx(0.5 * slab_peak_velocity(TAU, SIG, GAP))
    # peak stress itself does not depend on the conductance
    assert stress(slab_peak_velocity(TAU, 2 * SIG, GAP), 2 * SIG) == pytest.approx(
        stress(slab_peak_velocity(TAU, SIG, GAP)), rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(v=st.floats(1e-3, 500.0), sigma_s=st.floats(1e3, 1e6), gap=st.floats(1e-4, 1e-2))
def test_slab_odd_stress_even_loss(v, sigma_s, gap):
    s_pos, p_pos = slab_eddy_force(SlabCaseParams(B0, TAU, v, sigma_s, gap))
    s_neg, p_neg = slab_eddy_force(SlabCaseParams(B0, TAU, -v, sigma_s, gap))
    assert s_neg == -s_pos
    assert p_neg == p_pos
    assert p_pos == pytest.approx(s_pos * v) and p_pos > 0


@pytest.mark.parametrize("kw", [{"tau_p": 0.0}, {"sigma_s": -1.0}, {"gap": 0.0}])
def test_slab_bad_parameters(kw):
    args = dict(B0=B0, tau_p=TAU, v=1.0, sigma_s=SIG, gap=GAP)
    args.update(kw)
    with pytest.raises(OracleError):
        SlabCaseParams(**args)


RADII = (0.015, 0.035, 0.0355, 0.0365, 0.0445)
MU = (1.0, 1000.0, 1.0, 1.0, 1000.0)


@pytest.fixture(scope="module")
def cyl():
    return harmonic_cylinder_field(1e5, 3, RADII, MU, 0.035)


def test_cylinder_interface_conditions(cyl):
    for i, R in enumerate(RADII[:-1]):
        lo, hi = R * (1 - 1e-15), R * (1 + 1e-15)
        f_in = cyl.a[i] * (R / RADII[-1]) ** 3 + cyl.b[i] * (R / RADII[-1]) ** -3
        f_out = cyl.a[i + 1] * (R / RADII[-1]) ** 3 + cyl.b[i + 1] * (R / RADII[-1]) ** -3
        assert f_in == pytest.approx(f_out, rel=1e-12)
        h_in = NU0 / MU[i] * float(cyl.df(lo))
        h_out = NU0 / MU[i + 1] * float(cyl.df(hi))
        jump = h_in - h_out
        expected = 1e5 if R == 0.035 else 0.0
        assert jump == pytest.approx(expected, abs=1e-9 * 1e5)
    assert float(cyl.f(RADII[-1])) == pytest.approx(0.0, abs=1e-15)
    assert cyl.b[0] == 0.0


def test_cylinder_zero_current(cyl):
    z = harmonic_cylinder_field(0.0, 3, RADII, MU, 0.035)
    r = np.linspace(0.001, RADII[-1], 50)
    assert np.all(z.f(r) == 0)


def test_cylinder_free_space_jump():
    K = 2e4
    field = harmonic_cylinder_field(K, 2, (0.01, 0.02, 0.05), (1.0, 1.0, 1.0), 0.02)
    _, bt_in = field.B(0.02 * (1 - 1e-12), 0.0)
    _, bt_out = field.B(0.02 * (1 + 1e-12), 0.0)
    assert abs(bt_out - bt_in) == pytest.approx(MU0 * K, rel=1e-9)


def test_cylinder_field_is_linear_in_current(cyl):
    double = harmonic_cylinder_field(2e5, 3, RADII, MU, 0.035)
    assert double.Br_amplitude(0.0353) == pytest.approx(2 * cyl.Br_amplitude(0.0353), rel=1e-12)


@pytest.mark.parametrize("radii,sheet", [((0.02, 0.01, 0.05), 0.01), ((0.01, 0.02, 0.05), 0.015),
                                         ((0.01, 0.02, 0.05), 0.05)])
def test_cylinder_bad_input(radii, sheet):
    with pytest.raises(OracleError):
        harmonic_cylinder_field(1.0, 2, radii, (1.0, 1.0, 1.0), sheet)


def _sympy_mms(k):
    x, y, R, nu, so = sp.symbols("x y R nu so", real=True)
    r2 = (x**2 + y**2) / R**2
    A = sp.re(sp.expand(((x + sp.I * y) / R) ** k)) * (1 - r2)
    src = -nu * (sp.diff(A, x, 2) + sp.diff(A, y, 2)) + so * (x * sp.diff(A, y) - y * sp.diff(A, x))
    return sp.lambdify((x, y, R, nu, so), A, "numpy"), sp.lambdify((x, y, R, nu, so), src, "numpy")


@pytest.mark.parametrize("k", [1, 3, 4])
def test_mms_source_matches_symbolic_operator(k, rng):
    exact, src = _sympy_mms(k)
    case = mms_case(k, R=0.04, nu=2.5, sigma_omega=7.0e3)
    rho = 0.04 * np.sqrt(rng.uniform(0, 1, 100))
    th = rng.uniform(0, 2 * math.pi, 100)
    x, y = rho * np.cos(th), rho * np.sin(th)
    assert np.allclose(case.exact(x, y), exact(x, y, 0.04, 2.5, 7.0e3), rtol=1e-10, atol=1e-14)
    ref = src(x, y, 0.04, 2.5, 7.0e3)
    assert np.allclose(case.source(x, y), ref, rtol=1e-9, atol=1e-9 * np.abs(ref).max())


def test_mms_vanishes_on_boundary():
    case = mms_case(3, R=2.0)
    th = np.linspace(0, 2 * math.pi, 17)
    assert np.allclose(case.exact(2 * np.cos(th), 2 * np.sin(th)), 0.0, atol=1e-14)


def test_mms_zero_wavenumber():
    case = mms_case(0)
    x = np.linspace(-0.5, 0.5, 5)
    assert np.all(case.exact(x, x) == 0) and np.all(case.source(x, x) == 0)


@pytest.mark.parametrize("kw", [{"k": -1}, {"k": 1.5}, {"k": 2, "R": 0.0}])
def test_mms_bad_input(kw):
    with pytest.raises(OracleError):
        mms_case(**kw)


def test_interpolation_error_is_second_order(coarse_mesh):
    from ecoupler.mesh import refine_uniform
    case = mms_case(3, R=coarse_mesh.r_out)
    errs = []
    m = coarse_mesh
    for _ in range(2):
        errs.append(l2_error(m, case.exact(m.nodes[:, 0], m.nodes[:, 1]), case.exact))
        m = refine_uniform(m)
    assert math.log2(errs[0] / errs[1]) == pytest.approx(2.0, abs=0.2)
