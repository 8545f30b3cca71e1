import math

import pytest
from hypothesis import given, settings, strategies as st

from ecoupler.geometry import (CouplerSpec, GeometryError, Region, build_region_map, radial_build,
                               region_at)


def test_reference_radial_build(spec):
    assert radial_build(spec) == pytest.approx([0.015, 0.035, 0.0355, 0.0365, 0.0445], abs=1e-12)


def test_zero_airgap_rejected_naming_field():
    with pytest.raises(GeometryError, match="^g "):
        CouplerSpec(g=0.0)


@pytest.mark.parametrize("field", ["h_m", "L_cs", "L_yp", "L_ys", "R_sh", "L_ax"])
def test_negative_length_rejected(field):
    with pytest.raises(GeometryError, match=field):
        CouplerSpec(**{field: -1e-3})


def test_odd_or_tiny_magnet_count_rejected():
    for n in (1, 3, 0):
        with pytest.raises(GeometryError, match="N_pm"):
            CouplerSpec(N_pm=n)


def test_overlapping_magnets_rejected():
    with pytest.raises(GeometryError, match="overlap"):
        CouplerSpec(h_m=30e-3)


def test_doubling_thicknesses_doubles_increments(spec):
    base = radial_build(spec)
    doubled = radial_build(CouplerSpec(L_yp=2 * spec.L_yp, g=2 * spec.g, L_cs=2 * spec.L_cs,
                                       L_ys=2 * spec.L_ys))
    for a0, a1, b0, b1 in zip(base[:-1], base[1:], doubled[:-1], doubled[1:]):
        assert b1 - b0 == pytest.approx(2 * (a1 - a0))


def _magnet_tags(rmap):
    return sorted({(t.index, t.polarity) for t in rmap.iter_tags() if t.kind is Region.PM})


def test_six_magnets_alternating(rmap):
    assert _magnet_tags(rmap) == [(k, 1 if k % 2 == 0 else -1) for k in range(6)]
    poles = {t.index for t in rmap.iter_tags() if t.kind is Region.POLE_IRON}
    assert poles == set(range(6))


def test_two_magnet_rotor():
    rmap = build_region_map(CouplerSpec(N_pm=2, h_m=5e-3))
    assert _magnet_tags(rmap) == [(0, 1), (1, -1)]


def test_sector_arcs_tile_circle(rmap):
    for annulus in rmap.sectors:
        assert sum(s.arc for s in annulus) == pytest.approx(2 * math.pi, abs=1e-12)
        for a, b in zip(annulus[:-1], annulus[1:]):
            assert b.start == pytest.approx(a.stop, abs=1e-12)


@pytest.mark.parametrize("r,kind", [(0.010, Region.SHAFT), (0.0352, Region.AIRGAP),
                                     (0.036, Region.CS), (0.040, Region.OUTER_YOKE)])
def test_region_at_radial(rmap, r, kind):
    assert region_at(rmap, r, 0.3).kind is kind


def test_region_at_inner_yoke(rmap):
    assert str(region_at(rmap, 0.025, 0.0)) == "PM(0,+)"
    assert region_at(rmap, 0.025, math.pi / 6).kind is Region.POLE_IRON
    assert str(region_at(rmap, 0.025, math.pi / 3)) == "PM(1,-)"


def test_interface_point_belongs_to_inner_annulus(rmap):
    assert region_at(rmap, 0.0355, 1.0).kind is Region.AIRGAP


def test_outside_domain_rejected(rmap):
    with pytest.raises(GeometryError):
        region_at(rmap, 0.05, 0.0)


def test_rotation_by_pitch_swaps_polarity(rmap, spec):
    pitch = spec.pole_pitch_angle
    r = spec.r_magnet_mean
    for k in range(spec.N_pm):
        here = region_at(rmap, r, k * pitch + 1e-4)
        there = region_at(rmap, r, (k + 1) * pitch + 1e-4)
        assert here.kind is there.kind is Region.PM
        assert there.index == (k + 1) % spec.N_pm
        assert there.polarity == -here.polarity


def test_embrace_below_one_adds_pockets():
    rmap = build_region_map(CouplerSpec(pm_embrace=0.8))
    assert any(t.kind is Region.POCKET for t in rmap.iter_tags())


def test_aligned_map_rejects_incompatible_grid(rmap):
    with pytest.raises(GeometryError, match="divisible"):
        rmap.aligned_to(100)


@settings(max_examples=60, deadline=None)
@given(r=st.floats(0.0, 0.0445), theta=st.floats(0.0, 2 * math.pi, exclude_max=True),
       n_half=st.integers(1, 5), embrace=st.floats(0.2, 1.0))
def test_every_point_has_exactly_one_region(r, theta, n_half, embrace):
    spec = CouplerSpec(N_pm=2 * n_half, pm_embrace=embrace)
    rmap = build_region_map(spec)
    tag = region_at(rmap, r, theta)
    lo, hi = spec.R_sh, spec.R_sh + spec.L_yp
    if lo < r <= hi:
        hits = [s for s in rmap.sectors[1] if s.start <= theta < s.stop]
        assert len(hits) == 1 and hits[0].tag == tag
    else:
        assert tag.kind in (Region.SHAFT, Region.AIRGAP, Region.CS, Region.OUTER_YOKE)
