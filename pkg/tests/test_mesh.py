import math

import numpy as np
import pytest
from scipy.spatial import cKDTree

from ecoupler.geometry import CouplerSpec, Region, build_region_map, region_at
from ecoupler.mesh import (MeshDensity, MeshError, generate_mesh, mesh_quality, refine_uniform,
                           triangle_quality)


def expected_core_count(plan):
    total = 0
    for (_, n_o), (_, n_i) in zip(plan[:-1], plan[1:]):
        if n_i == n_o:
            total += 2 * n_i + (2 if n_i % 2 else 0)  # odd rings split the quad at theta = pi into four
        else:
            total += 3 * n_i
    return total + plan[-1][1]


def test_structured_counts(mesh):
    d = MeshDensity()
    counts = mesh_quality(mesh).region_counts
    assert counts["POLE_IRON"] + counts["PM"] == 2 * d.n_theta * d.inner_yoke
    assert counts["AIRGAP"] == 2 * d.n_theta * d.airgap
    assert counts["CS"] == 2 * d.n_theta * d.cs
    assert counts["OUTER_YOKE"] == 2 * d.n_theta * d.outer_yoke
    assert counts["SHAFT"] == expected_core_count(mesh.core_plan)
    assert mesh.n_elements == 2 * d.n_theta * sum(d.layers) + expected_core_count(mesh.core_plan)


def test_reference_region_counts_frozen(mesh):
    assert mesh_quality(mesh).region_counts == {
        "SHAFT": 1726, "POLE_IRON": 5760, "PM": 1440, "AIRGAP": 2160, "CS": 2880, "OUTER_YOKE": 4320}


def test_magnet_elements_per_magnet(mesh):
    per = np.bincount(mesh.magnet[mesh.magnet >= 0])
    assert len(per) == 6 and np.all(per == per[0])


def test_positive_areas(mesh):
    assert np.all(mesh.signed_areas > 0)


def test_conforming(mesh):
    _, el_edges = mesh.edges
    use = np.bincount(el_edges.ravel())
    assert set(np.unique(use)) == {1, 2}
    edges, _ = mesh.edges
    once = edges[use == 1]
    r = np.hypot(*mesh.nodes[once.ravel()].T)
    assert np.allclose(r, mesh.r_out, rtol=1e-12)


def test_interface_rings_shared(mesh):
    """Both sides of each material interface use the same nodes on that circle."""
    r_nodes = np.hypot(*mesh.nodes.T)
    for R in mesh.region_map.interfaces[:-1]:
        on = np.abs(r_nodes - R) < 1e-9 * R
        r_c = np.hypot(*mesh.centroids.T)
        touching = np.any(on[mesh.elements], axis=1)
        assert np.any(touching & (r_c < R)) and np.any(touching & (r_c > R))


def test_tags_match_region_at(mesh):
    rmap = mesh.region_map
    c = mesh.centroids
    r = np.hypot(c[:, 0], c[:, 1])
    theta = np.mod(np.arctan2(c[:, 1], c[:, 0]), 2 * math.pi)
    for e in range(0, mesh.n_elements, 7):
        assert region_at(rmap, r[e], theta[e]).kind == mesh.region[e]


def test_element_inside_one_region(mesh):
    rmap = mesh.region_map
    for e in range(0, mesh.n_elements, 11):
        pts = 0.98 * mesh.nodes[mesh.elements[e]] + 0.02 * mesh.centroids[e]
        kinds = {region_at(rmap, math.hypot(*p), math.atan2(p[1], p[0]) % (2 * math.pi)).kind for p in pts}
        assert kinds == {Region(mesh.region[e])}


def test_gap_and_sheet_layers():
    d = MeshDensity()
    assert d.airgap >= 2 and d.cs >= 2


def test_boundary_on_outer_circle(mesh):
    r = np.hypot(*mesh.nodes[mesh.boundary].T)
    assert np.max(np.abs(r - mesh.r_out)) < 1e-12 * mesh.r_out
    assert len(mesh.boundary) == mesh.n_theta


def test_quality_floor(mesh):
    rep = mesh_quality(mesh)
    assert rep.min_quality > 0.2
    assert not rep.inverted and not rep.degenerate


def test_area_close_to_disk(mesh):
    ratio = mesh.areas.sum() / (math.pi * mesh.r_out**2)
    assert abs(ratio - 1) < 5e-3


def test_area_error_quadratic_under_refinement(coarse_mesh):
    disk = math.pi * coarse_mesh.r_out**2
    e0 = disk - coarse_mesh.areas.sum()
    e1 = disk - refine_uniform(coarse_mesh).areas.sum()
    assert math.log2(e0 / e1) == pytest.approx(2.0, abs=0.1)


def test_refinement(coarse_mesh):
    fine = refine_uniform(coarse_mesh)
    edges, _ = coarse_mesh.edges
    assert fine.n_elements == 4 * coarse_mesh.n_elements
    assert fine.n_nodes == coarse_mesh.n_nodes + len(edges)
    assert np.all(fine.signed_areas > 0)
    r = np.hypot(*fine.nodes[fine.boundary].T)
    assert np.max(np.abs(r - fine.r_out)) < 1e-12 * fine.r_out
    assert len(fine.boundary) == 2 * len(coarse_mesh.boundary)
    assert np.array_equal(np.bincount(fine.region), 4 * np.bincount(coarse_mesh.region))


def test_interfaces_stay_round_after_refinement(coarse_mesh):
    fine = refine_uniform(coarse_mesh)
    r = np.hypot(*fine.nodes.T)
    for R in fine.region_map.interfaces:
        on = np.abs(r - R) < 1e-6 * R
        assert np.sum(on) >= 2 * coarse_mesh.n_theta
        assert np.max(np.abs(r[on] - R)) < 1e-12 * R


def test_refining_small_mesh_twice():
    d = MeshDensity(n_theta=12, inner_yoke=1, airgap=1, cs=1, outer_yoke=1, core_stop=0.9)
    m = generate_mesh(build_region_map(CouplerSpec(N_pm=2)), d)
    # 4 layers of 24 triangles plus the 12-triangle shaft fan
    assert m.n_elements == 108
    assert refine_uniform(refine_uniform(m)).n_elements == 16 * 108


def test_triangle_quality_metric():
    eq = np.array([[0, 0], [1, 0], [0.5, math.sqrt(3) / 2]])
    assert triangle_quality(eq)[0] == pytest.approx(1.0, abs=1e-12)
    flat = np.array([[0, 0], [1, 0], [2, 0]])
    assert triangle_quality(flat)[0] == 0.0


def test_degenerate_element_flagged(coarse_mesh):
    from dataclasses import replace
    nodes = coarse_mesh.nodes.copy()
    el = coarse_mesh.elements.copy()
    a, b, _ = el[0]
    el[0, 2] = a  # collapse the first triangle
    bad = replace(coarse_mesh, nodes=nodes, elements=el)
    rep = mesh_quality(bad)
    assert 0 in rep.degenerate and rep.min_quality == 0.0


def test_rotational_periodicity(mesh):
    n = mesh.n_theta
    ring = np.hypot(*mesh.nodes.T) >= mesh.region_map.interfaces[0] * (1 - 1e-12)
    pts = mesh.nodes[ring]
    t = 2 * math.pi / n
    rot = pts @ np.array([[math.cos(t), math.sin(t)], [-math.sin(t), math.cos(t)]])
    dist, _ = cKDTree(pts).query(rot)
    assert dist.max() < 1e-9


def test_deterministic(rmap):
    d = MeshDensity(n_theta=60, inner_yoke=2, airgap=2, cs=2, outer_yoke=2)
    a, b = generate_mesh(rmap, d), generate_mesh(rmap, d)
    assert np.array_equal(a.nodes, b.nodes) and np.array_equal(a.elements, b.elements)


@pytest.mark.parametrize("kw", [{"airgap": 0}, {"cs": 0}, {"n_theta": 2}, {"core_stop": 1.5}])
def test_bad_density_rejected(kw):
    with pytest.raises(MeshError):
        MeshDensity(**kw)
