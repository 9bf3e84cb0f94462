import dataclasses

import numpy as np
import pytest

from src.exceptions import DomainError, MeshQualityError, ParameterWindowError, TopologyError
from src.mesher import (ANNULUS, CORE, DISK, K_M, K_P, RegionMap, build_initial_surface, build_scherk_block,
                        build_w_model, catenoid_mesh, disk_mesh, disk_schedule, identify_theta, orbit_table,
                        project_to_piece, project_to_scherk, project_to_w, quality_floor, quality_report,
                        smooth_pieces, smooth_quarter, sphere_mesh, validate_topology, w_projection, wing_rows)
from src.scherk import HWING_P, WING_KINDS, dihedral_group, scherk_implicit, wing_point
from src.spatial import self_intersections


def test_initial_surface_topology(surface):
    report = validate_topology(surface, m=3)
    assert report["euler_characteristic"] == 1 - 2 * 3
    assert report["boundary_loops"] == 3
    assert report["genus"] == 2
    assert report["sphere_deviation"] <= 1e-9


def test_boundary_labels_match_loops(surface):
    labels = surface.boundary[surface.boundary_mask]
    assert set(np.unique(labels)) == {0, 1, 2}
    on_loops = np.concatenate(surface.boundary_loops())
    assert np.array_equal(np.sort(on_loops), np.flatnonzero(surface.boundary_mask))


def test_initial_surface_symmetric(surface):
    orbits = surface.orbits
    assert orbits.order == 12
    worst = max(np.max(np.abs(surface.vertices[perm] - surface.vertices @ g.T))
                for perm, g in zip(orbits.perms, orbits.matrices))
    assert worst <= 1e-9


def test_orbit_average_is_projection(surface, rng):
    values = rng.standard_normal(surface.n_vertices)
    once = surface.orbits.average(values)
    assert surface.orbits.deviation(once) < 1e-12
    assert np.allclose(surface.orbits.average(once), once)


def test_orbit_table_rejects_asymmetric_mesh():
    mesh = catenoid_mesh(8, 10)
    with pytest.raises(TopologyError):
        orbit_table(mesh.vertices, dihedral_group(3))


def test_initial_surface_has_no_self_intersections(surface):
    assert len(self_intersections(surface.vertices, surface.faces)) == 0


def test_block_vertices_have_preimages(surface):
    block = np.isin(surface.region, (CORE,) + WING_KINDS)
    pre = surface.spoint[block]
    assert np.all(np.isfinite(pre))
    assert np.max(np.abs(scherk_implicit(pre))) < 1e-9
    assert not np.any(np.isfinite(surface.spoint[~block, 0]))


def test_regions_nest_and_cover(surface, params):
    regions = RegionMap.from_params(params)
    regions.check(surface.s)
    masks = regions.masks(surface.s)
    assert np.all(masks["Mt0"][masks["M0"]])
    assert np.all(masks["Mt1"][masks["M1"]])
    assert np.all(masks["Mt0"] | masks["M1"])


def test_outer_pieces_present(surface):
    for piece in (K_P, K_M, ANNULUS, DISK):
        assert np.any(surface.region == piece)


def test_quality_report(surface):
    report = quality_report(surface)
    assert 0.0 < report["min_angle_deg"] <= 60.0 <= report["max_angle_deg"] < 180.0
    assert report["max_aspect"] >= report["median_aspect"] >= 1.0


def test_project_to_scherk(surface):
    v = int(np.flatnonzero(surface.region == CORE)[0])
    region, point, (y, s) = project_to_scherk(surface, v)
    assert region == CORE
    assert np.allclose(point, surface.spoint[v])
    outer = int(np.flatnonzero(surface.region == K_P)[0])
    with pytest.raises(DomainError):
        project_to_scherk(surface, outer)


def test_w_projection_is_close(surface, params):
    ids, projected = w_projection(surface)
    assert len(ids) == len(projected)
    gap = np.linalg.norm(projected - surface.vertices[ids], axis=1)
    # wings are graphs of size O(lambda exp(-s)) over W beyond a_under
    assert np.max(gap) < params.lam
    core = int(np.flatnonzero(surface.region == CORE)[0])
    with pytest.raises(DomainError):
        project_to_w(surface, core)


def test_identify_theta_is_bijection(surface, surface_theta, rng):
    transport = identify_theta(surface, surface_theta)
    assert np.array_equal(np.sort(transport.perm), np.arange(surface.n_vertices))
    values = rng.standard_normal(surface.n_vertices)
    assert np.array_equal(transport.to_zero(transport.to_theta(values)), values)


def test_identify_theta_resolution_mismatch(surface):
    with pytest.raises(TopologyError):
        identify_theta(surface, dataclasses.replace(surface, res=surface.res * 2))


def test_unbalanced_surface_topology(surface_theta):
    report = validate_topology(surface_theta, m=3)
    assert report["euler_characteristic"] == -5
    assert report["boundary_loops"] == 3


def test_build_rejects_small_m():
    with pytest.raises(ParameterWindowError):
        build_initial_surface(0.0, 2, 4)


def test_scherk_quotient(surface, quotient):
    assert quotient.n_shared == surface.n_period
    assert quotient.orbits.order == 4
    assert quotient.fold.shape == (len(quotient.points), quotient.n_base)
    assert np.allclose(np.asarray(quotient.fold.sum(axis=1)).ravel(), 1.0)
    assert np.any(quotient.dirichlet)
    # shared nodes carry the same Scherk point as the block vertices
    shared = quotient.points[quotient.base[:quotient.n_shared]]
    assert np.allclose(shared, surface.spoint[:quotient.n_shared], atol=1e-12)


def test_w_model_pieces(surface):
    model = build_w_model(surface)
    assert set(model) == {K_P, K_M, ANNULUS, DISK}
    for kind, piece in model.items():
        assert np.allclose(piece.vertices[-5:], surface.vertices[piece.m_index[-5:]])
        assert np.any(piece.dirichlet)
        if kind == DISK:
            assert not np.any(piece.robin)
        else:
            assert np.any(piece.robin)


def test_reference_meshes_topology():
    assert sphere_mesh(2).euler_characteristic() == 2
    disk = disk_mesh(0.3, n_rings=6)
    assert disk.euler_characteristic() == 1
    assert len(disk.boundary_loops()) == 1
    cat = catenoid_mesh(12, 32)
    assert cat.euler_characteristic() == 0
    assert len(cat.boundary_loops()) == 2
    assert validate_topology(cat)["genus"] == 0


def test_disk_height_domain():
    with pytest.raises(DomainError):
        disk_mesh(1.0)


def test_scherk_block(params, surface):
    block = build_scherk_block(params, 4)
    assert set(np.unique(block.region)) <= {CORE, *WING_KINDS}
    assert block.n_vertices < surface.n_vertices
    core = block.region == CORE
    assert np.max(np.abs(scherk_implicit(block.spoint[core]))) < 1e-8


@pytest.mark.slow
@pytest.mark.parametrize("m", range(3, 13))
def test_initial_surface_sweep(m):
    mesh = build_initial_surface(0.0, m, 4)
    report = validate_topology(mesh, m=m)
    assert report["euler_characteristic"] == 1 - 2 * m
    assert report["boundary_loops"] == 3
    assert report["genus"] == m - 1
    assert report["sphere_deviation"] <= 1e-9
    assert mesh.orbits.order == 4 * m
    worst = max(np.max(np.abs(mesh.vertices[perm] - mesh.vertices @ g.T))
                for perm, g in zip(mesh.orbits.perms, mesh.orbits.matrices))
    assert worst <= 1e-9
    assert quality_report(mesh)["min_angle_deg"] >= quality_floor(m)
    assert len(self_intersections(mesh.vertices, mesh.faces)) == 0


def test_initial_surface_meets_quality_floor(surface):
    assert surface.meta["min_angle_deg"] >= quality_floor(3)
    assert quality_report(surface)["min_angle_deg"] == surface.meta["min_angle_deg"]


def test_quality_gate_raises():
    with pytest.raises(MeshQualityError):
        build_initial_surface(0.0, 3, 4, check_intersections=False, min_angle_deg=59.0)


def test_quality_floor_capped_by_centre_fan():
    assert quality_floor(3) == pytest.approx(15.0)
    assert quality_floor(12) == pytest.approx(15.0)
    assert quality_floor(20) == pytest.approx(9.0)


def test_disk_schedule_halves_down_to_mirror_ring():
    rings = disk_schedule(96, 3)
    sizes = [n for n, _ in rings]
    radii = [r for _, r in rings]
    assert sizes[-1] == 6
    assert all(a in (b, 2 * b) for a, b in zip(sizes, sizes[1:]))
    assert 1.0 > radii[0]
    assert all(r0 > r1 > 0.0 for r0, r1 in zip(radii, radii[1:]))
    # every halving lands on a power-of-two radius
    for (n0, _), (n1, r1) in zip(rings, rings[1:]):
        if n1 < n0:
            assert np.log2(r1) == pytest.approx(round(np.log2(r1)))


def test_disk_schedule_rejects_odd_ring():
    with pytest.raises(TopologyError):
        disk_schedule(36, 3)


@pytest.mark.parametrize("kind", WING_KINDS)
def test_wing_rows(params, kind):
    rows = wing_rows(params, kind, 8)
    assert rows[0] == 0.0
    assert rows[-1] == pytest.approx(params.seam)
    assert np.all(np.diff(rows) > 0.0)
    # fixed by the theta = 0 wing, so M_theta shares the grid of M_0
    assert np.array_equal(wing_rows(params.with_theta(0.02), kind, 8), rows)


def test_smooth_quarter_stays_on_scherk():
    y, s = np.meshgrid(np.linspace(0.0, 0.5 * np.pi, 6), np.linspace(0.0, 1.0, 5), indexing="ij")
    grid = wing_point(HWING_P, y, s ** 2, 1.5)
    smoothed = smooth_quarter(grid, sweeps=10)
    assert np.max(np.abs(scherk_implicit(smoothed))) < 1e-10
    for side in (np.s_[0], np.s_[-1], np.s_[:, 0], np.s_[:, -1]):
        assert np.array_equal(smoothed[side], grid[side])
    assert not np.allclose(smoothed[1:-1, 1:-1], grid[1:-1, 1:-1])


def test_smooth_pieces_keeps_fixed_and_projects(params, rng):
    disk = disk_mesh(0.0, n_rings=5)
    region = np.full(disk.n_vertices, DISK)
    fixed = disk.boundary >= 0
    noisy = disk.vertices + np.where(fixed[:, None], 0.0, 0.01 * rng.standard_normal(disk.vertices.shape))
    smoothed = smooth_pieces(noisy, disk.faces, region, fixed, params)
    assert np.array_equal(smoothed[fixed], noisy[fixed])
    assert np.all(smoothed[:, 2] == 0.0)


def test_outer_piece_vertices_lie_on_w(surface, params):
    for piece in (K_P, K_M, ANNULUS, DISK):
        pts = surface.vertices[surface.region == piece]
        assert np.allclose(project_to_piece(piece, pts, params), pts, atol=1e-9)
