import numpy as np
import pytest

from src.exceptions import AdmissibilityError, DomainError
from src.geom import (boundary_angle, bump_metric, cotan_stiffness, discrete_mean_curvature, euclidean_metric,
                      exp_defect_constant, injectivity_separation, lumped_mass, mean_curvature, norm_weight,
                      quadratic_residual, renormalize_to_sphere, riemannian_exp, twisted_graph, twisted_normal,
                      weighted_norm)
from src.mesher import build_initial_surface, catenoid_mesh, disk_mesh, sphere_mesh


@pytest.fixture(scope="module")
def sphere():
    return sphere_mesh(3)


def test_sphere_discrete_mean_curvature(sphere):
    H = mean_curvature(sphere, analytic=False).values
    valence = np.bincount(sphere.faces.ravel(), minlength=sphere.n_vertices)
    # the 12 icosahedron corners keep valence 5 and carry the largest cotangent error
    assert np.sum(valence == 5) == 12
    assert np.allclose(H[valence == 6], 2.0, atol=0.1)
    assert np.allclose(H[valence == 5], 2.0, atol=0.35)
    assert np.median(H) == pytest.approx(2.0, abs=0.05)


def test_stiffness_annihilates_constants(sphere):
    K = cotan_stiffness(sphere.vertices, sphere.faces)
    assert np.max(np.abs(K @ np.ones(sphere.n_vertices))) < 1e-10


def test_lumped_mass_sums_to_area(sphere):
    M = lumped_mass(sphere.vertices, sphere.faces)
    assert M.sum() == pytest.approx(sphere.area(), rel=1e-12)


def test_flat_disk():
    disk = disk_mesh(0.3)
    assert np.max(np.abs(discrete_mean_curvature(disk))) < 1e-10
    theta = boundary_angle(disk)
    assert np.allclose(theta.values, 0.3, atol=1e-12)
    assert len(theta.support) == 6 * 8


def test_catenoid_meets_sphere_orthogonally():
    cat = catenoid_mesh()
    assert np.max(np.abs(boundary_angle(cat).values)) < 1e-8
    H = discrete_mean_curvature(cat)
    interior = cat.boundary < 0
    assert np.max(np.abs(H[interior])) < 0.1


def test_boundary_angle_needs_sphere_boundary():
    cat = catenoid_mesh(8, 16)
    moved = cat.with_vertices(cat.vertices * 0.9, keep_exact=True)
    with pytest.raises(DomainError):
        boundary_angle(moved)


def test_twisted_graph_constant_shift():
    disk = disk_mesh(0.0)
    moved = twisted_graph(disk, np.full(disk.n_vertices, 0.01))
    inner = np.linalg.norm(disk.vertices, axis=1) < 0.5
    assert np.allclose(moved.vertices[inner, 2], 0.01, atol=1e-12)
    assert np.allclose(moved.vertices[inner, :2], disk.vertices[inner, :2], atol=1e-12)
    rim = disk.boundary >= 0
    assert np.allclose(np.linalg.norm(moved.vertices[rim], axis=1), 1.0)


def test_twisted_graph_zero_is_identity():
    disk = disk_mesh(0.0, n_rings=4)
    moved = twisted_graph(disk, np.zeros(disk.n_vertices))
    assert np.array_equal(moved.vertices, disk.vertices)


def test_twisted_graph_admissibility():
    disk = disk_mesh(0.0, n_rings=4)
    with pytest.raises(AdmissibilityError):
        twisted_graph(disk, np.full(disk.n_vertices, 0.04), eps=0.1)
    with pytest.raises(AdmissibilityError):
        twisted_graph(disk, np.zeros(3))


def test_norm_weight_floor(params):
    w0 = norm_weight(np.array([0.0, 100.0]), 0, 1.0, params)
    assert w0[0] == pytest.approx(1.0)
    assert w0[1] == pytest.approx(np.exp(-params.seam))
    w2 = norm_weight(np.array([0.0, 100.0]), 2, 1.0, params)
    assert np.all(w2 >= params.lam ** -6 * np.exp(-params.seam) * (1 - 1e-12))


@pytest.mark.parametrize("k", [0, 2])
def test_weighted_norm_homogeneous(surface, params, rng, k):
    values = rng.standard_normal(surface.n_vertices)
    base = weighted_norm(values, k, 1.0, params, mesh=surface)
    assert base > 0
    assert weighted_norm(3.0 * values, k, 1.0, params, mesh=surface) == pytest.approx(3.0 * base)


def test_weighted_norm_rejects_order(surface, params):
    with pytest.raises(ValueError):
        weighted_norm(np.zeros(surface.n_vertices), 1, 1.0, params, mesh=surface)


def test_quadratic_residual_is_quadratic():
    cat = catenoid_mesh()
    alpha = np.arctan2(cat.vertices[:, 1], cat.vertices[:, 0])
    phi = 0.02 * np.cos(2 * alpha)

    def second_difference(f):
        return quadratic_residual(cat, f)[0] - 2.0 * quadratic_residual(cat, f / 2.0)[0]

    ratio = np.linalg.norm(second_difference(phi)) / np.linalg.norm(second_difference(phi / 2.0))
    assert 3.5 <= ratio <= 4.5


def test_euclidean_exponential_is_translation():
    x = np.array([0.2, -0.1])
    v = np.array([0.3, 0.4])
    assert np.allclose(riemannian_exp(euclidean_metric, x, v), x + v, atol=1e-12)


def test_exponential_defect_is_quadratic():
    metric = bump_metric(0.1)
    x = np.array([0.3, -0.2])
    c1 = exp_defect_constant(metric, x, 0.1)
    c2 = exp_defect_constant(metric, x, 0.2)
    assert c1 > 0
    assert 0.7 < c2 / c1 < 1.3


def test_exponential_injective_near_base():
    assert injectivity_separation(bump_metric(0.1), np.zeros(2), 0.2) > 0.5


def test_exponential_leaves_chart():
    with pytest.raises(DomainError):
        riemannian_exp(euclidean_metric, np.zeros(2), np.array([2.0, 0.0]), chart_radius=1.0)


def test_twisted_normal_interior_is_surface_normal():
    disk = disk_mesh(0.0)
    field = twisted_normal(disk)
    inner = np.linalg.norm(disk.vertices, axis=1) < 0.5
    assert np.allclose(field.vectors[inner], [0.0, 0.0, 1.0])
    assert field.min_denominator == pytest.approx(1.0, abs=1e-12)


def test_twisted_normal_degenerates_on_sphere():
    with pytest.raises(AdmissibilityError):
        twisted_normal(sphere_mesh(1))


def test_twist_is_finite_at_origin():
    disk = disk_mesh(0.0, n_rings=4)
    centre = int(np.flatnonzero(np.linalg.norm(disk.vertices, axis=1) == 0.0)[0])
    field = twisted_normal(disk)
    assert np.all(np.isfinite(field.vectors))
    assert np.allclose(field.vectors[centre], [0.0, 0.0, 1.0])
    moved = twisted_graph(disk, np.full(disk.n_vertices, 0.01))
    assert np.allclose(moved.vertices[centre], [0.0, 0.0, 0.01], atol=1e-12)


def test_sphere_drift_raises():
    q = np.array([[1.0, 0.0, 0.0], [0.0, 1.0 + 1e-3, 0.0], [0.2, 0.1, 0.0]])
    with pytest.raises(AdmissibilityError):
        renormalize_to_sphere(q, np.array([0, 1]))
    snapped = renormalize_to_sphere(q, np.array([0, 1]), tol=1e-2)
    assert np.allclose(np.linalg.norm(snapped[:2], axis=1), 1.0, atol=1e-15)
    assert np.array_equal(snapped[2], q[2])


def test_twisted_graph_keeps_boundary_on_sphere(surface):
    phi = surface.orbits.average(0.01 * surface.vertices[:, 2] ** 2)
    moved = twisted_graph(surface, phi, analytic=False)
    rim = np.unique(surface.boundary_edges())
    assert np.allclose(np.linalg.norm(moved.vertices[rim], axis=1), 1.0, atol=1e-12)
    assert np.all(np.isfinite(moved.vertices))


def test_quadratic_residual_on_initial_surface(surface):
    phi = surface.orbits.average(0.004 * (1.0 - np.sum(surface.vertices ** 2, axis=1)))

    def beyond_linear(f):
        QH, QT = quadratic_residual(surface, f)
        QH2, QT2 = quadratic_residual(surface, f / 2.0)
        return np.concatenate([QH - 2.0 * QH2, QT - 2.0 * QT2])

    ratio = np.linalg.norm(beyond_linear(phi)) / np.linalg.norm(beyond_linear(phi / 2.0))
    assert 3.5 <= ratio <= 4.5


@pytest.mark.slow
def test_weighted_mean_curvature_decays_with_m():
    sizes = {}
    for m in (6, 12):
        mesh = build_initial_surface(0.0, m, 4, check_intersections=False)
        sizes[m] = weighted_norm(mean_curvature(mesh, analytic=True), 0, 0.75, mesh.params)
    assert 0.35 <= sizes[12] / sizes[6] <= 0.7
