import numpy as np
import pytest

from src.exceptions import DomainError, ParameterWindowError
from src.scherk import (CORE, HWING_M, HWING_P, VWING_M, VWING_P, WING_KINDS, DeformParams, ScherkImmersion,
                        b_tau, b_tau_derivatives, dihedral_generators, dihedral_group, phi_wing,
                        psi_cut, psi_cut_eps, psi_transition, scherk_implicit, scherk_mean_curvature, scherk_project,
                        scherk_symmetries, unbalancing_rotation, wing_coordinates, wing_point, wing_point_jet, x_hor,
                        x_hor_polar, x_ver, xi_theta, xi_theta_derivatives, z_map)


def _wing_samples(kind, a=1.5):
    y, s = np.meshgrid(np.linspace(-np.pi, np.pi, 9), np.linspace(0.0, 2.0, 5), indexing="ij")
    return y.ravel(), s.ravel(), wing_point(kind, y.ravel(), s.ravel(), a)


@pytest.mark.parametrize("kind", WING_KINDS)
def test_wing_points_lie_on_scherk(kind):
    _, _, p = _wing_samples(kind)
    assert np.max(np.abs(scherk_implicit(p))) < 1e-12
    assert np.max(np.abs(scherk_mean_curvature(p))) < 1e-10


@pytest.mark.parametrize("kind", WING_KINDS)
def test_wing_coordinates_invert_wing_point(kind):
    y, s, p = _wing_samples(kind)
    y2, s2 = wing_coordinates(kind, p, 1.5)
    assert np.allclose(y2, y, atol=1e-12)
    assert np.allclose(s2, s, atol=1e-12)


def test_symmetries_preserve_scherk(rng):
    _, _, p = _wing_samples(HWING_P)
    for name, g in scherk_symmetries().items():
        assert np.max(np.abs(scherk_implicit(g(p)))) < 1e-12, name


def test_projection_onto_scherk(rng):
    _, _, p = _wing_samples(VWING_M)
    q = scherk_project(p + 1e-3 * rng.standard_normal(p.shape))
    assert np.max(np.abs(scherk_implicit(q))) <= 1e-12


def test_psi_cut_limits_and_midpoint():
    t = np.linspace(0.0, 1.0, 31)
    values = psi_cut(0.0, 1.0, t)
    assert np.all(values[t <= 1.0 / 3.0] == 0.0)
    assert np.all(values[t >= 2.0 / 3.0] == 1.0)
    assert psi_cut(0.0, 1.0, 0.5) == pytest.approx(0.5)
    assert np.all(np.diff(values) >= 0.0)


def test_psi_cut_partition_of_unity():
    t = np.linspace(-1.0, 3.0, 101)
    assert np.allclose(psi_cut(0.5, 2.0, t) + psi_cut(2.0, 0.5, t), 1.0, atol=1e-14)


@pytest.mark.parametrize("order", [1, 2])
def test_psi_cut_derivatives(order):
    t = np.linspace(0.36, 0.64, 15)
    h = 1e-5
    fd = (psi_cut(0.0, 1.0, t + h, order - 1) - psi_cut(0.0, 1.0, t - h, order - 1)) / (2 * h)
    assert np.allclose(psi_cut(0.0, 1.0, t, order), fd, rtol=1e-5, atol=1e-6)


def test_psi_cut_rejects_equal_endpoints():
    with pytest.raises(ValueError):
        psi_cut(1.0, 1.0, 0.5)


def test_psi_cut_eps_window():
    eps = 0.3
    assert psi_cut_eps(eps, 0.0) == pytest.approx(1.0)
    assert psi_cut_eps(eps, 0.09) == pytest.approx(1.0)
    assert psi_cut_eps(eps, 0.21) == pytest.approx(0.0)
    assert psi_cut_eps(eps, -0.21) == pytest.approx(0.0)


def test_psi_transition_blends():
    s = np.array([0.0, 2.0])
    out = psi_transition(0.5, 1.5, s, np.zeros((2, 3)), np.ones((2, 3)))
    assert np.allclose(out[0], 0.0)
    assert np.allclose(out[1], 1.0)


@pytest.mark.parametrize("m", [3, 4, 6, 12])
def test_dihedral_group_order(m):
    group = dihedral_group(m)
    assert len(group) == 4 * m
    assert np.allclose(group[0], np.eye(3))
    for g in group:
        assert np.allclose(g @ g.T, np.eye(3), atol=1e-12)
    for g in dihedral_generators(m).values():
        assert any(np.allclose(g, e, atol=1e-12) for e in group)


def test_xi_theta_identity_near_neck(rng):
    p = rng.uniform(-1.0, 1.0, size=(50, 3))
    assert np.allclose(xi_theta(0.05, p), p, atol=1e-14)


def test_xi_theta_rigid_far_away(rng):
    p = rng.uniform(-1.0, 1.0, size=(20, 3))
    p[:, 2] = rng.uniform(2.0, 4.0, size=20)
    assert np.allclose(xi_theta(0.05, p), p @ unbalancing_rotation(0.05, True).T, atol=1e-14)
    p[:, 2] *= -1.0
    assert np.allclose(xi_theta(0.05, p), p @ unbalancing_rotation(0.05, False).T, atol=1e-14)


def test_xi_theta_jacobian_matches_differences(rng):
    p = rng.uniform(-1.0, 1.0, size=(6, 3))
    p[:, 2] = np.linspace(1.1, 1.9, 6)
    J, _ = xi_theta_derivatives(0.05, p)
    h = 1e-6
    for a in range(3):
        e = np.zeros(3)
        e[a] = h
        fd = (xi_theta(0.05, p + e) - xi_theta(0.05, p - e)) / (2 * h)
        assert np.allclose(J[:, :, a], fd, atol=1e-8)


def test_default_parameters_small_m(params):
    assert params.m == 3
    assert params.a == pytest.approx(DeformParams.default_a(3, 0.05))
    assert params.a == pytest.approx(1.344, abs=1e-3)
    assert params.lam == pytest.approx(params.r_theta / 3)
    assert params.seam == pytest.approx(5 * 0.05 * 3)


def test_hard_windows():
    with pytest.raises(ParameterWindowError):
        DeformParams.build(theta=0.0, m=2)
    with pytest.raises(ParameterWindowError) as info:
        DeformParams.build(theta=0.0, m=6, a=0.5)
    assert info.value.window == "wing-disjointness"
    with pytest.raises(ParameterWindowError) as info:
        DeformParams.build(theta=0.6, m=6, delta_theta=0.05)
    assert info.value.window == "theta"


def test_soft_window_warning(caplog):
    DeformParams.build(theta=0.0, m=3)
    assert any("soft window" in record.getMessage() for record in caplog.records)


def test_cutoff_regions(params):
    D = params.depth
    assert params.psi_trun(2.0 * D) == pytest.approx(1.0)
    assert params.psi_trun(5.0 * D) == pytest.approx(0.0)
    assert params.psi_hat(0.0) == pytest.approx(1.0)
    assert params.psi_hat(params.seam) == pytest.approx(0.0)


def test_wings_match_core_at_blend_start(params):
    immersion = ScherkImmersion(params)
    y = np.linspace(-np.pi, np.pi, 7)
    s = np.zeros_like(y)
    for kind in WING_KINDS:
        core = immersion.core(wing_point(kind, y, s, params.a))
        assert np.allclose(immersion.wing(kind, y, s), core, atol=1e-12)


def test_z_map_domain(params):
    with pytest.raises(DomainError):
        z_map(params, HWING_M, np.array([[0.0, params.seam + 1.0]]))
    with pytest.raises(ValueError):
        z_map(params, 99, np.zeros((1, 2)))
    p = wing_point(HWING_P, np.array([0.3]), np.array([0.0]), params.a)
    assert z_map(params, CORE, p).shape == (1, 3)


def test_core_geometry_normalized(params):
    p = wing_point(VWING_P, np.linspace(-1.0, 1.0, 5), np.zeros(5), params.a)
    n, H, A2 = ScherkImmersion(params).core_geometry(p)
    assert np.allclose(np.linalg.norm(n, axis=1), 1.0)
    assert np.all(np.isfinite(H)) and np.all(A2 > 0)


def test_phi_wing_graph_lies_on_scherk():
    y, s = np.meshgrid(np.linspace(-np.pi, np.pi, 7), np.linspace(0.0, 1.5, 4))
    a = 1.5
    p = np.stack([a + s, y, -phi_wing(y, s, a)], axis=-1)
    assert np.max(np.abs(scherk_implicit(p))) < 1e-12


def test_b_tau_wraps_axis_on_circle():
    tau = 0.3
    y = np.linspace(-2.0, 2.0, 9)
    p = np.stack([np.zeros_like(y), y, np.zeros_like(y)], axis=1)
    q = b_tau(tau, p)
    centre = np.array([-1.0 / tau, 0.0, 0.0])
    assert np.allclose(np.linalg.norm(q - centre, axis=1), 1.0 / tau)
    assert np.allclose(b_tau(0.0, p), p)


def test_b_tau_jacobian(rng):
    tau = 0.2
    p = rng.uniform(-1.0, 1.0, size=(5, 3))
    J, _ = b_tau_derivatives(tau, p)
    h = 1e-6
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        fd = (b_tau(tau, p + e) - b_tau(tau, p - e)) / (2 * h)
        assert np.allclose(J[:, :, k], fd, atol=1e-8)


@pytest.mark.parametrize("sign", [1, -1])
def test_bent_asymptotes_continuous_in_tau(sign):
    y = np.linspace(-1.0, 1.0, 5)
    s = np.linspace(0.0, 1.0, 5)
    a = 1.5
    assert np.allclose(x_hor(1e-7, sign, y, s, a), x_hor(0.0, sign, y, s, a), atol=1e-5)
    assert np.allclose(x_ver(0.05, 1e-7, sign, y, s, a), x_ver(0.05, 0.0, sign, y, s, a), atol=1e-5)
    assert np.all(x_hor(0.2, sign, y, s, a)[:, 2] == 0.0)


def test_vertical_asymptote_angle():
    theta = 0.05
    s = np.array([0.0, 1.0])
    X = x_ver(theta, 0.0, 1, np.zeros(2), s, 1.5)
    d = X[1] - X[0]
    assert np.arctan2(d[0], d[2]) == pytest.approx(theta)


@pytest.mark.parametrize("sign", [1, -1])
def test_polar_horizontal_chart_is_bent_plane(sign):
    tau, a = 0.2, 1.5
    y = np.linspace(-2.0, 2.0, 7)
    s = np.linspace(0.0, 1.2, 7)
    flat = np.stack([sign * (a + s), y, np.zeros_like(y)], axis=-1)
    assert np.allclose(x_hor_polar(tau, sign, y, s, a), b_tau(tau, flat), atol=1e-14)


@pytest.mark.parametrize("kind", [HWING_P, HWING_M])
def test_horizontal_wing_continues_core_across_blend(params, kind):
    immersion = ScherkImmersion(params)
    y, s = np.meshgrid(np.linspace(-np.pi, np.pi, 7), np.linspace(0.0, params.blend, 5))
    X, n = immersion.bent_wing(kind, y, s)
    graph = X + immersion.wing_graph(y, s)[..., None] * n
    core = immersion.unscaled_core(wing_point(kind, y, s, params.a))
    assert np.allclose(graph, core, atol=1e-12)


@pytest.mark.parametrize("kind", WING_KINDS)
def test_wing_point_jet_matches_differences(kind):
    a, h = 1.5, 1e-5
    y = np.linspace(-1.0, 1.0, 5)
    s = np.linspace(0.0, 1.0, 5)
    p, p_y, p_s, p_yy, p_ys, p_ss = wing_point_jet(kind, y, s, a)
    f = lambda dy, ds: wing_point(kind, y + dy, s + ds, a)
    assert np.allclose(p, f(0.0, 0.0), atol=1e-14)
    assert np.allclose(p_y, (f(h, 0.0) - f(-h, 0.0)) / (2 * h), atol=1e-8)
    assert np.allclose(p_s, (f(0.0, h) - f(0.0, -h)) / (2 * h), atol=1e-8)
    k = 1e-4
    assert np.allclose(p_yy, (f(k, 0.0) - 2 * f(0.0, 0.0) + f(-k, 0.0)) / k ** 2, atol=1e-5)
    assert np.allclose(p_ss, (f(0.0, k) - 2 * f(0.0, 0.0) + f(0.0, -k)) / k ** 2, atol=1e-5)
    assert np.allclose(p_ys, (f(k, k) - f(k, -k) - f(-k, k) + f(-k, -k)) / (4 * k * k), atol=1e-5)


@pytest.mark.parametrize("theta", [0.0, 0.03])
@pytest.mark.parametrize("kind", WING_KINDS)
def test_wing_jet_matches_differences(params, kind, theta):
    immersion = ScherkImmersion(params.with_theta(theta))
    y = np.linspace(-1.0, 1.0, 5)
    # through the blend and the truncation, short of the seam
    s = np.linspace(0.05, params.seam - 0.05, 5)
    F, F_y, F_s, F_yy, F_ys, F_ss = immersion.wing_jet(kind, y, s)
    f = lambda dy, ds: immersion.wing(kind, y + dy, s + ds)
    h = 1e-5
    assert np.allclose(F, f(0.0, 0.0), atol=1e-12)
    assert np.allclose(F_y, (f(h, 0.0) - f(-h, 0.0)) / (2 * h), atol=1e-7)
    assert np.allclose(F_s, (f(0.0, h) - f(0.0, -h)) / (2 * h), atol=1e-7)
    k = 1e-4
    assert np.allclose(F_yy, (f(k, 0.0) - 2 * f(0.0, 0.0) + f(-k, 0.0)) / k ** 2, atol=1e-4)
    assert np.allclose(F_ss, (f(0.0, k) - 2 * f(0.0, 0.0) + f(0.0, -k)) / k ** 2, atol=1e-4)
    assert np.allclose(F_ys, (f(k, k) - f(k, -k) - f(-k, k) + f(-k, -k)) / (4 * k * k), atol=1e-4)


def test_wing_geometry_of_flat_outer_plane(params):
    # past the truncation the horizontal wings are the plane z = 0
    immersion = ScherkImmersion(params)
    y = np.linspace(-1.0, 1.0, 5)
    s = np.full(5, 4.5 * params.depth)
    n, H, A2 = immersion.wing_geometry(HWING_P, y, s)
    assert np.allclose(np.abs(n[:, 2]), 1.0, atol=1e-12)
    assert np.allclose(H, 0.0, atol=1e-10)
    assert np.allclose(A2, 0.0, atol=1e-10)
