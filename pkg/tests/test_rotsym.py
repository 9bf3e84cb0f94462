import numpy as np
import pytest

from src.exceptions import DomainError, OutOfFamilyError
from src.rotsym import (AxisymProfile, catenoid_from_h, family_point_for_theta, family_table, latitude_ode_residual,
                        phi_even, phi_even_prime, phi_even_second, phi_odd, phi_odd_prime, phi_robin,
                        phi_robin_prime, r_of_theta, solve_critical_constants, w_pieces)


def test_critical_constants_to_three_places():
    c = solve_critical_constants()
    assert round(c.R_crit, 3) == 0.834
    assert round(c.z_crit, 3) == 0.552
    assert round(c.r_crit, 3) == 0.460
    assert round(c.x_crit, 3) == 0.986


def test_critical_constant_identities():
    c = solve_critical_constants()
    assert abs(np.sin(c.x_crit) - c.R_crit) < 1e-10
    assert abs(c.r_crit - 0.5 * np.sin(2 * c.x_crit)) < 1e-10
    assert abs(c.t_crit - 1.0 / np.tanh(c.t_crit)) < 1e-12
    # boundary circle of the catenoid lies on the unit sphere
    assert abs(c.r_crit * np.cosh(c.z_crit / c.r_crit) - c.R_crit) < 1e-10
    assert abs(c.R_crit ** 2 + c.z_crit ** 2 - 1.0) < 1e-12


def test_structural_margins_positive():
    margins = solve_critical_constants().margins()
    assert set(margins) == {"r_crit - exp(-1)", "x_crit - pi/4"}
    assert all(value > 0 for value in margins.values())


def test_areas():
    d = solve_critical_constants().as_dict()
    assert d["area_K"] > 0
    assert d["area_K_plus_pi"] == pytest.approx(d["area_K"] + np.pi)


def test_family_radius_strictly_decreasing():
    c = solve_critical_constants()
    thetas = np.linspace(c.theta_min, 0.5, 200)
    radii = np.array([r_of_theta(t) for t in thetas])
    assert np.all(np.diff(radii) < 0)


def test_family_endpoints():
    c = solve_critical_constants()
    assert c.theta_min < 0
    assert abs(r_of_theta(c.theta_min) - 1.0) < 1e-6
    assert abs(r_of_theta(0.0) - c.r_crit) < 1e-9
    assert abs(r_of_theta(1e-9) - c.r_crit) < 1e-6


def test_critical_member_of_family():
    c = solve_critical_constants()
    point = catenoid_from_h(c.z_crit)
    assert abs(point.theta) < 1e-12
    assert abs(point.r_hat - c.r_crit) < 1e-12
    assert abs(point.tilde_z) < 1e-12


def test_family_inversion():
    point = family_point_for_theta(0.1)
    assert point.theta == pytest.approx(0.1, abs=1e-12)
    assert point.r_hat == pytest.approx(r_of_theta(0.1))


@pytest.mark.parametrize("offset", [-0.1, -1e-3])
def test_below_family_range(offset):
    with pytest.raises(OutOfFamilyError):
        family_point_for_theta(solve_critical_constants().theta_min + offset)


@pytest.mark.parametrize("theta", [np.pi / 2, 2.0])
def test_above_family_range(theta):
    with pytest.raises(OutOfFamilyError):
        family_point_for_theta(theta)


@pytest.mark.parametrize("h", [0.0, 1.0, -0.2])
def test_catenoid_from_h_range(h):
    with pytest.raises(OutOfFamilyError):
        catenoid_from_h(h)


def test_family_table_columns():
    table = family_table([0.0, 0.05, 0.1])
    assert list(table.columns) == ["theta", "r_theta", "h"]
    assert len(table) == 3
    assert table["r_theta"].iloc[0] == pytest.approx(solve_critical_constants().r_crit)


def test_latitude_functions_solve_ode():
    x = np.linspace(-1.2, 1.2, 41)
    odd = latitude_ode_residual(phi_odd(x), phi_odd_prime(x), -np.sin(x), x)
    even = latitude_ode_residual(phi_even(x), phi_even_prime(x), phi_even_second(x), x)
    assert np.max(np.abs(odd)) < 1e-12
    assert np.max(np.abs(even)) < 1e-10


def test_phi_even_vanishes_at_boundary_latitude():
    assert abs(phi_even(solve_critical_constants().x_crit)) < 1e-12


def test_phi_robin_meets_robin_condition():
    x = solve_critical_constants().x_crit
    residual = phi_robin(x) - np.cos(x) / np.sin(x) * phi_robin_prime(x)
    assert abs(residual) < 1e-10


def test_latitude_domain():
    with pytest.raises(DomainError):
        phi_even(np.pi / 2)


def test_profile_meets_sphere_orthogonally():
    profile = AxisymProfile.for_theta(0.0)
    h = profile.point.h
    r = float(profile.f(h))
    assert r ** 2 + h ** 2 == pytest.approx(1.0, abs=1e-12)
    # tangent (f', 1) is radial at the circle
    assert float(profile.df(h)) * h == pytest.approx(r, abs=1e-10)


def test_w_pieces_charts():
    atlas = w_pieces(0.0)
    assert set(atlas.charts) >= {"K+", "K-", "A", "D"}
    for name, chart in atlas.charts.items():
        u, v = chart.grid(4, 8)
        p = chart.point(u, v)
        assert np.all(np.linalg.norm(p, axis=-1) <= 1.0 + 1e-9), name


@pytest.mark.parametrize("theta", [0.0, 0.05])
def test_catenoid_chart_is_minimal(theta):
    atlas = w_pieces(theta)
    chart = atlas["K+"]
    u, v = chart.grid(6, 12)
    _, H, A2 = chart.curvatures(u, v)
    assert np.max(np.abs(H)) < 1e-10
    expected = atlas.profile.second_form_norm2(chart.height(u))
    assert np.allclose(A2, expected, rtol=1e-9)


def test_annulus_identification_keeps_sphere():
    atlas = w_pieces(0.05)
    p = atlas.transport("A", np.array([1.0]), np.array([0.3]))
    assert np.linalg.norm(p[0]) == pytest.approx(1.0, abs=1e-12)
