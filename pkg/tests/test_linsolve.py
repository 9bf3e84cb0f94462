import numpy as np
import pytest

from src.linsolve import (BorderedSystem, JacobiSystem, WModelSolver, catenoid_rotational_residual, conormal_flux,
                          iterate_linear, kernel_field, orbit_basis, orbit_projector, scherk_kernel_check,
                          solve_global, solve_model_w, standard_piece_kernels, substitute_kernel_field,
                          substitute_kernel_pairing)
from src.mesher import build_initial_surface, build_scherk_quotient, build_w_model, disk_mesh
from src.rotsym import solve_critical_constants


@pytest.fixture(scope="module")
def disk_system():
    disk = disk_mesh(0.0, n_rings=6)
    system = JacobiSystem(disk.vertices, disk.faces, np.zeros(disk.n_vertices), dirichlet=disk.boundary >= 0)
    return disk, system


@pytest.fixture
def symmetric_rhs(surface, rng):
    return surface.orbits.average(rng.standard_normal(surface.n_vertices), symmetric=True)


@pytest.fixture(scope="module")
def symmetric_rhs_m8():
    mesh = build_initial_surface(0.0, 8, 4, check_intersections=False)
    rng = np.random.default_rng(8)
    return mesh, mesh.orbits.average(rng.standard_normal(mesh.n_vertices), symmetric=True)


def test_orbit_projector_is_idempotent(surface, rng):
    Q, reps = orbit_basis(surface.orbits, symmetric=True)
    P = orbit_projector(Q)
    x = rng.standard_normal(surface.n_vertices)
    assert np.allclose(P @ (P @ x), P @ x, atol=1e-12)
    assert surface.orbits.deviation(P @ x, symmetric=True) < 1e-10
    assert len(reps) == Q.shape[1]


def test_disk_collocation_solve(disk_system, rng):
    disk, system = disk_system
    E = rng.standard_normal(disk.n_vertices)
    u = system.solve(E)
    Lu, _ = system.apply(u)
    assert np.allclose(Lu[system.interior], E[system.interior], atol=1e-9)
    assert np.max(np.abs(u[system.dirichlet])) <= 1e-12


def test_disk_weak_and_collocation_agree(disk_system, rng):
    disk, system = disk_system
    E = rng.standard_normal(disk.n_vertices)
    assert np.allclose(system.solve(E, form="weak"), system.solve(E), atol=1e-9)


def test_unknown_form(disk_system):
    disk, system = disk_system
    with pytest.raises(ValueError):
        system.solve(np.zeros(disk.n_vertices), form="spectral")


def test_annulus_rotational_determinant():
    table = standard_piece_kernels(4)
    row = table[(table.piece == "A") & (table.n == 0)].iloc[0]
    assert row.determinant == pytest.approx(1.0 + np.log(solve_critical_constants().r_crit))
    assert row.determinant == pytest.approx(0.2245, abs=1e-3)


def test_catenoid_rotational_determinant():
    table = standard_piece_kernels(4)
    row = table[(table.piece == "K") & (table.n == 0)].iloc[0]
    assert row.determinant == pytest.approx(catenoid_rotational_residual(), abs=1e-10)
    assert row.determinant == pytest.approx(0.468, abs=1e-3)


def test_catenoid_mode_one_excluded():
    table = standard_piece_kernels(4)
    row = table[(table.piece == "K") & (table.n == 1)].iloc[0]
    assert bool(row.excluded)
    assert abs(row.determinant) < 1e-8


def test_piece_kernel_margins():
    table = standard_piece_kernels(16)
    assert len(table) == 3 * 17
    kept = table[~table.excluded]
    assert kept.margin.min() >= 0.01


def test_substitute_kernel_pairing():
    report = substitute_kernel_pairing()
    assert abs(report["pairing"]) >= 10.0 * report["quadrature_error"]
    assert report["relative_mismatch"] <= 0.05


def test_conormal_flux_height():
    with pytest.raises(ValueError):
        conormal_flux(0.0, height=1.5)


def test_kernel_fields_symmetric(surface):
    w = substitute_kernel_field(surface)
    k = kernel_field(surface)
    assert np.any(w.full() != 0.0) and np.any(k.full() != 0.0)
    assert w.deviation() < 1e-8
    assert k.deviation() < 1e-8


def test_scherk_kernel(quotient):
    report = scherk_kernel_check(quotient)
    assert report["correlation"] >= 0.99
    assert report["gap"] >= 10.0
    assert report["ex_deviation"] < 1e-10


def test_bordered_pairing_nonzero(surface):
    assert abs(BorderedSystem(surface).pairing()) > 1e-3


def test_global_solve_zero_data(surface):
    solution = solve_global(surface, np.zeros(surface.n_vertices), estimate=False)
    assert np.all(solution.u.full() == 0.0)
    assert solution.mu == 0.0
    assert solution.report["residual"] == 0.0


def test_global_solve_residual(surface, symmetric_rhs):
    solution = solve_global(surface, symmetric_rhs)
    assert solution.report["residual"] <= 1e-6
    assert solution.report["bound"] > 0.0
    assert np.isfinite(solution.report["condition"])
    assert solution.report["symmetry_deviation"] < 1e-6


def test_w_model_solver(surface, symmetric_rhs):
    solver = WModelSolver(build_w_model(surface))
    zeros = np.zeros(surface.n_vertices)
    solution = solver.solve(symmetric_rhs, zeros)
    assert solver.residual(solution, symmetric_rhs, zeros) <= 1e-6
    assert solution.constant > 0.0


def test_iterate_linear_two_steps(surface, quotient, symmetric_rhs):
    result = iterate_linear(surface, symmetric_rhs, n=2, quotient=quotient)
    assert len(result.history) == 2
    assert list(result.history.step) == [1, 2]
    assert np.isfinite(result.boundary_after_first)
    assert np.isfinite(result.direct_difference)


def _relative_gap(u, v):
    return float(np.max(np.abs(u - v)) / np.max(np.abs(v)))


@pytest.mark.slow
def test_iterate_linear_contracts_to_direct_solve(symmetric_rhs_m8):
    mesh, E = symmetric_rhs_m8
    quotient = build_scherk_quotient(mesh)
    direct = solve_global(mesh, E, estimate=False).u.full()
    short = iterate_linear(mesh, E, n=2, quotient=quotient)
    long = iterate_linear(mesh, E, n=8, quotient=quotient)
    assert np.all(long.history.ratio <= 0.8)
    assert _relative_gap(long.u.full(), direct) < _relative_gap(short.u.full(), direct)
    assert _relative_gap(long.u.full(), direct) <= 10.0 * float(np.prod(long.history.ratio))


@pytest.mark.slow
def test_stability_constant_across_m():
    bounds = []
    for m in (6, 8, 10):
        mesh = build_initial_surface(0.0, m, 4, check_intersections=False)
        rng = np.random.default_rng(m)
        E = mesh.orbits.average(rng.standard_normal(mesh.n_vertices), symmetric=True)
        solution = solve_global(mesh, E)
        assert solution.report["residual"] <= 1e-8
        bounds.append(solution.report["bound"])
    assert max(bounds) <= 2.0 * min(bounds)


def test_solve_model_w_covers_outer_pieces(surface, symmetric_rhs):
    solution = solve_model_w(surface, symmetric_rhs)
    u = solution.on_mesh(surface.n_vertices)
    assert u.shape == (surface.n_vertices,)
    assert np.any(u != 0.0)
    assert np.all(np.isfinite(u))
