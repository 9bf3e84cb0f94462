"""Nonlinear outer loop: phi_H, the fixed-point map over (phi, theta), verification and export."""

import logging
import time
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from src.config_loader import RunConfig, check_windows
from src.exceptions import AdmissibilityError, NonConvergenceError
from src.geom import (ScalarField, boundary_angle, discrete_mean_curvature, mean_curvature, twisted_graph,
                      weighted_norm, weighted_pair_norm)
from src.linsolve import (BorderedSystem, JacobiSystem, iterate_linear, scherk_kernel_check,
                          solve_global, standard_piece_kernels, substitute_kernel_pairing)
from src.mesher import (SurfaceMesh, build_initial_surface, build_scherk_quotient, hausdorff_to_w,
                        identify_theta, quality_report, validate_topology)
from src.rotsym import solve_critical_constants
from src.spatial import self_intersections
from src.utils import emit_report, export_mesh

logger = logging.getLogger(__name__)

ITERATION_FIELDS = ("iteration", "phi_norm", "theta", "mu", "max_H", "max_Theta", "area", "relaxation")

SYMMETRY_TOL = 1e-7

# below this amplitude of phi the half-step difference is rounding noise
QUADRATIC_MIN_AMPLITUDE = 1e-5


@dataclass
class SolveReport:
    """Per-iteration history of the fixed point plus final flags."""

    config: Dict[str, Any]
    iterations: List[Dict[str, float]] = field(default_factory=list)
    converged: bool = False
    monotone: bool = True
    final: Dict[str, Any] = field(default_factory=dict)
    timing: Dict[str, float] = field(default_factory=dict)

    def record(self, **values):
        values.setdefault("relaxation", 1.0)
        row = {name: values[name] for name in ITERATION_FIELDS}
        if self.iterations and row["max_H"] > self.iterations[-1]["max_H"]:
            self.monotone = False
        self.iterations.append(row)

    def as_dict(self, include_timing: bool = False) -> Dict[str, Any]:
        """Fixed field names; timing is left out unless asked for, so reports are reproducible."""
        data = asdict(self)
        if not include_timing:
            data.pop("timing")
        return data


@dataclass
class StepResult:
    phi: np.ndarray
    theta: float
    mu: float
    phi_norm: float
    max_H: float
    max_Theta: float
    area: float
    quadratic: float
    surface: SurfaceMesh
    graph: np.ndarray
    relaxation: float = 1.0


def symmetrize(mesh: SurfaceMesh, values: np.ndarray) -> np.ndarray:
    if mesh.orbits is None:
        return np.asarray(values, dtype=float)
    return mesh.orbits.average(values, symmetric=True)


def interior_max(mesh: SurfaceMesh, values: np.ndarray) -> float:
    on_boundary = np.zeros(mesh.n_vertices, dtype=bool)
    on_boundary[np.unique(mesh.boundary_edges())] = True
    return float(np.max(np.abs(np.asarray(values)[~on_boundary]), initial=0.0))


def vertex_symmetry_deviation(mesh: SurfaceMesh) -> float:
    """max |X(perm_g) - g X| over the dihedral group."""
    if mesh.orbits is None or mesh.orbits.matrices is None:
        return 0.0
    V = mesh.vertices
    return float(max(np.max(np.abs(V[perm] - V @ g.T))
                     for perm, g in zip(mesh.orbits.perms, mesh.orbits.matrices)))


def compute_phi_H(mesh: SurfaceMesh, theta: float, H: Optional[np.ndarray] = None,
                  bordered: Optional[BorderedSystem] = None) -> Tuple[ScalarField, float]:
    """(phi_H, theta_H) = R_M(H - theta lambda^-1 w o Pi_S, 0).

    Then L phi_H = H + (theta_H - theta) lambda^-1 w; H = 0 gives phi_H = 0, theta_H = theta.
    """
    bordered = BorderedSystem(mesh) if bordered is None else bordered
    H = mean_curvature(mesh, analytic=False).full() if H is None else np.asarray(H, dtype=float)
    E = symmetrize(mesh, H - theta * bordered.w / mesh.params.lam)
    solution = solve_global(mesh, E, None, bordered=bordered, estimate=False)
    return solution.u, solution.mu


class Workbench:
    """Builds M_theta, solves the linearized problems and iterates the fixed-point map."""

    def __init__(self, config: Optional[RunConfig] = None, cache_size: int = 4):
        self.config = config or RunConfig()
        self.cache_size = cache_size
        self.constants = None
        self.params0 = None
        self.mesh0 = None
        self._surfaces: "OrderedDict[float, SurfaceMesh]" = OrderedDict()
        self._quadratic_constant: Optional[float] = None

    def initialize_system(self):
        """Constants, parameter windows and the reference surface M_0."""
        self.constants = solve_critical_constants()
        params = check_windows(self.config)
        self.params0 = params.with_theta(0.0)
        self.mesh0 = self.surface(0.0)
        logger.info("workbench ready: m = %d, res = %d, %d vertices",
                    self.config.m, self.config.res, self.mesh0.n_vertices)

    def _require(self):
        if self.params0 is None:
            self.initialize_system()

    def surface(self, theta: float) -> SurfaceMesh:
        """Initial surface M_theta on the shared Scherk grid (cached)."""
        key = float(theta)
        if key in self._surfaces:
            self._surfaces.move_to_end(key)
            return self._surfaces[key]
        self._require()
        params = self.params0.with_theta(key)
        mesh = build_initial_surface(key, self.config.m, self.config.res, params=params,
                                     s_far=self.config.s_far, check_intersections=False,
                                     min_angle_deg=self.config.min_angle_deg)
        self._surfaces[key] = mesh
        while len(self._surfaces) > self.cache_size:
            self._surfaces.popitem(last=False)
        return mesh

    # ------------------------------------------------------------- operations

    def build(self, theta: Optional[float] = None) -> Dict[str, Any]:
        """Summary of the initial surface at theta."""
        self._require()
        theta = self.config.theta0 if theta is None else theta
        mesh = self.surface(theta)
        H = mean_curvature(mesh, analytic=True)
        Theta = boundary_angle(mesh, analytic=True)
        return {
            "vertices": mesh.n_vertices,
            "faces": mesh.n_faces,
            "euler_characteristic": mesh.euler_characteristic(),
            "genus": mesh.genus(),
            "boundary_loops": len(mesh.boundary_loops()),
            "area": mesh.area(),
            "max_H": interior_max(mesh, H.full()),
            "max_Theta": Theta.max_abs(),
        }

    def kernels(self, n_max: int = 32) -> Dict[str, Any]:
        """Mode determinants, the Scherk spectral report and the substitute kernel pairing."""
        self._require()
        table = standard_piece_kernels(n_max)
        quotient = build_scherk_quotient(self.mesh0)
        return {
            "modes": table,
            "min_margin": float(table.loc[~table["excluded"], "margin"].min()),
            "scherk": scherk_kernel_check(quotient),
            "pairing": substitute_kernel_pairing(),
        }

    def solve(self, rhs: str = "H", theta: Optional[float] = None, seed: int = 0,
              iterate: bool = False, mesh: Optional[SurfaceMesh] = None) -> Dict[str, Any]:
        """solve_global (and optionally iterate_linear) for a named right-hand side."""
        self._require()
        theta = self.config.theta0 if theta is None else theta
        mesh = self.surface(theta) if mesh is None else mesh
        E, E_bnd = self.right_hand_side(mesh, rhs, seed)
        solution = solve_global(mesh, E, E_bnd, gamma=self.config.gamma)
        report: Dict[str, Any] = {"rhs": rhs, "mu": solution.mu, **solution.report}
        if iterate:
            result = iterate_linear(mesh, E, E_bnd, n=self.config.linear_iterations, gamma=self.config.gamma)
            report["iteration"] = {
                "mu": result.mu,
                "mu_bordered": result.mu_bordered,
                "boundary_after_first": result.boundary_after_first,
                "direct_difference": result.direct_difference,
                "history": result.history.to_dict(orient="records"),
            }
        return report

    def right_hand_side(self, mesh: SurfaceMesh, rhs: str, seed: int = 0) -> Tuple[np.ndarray, np.ndarray]:
        n = mesh.n_vertices
        if rhs == "zero":
            return np.zeros(n), np.zeros(n)
        if rhs == "H":
            return symmetrize(mesh, mean_curvature(mesh, analytic=False).full()), np.zeros(n)
        if rhs == "random":
            rng = np.random.default_rng(seed)
            E = symmetrize(mesh, rng.standard_normal(n))
            on_boundary = np.zeros(n, dtype=bool)
            on_boundary[np.unique(mesh.boundary_edges())] = True
            E_bnd = symmetrize(mesh, np.where(on_boundary, rng.standard_normal(n), 0.0))
            return E, E_bnd
        raise ValueError(f"unknown right-hand side {rhs!r}; expected zero, H or random")

    def _residuals(self, mesh: SurfaceMesh, system: JacobiSystem, H: np.ndarray,
                   phi_t: np.ndarray) -> Tuple[np.ndarray, np.ndarray, SurfaceMesh, np.ndarray, np.ndarray]:
        """(Q_H, Q_Theta) of the twisted graph of phi_t, with the graph, its H and its Theta."""
        moved = twisted_graph(mesh, phi_t, eps=self.config.collar_eps, analytic=False)
        H_phi = discrete_mean_curvature(moved)
        Theta_phi = boundary_angle(moved, analytic=False).full()
        Lphi, Bphi = system.apply(phi_t)
        Q_H = symmetrize(mesh, H_phi - H + Lphi)
        Q_Theta = symmetrize(mesh, np.where(system.robin, Theta_phi - Bphi, 0.0))
        return Q_H, Q_Theta, moved, H_phi, Theta_phi

    def fixed_point_step(self, phi: np.ndarray, theta: float, relaxation: float = 1.0,
                         previous: Optional[np.ndarray] = None) -> StepResult:
        """One application of the fixed-point map to (phi on M_0, theta).

        The graph function is phi_H + phi on M_theta. With relaxation < 1 the step
        only goes that fraction of the way from the previous graph (a field on
        M_0, zero by default), which is a damped Newton step.
        """
        self._require()
        cfg = self.config
        mesh = self.surface(theta)
        transport = identify_theta(self.mesh0, mesh)
        system = JacobiSystem.from_mesh(mesh)
        bordered = BorderedSystem(mesh, system=system)
        H = symmetrize(mesh, mean_curvature(mesh, analytic=False).full())
        phi_H, theta_H = compute_phi_H(mesh, theta, H=H, bordered=bordered)

        phi_t = transport.to_theta(np.asarray(phi, dtype=float)) + phi_H.full()
        if relaxation < 1.0:
            base = np.zeros(mesh.n_vertices) if previous is None else transport.to_theta(previous)
            phi_t = base + relaxation * (phi_t - base)
        phi_norm = weighted_norm(phi_t, 2, cfg.gamma, mesh.params, beta=cfg.beta, mesh=mesh)
        if phi_norm > cfg.admissible_norm:
            raise AdmissibilityError(
                f"weighted norm of phi_theta {phi_norm:.4g} exceeds the admissible bound {cfg.admissible_norm}")
        Q_H, Q_Theta, moved, H_phi, Theta_phi = self._residuals(mesh, system, H, phi_t)

        quadratic = 0.0
        if np.max(np.abs(phi_t)) >= QUADRATIC_MIN_AMPLITUDE:
            # Q(phi) - 2 Q(phi/2) drops the part of Q linear in phi, leaving C phi^2 / 2
            half_H, half_Theta = self._residuals(mesh, system, H, 0.5 * phi_t)[:2]
            size = weighted_pair_norm(mesh, np.where(system.interior, 2.0 * (Q_H - 2.0 * half_H), 0.0),
                                      2.0 * (Q_Theta - 2.0 * half_Theta)[system.robin],
                                      cfg.gamma, mesh.params, beta=cfg.beta)
            quadratic = size / phi_norm ** 2
            if self._quadratic_constant is None:
                self._quadratic_constant = quadratic
            elif quadratic > 10.0 * self._quadratic_constant:
                raise AdmissibilityError(
                    f"quadratic residual constant {quadratic:.4g} exceeds 10x its first value "
                    f"{self._quadratic_constant:.4g}; the mesh no longer resolves phi")

        correction = solve_global(mesh, Q_H, -Q_Theta, bordered=bordered, estimate=False)
        phi_new = transport.to_zero(correction.u.full())
        theta_new = theta_H + correction.mu
        return StepResult(phi=phi_new, theta=float(theta_new), mu=correction.mu, phi_norm=phi_norm,
                          max_H=interior_max(moved, H_phi),
                          max_Theta=float(np.max(np.abs(Theta_phi[system.robin]), initial=0.0)),
                          area=moved.area(), quadratic=quadratic, surface=moved,
                          graph=transport.to_zero(phi_t), relaxation=relaxation)

    def run(self, max_iter: Optional[int] = None) -> Tuple[SurfaceMesh, SolveReport]:
        """Iterate the fixed-point map from (0, theta0) until H and Theta are below tolerance.

        A step that is inadmissible or raises max|H| is retried with half the
        relaxation, down to min_relaxation; accepted steps double it back up to 1.
        Every attempt counts against max_iter.
        """
        self._require()
        cfg = self.config
        max_iter = cfg.max_iter if max_iter is None else max_iter
        started = time.perf_counter()
        report = SolveReport(config=cfg.model_dump())
        self._quadratic_constant = None

        initial = self.surface(cfg.theta0)
        report.final["initial_max_H"] = interior_max(initial, mean_curvature(initial, analytic=False).full())
        H_tol = cfg.residual_tol / self.params0.lam
        phi = np.zeros(self.mesh0.n_vertices)
        graph = np.zeros(self.mesh0.n_vertices)
        theta = cfg.theta0
        relaxation, best_H, rejected = 1.0, np.inf, 0
        step = None
        for iteration in range(1, max_iter + 1):
            t0 = time.perf_counter()
            try:
                trial = self.fixed_point_step(phi, theta, relaxation=relaxation, previous=graph)
            except AdmissibilityError as err:
                if relaxation <= cfg.min_relaxation:
                    raise
                relaxation = max(0.5 * relaxation, cfg.min_relaxation)
                rejected += 1
                logger.warning("fixed point %d rejected (%s); relaxation %.4g", iteration, err, relaxation)
                continue
            report.timing[f"step_{iteration}"] = time.perf_counter() - t0
            if trial.max_H > best_H and relaxation > cfg.min_relaxation:
                relaxation = max(0.5 * relaxation, cfg.min_relaxation)
                rejected += 1
                logger.info("fixed point %d: max|H| rose to %.3e; relaxation %.4g", iteration, trial.max_H, relaxation)
                continue
            step = trial
            report.record(iteration=iteration, phi_norm=step.phi_norm, theta=theta, mu=step.mu,
                          max_H=step.max_H, max_Theta=step.max_Theta, area=step.area,
                          relaxation=step.relaxation)
            logger.info("fixed point %d: theta = %.6g, max|H| = %.3e, max|Theta| = %.3e, relaxation %.4g",
                        iteration, theta, step.max_H, step.max_Theta, step.relaxation)
            if step.max_H <= H_tol and step.max_Theta <= cfg.theta_tol:
                report.converged = True
                break
            best_H = min(best_H, step.max_H)
            phi, theta, graph = step.phi, step.theta, step.graph
            relaxation = min(1.0, 2.0 * relaxation)

        report.timing["total"] = time.perf_counter() - started
        if step is None:
            raise NonConvergenceError(f"no admissible fixed-point step in {max_iter} attempts", history=report)
        final = step.surface
        topology = validate_topology(final, m=cfg.m)
        report.final.update({
            "theta": theta,
            "theta_times_m": theta * cfg.m,
            "area": final.area(),
            "genus": topology["genus"],
            "boundary_loops": topology["boundary_loops"],
            "euler_characteristic": topology["euler_characteristic"],
            "symmetry_deviation": vertex_symmetry_deviation(final),
            "H_tolerance": H_tol,
            "rejected_steps": rejected,
        })
        if not report.converged:
            raise NonConvergenceError(
                f"fixed point did not converge in {max_iter} iterations "
                f"(max|H| = {step.max_H:.3e} > {H_tol:.3e} or max|Theta| = {step.max_Theta:.3e})",
                history=report)
        return final, report

    def verify(self, mesh: Optional[SurfaceMesh] = None, theta: Optional[float] = None) -> Dict[str, Any]:
        """Topology, symmetry, curvature, boundary angle, distance to W_theta and mesh quality."""
        self._require()
        cfg = self.config
        mesh = self.surface(cfg.theta0 if theta is None else theta) if mesh is None else mesh
        topology = validate_topology(mesh, m=cfg.m)
        analytic = mesh.has_exact
        H = mean_curvature(mesh, analytic=analytic)
        Theta = boundary_angle(mesh, analytic=analytic)
        symmetry = vertex_symmetry_deviation(mesh)
        hits = self_intersections(mesh.vertices, mesh.faces)
        report = {
            **topology,
            "symmetry_deviation": symmetry,
            "max_H": interior_max(mesh, H.full()),
            "max_Theta": Theta.max_abs(),
            "weighted_H": weighted_norm(H, 0, cfg.gamma, mesh.params, beta=cfg.beta),
            "hausdorff_to_W": hausdorff_to_w(mesh),
            "self_intersections": int(len(hits)),
            **quality_report(mesh),
        }
        report["passed"] = bool(symmetry <= SYMMETRY_TOL and report["max_Theta"] <= cfg.theta_tol
                                and report["self_intersections"] == 0)
        return report

    def export(self, mesh: SurfaceMesh, path: str, report: Optional[SolveReport] = None) -> Dict[str, str]:
        obj, sidecar = export_mesh(mesh, path)
        paths = {"obj": obj, "meta": sidecar}
        if report is not None:
            paths["report"] = path.rsplit(".", 1)[0] + ".report.json"
            emit_report(report, paths["report"])
        return paths

