"""Jacobi operators L = Laplacian + |A|^2, B u = u - du/deta, their kernels on the
standard pieces and on the Scherk quotient, the substitute kernel w, the bordered
global solve and the semi-local iteration."""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh, onenormest, splu

from src.exceptions import ConvergenceError, SolverError
from src.geom import (ScalarField, cotan_stiffness, lumped_mass, operators_for, second_form_norm2,
                      weighted_norm, weighted_pair_norm)
from src.mesher import (OrbitTable, RegionMap, ScherkQuotient, SurfaceMesh, WModelPiece,
                        build_scherk_quotient, build_w_model)
from src.rotsym import (phi_odd, phi_odd_prime, solve_critical_constants)
from src.scherk import (CORE, WING_KINDS, exact_pairing_weight, implicit_mean_curvature, unbalancing_rotation,
                        scherk_gradient, scherk_hessian, scherk_normal, xi_theta_derivatives)

logger = logging.getLogger(__name__)

Field = Union[ScalarField, np.ndarray]

W_BAND = (4.0 / 3.0, 5.0 / 3.0)


def _values(field: Optional[Field], n: int) -> np.ndarray:
    if field is None:
        return np.zeros(n)
    if isinstance(field, ScalarField):
        return field.full()
    values = np.asarray(field, dtype=float)
    if values.shape != (n,):
        raise SolverError(f"field has shape {values.shape}, expected ({n},)")
    return values


# --------------------------------------------------------- symmetry reduction

def orbit_basis(orbits: OrbitTable, symmetric: bool = True) -> Tuple[sparse.csr_matrix, np.ndarray]:
    """Signed orbit indicator basis Q (N x orbits) and the representative of each column.

    Orbits on which f(g v) = chi(g) f(v) forces f = 0 are dropped.
    """
    perms = np.asarray(orbits.perms)
    G, N = perms.shape
    chi = orbits.characters if symmetric else np.ones(G)
    rep = perms.min(axis=0)
    reps = np.unique(rep)
    owner_of = np.searchsorted(reps, rep)

    targets = perms[:, reps].ravel()
    signs = np.repeat(np.asarray(chi, dtype=float), len(reps))
    smin = np.full(N, np.inf)
    smax = np.full(N, -np.inf)
    np.minimum.at(smin, targets, signs)
    np.maximum.at(smax, targets, signs)
    vanish = np.zeros(len(reps), dtype=bool)
    np.logical_or.at(vanish, owner_of, smin != smax)

    keep = np.flatnonzero(~vanish)
    col = np.full(len(reps), -1, dtype=np.int64)
    col[keep] = np.arange(len(keep))
    rows = np.flatnonzero(~vanish[owner_of])
    Q = sparse.csr_matrix((smin[rows], (rows, col[owner_of[rows]])), shape=(N, len(keep)))
    return Q, reps[keep]


def orbit_projector(Q: sparse.csr_matrix) -> sparse.csr_matrix:
    """Q (Q^T Q)^-1 Q^T; Q^T Q is diagonal with the orbit sizes."""
    sizes = np.asarray(Q.multiply(Q).sum(axis=0)).ravel()
    return (Q @ sparse.diags(1.0 / sizes) @ Q.T).tocsr()


# ------------------------------------------------------------ Jacobi system

class JacobiSystem:
    """Discrete L = Laplacian + |A|^2 with Robin rows B u = u - du/deta and Dirichlet rows."""

    def __init__(self, vertices: np.ndarray, faces: np.ndarray, A2: np.ndarray,
                 robin: Optional[np.ndarray] = None, dirichlet: Optional[np.ndarray] = None,
                 orbits: Optional[OrbitTable] = None):
        self.ops = operators_for(vertices, faces)
        self.n = len(vertices)
        self.A2 = np.asarray(A2, dtype=float)
        on_boundary = np.zeros(self.n, dtype=bool)
        on_boundary[self.ops.boundary] = True
        self.dirichlet = np.zeros(self.n, dtype=bool) if dirichlet is None else np.asarray(dirichlet, dtype=bool)
        self.robin = (on_boundary & ~self.dirichlet) if robin is None else (np.asarray(robin, dtype=bool) & on_boundary)
        self.interior = ~(self.robin | self.dirichlet)
        self.orbits = orbits
        self._basis = None
        self._strong = None

    @classmethod
    def from_mesh(cls, mesh: SurfaceMesh, analytic: bool = True, A2: Optional[np.ndarray] = None) -> "JacobiSystem":
        A2 = second_form_norm2(mesh, analytic).full() if A2 is None else A2
        return cls(mesh.vertices, mesh.faces, A2, orbits=mesh.orbits)

    @property
    def strong(self) -> sparse.csr_matrix:
        """L_h = -M^-1 K + |A|^2 on every vertex."""
        if self._strong is None:
            self._strong = (self.ops.strong_laplacian() + sparse.diags(self.A2)).tocsr()
        return self._strong

    def boundary_operator(self) -> sparse.csr_matrix:
        """B_h as an n x n matrix with rows on the boundary vertices."""
        b = self.ops.boundary
        scatter = sparse.csr_matrix((np.ones(len(b)), (b, np.arange(len(b)))), shape=(self.n, len(b)))
        return (scatter @ self.ops.boundary_rows()).tocsr()

    def weak_matrix(self) -> sparse.csr_matrix:
        """-K + M |A|^2 + M_bnd on Robin vertices; Dirichlet rows and columns replaced by identity."""
        A = (-self.ops.K + sparse.diags(self.ops.M * self.A2)
             + sparse.diags(self.ops.Mb * self.robin)).tocsr()
        return _impose_dirichlet(A, self.dirichlet)

    def weak_rhs(self, E: np.ndarray, E_bnd: np.ndarray) -> np.ndarray:
        rhs = self.ops.M * E + self.ops.Mb * self.robin * E_bnd
        rhs[self.dirichlet] = 0.0
        return rhs

    def collocation_matrix(self) -> sparse.csr_matrix:
        """Strong L rows inside, B_h rows on Robin vertices, identity on Dirichlet vertices."""
        A = (sparse.diags(self.interior.astype(float)) @ self.strong
             + sparse.diags(self.robin.astype(float)) @ self.boundary_operator()
             + sparse.diags(self.dirichlet.astype(float)))
        return A.tocsr()

    def collocation_rhs(self, E: np.ndarray, E_bnd: np.ndarray) -> np.ndarray:
        return np.where(self.robin, E_bnd, np.where(self.dirichlet, 0.0, E))

    def apply(self, u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(L u, B u) on every vertex (B u meaningful on boundary vertices only)."""
        return self.strong @ u, self.boundary_operator() @ u

    def basis(self) -> Tuple[sparse.csr_matrix, np.ndarray]:
        if self.orbits is None:
            return sparse.identity(self.n, format="csr"), np.arange(self.n)
        if self._basis is None:
            self._basis = orbit_basis(self.orbits, symmetric=True)
        return self._basis

    def projector(self) -> sparse.csr_matrix:
        return orbit_projector(self.basis()[0])

    def reduce(self, A: sparse.spmatrix, weak: bool) -> sparse.csr_matrix:
        """Galerkin Q^T A Q for weak systems, representative rows A[reps] Q for collocation."""
        Q, reps = self.basis()
        if weak:
            return (Q.T @ A @ Q).tocsr()
        return (A.tocsr()[reps] @ Q).tocsr()

    def solve(self, E: np.ndarray, E_bnd: Optional[np.ndarray] = None, form: str = "collocation") -> np.ndarray:
        E_bnd = np.zeros(self.n) if E_bnd is None else E_bnd
        Q, reps = self.basis()
        if form == "weak":
            A, rhs = self.reduce(self.weak_matrix(), True), Q.T @ self.weak_rhs(E, E_bnd)
        elif form == "collocation":
            A, rhs = self.reduce(self.collocation_matrix(), False), self.collocation_rhs(E, E_bnd)[reps]
        else:
            raise ValueError(f"unknown form {form!r}")
        return Q @ _factorize(A).solve(rhs)


def _impose_dirichlet(A: sparse.csr_matrix, mask: np.ndarray) -> sparse.csr_matrix:
    if not np.any(mask):
        return A
    keep = sparse.diags((~mask).astype(float))
    return (keep @ A @ keep + sparse.diags(mask.astype(float))).tocsr()


def _factorize(A: sparse.spmatrix):
    try:
        return splu(sparse.csc_matrix(A))
    except RuntimeError as e:
        raise SolverError(f"singular system of size {A.shape[0]}: {str(e)}")


# ------------------------------------------------------ standard piece kernels

def _catenoid_dirichlet_mode(n: int, t):
    """Mode-n Jacobi field of the catenoid in conformal height t vanishing at the waist, and d/dt."""
    t = np.asarray(t, dtype=float)
    th, sech = np.tanh(t), 1.0 / np.cosh(t)
    if n == 0:
        return th, sech ** 2
    if n == 1:
        return t * sech + np.sinh(t), sech - t * sech * th + np.cosh(t)
    f = 2.0 * n * np.sinh(n * t) - 2.0 * th * np.cosh(n * t)
    df = 2.0 * n * n * np.cosh(n * t) - 2.0 * sech ** 2 * np.cosh(n * t) - 2.0 * n * th * np.sinh(n * t)
    return f, df


def standard_piece_kernels(n_max: int = 32) -> pd.DataFrame:
    """Boundary-condition determinants per Fourier mode for D, A and K (Dirichlet at the circle)."""
    c = solve_critical_constants()
    r, t_c = c.r_crit, c.t_crit
    rows: List[Dict[str, Any]] = []
    for n in range(n_max + 1):
        rows.append({"piece": "D", "n": n, "determinant": r ** n, "margin": 1.0, "excluded": False})

        if n == 0:
            M = np.array([[1.0, np.log(r)], [1.0, -1.0]])
            det = 1.0 + np.log(r)
        else:
            # columns r^n and (r_crit / r)^n: values at r_crit, Robin residual at 1
            M = np.array([[r ** n, 1.0], [1.0 - n, (1.0 + n) * r ** n]])
            det = float(np.linalg.det(M))
        margin = abs(det) / float(np.prod(np.linalg.norm(M, axis=1)))
        rows.append({"piece": "A", "n": n, "determinant": det, "margin": margin, "excluded": False})

        f, df = _catenoid_dirichlet_mode(n, t_c)
        dn = df / (r * np.cosh(t_c))
        robin = float(f - dn)
        scale = float(abs(f) + abs(dn))
        rows.append({"piece": "K", "n": n, "determinant": robin, "margin": abs(robin) / scale,
                     "excluded": n == 1})
    return pd.DataFrame(rows)


def catenoid_rotational_residual() -> float:
    """Robin residual of phi_odd at x_crit: f - cot(x) f'."""
    x = solve_critical_constants().x_crit
    return float(phi_odd(x) - np.cos(x) / np.sin(x) * phi_odd_prime(x))


# --------------------------------------------------------- substitute kernel

def unbalanced_mean_curvature(theta: float, p) -> np.ndarray:
    """H of Xi_theta(S) at Xi_theta(p), from the implicit function F o Xi_theta^-1."""
    p = np.asarray(p, dtype=float)
    J, T = xi_theta_derivatives(theta, p)
    Jinv = np.linalg.inv(J)
    grad = np.einsum("...ka,...k->...a", Jinv, scherk_gradient(p))
    hess_f = scherk_hessian(p) - np.einsum("...j,...jab->...ab", grad, T)
    hess = np.einsum("...ka,...kl,...lb->...ab", Jinv, hess_f, Jinv)
    return implicit_mean_curvature(grad, hess)[1]


def substitute_kernel_w(points, delta: float = 1e-4, tol: float = 1e-4) -> np.ndarray:
    """w = d/dtheta H[Xi_theta(S)] at theta = 0 on S points; zero off 4/3 <= |z| <= 5/3."""
    points = np.asarray(points, dtype=float)
    z = np.abs(points[..., 2])
    band = (z >= W_BAND[0] - 1e-12) & (z <= W_BAND[1] + 1e-12)
    out = np.zeros(points.shape[:-1])
    if not np.any(band):
        return out
    p = points[band]
    d1 = (unbalanced_mean_curvature(delta, p) - unbalanced_mean_curvature(-delta, p)) / (2.0 * delta)
    h = 0.5 * delta
    d2 = (unbalanced_mean_curvature(h, p) - unbalanced_mean_curvature(-h, p)) / (2.0 * h)
    rich = (4.0 * d2 - d1) / 3.0
    worst = float(np.max(np.abs(rich - d1)))
    if worst > tol:
        raise ConvergenceError(f"substitute kernel: Richardson disagreement {worst:.3e} > {tol:.0e}")
    out[band] = rich
    return out


def _band_graph(y, z):
    """S as the graph x = arcsinh(cos y / sinh z), with its area element."""
    sh = np.sinh(z)
    c = np.cos(y) / sh
    q = 1.0 / np.sqrt(1.0 + c * c)
    p = np.stack([np.arcsinh(c), y, z], axis=-1)
    xy = -np.sin(y) / sh * q
    xz = -np.cos(y) * np.cosh(z) / sh ** 2 * q
    # |(xy, 1, 0) x (xz, 0, 1)| = sqrt(1 + xy^2 + xz^2)
    return p, np.sqrt(1.0 + xy * xy + xz * xz)


def _band_quadrature(n_y: int, n_z: int, integrand) -> float:
    nodes, weights = np.polynomial.legendre.leggauss(n_z)
    lo, hi = W_BAND
    z = 0.5 * (hi - lo) * nodes + 0.5 * (hi + lo)
    wz = 0.5 * (hi - lo) * weights
    y = 2.0 * np.pi * np.arange(n_y) / n_y
    total = 0.0
    for sign in (1.0, -1.0):
        Y, Z = np.meshgrid(y, sign * z, indexing="ij")
        p, dA = _band_graph(Y, Z)
        total += float(np.sum(integrand(p) * dA * wz[None, :]) * (2.0 * np.pi / n_y))
    return total


def conormal_flux(theta: float, height: float = 2.5, n_y: int = 512) -> float:
    """Sum over z = +-height of the integral of e_x . eta over one period of Xi_theta(S)."""
    if height < 2.0:
        raise ValueError(f"truncation height must lie where Xi_theta is rigid (>= 2), got {height}")
    y = 2.0 * np.pi * np.arange(n_y) / n_y
    total = 0.0
    for sign, upper in ((1.0, True), (-1.0, False)):
        z = sign * height
        sh = np.sinh(z)
        c = np.cos(y) / sh
        p = np.stack([np.arcsinh(c), y, np.full(n_y, z)], axis=1)
        tangent = np.stack([-np.sin(y) / sh / np.sqrt(1.0 + c * c), np.ones(n_y), np.zeros(n_y)], axis=1)
        nu = scherk_normal(p)
        eta = np.cross(tangent, nu)
        eta /= np.linalg.norm(eta, axis=1, keepdims=True)
        eta *= np.sign(eta[:, 2] * sign)[:, None]
        eta_theta = eta @ unbalancing_rotation(theta, upper).T
        ds = np.linalg.norm(tangent, axis=1)
        total += float(np.sum(eta_theta[:, 0] * ds) * (2.0 * np.pi / n_y))
    return total


def substitute_kernel_pairing(n_y: int = 256, n_z: int = 48, delta: float = 1e-4) -> Dict[str, float]:
    """<w, e_x . nu_S> over one period, with an independent conormal-flux oracle.

    The divergence identity gives <w, e_x . nu_S> = -d/dtheta (flux of e_x through the
    truncation curves of Xi_theta(S)).
    """
    integrand = lambda p: substitute_kernel_w(p) * exact_pairing_weight(p)
    value = _band_quadrature(n_y, n_z, integrand)
    coarse = _band_quadrature(n_y // 2, n_z // 2, integrand)
    oracle = -(conormal_flux(delta) - conormal_flux(-delta)) / (2.0 * delta)
    report = {
        "pairing": value,
        "quadrature_error": abs(value - coarse),
        "flux_oracle": oracle,
        "relative_mismatch": abs(value - oracle) / max(abs(oracle), 1e-300),
    }
    logger.info("substitute kernel pairing %.6g, flux oracle %.6g", value, oracle)
    return report


def _block_vertices(mesh: SurfaceMesh) -> np.ndarray:
    return np.flatnonzero(np.isin(mesh.region, (CORE,) + WING_KINDS) & np.isfinite(mesh.spoint[:, 0]))


def substitute_kernel_field(mesh: SurfaceMesh) -> ScalarField:
    """w o Pi_S on the block, symmetrized."""
    w = np.zeros(mesh.n_vertices)
    ids = _block_vertices(mesh)
    w[ids] = substitute_kernel_w(mesh.spoint[ids])
    if mesh.orbits is not None:
        w = mesh.orbits.average(w, symmetric=True)
    return ScalarField(w, mesh, "symmetric" if mesh.orbits is not None else None)


def kernel_field(mesh: SurfaceMesh) -> ScalarField:
    """psi_hat (e_x . nu_S) o Pi_S, supported in the block."""
    k = np.zeros(mesh.n_vertices)
    ids = _block_vertices(mesh)
    k[ids] = mesh.params.psi_hat(mesh.s[ids]) * exact_pairing_weight(mesh.spoint[ids])
    return ScalarField(k, mesh, "symmetric" if mesh.orbits is not None else None)


# ------------------------------------------------------------ Scherk quotient

class ScherkOperator:
    """Weak L_S on the Scherk quotient, assembled on the period mesh and folded."""

    def __init__(self, quotient: ScherkQuotient):
        self.quotient = quotient
        F = quotient.fold
        K = cotan_stiffness(quotient.points, quotient.faces)
        self.K = (F.T @ K @ F).tocsr()
        self.M = np.asarray(F.T @ lumped_mass(quotient.points, quotient.faces)).ravel()
        self.A2 = np.asarray(quotient.second_form, dtype=float)
        self.Q, self.reps = orbit_basis(quotient.orbits, symmetric=True)
        self.base_points = quotient.points[quotient.base]
        self._lu = None

    def matrix(self) -> sparse.csr_matrix:
        return (-self.K + sparse.diags(self.M * self.A2)).tocsr()

    def inner(self, f: np.ndarray, g: np.ndarray) -> float:
        return float(np.sum(self.M * f * g))

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """L_S u = rhs in the symmetric class, u = 0 on the far ends."""
        if self._lu is None:
            A = _impose_dirichlet(self.matrix(), self.quotient.dirichlet)
            self._lu = _factorize(self.Q.T @ A @ self.Q)
        b = self.M * rhs
        b[self.quotient.dirichlet] = 0.0
        return self.Q @ self._lu.solve(self.Q.T @ b)


def scherk_kernel_check(quotient: ScherkQuotient, n_eigs: int = 4, shift: float = -0.25) -> Dict[str, Any]:
    """Near-null space of the symmetry-reduced L_S, weighted by h = |A|^2 / 2, free far ends."""
    op = ScherkOperator(quotient)
    Q = op.Q
    h = np.maximum(0.5 * op.A2, 1e-14)
    A = (op.K - sparse.diags(op.M * op.A2)).tocsr()
    W = sparse.diags(op.M * h)
    Ar = (Q.T @ A @ Q).tocsc()
    Wr = (Q.T @ W @ Q).tocsc()
    k = min(n_eigs, Ar.shape[0] - 2)
    try:
        vals, vecs = eigsh(Ar, k=k, M=Wr, sigma=shift, which="LM")
    except ArpackNoConvergence as e:
        raise ConvergenceError(f"Scherk kernel eigensolver did not converge: {str(e)}")
    order = np.argsort(np.abs(vals))
    vals, vecs = vals[order], vecs[:, order]

    kx = exact_pairing_weight(op.base_points)
    kz = scherk_normal(op.base_points)[:, 2]
    v = Q @ vecs[:, 0]
    w_diag = op.M * h
    corr = abs(np.sum(w_diag * v * kx)) / np.sqrt(np.sum(w_diag * v * v) * np.sum(w_diag * kx * kx))
    residual = float(np.linalg.norm(A @ kx) / np.linalg.norm(op.M * op.A2 * kx))
    report = {
        "eigenvalues": vals.tolist(),
        "first": float(abs(vals[0])),
        "second": float(abs(vals[1])),
        "gap": float(abs(vals[1]) / max(abs(vals[0]), 1e-300)),
        "correlation": float(corr),
        "kernel_residual": residual,
        "ex_deviation": quotient.orbits.deviation(kx, symmetric=True),
        "ez_deviation": quotient.orbits.deviation(kz, symmetric=True),
        "reduced_size": int(Ar.shape[0]),
    }
    logger.info("Scherk kernel: |eig| %.3e, %.3e (gap %.1f), correlation %.4f",
                report["first"], report["second"], report["gap"], report["correlation"])
    return report


# ---------------------------------------------------------------- W model

@dataclass
class WSolution:
    pieces: Dict[int, np.ndarray]
    model: Dict[int, WModelPiece]
    constant: float

    def on_mesh(self, n: int) -> np.ndarray:
        """u' o Pi_W on the mesh vertices the model covers, zero elsewhere."""
        out = np.zeros(n)
        for kind, u in self.pieces.items():
            idx = self.model[kind].m_index
            sel = idx >= 0
            out[idx[sel]] = u[sel]
        return out


class WModelSolver:
    """Factorized collocation systems of the W model pieces."""

    def __init__(self, model: Dict[int, WModelPiece]):
        self.model = model
        self.systems = {}
        self.factors = {}
        for kind, piece in model.items():
            system = JacobiSystem(piece.vertices, piece.faces, piece.second_form,
                                  robin=piece.robin, dirichlet=piece.dirichlet)
            self.systems[kind] = system
            self.factors[kind] = _factorize(system.collocation_matrix())

    def solve(self, E: np.ndarray, E_bnd: np.ndarray) -> WSolution:
        pieces = {}
        data = 0.0
        top = 0.0
        for kind, piece in self.model.items():
            idx = piece.m_index
            sel = idx >= 0
            e = np.zeros(len(idx))
            eb = np.zeros(len(idx))
            e[sel] = E[idx[sel]]
            eb[sel] = E_bnd[idx[sel]]
            system = self.systems[kind]
            u = self.factors[kind].solve(system.collocation_rhs(e, eb))
            pieces[kind] = u
            data = max(data, float(np.max(np.abs(e))) + float(np.max(np.abs(eb * system.robin))))
            top = max(top, float(np.max(np.abs(u))))
        constant = top / data if data > 0 else 0.0
        return WSolution(pieces=pieces, model=self.model, constant=constant)

    def residual(self, solution: WSolution, E: np.ndarray, E_bnd: np.ndarray) -> float:
        worst = 0.0
        for kind, piece in self.model.items():
            idx = piece.m_index
            sel = idx >= 0
            e = np.zeros(len(idx))
            eb = np.zeros(len(idx))
            e[sel] = E[idx[sel]]
            eb[sel] = E_bnd[idx[sel]]
            system = self.systems[kind]
            r = system.collocation_matrix() @ solution.pieces[kind] - system.collocation_rhs(e, eb)
            worst = max(worst, float(np.max(np.abs(r))))
        return worst


def solve_model_w(mesh: SurfaceMesh, E_prime: Field, E_bnd: Optional[Field] = None,
                  model: Optional[Dict[int, WModelPiece]] = None) -> WSolution:
    """Per-piece solve on W_theta: Dirichlet on C_theta, Robin on the sphere."""
    n = mesh.n_vertices
    model = build_w_model(mesh) if model is None else model
    solver = WModelSolver(model)
    E = _values(E_prime, n)
    Eb = _values(E_bnd, n)
    solution = solver.solve(E, Eb)
    logger.debug("W model solve: constant %.4g, residual %.2e", solution.constant, solver.residual(solution, E, Eb))
    return solution


# ------------------------------------------------------------- global solve

@dataclass
class GlobalSolution:
    u: ScalarField
    mu: float
    report: Dict[str, float] = field(default_factory=dict)


class BorderedSystem:
    """[L_h | -lambda^-1 w] with the constraint <u, k>_M = 0, reduced to the symmetric class."""

    def __init__(self, mesh: SurfaceMesh, system: Optional[JacobiSystem] = None,
                 w: Optional[np.ndarray] = None, k: Optional[np.ndarray] = None):
        self.mesh = mesh
        self.system = JacobiSystem.from_mesh(mesh) if system is None else system
        self.lam = mesh.params.lam
        self.w = substitute_kernel_field(mesh).full() if w is None else np.asarray(w, dtype=float)
        self.k = kernel_field(mesh).full() if k is None else np.asarray(k, dtype=float)
        sysm = self.system
        Q, reps = sysm.basis()
        self.Q, self.reps = Q, reps
        self.column = -np.where(sysm.interior, self.w, 0.0) / self.lam
        self.row = np.asarray(Q.T @ (sysm.ops.M * self.k)).ravel()
        if not np.any(self.column) or not np.any(self.row):
            raise SolverError("bordered column or constraint row vanishes")
        A = sysm.reduce(sysm.collocation_matrix(), weak=False)
        self.matrix = sparse.bmat([[A, sparse.csr_matrix(self.column[reps][:, None])],
                                   [sparse.csr_matrix(self.row[None, :]), None]], format="csc")
        self.lu = _factorize(self.matrix)

    def pairing(self) -> float:
        """Normalized <w, k>_M."""
        M = self.system.ops.M
        num = np.sum(M * self.w * self.k)
        return float(num / np.sqrt(np.sum(M * self.w ** 2) * np.sum(M * self.k ** 2)))

    def condition(self) -> float:
        n = self.matrix.shape[0]
        inv = LinearOperator((n, n), matvec=self.lu.solve, rmatvec=lambda x: self.lu.solve(x, trans="T"),
                             dtype=float)
        return float(onenormest(self.matrix) * onenormest(inv))

    def solve(self, E: np.ndarray, E_bnd: np.ndarray) -> Tuple[np.ndarray, float]:
        rhs = self.system.collocation_rhs(E, E_bnd)[self.reps]
        x = self.lu.solve(np.concatenate([rhs, [0.0]]))
        return self.Q @ x[:-1], float(x[-1])

    def residual(self, u: np.ndarray, mu: float, E: np.ndarray, E_bnd: np.ndarray) -> float:
        s = self.system
        Lu, Bu = s.apply(u)
        r_in = (Lu - mu * self.w / self.lam - E)[s.interior]
        r_bd = (Bu - E_bnd)[s.robin]
        scale = max(float(np.max(np.abs(E[s.interior]), initial=0.0)),
                    float(np.max(np.abs(E_bnd[s.robin]), initial=0.0)), 1e-300)
        return max(float(np.max(np.abs(r_in), initial=0.0)), float(np.max(np.abs(r_bd), initial=0.0))) / scale


def check_symmetric(mesh: SurfaceMesh, values: np.ndarray, name: str, tol: float = 1e-8) -> float:
    if mesh.orbits is None:
        return 0.0
    dev = mesh.orbits.deviation(values, symmetric=True)
    scale = max(1.0, float(np.max(np.abs(values), initial=0.0)))
    if dev > tol * scale:
        raise SolverError(f"{name} is not in the symmetric class: orbit deviation {dev:.3e}")
    return dev


def solve_global(mesh: SurfaceMesh, E: Field, E_bnd: Optional[Field] = None, gamma: float = 0.75,
                 bordered: Optional[BorderedSystem] = None, estimate: bool = True) -> GlobalSolution:
    """(u, mu) with L u = E + mu lambda^-1 w o Pi_S inside and B u = E_bnd on the boundary."""
    n = mesh.n_vertices
    E = _values(E, n)
    Eb = _values(E_bnd, n)
    check_symmetric(mesh, E, "E")
    check_symmetric(mesh, Eb, "E_bnd")
    bordered = BorderedSystem(mesh) if bordered is None else bordered
    u, mu = bordered.solve(E, Eb)
    report = {"residual": bordered.residual(u, mu, E, Eb) if (np.any(E) or np.any(Eb)) else 0.0,
              "pairing": bordered.pairing(),
              "symmetry_deviation": check_symmetric(mesh, u, "u", tol=1e-6)}
    if estimate:
        data = weighted_pair_norm(mesh, np.where(bordered.system.interior, E, 0.0),
                                  Eb[bordered.system.robin], gamma, mesh.params)
        u_norm = weighted_norm(u, 2, gamma, mesh.params, mesh=mesh)
        report["bound"] = (u_norm + abs(mu)) / data if data > 0 else 0.0
        report["condition"] = bordered.condition()
    logger.info("global solve: mu = %.6g, residual %.2e", mu, report["residual"])
    return GlobalSolution(u=ScalarField(u, mesh, "symmetric" if mesh.orbits is not None else None),
                          mu=mu, report=report)


# --------------------------------------------------------- semi-local scheme

@dataclass
class IterationResult:
    u: ScalarField
    mu: float
    history: pd.DataFrame
    boundary_after_first: float
    direct_difference: float
    mu_bordered: float


def iterate_linear(mesh: SurfaceMesh, E: Field, E_bnd: Optional[Field] = None, n: int = 6,
                   gamma: float = 0.75, quotient: Optional[ScherkQuotient] = None,
                   model: Optional[Dict[int, WModelPiece]] = None) -> IterationResult:
    """Scherk quotient solve near the neck, W model solve away from it, blended and iterated."""
    P = mesh.params
    lam = P.lam
    N = mesh.n_vertices
    E = _values(E, N)
    Eb = _values(E_bnd, N)
    check_symmetric(mesh, E, "E")

    system = JacobiSystem.from_mesh(mesh)
    bordered = BorderedSystem(mesh, system=system)
    quotient = build_scherk_quotient(mesh) if quotient is None else quotient
    scherk = ScherkOperator(quotient)
    wsolver = WModelSolver(build_w_model(mesh) if model is None else model)

    n_shared = quotient.n_shared
    block = np.flatnonzero(np.arange(N) < P.m * mesh.n_period)
    to_base = np.full(N, -1, dtype=np.int64)
    to_base[block] = block % mesh.n_period
    psi_hat = np.where(to_base >= 0, P.psi_hat(mesh.s), 0.0)
    psi_prime = P.psi_prime(mesh.s)
    outer = RegionMap.from_params(P).masks(mesh.s)["Mt1"]

    w_q = scherk.quotient.orbits.average(substitute_kernel_w(scherk.base_points), symmetric=True)
    k_q = exact_pairing_weight(scherk.base_points)
    wk = scherk.inner(w_q, k_q)
    if abs(wk) < 1e-12:
        raise SolverError("substitute kernel is orthogonal to the Scherk kernel on the quotient")

    L = system.strong
    B = system.boundary_operator()
    interior, robin = system.interior, system.robin

    def residual(u, mu):
        r = np.where(interior, E + mu * bordered.w / lam - L @ u, 0.0)
        rb = np.where(robin, Eb - B @ u, 0.0)
        return r, rb

    def size(r, rb):
        return weighted_pair_norm(mesh, r, rb[robin], gamma, P)

    u = np.zeros(N)
    mu = 0.0
    R, Rb = residual(u, mu)
    prev = size(R, Rb)
    rows = []
    bad = 0
    first_boundary = np.nan
    for step in range(1, n + 1):
        e_hat = np.zeros(quotient.n_base)
        e_hat[:n_shared] = lam ** 2 * psi_hat[:n_shared] * R[:n_shared]
        mu_s = -scherk.inner(e_hat, k_q) / wk
        u_hat = scherk.solve(e_hat + mu_s * w_q)
        U = np.zeros(N)
        U[block] = u_hat[to_base[block]]

        commutator = L @ (psi_hat * U) - psi_hat * (L @ U)
        E_prime = np.where(outer, (1.0 - psi_hat ** 2) * R - commutator, 0.0)
        u_prime = wsolver.solve(E_prime, Rb).on_mesh(N)

        u = u + psi_hat * U + psi_prime * u_prime
        mu = mu + mu_s / lam
        R, Rb = residual(u, mu)
        current = size(R, Rb)
        ratio = current / prev if prev > 0 else 0.0
        if step == 1:
            first_boundary = float(np.max(np.abs(Rb)))
        rows.append({"step": step, "residual": current, "ratio": ratio, "mu": mu,
                     "boundary_residual": float(np.max(np.abs(Rb)))})
        logger.debug("linear iteration %d: residual %.3e (ratio %.3f)", step, current, ratio)
        bad = bad + 1 if ratio >= 1.0 else 0
        if bad >= 3:
            raise SolverError(f"semi-local iteration is not contracting: ratio {ratio:.3f} for 3 steps "
                              f"(m = {P.m}, delta_s = {P.delta_s})")
        prev = current
        if current == 0.0:
            break

    direct = system.solve(E + mu * bordered.w / lam, Eb)
    diff = float(np.max(np.abs(u - direct)) / max(np.max(np.abs(direct)), 1e-300))
    mu_bordered = bordered.solve(E, Eb)[1]
    return IterationResult(u=ScalarField(u, mesh, "symmetric" if mesh.orbits is not None else None), mu=mu,
                           history=pd.DataFrame(rows), boundary_after_first=first_boundary,
                           direct_difference=diff, mu_bordered=mu_bordered)
