"""Discrete differential geometry on SurfaceMesh: operators, curvature,
the boundary angle, twisted normals and graphs, weighted norms, and the
geodesic exponential map of a metric chart."""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Union

import numpy as np
from scipy import sparse

from src.exceptions import AdmissibilityError, DomainError, SolverError
from src.mesher import CORE, RegionMap, SurfaceMesh
from src.scherk import DeformParams, psi_cut_eps

logger = logging.getLogger(__name__)


@dataclass
class ScalarField:
    """Per-vertex values with a symmetry class ("invariant", "symmetric" or None)."""

    values: np.ndarray
    mesh: SurfaceMesh
    symmetry: Optional[str] = None
    support: Optional[np.ndarray] = None

    def full(self) -> np.ndarray:
        if self.support is None:
            return np.asarray(self.values, dtype=float)
        out = np.zeros(self.mesh.n_vertices)
        out[self.support] = self.values
        return out

    def deviation(self) -> float:
        if self.mesh.orbits is None:
            return 0.0
        return self.mesh.orbits.deviation(self.full(), symmetric=self.symmetry != "invariant")

    def check_symmetry(self, tol: float = 1e-8) -> float:
        dev = self.deviation()
        if self.symmetry is not None and dev > tol:
            raise SolverError(f"field violates its {self.symmetry} class: orbit deviation {dev:.3e} > {tol:.0e}")
        return dev

    def max_abs(self, mask: Optional[np.ndarray] = None) -> float:
        v = np.abs(self.values if mask is None else self.values[mask])
        return float(v.max()) if v.size else 0.0


@dataclass
class TwistedNormalField:
    vectors: np.ndarray
    eps: float
    min_denominator: float


# ---------------------------------------------------------------- operators

def face_geometry(vertices: np.ndarray, faces: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Face areas and unit normals."""
    tri = vertices[faces]
    cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    dbl = np.linalg.norm(cross, axis=1)
    if np.any(dbl <= 1e-300):
        raise DomainError(f"{int(np.sum(dbl <= 1e-300))} degenerate triangles")
    return 0.5 * dbl, cross / dbl[:, None]


def cotan_stiffness(vertices: np.ndarray, faces: np.ndarray) -> sparse.csr_matrix:
    """K with u.K.u = int |grad u|^2 for P1 u (positive semidefinite)."""
    n = len(vertices)
    rows, cols, vals = [], [], []
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        u = vertices[faces[:, j]] - vertices[faces[:, i]]
        v = vertices[faces[:, k]] - vertices[faces[:, i]]
        cot = np.sum(u * v, axis=1) / np.linalg.norm(np.cross(u, v), axis=1)
        w = 0.5 * cot
        a, b = faces[:, j], faces[:, k]
        rows += [a, b, a, b]
        cols += [b, a, a, b]
        vals += [-w, -w, w, w]
    K = sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    return K.tocsr()


def lumped_mass(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Barycentric vertex areas."""
    areas, _ = face_geometry(vertices, faces)
    M = np.zeros(len(vertices))
    for i in range(3):
        np.add.at(M, faces[:, i], areas / 3.0)
    return M


def _boundary_edges_oriented(faces: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Boundary edges (i, j, k) directed as in their face, k the opposite vertex, and that face."""
    directed = np.concatenate([faces[:, [0, 1, 2]], faces[:, [1, 2, 0]], faces[:, [2, 0, 1]]])
    owner = np.tile(np.arange(len(faces)), 3)
    key = np.sort(directed[:, :2], axis=1)
    _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    keep = counts[inv.ravel()] == 1
    return directed[keep], owner[keep]


@dataclass
class DiscreteOperators:
    K: sparse.csr_matrix
    M: np.ndarray
    Mb: np.ndarray
    b_eta: np.ndarray
    eta: np.ndarray
    grad: Tuple[sparse.csr_matrix, sparse.csr_matrix, sparse.csr_matrix]
    boundary: np.ndarray
    face_normals: np.ndarray
    face_areas: np.ndarray

    def strong_laplacian(self) -> sparse.csr_matrix:
        return -sparse.diags(1.0 / self.M) @ self.K

    def boundary_rows(self) -> sparse.csr_matrix:
        """B_h u = u - grad u . eta on the boundary vertices (rows in boundary order)."""
        b = self.boundary
        n = len(self.M)
        Gx, Gy, Gz = (g[b] for g in self.grad)
        E = sparse.csr_matrix((np.ones(len(b)), (np.arange(len(b)), b)), shape=(len(b), n))
        eta = self.eta[b]
        return (E - sparse.diags(eta[:, 0]) @ Gx - sparse.diags(eta[:, 1]) @ Gy
                - sparse.diags(eta[:, 2]) @ Gz).tocsr()


def gradient_operators(vertices, faces, areas, normals):
    """Per-vertex area-weighted averages of P1 gradients, as three sparse matrices."""
    n, F = len(vertices), len(faces)
    vals = {0: [], 1: [], 2: []}
    cols = []
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        edge = vertices[faces[:, k]] - vertices[faces[:, j]]
        g = np.cross(normals, edge) / (2.0 * areas[:, None])
        cols.append(faces[:, i])
        for c in range(3):
            vals[c].append(g[:, c])
    face_cols = np.concatenate(cols)
    face_rows = np.tile(np.arange(F), 3)
    weight = np.zeros(n)
    for i in range(3):
        np.add.at(weight, faces[:, i], areas)
    avg = sparse.coo_matrix(
        (np.concatenate([areas] * 3), (faces.T.ravel(), np.tile(np.arange(F), 3))), shape=(n, F)).tocsr()
    avg = sparse.diags(1.0 / np.maximum(weight, 1e-300)) @ avg
    out = []
    for c in range(3):
        Gf = sparse.coo_matrix((np.concatenate(vals[c]), (face_rows, face_cols)), shape=(F, n)).tocsr()
        out.append((avg @ Gf).tocsr())
    return tuple(out)


def discrete_operators(mesh: SurfaceMesh) -> DiscreteOperators:
    return operators_for(mesh.vertices, mesh.faces)


def operators_for(vertices: np.ndarray, faces: np.ndarray) -> DiscreteOperators:
    """Assemble the operators of a bare triangle mesh."""
    V, F = np.asarray(vertices, dtype=float), np.asarray(faces, dtype=np.int64)
    areas, fn = face_geometry(V, F)
    K = cotan_stiffness(V, F)
    M = lumped_mass(V, F)
    n = len(V)
    be, owner = _boundary_edges_oriented(F)
    Mb = np.zeros(n)
    b_eta = np.zeros((n, 3))
    if len(be):
        i, j, k = be[:, 0], be[:, 1], be[:, 2]
        e = V[j] - V[i]
        length = np.linalg.norm(e, axis=1)
        # outward conormal of each boundary edge
        eta_e = np.cross(e, fn[owner])
        eta_e /= np.linalg.norm(eta_e, axis=1, keepdims=True)
        flip = np.sum(eta_e * (V[k] - V[i]), axis=1) > 0
        eta_e[flip] *= -1.0
        for end in (i, j):
            np.add.at(Mb, end, 0.5 * length)
            np.add.at(b_eta, end, 0.5 * length[:, None] * eta_e)
    boundary = np.flatnonzero(Mb > 0)
    eta = np.zeros((n, 3))
    eta[boundary] = b_eta[boundary] / np.linalg.norm(b_eta[boundary], axis=1, keepdims=True)
    grad = gradient_operators(V, F, areas, fn)
    return DiscreteOperators(K=K, M=M, Mb=Mb, b_eta=b_eta, eta=eta, grad=grad, boundary=boundary,
                             face_normals=fn, face_areas=areas)


# --------------------------------------------------------------- curvature

def vertex_normals(mesh: SurfaceMesh, ops: Optional[DiscreteOperators] = None) -> np.ndarray:
    """Area-weighted vertex normals."""
    if ops is None:
        areas, fn = face_geometry(mesh.vertices, mesh.faces)
    else:
        areas, fn = ops.face_areas, ops.face_normals
    N = np.zeros_like(mesh.vertices)
    for i in range(3):
        np.add.at(N, mesh.faces[:, i], areas[:, None] * fn)
    return N / np.linalg.norm(N, axis=1, keepdims=True)


def normals(mesh: SurfaceMesh, analytic: bool = True) -> np.ndarray:
    if analytic and mesh.has_exact:
        return np.asarray(mesh.normals)
    return vertex_normals(mesh)


def _analytic_mask(mesh: SurfaceMesh) -> np.ndarray:
    """Vertices whose exact chart values override the discrete ones (all but the core)."""
    if not mesh.has_exact:
        return np.zeros(mesh.n_vertices, dtype=bool)
    return mesh.region != CORE


def discrete_mean_curvature(mesh: SurfaceMesh, nu: Optional[np.ndarray] = None,
                            ops: Optional[DiscreteOperators] = None) -> np.ndarray:
    """H_i = <(K X - b_eta)_i / M_i, nu_i>, positive on the outward-oriented sphere."""
    ops = ops or discrete_operators(mesh)
    nu = vertex_normals(mesh, ops) if nu is None else nu
    HN = (ops.K @ mesh.vertices - ops.b_eta) / ops.M[:, None]
    return np.sum(HN * nu, axis=1)


def mean_curvature(mesh: SurfaceMesh, analytic: bool = True, symmetry: Optional[str] = "symmetric") -> ScalarField:
    H = discrete_mean_curvature(mesh, normals(mesh, analytic))
    mask = _analytic_mask(mesh) if analytic else np.zeros(mesh.n_vertices, dtype=bool)
    H[mask] = mesh.mean_curvature[mask]
    return ScalarField(H, mesh, symmetry if mesh.orbits is not None else None)


def _two_ring(faces: np.ndarray, n: int) -> sparse.csr_matrix:
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    A = sparse.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n)).tocsr()
    A = ((A + A.T) > 0).astype(float)
    R = ((A + A @ A) > 0).tocsr()
    R.setdiag(False)
    R.eliminate_zeros()
    return R


def fitted_second_form_norm2(mesh: SurfaceMesh, nu: Optional[np.ndarray] = None) -> np.ndarray:
    """|A|^2 = a^2 + 2b^2 + c^2 from h = (a u^2 + 2 b u v + c v^2)/2 + d u + e v over the 2-ring."""
    V = mesh.vertices
    n = len(V)
    nu = vertex_normals(mesh) if nu is None else nu
    helper = np.where(np.abs(nu[:, [0]]) < 0.9, np.array([[1.0, 0.0, 0.0]]), np.array([[0.0, 1.0, 0.0]]))
    e1 = np.cross(nu, helper)
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(nu, e1)
    R = _two_ring(mesh.faces, n).tocoo()
    i, j = R.row, R.col
    d = V[j] - V[i]
    u = np.sum(d * e1[i], axis=1)
    v = np.sum(d * e2[i], axis=1)
    h = np.sum(d * nu[i], axis=1)
    X = np.stack([0.5 * u * u, u * v, 0.5 * v * v, u, v], axis=1)
    ATA = np.zeros((n, 5, 5))
    ATh = np.zeros((n, 5))
    np.add.at(ATA, i, X[:, :, None] * X[:, None, :])
    np.add.at(ATh, i, X * h[:, None])
    ATA += 1e-14 * np.eye(5)
    coef = np.linalg.solve(ATA, ATh[..., None])[..., 0]
    a, b, c = coef[:, 0], coef[:, 1], coef[:, 2]
    return a * a + 2.0 * b * b + c * c


def second_form_norm2(mesh: SurfaceMesh, analytic: bool = True) -> ScalarField:
    A2 = fitted_second_form_norm2(mesh, normals(mesh, analytic))
    mask = _analytic_mask(mesh) if analytic else np.zeros(mesh.n_vertices, dtype=bool)
    A2[mask] = mesh.second_form[mask]
    return ScalarField(A2, mesh, "invariant" if mesh.orbits is not None else None)


def boundary_angle(mesh: SurfaceMesh, analytic: bool = True, tol: float = 1e-6) -> ScalarField:
    """Theta(p) = nu(p) . p on the boundary vertices."""
    ids = np.unique(mesh.boundary_edges())
    p = mesh.vertices[ids]
    off = np.abs(np.linalg.norm(p, axis=1) - 1.0)
    if off.size and off.max() > tol:
        raise DomainError(f"boundary vertex off the unit sphere by {off.max():.3e} (tolerance {tol:.0e})")
    nu = normals(mesh, analytic)[ids]
    theta = np.sum(nu * p, axis=1)
    return ScalarField(theta, mesh, "symmetric" if mesh.orbits is not None else None, support=ids)


# ------------------------------------------------------------- twisted flow

def _twist(q, p, nu, eps):
    """Twisted normal at q for a base point p with normal nu; returns (vector, denominator)."""
    rho = np.sum((q - p) * nu, axis=-1)
    nu_eps = psi_cut_eps(eps, rho)[..., None] * nu
    r = np.linalg.norm(q, axis=-1)
    # radial unit vector, zero at the origin (the disk centre)
    radial = np.divide(q, r[..., None], out=np.zeros_like(q, dtype=float), where=r[..., None] > 0.0)
    nb_eps = psi_cut_eps(eps, r - 1.0)[..., None] * radial
    g = np.sum(nu_eps * nb_eps, axis=-1)
    den = 1.0 - g * g
    return (nu_eps - g[..., None] * nb_eps) / den[..., None], den


def twisted_normal(mesh: SurfaceMesh, eps: float = 0.1, analytic: bool = True,
                   min_denominator: float = 0.1) -> TwistedNormalField:
    nu = normals(mesh, analytic)
    vec, den = _twist(mesh.vertices, mesh.vertices, nu, eps)
    worst = float(den.min())
    if worst < min_denominator:
        raise AdmissibilityError(
            f"surface normal nearly parallel to the sphere normal in the collar: "
            f"1 - g^2 = {worst:.3e} < {min_denominator}")
    return TwistedNormalField(vectors=vec, eps=eps, min_denominator=worst)


def renormalize_to_sphere(q: np.ndarray, ids: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    """Snap q[ids] back onto the unit sphere; AdmissibilityError if any sits farther than tol."""
    out = np.array(q, dtype=float)
    if len(ids) == 0:
        return out
    r = np.linalg.norm(out[ids], axis=1)
    drift = float(np.max(np.abs(r - 1.0)))
    if drift > tol:
        raise AdmissibilityError(f"boundary drifted {drift:.3e} off the unit sphere (tolerance {tol:.0e})")
    logger.debug("twisted graph: sphere drift before renormalization %.2e", drift)
    out[ids] /= r[:, None]
    return out


def twisted_graph(mesh: SurfaceMesh, phi: Union[np.ndarray, ScalarField], eps: float = 0.1,
                  analytic: bool = True, min_denominator: float = 0.1,
                  sphere_tol: float = 1e-6) -> SurfaceMesh:
    """Flow every vertex along the twisted normal for time phi(p) (RK4, step <= eps/8).

    The flow is tangent to the sphere on the boundary, so boundary vertices only
    pick up integration error; more than sphere_tol of it raises.
    """
    values = phi.values if isinstance(phi, ScalarField) else np.asarray(phi, dtype=float)
    if values.shape != (mesh.n_vertices,):
        raise AdmissibilityError(f"phi has shape {values.shape}, expected ({mesh.n_vertices},)")
    worst = float(np.max(np.abs(values))) if values.size else 0.0
    if worst >= eps / 3.0:
        raise AdmissibilityError(f"max |phi| = {worst:.4g} leaves the tube of width eps/3 = {eps / 3.0:.4g}")
    if worst == 0.0:
        return mesh.with_vertices(mesh.vertices)

    p = np.asarray(mesh.vertices, dtype=float)
    nu = normals(mesh, analytic)
    steps = max(1, int(np.ceil(worst / (eps / 8.0))))
    dt = values / steps
    q = p.copy()
    min_den = np.inf

    def field(x):
        nonlocal min_den
        vec, den = _twist(x, p, nu, eps)
        min_den = min(min_den, float(den.min()))
        return vec

    for _ in range(steps):
        k1 = field(q)
        k2 = field(q + 0.5 * dt[:, None] * k1)
        k3 = field(q + 0.5 * dt[:, None] * k2)
        k4 = field(q + dt[:, None] * k3)
        q = q + dt[:, None] * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
    if min_den < min_denominator:
        raise AdmissibilityError(f"twisted flow met 1 - g^2 = {min_den:.3e} < {min_denominator}")

    bnd = np.unique(mesh.boundary_edges())
    on_sphere = bnd[np.abs(np.linalg.norm(p[bnd], axis=1) - 1.0) < 1e-9]
    return mesh.with_vertices(renormalize_to_sphere(q, on_sphere, sphere_tol))


# ---------------------------------------------------------- weighted norms

def norm_weight(s: np.ndarray, k: int, gamma: float, params: DeformParams) -> np.ndarray:
    """f_k = max(exp(-gamma s), b_k) with b_0 = exp(-gamma 5D), b_2 = lambda^-6 b_0."""
    b0 = np.exp(-gamma * params.seam)
    bk = b0 if k == 0 else params.lam ** -6 * b0
    return np.maximum(np.exp(-gamma * np.asarray(s, dtype=float)), bk)


def _edge_ratio_max(values: np.ndarray, edges: np.ndarray, lengths: np.ndarray, beta: float, n: int) -> np.ndarray:
    diff = values[edges[:, 0]] - values[edges[:, 1]]
    if diff.ndim > 1:
        diff = np.linalg.norm(diff.reshape(len(diff), -1), axis=1)
    ratio = np.abs(diff) / lengths ** beta
    out = np.zeros(n)
    np.maximum.at(out, edges[:, 0], ratio)
    np.maximum.at(out, edges[:, 1], ratio)
    return out


def local_magnitude(mesh: SurfaceMesh, values: np.ndarray, k: int, lam: float, beta: float = 0.75,
                    ops: Optional[DiscreteOperators] = None) -> np.ndarray:
    """Pointwise C^{k,beta} size in the lambda^-2 g metric; Hoelder parts by edge difference ratios."""
    ops = ops or discrete_operators(mesh)
    n = mesh.n_vertices
    edges, _ = mesh.edges()
    lengths = np.linalg.norm(mesh.vertices[edges[:, 0]] - mesh.vertices[edges[:, 1]], axis=1) / lam
    mag = np.abs(values)
    if k == 0:
        return mag + _edge_ratio_max(values, edges, lengths, beta, n)
    if k != 2:
        raise ValueError(f"weighted norms are defined for k = 0 or 2, got {k}")
    Gx, Gy, Gz = ops.grad
    grad = np.stack([Gx @ values, Gy @ values, Gz @ values], axis=1)
    hess = np.stack([np.stack([g @ grad[:, c] for g in (Gx, Gy, Gz)], axis=1) for c in range(3)], axis=1)
    hess_lam = lam * lam * hess
    mag = mag + lam * np.linalg.norm(grad, axis=1) + np.linalg.norm(hess_lam, axis=(1, 2))
    return mag + _edge_ratio_max(hess_lam, edges, lengths, beta, n)


def weighted_norm(field: Union[ScalarField, np.ndarray], k: int, gamma: float, params: DeformParams,
                  region: Optional[Union[str, np.ndarray]] = None, beta: float = 0.75,
                  mesh: Optional[SurfaceMesh] = None) -> float:
    """lambda^{-k+1} sup (local magnitude) / f_k over the mesh or a region."""
    if isinstance(field, ScalarField):
        mesh = field.mesh
        values = field.full()
    else:
        values = np.asarray(field, dtype=float)
    if mesh is None:
        raise ValueError("weighted_norm needs the mesh of a raw value array")
    if k not in (0, 2):
        raise ValueError(f"weighted norms are defined for k = 0 or 2, got {k}")
    mag = local_magnitude(mesh, values, k, params.lam, beta)
    ratio = mag / norm_weight(mesh.s, k, gamma, params)
    if region is not None:
        mask = RegionMap.from_params(params).masks(mesh.s)[region] if isinstance(region, str) else region
        ratio = ratio[mask]
    return float(params.lam ** (1 - k) * (ratio.max() if ratio.size else 0.0))


def weighted_pair_norm(mesh: SurfaceMesh, E: np.ndarray, E_bnd: np.ndarray, gamma: float,
                       params: DeformParams, beta: float = 0.75) -> float:
    """max(||E||_{0,beta,gamma}, b_0^-1 sup |E_bnd|); the boundary part is a sup surrogate."""
    interior = weighted_norm(np.asarray(E, dtype=float), 0, gamma, params, beta=beta, mesh=mesh)
    E_bnd = np.asarray(E_bnd, dtype=float)
    bnd = float(np.max(np.abs(E_bnd))) if E_bnd.size else 0.0
    return max(interior, bnd / float(np.exp(-gamma * params.seam)))


# ---------------------------------------------------- linearization residual

def jacobi_rows(mesh: SurfaceMesh, A2: np.ndarray, ops: Optional[DiscreteOperators] = None):
    """Strong L_h = -M^-1 K + |A|^2 and B_h, as sparse matrices."""
    ops = ops or discrete_operators(mesh)
    L = (ops.strong_laplacian() + sparse.diags(np.asarray(A2, dtype=float))).tocsr()
    return L, ops.boundary_rows(), ops


def quadratic_residual(mesh: SurfaceMesh, phi: np.ndarray, eps: float = 0.1,
                       A2: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """(Q_H, Q_Theta) = (H_phi - H + L phi, Theta_phi - Theta - B phi), all discrete."""
    phi = np.asarray(phi, dtype=float)
    A2 = second_form_norm2(mesh, analytic=False).values if A2 is None else A2
    L, B, ops = jacobi_rows(mesh, A2)
    nu = vertex_normals(mesh, ops)
    moved = twisted_graph(mesh, phi, eps, analytic=False)
    H0 = discrete_mean_curvature(mesh, nu, ops)
    H1 = discrete_mean_curvature(moved)
    QH = H1 - H0 + L @ phi
    b = ops.boundary
    if len(b) == 0:
        return QH, np.zeros(0)
    th0 = np.sum(nu[b] * mesh.vertices[b], axis=1)
    nu1 = vertex_normals(moved)
    th1 = np.sum(nu1[b] * moved.vertices[b], axis=1)
    return QH, th1 - th0 - B @ phi


# ----------------------------------------------------- geodesic exponential

Metric = Callable[[np.ndarray], np.ndarray]


def euclidean_metric(x: np.ndarray) -> np.ndarray:
    return np.eye(len(x))


def bump_metric(amplitude: float = 0.1) -> Metric:
    """(1 + amplitude exp(-|x|^2)) g_0."""
    def metric(x):
        return (1.0 + amplitude * np.exp(-float(np.dot(x, x)))) * np.eye(len(x))
    return metric


def christoffel(metric: Metric, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Gamma^k_ij by central differences of g."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    dg = np.zeros((n, n, n))
    for l in range(n):
        e = np.zeros(n)
        e[l] = h
        dg[l] = (metric(x + e) - metric(x - e)) / (2.0 * h)
    ginv = np.linalg.inv(metric(x))
    # dg[l, i, j] = d_l g_ij; lowered[i, j, l] = d_i g_jl + d_j g_il - d_l g_ij
    lowered = dg.transpose(0, 1, 2) + dg.transpose(1, 0, 2) - dg.transpose(1, 2, 0)
    return 0.5 * np.einsum("kl,ijl->kij", ginv, lowered)


def riemannian_exp(metric: Metric, x, v, steps: int = 64, chart_radius: Optional[float] = None) -> np.ndarray:
    """exp_x(v) by integrating the geodesic equation with classical RK4 on [0, 1]."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    n = len(x)

    def rhs(state):
        pos, vel = state[:n], state[n:]
        acc = -np.einsum("kij,i,j->k", christoffel(metric, pos), vel, vel)
        return np.concatenate([vel, acc])

    state = np.concatenate([x, v])
    dt = 1.0 / steps
    for _ in range(steps):
        k1 = rhs(state)
        k2 = rhs(state + 0.5 * dt * k1)
        k3 = rhs(state + 0.5 * dt * k2)
        k4 = rhs(state + dt * k3)
        state = state + dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        if chart_radius is not None and np.linalg.norm(state[:n]) >= chart_radius:
            raise DomainError(f"geodesic exits the chart |x| < {chart_radius}")
    return state[:n]


def exp_defect_constant(metric: Metric, x, radius: float, n_dirs: int = 12, seed: int = 0) -> float:
    """max |exp_x(v) - x - v| / |v|^2 over sampled |v| = radius."""
    rng = np.random.default_rng(seed)
    x = np.asarray(x, dtype=float)
    dirs = rng.normal(size=(n_dirs, len(x)))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    worst = 0.0
    for d in dirs:
        v = radius * d
        worst = max(worst, float(np.linalg.norm(riemannian_exp(metric, x, v) - x - v)) / radius ** 2)
    return worst


def injectivity_separation(metric: Metric, x, radius: float, per_axis: int = 5) -> float:
    """Smallest |exp(v_i) - exp(v_j)| / |v_i - v_j| over a grid in the ball |v| <= radius."""
    x = np.asarray(x, dtype=float)
    axis = np.linspace(-radius, radius, per_axis)
    grid = np.stack(np.meshgrid(*([axis] * len(x)), indexing="ij"), axis=-1).reshape(-1, len(x))
    grid = grid[np.linalg.norm(grid, axis=1) <= radius + 1e-12]
    images = np.array([riemannian_exp(metric, x, v, steps=16) for v in grid])
    i, j = np.triu_indices(len(grid), k=1)
    sep = np.linalg.norm(images[i] - images[j], axis=1) / np.linalg.norm(grid[i] - grid[j], axis=1)
    return float(sep.min())
