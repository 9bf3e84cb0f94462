"""Discrete initial surface M_{theta,m}: the Scherk block, the four outer
pieces of W_theta, region tags, the s-function, symmetry orbits and the
projections onto S and W."""

import logging
from dataclasses import dataclass, field, replace
from itertools import product
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.sparse.csgraph import connected_components

from src.exceptions import DomainError, MeshQualityError, SelfIntersectionError, TopologyError
from src.rotsym import solve_critical_constants, w_pieces
from src.scherk import (
    ANNULUS, CORE, DISK, HWING_M, HWING_P, K_M, K_P, REGION_NAMES, VWING_M, VWING_P,
    WING_KINDS, DeformParams, ScherkImmersion, core_s, cos_snapped, dihedral_group, implicit_mean_curvature,
    psi_cut, scherk_gradient, scherk_hessian, scherk_normal, scherk_project, wing_point,
)
from src.spatial import hausdorff_distance, match_points, merge_coincident, self_intersections

logger = logging.getLogger(__name__)

NO_REGION = -1
TWO_PI = 2.0 * np.pi

# outer piece attached to each wing
PIECE_OF_WING = {VWING_P: K_P, VWING_M: K_M, HWING_P: ANNULUS, HWING_M: DISK}
BOUNDARY_LABELS = {K_P: 0, K_M: 1, ANNULUS: 2}


@dataclass
class OrbitTable:
    """Vertex permutations of a symmetry group, with the sign character of each element."""

    perms: np.ndarray
    characters: np.ndarray
    matrices: Optional[np.ndarray] = None

    @property
    def order(self) -> int:
        return len(self.perms)

    def deviation(self, values: np.ndarray, symmetric: bool = True) -> float:
        """max |f(g v) - chi(g) f(v)| over the group (chi = 1 for invariant fields)."""
        values = np.asarray(values, dtype=float)
        worst = 0.0
        for perm, chi in zip(self.perms, self.characters):
            sign = chi if symmetric else 1.0
            worst = max(worst, float(np.max(np.abs(values[perm] - sign * values))))
        return worst

    def average(self, values: np.ndarray, symmetric: bool = True) -> np.ndarray:
        """Signed group average; a projector onto the symmetry class."""
        values = np.asarray(values, dtype=float)
        total = np.zeros_like(values)
        for perm, chi in zip(self.perms, self.characters):
            total += (chi if symmetric else 1.0) * values[perm]
        return total / self.order


@dataclass
class SurfaceMesh:
    vertices: np.ndarray
    faces: np.ndarray
    region: np.ndarray
    s: np.ndarray
    chart: np.ndarray
    spoint: np.ndarray
    boundary: np.ndarray
    normals: Optional[np.ndarray] = None
    mean_curvature: Optional[np.ndarray] = None
    second_form: Optional[np.ndarray] = None
    face_piece: Optional[np.ndarray] = None
    params: Optional[DeformParams] = None
    orbits: Optional[OrbitTable] = None
    rings: Dict[int, np.ndarray] = field(default_factory=dict)
    ring_s: Dict[int, np.ndarray] = field(default_factory=dict)
    col_y: Optional[np.ndarray] = None
    period: Optional["ScherkPeriod"] = None
    n_period: int = 0
    res: int = 0
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        self.faces = np.asarray(self.faces, dtype=np.int64)
        for arr in (self.vertices, self.faces):
            arr.flags.writeable = False

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def has_exact(self) -> bool:
        return self.normals is not None

    @property
    def boundary_mask(self) -> np.ndarray:
        return self.boundary >= 0

    def edges(self) -> Tuple[np.ndarray, np.ndarray]:
        """Unique undirected edges and the number of faces on each."""
        f = self.faces
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        e = np.sort(e, axis=1)
        edges, counts = np.unique(e, axis=0, return_counts=True)
        return edges, counts

    def boundary_edges(self) -> np.ndarray:
        edges, counts = self.edges()
        return edges[counts == 1]

    def euler_characteristic(self) -> int:
        edges, _ = self.edges()
        used = np.unique(self.faces)
        return int(len(used) - len(edges) + len(self.faces))

    def boundary_loops(self) -> List[np.ndarray]:
        be = self.boundary_edges()
        if len(be) == 0:
            return []
        nodes = np.unique(be)
        index = np.full(self.n_vertices, -1)
        index[nodes] = np.arange(len(nodes))
        graph = sparse.coo_matrix((np.ones(len(be)), (index[be[:, 0]], index[be[:, 1]])),
                                  shape=(len(nodes), len(nodes)))
        count, labels = connected_components(graph, directed=False)
        return [nodes[labels == c] for c in range(count)]

    def genus(self) -> int:
        return (2 - self.euler_characteristic() - len(self.boundary_loops())) // 2

    def area(self) -> float:
        tri = self.vertices[self.faces]
        return float(0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1).sum())

    def with_vertices(self, vertices: np.ndarray, keep_exact: bool = False) -> "SurfaceMesh":
        """Same connectivity and records on moved vertices."""
        mesh = replace(self, vertices=np.array(vertices, dtype=float), faces=np.array(self.faces))
        if not keep_exact:
            mesh.normals = mesh.mean_curvature = mesh.second_form = None
        return mesh


# ------------------------------------------------------------ shared grids

def _pow2_at_least(x: float) -> int:
    return int(2 ** int(np.ceil(np.log2(max(x, 1.0)))))


def grid_resolution(res: int, a: float) -> Tuple[int, int]:
    """(n_sigma, n_t) of the quarter piece; n_t is a power of two so ring counts halve cleanly."""
    n_t = _pow2_at_least(max(4.0, res * np.pi / 2.0))
    n_sig = max(4, int(np.ceil(res * a)))
    return n_sig, n_t


def _grid_faces(table: np.ndarray, col_y: np.ndarray, cyclic: bool = False,
                period: float = 0.0) -> np.ndarray:
    """Split the quads of a node table into triangles.

    The diagonal alternates with the parity of the quarter-period containing the
    column, so the triangulation is mirrored by every reflection of Y at a
    multiple of pi/2.
    """
    rows, cols = table.shape
    k = np.arange(cols if cyclic else cols - 1)
    k1 = (k + 1) % cols
    y0 = col_y[k]
    y1 = np.where(k1 == 0, col_y[0] + period, col_y[k1]) if cyclic else col_y[k1]
    odd = np.mod(np.floor(0.5 * (y0 + y1) / (0.5 * np.pi)), 2) == 1
    out = []
    for r in range(rows - 1):
        a, b = table[r, k], table[r + 1, k]
        c, d = table[r + 1, k1], table[r, k1]
        even = ~odd
        out.append(np.stack([a[even], b[even], c[even]], axis=1))
        out.append(np.stack([a[even], c[even], d[even]], axis=1))
        out.append(np.stack([a[odd], b[odd], d[odd]], axis=1))
        out.append(np.stack([b[odd], c[odd], d[odd]], axis=1))
    return np.concatenate(out) if out else np.zeros((0, 3), dtype=np.int64)


def _zipper(outer: np.ndarray, inner: np.ndarray) -> np.ndarray:
    """Strip between two closed rings of uniform angles, both starting at angle 0.

    Triangles follow the merged order of edge midpoints, compared exactly in
    integers; ring sizes with different 2-adic valuation never tie.
    """
    no, ni = len(outer), len(inner)
    tris = []
    i = j = 0
    while i < no or j < ni:
        take_outer = j == ni or (i < no and (2 * i + 1) * ni < (2 * j + 1) * no)
        if take_outer:
            tris.append((outer[i], outer[(i + 1) % no], inner[j % ni]))
            i += 1
        else:
            tris.append((outer[i % no], inner[(j + 1) % ni], inner[j]))
            j += 1
    return np.array(tris, dtype=np.int64)


def _orient(faces: np.ndarray, points: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Flip triangles whose normal disagrees with the reference normal at the centroid."""
    tri = points[faces]
    n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    flip = np.sum(n * reference, axis=1) < 0.0
    faces = faces.copy()
    faces[flip] = faces[flip][:, [0, 2, 1]]
    return faces


# ------------------------------------------------------------ Scherk period

@dataclass
class ScherkPeriod:
    """One period of S in S-space, meshed, with seam bookkeeping."""

    points: np.ndarray
    region: np.ndarray
    chart: np.ndarray
    s: np.ndarray
    faces: np.ndarray
    right: np.ndarray
    partner: np.ndarray
    n_inner: int
    tables: Dict[int, np.ndarray]
    row_s: Dict[int, np.ndarray]
    n_inner_rows: Dict[int, int]
    col_y: np.ndarray
    n_t: int
    n_quarter: int
    a: float
    seam: float


def _quarter_piece(a: float, n_sig: int, n_t: int) -> Tuple[np.ndarray, np.ndarray]:
    """Structured grid on S with 0 <= y <= pi/2, 0 <= z <= x <= a."""
    t = np.linspace(0.0, 1.0, n_t + 1)
    xi = np.linspace(0.0, 1.0, n_sig + 1)
    grade = min(1.0, max(0.2, 1.25 / a))
    sigma = grade * xi + (1.0 - grade) * xi ** 2
    S, T = np.meshgrid(sigma, t, indexing="ij")

    b = 0.5 * np.pi * (1.0 - T)
    v_m = np.arccosh(3.0)
    y_v = np.arccos(np.clip(0.5 * (np.cosh(v_m * T) - 1.0), -1.0, 1.0))
    beta = psi_cut(0.7, 0.3, T)
    y_diag = beta * y_v + (1.0 - beta) * b
    kappa = psi_cut(0.0, 1.0, S)
    y = (1.0 - kappa) * y_diag + kappa * b
    y[:, 0] = 0.5 * np.pi
    y[:, -1] = 0.0
    y[-1, :] = b[-1, :]

    c = cos_snapped(y)
    x_d = np.arcsinh(np.sqrt(c))
    x = x_d + (a - x_d) * S
    x[-1, :] = a
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.arcsinh(c / np.sinh(x))
    z[0, :] = x[0, :]
    z = np.where(np.isfinite(z), z, 0.0)

    points = smooth_quarter(np.stack([x, y, z], axis=-1)).reshape(-1, 3)
    idx = np.arange((n_sig + 1) * (n_t + 1)).reshape(n_sig + 1, n_t + 1)
    a0, b0 = idx[:-1, :-1].ravel(), idx[1:, :-1].ravel()
    c0, d0 = idx[1:, 1:].ravel(), idx[:-1, 1:].ravel()
    faces = np.concatenate([np.stack([a0, b0, c0], 1), np.stack([a0, c0, d0], 1)])
    return points, faces


def smooth_quarter(grid: np.ndarray, sweeps: int = 60, weight: float = 0.5) -> np.ndarray:
    """Damped Jacobi Laplacian on the interior nodes of a quarter grid, projected back onto S.

    The four sides lie on symmetry curves of S or on the wing row s = 0 and stay
    fixed, so the 16 copies still close up node for node.
    """
    g = np.array(grid, dtype=float)
    if min(g.shape[:2]) < 3:
        return g
    inner = (slice(1, -1), slice(1, -1))
    for _ in range(sweeps):
        avg = 0.25 * (g[:-2, 1:-1] + g[2:, 1:-1] + g[1:-1, :-2] + g[1:-1, 2:])
        g[inner] = scherk_project(g[inner] + weight * (avg - g[inner]))
    return g


def _period_copies(points: np.ndarray) -> List[np.ndarray]:
    """The 16 images of the quarter piece covering one period of the core."""
    copies = []
    for swap, rot, yhat, yrefl in product((0, 1), repeat=4):
        q = points.copy()
        if swap:
            q = q[:, [2, 1, 0]]
        if rot:
            q = q * np.array([-1.0, 1.0, -1.0])
        if yhat:
            q = np.stack([q[:, 0], np.pi - q[:, 1], -q[:, 2]], axis=1)
        if yrefl:
            q = q * np.array([1.0, -1.0, 1.0])
        copies.append(q)
    return copies


def wing_columns(n_t: int) -> np.ndarray:
    """Scherk y of the wing columns: 4 n_t + 1 values from -pi to pi."""
    b = 0.5 * np.pi * (1.0 - np.linspace(0.0, 1.0, n_t + 1))
    positive = np.concatenate([b[::-1], (np.pi - b)[1:]])
    return np.concatenate([-positive[:0:-1], positive])


def _chart_y(kind: int, y_scherk):
    return y_scherk if kind in (HWING_P, HWING_M) else -y_scherk


def wing_rows(params: DeformParams, kind: int, n_t: int, samples: int = 513) -> np.ndarray:
    """Inner rows 0 = s_0 < ... < s_n = 5D of one wing.

    The rows equidistribute max_y |F_s| / |F_y| of the theta = 0 wing immersion
    at the column spacing, so every cell of the bent wing is close to square:
    the blend and the inner plane get more rows, the outer plane fewer.
    """
    ref = params if params.theta == 0.0 else params.with_theta(0.0)
    dy = 0.5 * np.pi / n_t
    s = np.linspace(0.0, ref.seam, samples)
    y = wing_columns(n_t)[::max(1, n_t // 4)]
    Y, S = np.meshgrid(y, s, indexing="ij")
    _, Fy, Fs, _, _, _ = ScherkImmersion(ref).wing_jet(kind, Y, S)
    ratio = np.max(np.linalg.norm(Fs, axis=-1) / np.linalg.norm(Fy, axis=-1), axis=0)
    G = cumulative_trapezoid(ratio, s, initial=0.0)
    n = max(2, int(np.ceil(G[-1] / dy)))
    rows = np.interp(np.linspace(0.0, G[-1], n + 1), G, s)
    rows[0], rows[-1] = 0.0, ref.seam
    return rows


def scherk_period(params: DeformParams, res: int, s_extra: float = 0.0) -> ScherkPeriod:
    """Mesh one period of S out to s = 5D (+ s_extra) on every wing."""
    a, seam = params.a, params.seam
    n_sig, n_t = grid_resolution(res, a)
    quarter, qfaces = _quarter_piece(a, n_sig, n_t)
    copies = _period_copies(quarter)
    core_pts = np.concatenate(copies)
    core_faces = np.concatenate([qfaces + i * len(quarter) for i in range(len(copies))])

    col_y = wing_columns(n_t)
    dy = 0.5 * np.pi / n_t
    n_ext = int(np.ceil(s_extra / dy)) if s_extra > 0 else 0
    ext_s = seam + dy * np.arange(1, n_ext + 1)
    inner_s = {kind: wing_rows(params, kind, n_t) for kind in WING_KINDS}
    row_s = {kind: np.concatenate([inner_s[kind], ext_s]) for kind in WING_KINDS}

    # inner rows of every wing first, extension rows last
    blocks, offsets = [core_pts], {}
    start = len(core_pts)
    for part in ("inner", "ext"):
        for kind in WING_KINDS:
            rows = inner_s[kind] if part == "inner" else ext_s
            S, Yc = np.meshgrid(rows, col_y, indexing="ij")
            pts = wing_point(kind, _chart_y(kind, Yc), S, a).reshape(-1, 3)
            offsets[(part, kind)] = (start, rows)
            blocks.append(pts)
            start += len(pts)
    ext_start = offsets[("ext", WING_KINDS[0])][0]
    raw = np.concatenate(blocks)
    points, inverse = merge_coincident(raw, tol=1e-9)
    n_inner = int(inverse[:ext_start].max()) + 1

    n = len(points)
    region = np.full(n, -1, dtype=np.int64)
    chart = np.zeros((n, 3))
    s = np.zeros(n)
    ncol = len(col_y)
    tables = {}
    wing_faces = []
    raw_region = np.full(len(raw), CORE, dtype=np.int64)
    raw_chart = raw.copy()
    raw_s = core_s(raw, a)
    for kind in WING_KINDS:
        ids = []
        for part in ("inner", "ext"):
            off, rows = offsets[(part, kind)]
            sl = slice(off, off + len(rows) * ncol)
            raw_region[sl] = kind
            rr = np.repeat(rows, ncol)
            raw_s[sl] = rr
            raw_chart[sl] = np.stack([_chart_y(kind, np.tile(col_y, len(rows))), rr, np.zeros(len(rr))], axis=1)
            ids.append(inverse[sl].reshape(len(rows), ncol))
        table = np.concatenate(ids)
        tables[kind] = table
        wing_faces.append(_grid_faces(table, col_y))

    _, first = np.unique(inverse, return_index=True)
    region[:] = raw_region[first]
    chart[:] = raw_chart[first]
    s[:] = raw_s[first]

    faces = np.concatenate([inverse[core_faces]] + wing_faces)
    degenerate = (faces[:, 0] == faces[:, 1]) | (faces[:, 1] == faces[:, 2]) | (faces[:, 0] == faces[:, 2])
    if np.any(degenerate):
        raise TopologyError(f"{int(degenerate.sum())} triangles collapsed while merging the Scherk period")
    centroids = points[faces].mean(axis=1)
    faces = _orient(faces, points, scherk_normal(centroids))

    right = np.abs(points[:, 1] - np.pi) < 1e-9
    left = np.abs(points[:, 1] + np.pi) < 1e-9
    partner = np.full(n, -1, dtype=np.int64)
    left_ids = np.flatnonzero(left)
    if right.sum() != left.sum():
        raise TopologyError(f"period seam mismatch: {int(right.sum())} right vs {int(left.sum())} left nodes")
    partner[right] = left_ids[match_points(points[right][:, [0, 2]], points[left_ids][:, [0, 2]])]

    logger.debug("Scherk period: %d nodes (%d inner), %d faces, n_t = %d, n_sigma = %d",
                 n, n_inner, len(faces), n_t, n_sig)
    return ScherkPeriod(points=points, region=region, chart=chart, s=s, faces=faces, right=right,
                        partner=partner, n_inner=n_inner, tables=tables, row_s=row_s,
                        n_inner_rows={kind: len(r) for kind, r in inner_s.items()}, col_y=col_y, n_t=n_t,
                        n_quarter=len(quarter), a=a, seam=seam)


def _assemble(period: ScherkPeriod, count: int, inner_only: bool = True) -> Dict[str, Any]:
    """Replicate a period count times along y, closing cyclically."""
    n = period.n_inner if inner_only else len(period.points)
    right = period.right[:n]
    base = np.flatnonzero(~right)
    rank = np.full(n, -1, dtype=np.int64)
    rank[base] = np.arange(len(base))
    nb = len(base)

    def gid(k: int, nodes: np.ndarray) -> np.ndarray:
        nodes = np.asarray(nodes)
        out = rank[nodes] + k * nb
        r = right[nodes]
        out[r] = rank[period.partner[nodes[r]]] + ((k + 1) % count) * nb
        return out

    keep = np.all(period.faces < n, axis=1)
    pfaces = period.faces[keep]
    faces = np.concatenate([gid(k, pfaces.ravel()).reshape(-1, 3) for k in range(count)])

    shift = np.array([0.0, TWO_PI, 0.0])
    spoint = np.concatenate([period.points[base] + k * shift for k in range(count)])
    region = np.tile(period.region[base], count)
    s = np.tile(period.s[base], count)
    chart_sign = np.where(np.isin(period.region[base], (VWING_P, VWING_M)), -1.0, 1.0)
    charts = []
    for k in range(count):
        c = period.chart[base].copy()
        is_core = period.region[base] == CORE
        c[is_core] = spoint[k * nb:(k + 1) * nb][is_core]
        c[~is_core, 0] += chart_sign[~is_core] * TWO_PI * k
        charts.append(c)
    rows = {kind: period.n_inner_rows[kind] if inner_only else len(r) for kind, r in period.row_s.items()}
    tables = {kind: np.concatenate([gid(k, t[:rows[kind], :-1]) for k in range(count)], axis=1)
              for kind, t in period.tables.items()}
    col_y = np.concatenate([period.col_y[:-1] + TWO_PI * k for k in range(count)])
    return dict(faces=faces, spoint=spoint, region=region, s=s, chart=np.concatenate(charts),
                tables=tables, col_y=col_y, nb=nb,
                row_s={kind: r[:rows[kind]] for kind, r in period.row_s.items()})


def _wing_mask(region: np.ndarray) -> np.ndarray:
    return np.isin(region, WING_KINDS)


def _exact_block_geometry(immersion: ScherkImmersion, region, spoint, chart):
    n = len(region)
    normals = np.zeros((n, 3))
    H = np.zeros(n)
    A2 = np.zeros(n)
    core = region == CORE
    if np.any(core):
        normals[core], H[core], A2[core] = immersion.core_geometry(spoint[core])
    for kind in WING_KINDS:
        sel = region == kind
        if np.any(sel):
            normals[sel], H[sel], A2[sel] = immersion.wing_geometry(kind, chart[sel, 0], chart[sel, 1])
    return normals, H, A2


def build_scherk_block(params: DeformParams, res: int, s_extra: float = 0.0) -> SurfaceMesh:
    """Mesh of Sigma_{theta,m} with preimage records; m periods of S closed cyclically."""
    period = scherk_period(params, res, s_extra=s_extra)
    data = _assemble(period, params.m, inner_only=True)
    immersion = ScherkImmersion(params)
    region, spoint, chart = data["region"], data["spoint"], data["chart"]

    vertices = np.zeros((len(region), 3))
    core = region == CORE
    vertices[core] = immersion.core(spoint[core])
    for kind in WING_KINDS:
        sel = region == kind
        vertices[sel] = immersion.wing(kind, chart[sel, 0], chart[sel, 1])
    normals, H, A2 = _exact_block_geometry(immersion, region, spoint, chart)

    mesh = SurfaceMesh(
        vertices=vertices, faces=data["faces"], region=region, s=data["s"], chart=chart,
        spoint=spoint, boundary=np.full(len(region), -1, dtype=np.int64),
        normals=normals, mean_curvature=H, second_form=A2,
        face_piece=np.full(len(data["faces"]), NO_REGION, dtype=np.int64),
        params=params, rings=data["tables"], ring_s=data["row_s"], col_y=data["col_y"],
        period=period, n_period=data["nb"], res=res,
    )
    logger.info("Scherk block: m = %d, %d vertices, %d faces", params.m, mesh.n_vertices, mesh.n_faces)
    return mesh


# ---------------------------------------------------------------- W pieces

@dataclass(frozen=True)
class WLevels:
    n_K: int
    n_A: int
    disk: Tuple[Tuple[int, float], ...]

    @property
    def n_D(self) -> int:
        return len(self.disk)


def disk_schedule(ring_size: int, m: int) -> Tuple[Tuple[int, float], ...]:
    """(ring size, radius fraction) of the disk rings inside the seam ring, outermost first.

    Ring sizes halve from ring_size down to 2m. Within one size the radii shrink
    geometrically so the cells stay close to square, and every halving lands on
    a power-of-two fraction. The last ring (2m nodes on the mirror lines) fans
    into the centre.
    """
    n, top = ring_size, 1.0
    ratio = ring_size // (2 * m)
    if ring_size % (2 * m) or ratio & (ratio - 1):
        raise TopologyError(f"seam ring of {ring_size} nodes is not 2m times a power of two (m = {m})")
    rings = []
    while n > 2 * m:
        count = max(1, int(round(n * np.log(2.0) / TWO_PI)))
        q = 0.5 ** (1.0 / count)
        first = 1 if n == ring_size else 0
        rings.extend((n, top * q ** k) for k in range(first, count))
        n, top = n // 2, 0.5 * top
    rings.append((n, top))
    return tuple(rings)


def w_level_counts(params: DeformParams, ring_size: int) -> WLevels:
    """Level counts of the outer pieces, fixed by the theta = 0 geometry."""
    ref = params if params.theta == 0.0 else params.with_theta(0.0)
    reach = (ref.a + ref.seam) / ref.m
    point = ref.profile.point
    z_s = point.tilde_r * reach
    spacing_K = TWO_PI * float(ref.profile.f(z_s)) / ring_size
    z = np.linspace(z_s, point.h, 257)
    arclen = float(trapezoid(np.sqrt(1.0 + ref.profile.df(z) ** 2), z))
    rho_A = ref.r_theta * (1.0 + reach)
    n_K = max(2, int(np.ceil(arclen / spacing_K)))
    n_A = max(2, int(np.ceil((1.0 - rho_A) / (TWO_PI * rho_A / ring_size))))
    return WLevels(n_K=n_K, n_A=n_A, disk=disk_schedule(ring_size, ref.m))


def piece_normals(kind: int, points: np.ndarray, params: DeformParams) -> np.ndarray:
    """Unit normal of the analytic W piece at (near) the given points."""
    points = np.asarray(points, dtype=float)
    n = np.zeros_like(points)
    if kind in (K_P, K_M):
        alpha = np.arctan2(points[:, 1], points[:, 0])
        fp = params.profile.df(np.abs(points[:, 2]))
        sg = -1.0 if kind == K_P else 1.0
        n = np.stack([sg * np.cos(alpha), sg * np.sin(alpha), fp], axis=1)
        return n / np.linalg.norm(n, axis=1, keepdims=True)
    n[:, 2] = -1.0 if kind == ANNULUS else 1.0
    return n


def project_to_piece(kind: int, points: np.ndarray, params: DeformParams) -> np.ndarray:
    """Move points onto their W piece: the catenoid radius at the same height, or z = 0."""
    out = np.array(points, dtype=float)
    if kind in (K_P, K_M):
        rho = np.linalg.norm(out[:, :2], axis=1, keepdims=True)
        out[:, :2] *= params.profile.f(np.abs(out[:, 2]))[:, None] / rho
    else:
        out[:, 2] = 0.0
    return out


def smooth_pieces(vertices: np.ndarray, faces: np.ndarray, region: np.ndarray, fixed: np.ndarray,
                  params: DeformParams, sweeps: int = 3, weight: float = 0.5) -> np.ndarray:
    """Umbrella smoothing of the W piece vertices, each pulled back onto its piece.

    Fixed vertices (the Scherk block, the sphere boundary, the disk centre) never
    move. The mesh is G_m-invariant, so the averaging commutes with the group and
    orbits stay orbits.
    """
    n = len(vertices)
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    adj = sparse.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n)).tocsr()
    adj = ((adj + adj.T) > 0).astype(float)
    deg = np.asarray(adj.sum(axis=1)).ravel()
    free = ~fixed & (deg > 0)
    v = np.array(vertices, dtype=float)
    for _ in range(sweeps):
        avg = (adj @ v)[free] / deg[free, None]
        v[free] += weight * (avg - v[free])
        for kind in (K_P, K_M, ANNULUS, DISK):
            sel = free & (region == kind)
            if np.any(sel):
                v[sel] = project_to_piece(kind, v[sel], params)
    return v


def _compress(s_nat: np.ndarray, params: DeformParams) -> np.ndarray:
    D, seam = params.depth, params.seam
    return seam + D * (1.0 - np.exp(-np.maximum(s_nat - seam, 0.0) / D))


def _piece_s(kind: int, points: np.ndarray, params: DeformParams) -> np.ndarray:
    m, a, r = params.m, params.a, params.r_theta
    if kind in (K_P, K_M):
        s_nat = m * np.abs(points[:, 2]) / params.profile.point.tilde_r - a
    else:
        # polar chart of the horizontal wings: radius r (1 +- (a + s)/m)
        rho = np.linalg.norm(points[:, :2], axis=1)
        s_nat = (m if kind == ANNULUS else -m) * (rho / r - 1.0) - a
    return _compress(s_nat, params)


def _seam_ring(mesh: SurfaceMesh, kind: int) -> Tuple[np.ndarray, np.ndarray]:
    """Seam ring of a wing, rolled to start at Scherk y = 0, with its angles in [0, 2 pi)."""
    row = len(mesh.ring_s[kind]) - 1
    ids = mesh.rings[kind][row]
    y = mesh.col_y
    start = int(np.argmin(np.abs(y)))
    ids = np.roll(ids, -start)
    alpha = np.mod(np.roll(y, -start) / mesh.params.m, TWO_PI)
    alpha[0] = 0.0
    return ids, alpha


def _attach_pieces(block: SurfaceMesh, params: DeformParams, levels: WLevels) -> Dict[str, Any]:
    m = params.m
    profile = params.profile
    V = [block.vertices]
    n0 = block.n_vertices
    new_region, new_chart, new_boundary = [], [], []
    faces, face_piece = [], []
    count = [n0]

    def add(points, kind, xi, alpha, boundary_label=-1):
        ids = np.arange(count[0], count[0] + len(points))
        V.append(points)
        new_region.append(np.full(len(points), kind))
        new_chart.append(np.stack([np.broadcast_to(xi, len(points)), alpha, np.zeros(len(points))], axis=1))
        new_boundary.append(np.full(len(points), boundary_label))
        count[0] += len(points)
        return ids

    for wing, piece in PIECE_OF_WING.items():
        ring, alpha = _seam_ring(block, wing)
        seam_pts = block.vertices[ring]
        N = len(ring)
        col_y = m * alpha
        if piece in (K_P, K_M):
            sg = 1.0 if piece == K_P else -1.0
            z_s = float(np.mean(np.abs(seam_pts[:, 2])))
            h = profile.point.h
            rows = [ring]
            for i in range(1, levels.n_K + 1):
                z = z_s + (h - z_s) * i / levels.n_K
                rad = float(profile.f(z))
                pts = np.stack([rad * np.cos(alpha), rad * np.sin(alpha), np.full(N, sg * z)], axis=1)
                top = i == levels.n_K
                if top:
                    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
                rows.append(add(pts, piece, i / levels.n_K, alpha, BOUNDARY_LABELS[piece] if top else -1))
            f = _grid_faces(np.stack(rows), col_y, cyclic=True, period=TWO_PI * m)
        elif piece == ANNULUS:
            rho_s = float(np.mean(np.linalg.norm(seam_pts[:, :2], axis=1)))
            rows = [ring]
            for i in range(1, levels.n_A + 1):
                rho = rho_s + (1.0 - rho_s) * i / levels.n_A
                pts = np.stack([rho * np.cos(alpha), rho * np.sin(alpha), np.zeros(N)], axis=1)
                top = i == levels.n_A
                if top:
                    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
                rows.append(add(pts, piece, i / levels.n_A, alpha, BOUNDARY_LABELS[piece] if top else -1))
            f = _grid_faces(np.stack(rows), col_y, cyclic=True, period=TWO_PI * m)
        else:
            rho_s = float(np.mean(np.linalg.norm(seam_pts[:, :2], axis=1)))
            prev, prev_y = ring, col_y
            parts = []
            for i, (n_ring, frac) in enumerate(levels.disk, start=1):
                ang = TWO_PI * np.arange(n_ring) / n_ring
                rho = rho_s * frac
                pts = np.stack([rho * np.cos(ang), rho * np.sin(ang), np.zeros(n_ring)], axis=1)
                ids = add(pts, piece, i / (levels.n_D + 1), ang)
                if n_ring == len(prev):
                    parts.append(_grid_faces(np.stack([prev, ids]), prev_y, cyclic=True, period=TWO_PI * m))
                else:
                    parts.append(_zipper(prev, ids))
                prev, prev_y = ids, m * ang
            centre = add(np.zeros((1, 3)), piece, 1.0, np.zeros(1))[0]
            parts.append(np.stack([prev, np.roll(prev, -1), np.full(len(prev), centre)], axis=1))
            f = np.concatenate(parts)
        faces.append(f)
        face_piece.append(np.full(len(f), piece))

    region = np.concatenate([block.region] + new_region)
    boundary = np.concatenate([block.boundary] + new_boundary)
    all_new = np.concatenate(faces)
    pieces = np.concatenate(face_piece)
    fixed = np.zeros(len(region), dtype=bool)
    fixed[:n0] = True
    fixed[boundary >= 0] = True
    fixed[centre] = True
    vertices = smooth_pieces(np.concatenate(V), all_new, region, fixed, params)
    oriented = np.zeros_like(all_new)
    for piece in (K_P, K_M, ANNULUS, DISK):
        sel = pieces == piece
        cent = vertices[all_new[sel]].mean(axis=1)
        oriented[sel] = _orient(all_new[sel], vertices, piece_normals(piece, cent, params))
    return dict(vertices=vertices, region=region, chart=np.concatenate([block.chart] + new_chart),
                boundary=boundary, faces=oriented, face_piece=pieces)


def orbit_table(vertices: np.ndarray, group: List[np.ndarray], tol: float = 1e-9) -> OrbitTable:
    """Permutations induced by each group element; fails if the mesh is not invariant."""
    perms = []
    for g in group:
        perms.append(match_points(vertices @ g.T, vertices, tol=tol))
    characters = np.array([g[2, 2] for g in group])
    return OrbitTable(perms=np.stack(perms), characters=characters, matrices=np.stack(group))


def validate_topology(mesh: SurfaceMesh, m: Optional[int] = None, sphere_tol: float = 1e-9) -> Dict[str, Any]:
    """Check manifoldness, orientation, boundary loops, Euler characteristic and sphere contact."""
    edges, counts = mesh.edges()
    if np.any(counts > 2):
        raise TopologyError(f"non-manifold mesh: {int(np.sum(counts > 2))} edges with more than two faces")
    f = mesh.faces
    directed = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    _, dcounts = np.unique(directed, axis=0, return_counts=True)
    if np.any(dcounts > 1):
        raise TopologyError(f"inconsistent winding on {int(np.sum(dcounts > 1))} edges")
    loops = mesh.boundary_loops()
    chi = mesh.euler_characteristic()
    report = {"euler_characteristic": chi, "boundary_loops": len(loops), "genus": mesh.genus()}
    if m is not None:
        if len(loops) != 3:
            raise TopologyError(f"expected 3 boundary loops, found {len(loops)}")
        if chi != 1 - 2 * m:
            raise TopologyError(f"Euler characteristic {chi} != 1 - 2m = {1 - 2 * m}")
        bnd = np.unique(mesh.boundary_edges())
        off = float(np.max(np.abs(np.linalg.norm(mesh.vertices[bnd], axis=1) - 1.0)))
        if off > sphere_tol:
            raise TopologyError(f"boundary vertex off the unit sphere by {off:.3e}")
        report["sphere_deviation"] = off
    return report


def build_initial_surface(theta: float, m: int, res: int, a: Optional[float] = None,
                          delta_s: float = 0.05, delta_theta: float = 0.05,
                          blend_width: Optional[float] = None, s_far: float = 6.0,
                          check_intersections: bool = True, min_angle_deg: float = 15.0,
                          params: Optional[DeformParams] = None) -> SurfaceMesh:
    """Glue the Scherk block to the clipped outer pieces of W_theta and validate the result.

    Raises MeshQualityError when a triangle angle falls below
    quality_floor(m, min_angle_deg).
    """
    if params is None:
        params = DeformParams.build(theta=theta, m=m, a=a, delta_s=delta_s,
                                    delta_theta=delta_theta, blend_width=blend_width)
    block = build_scherk_block(params, res, s_extra=s_far)
    ring_size = block.rings[HWING_P].shape[1]
    levels = w_level_counts(params, ring_size)
    glued = _attach_pieces(block, params, levels)

    n0 = block.n_vertices
    vertices = glued["vertices"]
    region = glued["region"]
    n = len(vertices)
    s = np.concatenate([block.s, np.zeros(n - n0)])
    normals = np.concatenate([block.normals, np.zeros((n - n0, 3))])
    H = np.concatenate([block.mean_curvature, np.zeros(n - n0)])
    A2 = np.concatenate([block.second_form, np.zeros(n - n0)])
    for piece in (K_P, K_M, ANNULUS, DISK):
        sel = np.flatnonzero(region == piece)
        pts = vertices[sel]
        s[sel] = _piece_s(piece, pts, params)
        normals[sel] = piece_normals(piece, pts, params)
        if piece in (K_P, K_M):
            A2[sel] = params.profile.second_form_norm2(np.abs(pts[:, 2]))
    # the centre sits past every compressed s; _compress saturates at seam + D
    s[(region == DISK) & (np.linalg.norm(vertices[:, :2], axis=1) < 1e-12)] = params.seam + params.depth

    spoint = np.concatenate([block.spoint, np.full((n - n0, 3), np.nan)])
    faces = np.concatenate([block.faces, glued["faces"]])
    face_piece = np.concatenate([block.face_piece, glued["face_piece"]])
    mesh = SurfaceMesh(
        vertices=vertices, faces=faces, region=region, s=s, chart=glued["chart"], spoint=spoint,
        boundary=glued["boundary"], normals=normals, mean_curvature=H, second_form=A2,
        face_piece=face_piece, params=params, rings=block.rings, ring_s=block.ring_s,
        col_y=block.col_y, period=block.period, n_period=block.n_period, res=res,
        meta={"levels": {"n_K": levels.n_K, "n_A": levels.n_A, "n_D": levels.n_D}},
    )
    report = validate_topology(mesh, m=params.m)
    mesh.orbits = orbit_table(mesh.vertices, dihedral_group(params.m))
    quality = quality_report(mesh)
    floor = quality_floor(params.m, min_angle_deg)
    if quality["min_angle_deg"] < floor:
        raise MeshQualityError(
            f"minimum triangle angle {quality['min_angle_deg']:.2f} deg below the floor {floor:.2f} deg "
            f"(m = {params.m}, res = {res})")
    mesh.meta.update(report)
    mesh.meta["min_angle_deg"] = quality["min_angle_deg"]
    mesh.meta["levels"]["disk"] = [list(r) for r in levels.disk]
    if check_intersections:
        hits = self_intersections(mesh.vertices, mesh.faces)
        if len(hits):
            raise SelfIntersectionError(f"{len(hits)} intersecting triangle pairs, first {hits[0].tolist()}")
    logger.info("initial surface: theta = %.4g, m = %d, V = %d, F = %d, chi = %d",
                params.theta, params.m, mesh.n_vertices, mesh.n_faces, report["euler_characteristic"])
    return mesh


def quality_floor(m: int, target: float = 15.0) -> float:
    """Smallest admissible triangle angle in degrees.

    The disk centre is fixed by G_m, so its valence is a multiple of 2m and
    its fan has an angle of at most 180/m degrees.
    """
    return min(target, 180.0 / m) - 1e-6


def quality_report(mesh: SurfaceMesh) -> Dict[str, float]:
    tri = mesh.vertices[mesh.faces]
    angles = []
    for i in range(3):
        u = tri[:, (i + 1) % 3] - tri[:, i]
        v = tri[:, (i + 2) % 3] - tri[:, i]
        cosang = np.sum(u * v, axis=1) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
        angles.append(np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0))))
    angles = np.stack(angles, axis=1)
    lengths = np.stack([np.linalg.norm(tri[:, (i + 1) % 3] - tri[:, i], axis=1) for i in range(3)], axis=1)
    aspect = lengths.max(axis=1) / lengths.min(axis=1)
    report = {
        "min_angle_deg": float(angles.min()),
        "max_angle_deg": float(angles.max()),
        "max_aspect": float(aspect.max()),
        "median_aspect": float(np.median(aspect)),
    }
    logger.debug("mesh quality: angles in [%.2f, %.2f] deg, max aspect %.2f",
                 report["min_angle_deg"], report["max_angle_deg"], report["max_aspect"])
    return report


# ------------------------------------------------------ regions, projections

@dataclass(frozen=True)
class RegionMap:
    seam: float
    width: float
    a_under: float

    @classmethod
    def from_params(cls, params: DeformParams) -> "RegionMap":
        return cls(seam=params.seam, width=params.region_width, a_under=params.a_under)

    def masks(self, s: np.ndarray) -> Dict[str, np.ndarray]:
        s = np.asarray(s, dtype=float)
        return {
            "M0": s <= self.seam - self.width,
            "Mt0": s <= self.seam + 1e-12,
            "M1": s >= self.a_under + self.width,
            "Mt1": s >= self.a_under - 1e-12,
        }

    def check(self, s: np.ndarray) -> None:
        mk = self.masks(s)
        if np.any(mk["M0"] & ~mk["Mt0"]) or np.any(mk["M1"] & ~mk["Mt1"]):
            raise TopologyError("region nesting violated")
        if not np.all(mk["Mt0"] | mk["M1"]):
            raise TopologyError("M~[0] and M[1] do not cover the mesh")


def project_to_scherk(mesh: SurfaceMesh, vertex) -> Tuple[int, np.ndarray, Tuple[float, float]]:
    """(region, S point, (y, s)) of a block vertex; a record lookup."""
    vertex = int(vertex)
    reg = int(mesh.region[vertex])
    if reg != CORE and reg not in WING_KINDS:
        raise DomainError(f"vertex {vertex} lies on {REGION_NAMES.get(reg, reg)}, outside the Scherk block")
    if mesh.s[vertex] > mesh.params.seam + 1e-12:
        raise DomainError(f"vertex {vertex} has s = {mesh.s[vertex]:.4f} beyond the seam")
    if reg == CORE:
        return reg, mesh.spoint[vertex].copy(), (float(mesh.spoint[vertex, 1]), float(mesh.s[vertex]))
    return reg, mesh.spoint[vertex].copy(), (float(mesh.chart[vertex, 0]), float(mesh.chart[vertex, 1]))


def w_projection(mesh: SurfaceMesh, ids: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Pi_W for every vertex of M~[1] (or the given ids): (ids, projected points)."""
    P = mesh.params
    if ids is None:
        ids = np.flatnonzero(RegionMap.from_params(P).masks(mesh.s)["Mt1"])
    ids = np.asarray(ids, dtype=np.int64)
    reg = mesh.region[ids]
    if np.any(reg == CORE) or np.any(mesh.s[ids] < P.a_under - 1e-12):
        raise DomainError("Pi_W requested outside M~[1]")
    out = mesh.vertices[ids].copy()
    immersion = ScherkImmersion(P)
    for kind in WING_KINDS:
        sel = reg == kind
        if np.any(sel):
            c = mesh.chart[ids[sel]]
            out[sel] = immersion.project_w(kind, c[:, 0], c[:, 1])
    return ids, out


def project_to_w(mesh: SurfaceMesh, vertex) -> np.ndarray:
    return w_projection(mesh, np.array([int(vertex)]))[1][0]


@dataclass
class FieldTransport:
    """Vertex bijection M_0 -> M_theta through shared chart records."""

    perm: np.ndarray

    def to_theta(self, values0: np.ndarray) -> np.ndarray:
        """phi o F^{-1}: a field on M_0 carried to M_theta."""
        return np.asarray(values0)[self.perm]

    def to_zero(self, values_theta: np.ndarray) -> np.ndarray:
        """phi o F: a field on M_theta pulled back to M_0."""
        out = np.empty_like(np.asarray(values_theta))
        out[self.perm] = values_theta
        return out


def identify_theta(mesh_0: SurfaceMesh, mesh_theta: SurfaceMesh, tol: float = 1e-9) -> FieldTransport:
    if mesh_0.n_vertices != mesh_theta.n_vertices or mesh_0.res != mesh_theta.res:
        raise TopologyError(
            f"resolution mismatch: {mesh_0.n_vertices} vs {mesh_theta.n_vertices} vertices "
            f"(res {mesh_0.res} vs {mesh_theta.res})")
    key = lambda mesh: np.column_stack([100.0 * mesh.region, mesh.chart])
    perm = match_points(key(mesh_theta), key(mesh_0), tol=tol)
    if len(np.unique(perm)) != len(perm):
        raise TopologyError("chart records do not define a bijection")
    return FieldTransport(perm=perm)


def hausdorff_to_w(mesh: SurfaceMesh, samples: int = 64) -> float:
    """Hausdorff distance between the mesh vertices and a sampling of W_theta in the ball."""
    atlas = w_pieces(mesh.params.theta)
    pts = []
    for name, chart in atlas.charts.items():
        u, v = chart.grid(samples // 2, samples)
        pts.append(chart.point(u, v))
    return hausdorff_distance(mesh.vertices, np.concatenate(pts))


# ------------------------------------------------------- Scherk quotient

@dataclass
class ScherkQuotient:
    """S modulo the period translation, wings out to 5D + s_far, meshed in S-space."""

    points: np.ndarray
    faces: np.ndarray
    fold: sparse.csr_matrix
    base: np.ndarray
    region: np.ndarray
    s: np.ndarray
    normals: np.ndarray
    second_form: np.ndarray
    dirichlet: np.ndarray
    orbits: OrbitTable
    n_shared: int

    @property
    def n_base(self) -> int:
        return len(self.base)


def scherk_quotient_symmetries() -> List[np.ndarray]:
    """Linear parts of id, Y, Y_hat, Y Y_hat acting on (x, y, z)."""
    return [np.diag([1.0, 1.0, 1.0]), np.diag([1.0, -1.0, 1.0]),
            np.diag([1.0, -1.0, -1.0]), np.diag([1.0, 1.0, -1.0])]


def build_scherk_quotient(mesh: SurfaceMesh) -> ScherkQuotient:
    """Quotient mesh sharing the block's period indexing: base node q < n_shared is M vertex q."""
    period = mesh.period
    if period is None:
        raise TopologyError("mesh carries no Scherk period")
    points = period.points
    n = len(points)
    right = period.right
    base = np.flatnonzero(~right)
    rank = np.full(n, -1, dtype=np.int64)
    rank[base] = np.arange(len(base))
    cols = rank.copy()
    cols[right] = rank[period.partner[right]]
    fold = sparse.csr_matrix((np.ones(n), (np.arange(n), cols)), shape=(n, len(base)))

    embed = lambda p: np.column_stack([p[:, 0], np.cos(p[:, 1]), np.sin(p[:, 1]), p[:, 2]])
    bp = points[base]
    perms = []
    group = scherk_quotient_symmetries()
    for g in group:
        img = bp * np.diag(g)
        if g[2, 2] < 0:
            img[:, 1] += np.pi
        perms.append(match_points(embed(img), embed(bp), tol=1e-8))
    orbits = OrbitTable(perms=np.stack(perms), characters=np.array([g[2, 2] for g in group]),
                        matrices=np.stack(group))

    normals, _, A2 = implicit_mean_curvature(scherk_gradient(bp), scherk_hessian(bp))
    far = np.concatenate([period.tables[k][-1] for k in WING_KINDS])
    dirichlet = np.zeros(len(base), dtype=bool)
    dirichlet[np.unique(cols[far])] = True
    n_shared = int(np.sum(~right[:period.n_inner]))
    return ScherkQuotient(points=points, faces=period.faces, fold=fold, base=base,
                          region=period.region[base], s=period.s[base], normals=normals,
                          second_form=A2, dirichlet=dirichlet, orbits=orbits, n_shared=n_shared)


# ---------------------------------------------------------------- W model

@dataclass
class WModelPiece:
    """One outer piece of W_theta extended by its wing down to C_theta."""

    kind: int
    vertices: np.ndarray
    faces: np.ndarray
    m_index: np.ndarray
    dirichlet: np.ndarray
    robin: np.ndarray
    second_form: np.ndarray
    normals: np.ndarray


def build_w_model(mesh: SurfaceMesh) -> Dict[int, WModelPiece]:
    """W model pieces, index-compatible with M through m_index (-1 on the extension rows)."""
    P = mesh.params
    immersion = ScherkImmersion(P)
    # extension rows at the column spacing keep the cells square
    dy = float(mesh.col_y[1] - mesh.col_y[0])
    n_e = max(2, int(np.ceil(P.a / dy)))
    s_ext = np.linspace(-P.a, 0.0, n_e + 1)[:-1]
    period = TWO_PI * P.m
    out = {}
    for wing, piece in PIECE_OF_WING.items():
        table = mesh.rings[wing]
        chart_y = _chart_y(wing, mesh.col_y)
        ext_pts = immersion.project_w(wing, chart_y[None, :], s_ext[:, None]).reshape(-1, 3)
        n_ext = len(ext_pts)
        ncol = table.shape[1]
        wing_ids = table.ravel()
        wing_pts = immersion.project_w(wing, np.tile(chart_y, table.shape[0]),
                                       np.repeat(mesh.ring_s[wing], ncol))
        piece_faces = mesh.faces[mesh.face_piece == piece]
        extra = np.setdiff1d(np.unique(piece_faces), wing_ids)
        m_index = np.concatenate([np.full(n_ext, -1), wing_ids, extra])
        vertices = np.concatenate([ext_pts, wing_pts, mesh.vertices[extra]])

        local = np.full(mesh.n_vertices, -1, dtype=np.int64)
        local[wing_ids] = n_ext + np.arange(len(wing_ids))
        local[extra] = n_ext + len(wing_ids) + np.arange(len(extra))
        stacked = np.concatenate([np.arange(n_ext).reshape(n_e, ncol), local[table]])
        grid = _grid_faces(stacked, mesh.col_y, cyclic=True, period=period)
        faces = np.concatenate([grid, local[piece_faces]])
        cent = vertices[faces].mean(axis=1)
        faces = _orient(faces, vertices, piece_normals(piece, cent, P))

        dirichlet = np.zeros(len(vertices), dtype=bool)
        dirichlet[:ncol] = True
        robin = np.zeros(len(vertices), dtype=bool)
        mapped = m_index >= 0
        robin[mapped] = mesh.boundary[m_index[mapped]] >= 0
        A2 = np.zeros(len(vertices))
        if piece in (K_P, K_M):
            A2 = P.profile.second_form_norm2(np.abs(vertices[:, 2]))
        out[piece] = WModelPiece(kind=piece, vertices=vertices, faces=faces, m_index=m_index,
                                 dirichlet=dirichlet, robin=robin, second_form=A2,
                                 normals=piece_normals(piece, vertices, P))
    return out


# ------------------------------------------------------------ test meshes

def _plain_mesh(vertices, faces, normals, H, A2, boundary=None) -> SurfaceMesh:
    n = len(vertices)
    return SurfaceMesh(
        vertices=vertices, faces=faces, region=np.full(n, NO_REGION, dtype=np.int64),
        s=np.zeros(n), chart=np.zeros((n, 3)), spoint=np.full((n, 3), np.nan),
        boundary=np.full(n, -1, dtype=np.int64) if boundary is None else boundary,
        normals=normals, mean_curvature=H, second_form=A2,
    )


def sphere_mesh(refinements: int = 3) -> SurfaceMesh:
    """Unit icosphere with outward normals (H = 2, |A|^2 = 2)."""
    phi = (1.0 + 5 ** 0.5) / 2.0
    verts = np.array(sorted(
        [(0, s1, s2 * phi) for s1 in (-1, 1) for s2 in (-1, 1)]
        + [(s1, s2 * phi, 0) for s1 in (-1, 1) for s2 in (-1, 1)]
        + [(s1 * phi, 0, s2) for s1 in (-1, 1) for s2 in (-1, 1)]), dtype=float)
    top_ring, bottom_ring = [11, 7, 1, 2, 8], [10, 9, 3, 0, 4]
    tris = []
    for i in range(5):
        j = (i + 1) % 5
        tris += [[top_ring[i], top_ring[j], 5], [bottom_ring[i], 6, bottom_ring[j]],
                 [bottom_ring[i], bottom_ring[j], top_ring[i]], [top_ring[i], bottom_ring[j], top_ring[j]]]
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = np.array(tris)
    for _ in range(refinements):
        a, b, c = faces[:, 0], faces[:, 1], faces[:, 2]
        mids = np.concatenate([(verts[a] + verts[b]) / 2, (verts[b] + verts[c]) / 2, (verts[c] + verts[a]) / 2])
        allpts, inverse = merge_coincident(np.concatenate([verts, mids]), tol=1e-12)
        nv, nf = len(verts), len(faces)
        ab, bc, ca = (inverse[nv + k * nf: nv + (k + 1) * nf] for k in range(3))
        a, b, c = inverse[a], inverse[b], inverse[c]
        faces = np.concatenate([np.stack(t, 1) for t in ((a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca))])
        verts = allpts / np.linalg.norm(allpts, axis=1, keepdims=True)
    faces = _orient(faces, verts, verts[faces].mean(axis=1))
    n = len(verts)
    return _plain_mesh(verts, faces, verts.copy(), np.full(n, 2.0), np.full(n, 2.0))


def _ring_disk(radius: float, n_rings: int, base: int = 6) -> Tuple[np.ndarray, np.ndarray]:
    pts = [np.zeros((1, 2))]
    rings = [np.array([0])]
    count = 1
    for i in range(1, n_rings + 1):
        k = base * i
        ang = TWO_PI * np.arange(k) / k
        pts.append(radius * i / n_rings * np.stack([np.cos(ang), np.sin(ang)], axis=1))
        rings.append(np.arange(count, count + k))
        count += k
    faces = [np.stack([np.zeros(base, dtype=int), rings[1], np.roll(rings[1], -1)], axis=1)]
    for i in range(1, n_rings):
        faces.append(_zipper_nonuniform(rings[i + 1], rings[i]))
    return np.concatenate(pts), np.concatenate(faces)


def _zipper_nonuniform(outer: np.ndarray, inner: np.ndarray) -> np.ndarray:
    # midpoint order with a deterministic tie-break toward the outer ring
    no, ni = len(outer), len(inner)
    tris, i, j = [], 0, 0
    while i < no or j < ni:
        if j == ni or (i < no and (2 * i + 1) * ni <= (2 * j + 1) * no):
            tris.append((outer[i], outer[(i + 1) % no], inner[j % ni]))
            i += 1
        else:
            tris.append((outer[i % no], inner[(j + 1) % ni], inner[j]))
            j += 1
    return np.array(tris, dtype=np.int64)


def disk_mesh(height: float = 0.0, n_rings: int = 8) -> SurfaceMesh:
    """Flat disk {z = height} in the ball, normal +e_z."""
    if not -1.0 < height < 1.0:
        raise DomainError(f"disk height must lie in (-1, 1), got {height}")
    radius = np.sqrt(1.0 - height ** 2)
    xy, faces = _ring_disk(radius, n_rings)
    verts = np.column_stack([xy, np.full(len(xy), height)])
    outer = np.arange(len(verts) - 6 * n_rings, len(verts))
    verts[outer] /= np.linalg.norm(verts[outer], axis=1, keepdims=True)
    n = len(verts)
    normals = np.tile([0.0, 0.0, 1.0], (n, 1))
    faces = _orient(faces, verts, np.tile([0.0, 0.0, 1.0], (len(faces), 1)))
    boundary = np.full(n, -1, dtype=np.int64)
    boundary[outer] = 0
    return _plain_mesh(verts, faces, normals, np.zeros(n), np.zeros(n), boundary)


def catenoid_mesh(n_levels: int = 24, n_angles: int = 96) -> SurfaceMesh:
    """Critical catenoid r = r_c cosh(z / r_c), |z| <= z_c, normal pointing away from the axis."""
    c = solve_critical_constants()
    z = np.linspace(-c.z_crit, c.z_crit, n_levels + 1)
    ang = TWO_PI * np.arange(n_angles) / n_angles
    Z, A = np.meshgrid(z, ang, indexing="ij")
    R = c.r_crit * np.cosh(Z / c.r_crit)
    verts = np.stack([R * np.cos(A), R * np.sin(A), Z], axis=-1).reshape(-1, 3)
    table = np.arange(len(verts)).reshape(n_levels + 1, n_angles)
    faces = _grid_faces(table, np.zeros(n_angles), cyclic=True)
    ends = np.concatenate([table[0], table[-1]])
    verts[ends] /= np.linalg.norm(verts[ends], axis=1, keepdims=True)
    Zf = verts[:, 2]
    ch = np.cosh(Zf / c.r_crit)
    alpha = np.arctan2(verts[:, 1], verts[:, 0])
    normals = np.stack([np.cos(alpha), np.sin(alpha), -np.sinh(Zf / c.r_crit)], axis=1) / ch[:, None]
    faces = _orient(faces, verts, normals[faces].mean(axis=1))
    n = len(verts)
    boundary = np.full(n, -1, dtype=np.int64)
    boundary[table[-1]] = 0
    boundary[table[0]] = 1
    A2 = 2.0 / (c.r_crit ** 2 * ch ** 4)
    return _plain_mesh(verts, faces, normals, np.zeros(n), A2, boundary)
