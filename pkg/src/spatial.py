"""Neighbour searches on point sets: node merging, point matching,
self-intersection candidates and sampled distances."""

import logging
from typing import Tuple

import numpy as np
from scipy.sparse.csgraph import connected_components
from sklearn.neighbors import BallTree, NearestNeighbors, radius_neighbors_graph

from src.exceptions import TopologyError

logger = logging.getLogger(__name__)


def merge_coincident(points: np.ndarray, tol: float = 1e-9) -> Tuple[np.ndarray, np.ndarray]:
    """Collapse points closer than tol.

    Returns (unique_points, inverse) with unique_points[inverse] ~ points. Labels
    are ordered by first occurrence, so the result is deterministic.
    """
    points = np.asarray(points, dtype=float)
    graph = radius_neighbors_graph(points, radius=tol, mode="connectivity", include_self=False)
    _, labels = connected_components(graph, directed=False)
    _, first = np.unique(labels, return_index=True)
    order = np.argsort(first)
    relabel = np.empty_like(order)
    relabel[order] = np.arange(len(order))
    inverse = relabel[labels]
    unique_points = points[first[order]]
    return unique_points, inverse


def match_points(source: np.ndarray, target: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Index of the target point coinciding with each source point."""
    nn = NearestNeighbors(n_neighbors=1).fit(np.asarray(target, dtype=float))
    dist, idx = nn.kneighbors(np.asarray(source, dtype=float))
    worst = float(dist.max()) if len(dist) else 0.0
    if worst > tol:
        raise TopologyError(f"Point matching failed: largest mismatch {worst:.3e} > {tol:.1e}")
    return idx[:, 0]


def nearest_distances(source: np.ndarray, target: np.ndarray) -> np.ndarray:
    nn = NearestNeighbors(n_neighbors=1).fit(np.asarray(target, dtype=float))
    dist, _ = nn.kneighbors(np.asarray(source, dtype=float))
    return dist[:, 0]


def hausdorff_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Symmetric Hausdorff distance between two point samples."""
    return float(max(nearest_distances(a, b).max(), nearest_distances(b, a).max()))


def _segment_hits(p0, p1, a, b, c, eps: float = 1e-10) -> np.ndarray:
    """Moeller-Trumbore test of segments p0p1 against triangles abc, row-wise."""
    d = p1 - p0
    e1 = b - a
    e2 = c - a
    h = np.cross(d, e2)
    det = np.sum(e1 * h, axis=1)
    ok = np.abs(det) > 1e-14
    inv = np.zeros_like(det)
    inv[ok] = 1.0 / det[ok]
    sv = p0 - a
    u = inv * np.sum(sv * h, axis=1)
    q = np.cross(sv, e1)
    v = inv * np.sum(d * q, axis=1)
    t = inv * np.sum(e2 * q, axis=1)
    return ok & (u > eps) & (v > eps) & (u + v < 1 - eps) & (t > eps) & (t < 1 - eps)


def candidate_face_pairs(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Pairs of faces with overlapping bounding spheres and no shared vertex."""
    tri = vertices[faces]
    centroids = tri.mean(axis=1)
    reach = np.linalg.norm(tri - centroids[:, None, :], axis=2).max(axis=1)
    tree = BallTree(centroids)
    neighbours = tree.query_radius(centroids, r=reach + float(reach.max()))
    rows = np.repeat(np.arange(len(faces)), [len(n) for n in neighbours])
    cols = np.concatenate(neighbours) if len(neighbours) else np.zeros(0, dtype=int)
    keep = rows < cols
    rows, cols = rows[keep], cols[keep]
    close = np.linalg.norm(centroids[rows] - centroids[cols], axis=1) <= reach[rows] + reach[cols]
    rows, cols = rows[close], cols[close]
    shared = np.zeros(len(rows), dtype=bool)
    for i in range(3):
        for j in range(3):
            shared |= faces[rows, i] == faces[cols, j]
    return np.stack([rows[~shared], cols[~shared]], axis=1)


def self_intersections(vertices: np.ndarray, faces: np.ndarray, chunk: int = 200000) -> np.ndarray:
    """Face pairs whose edges pierce each other; a necessary-not-sufficient embeddedness check."""
    vertices = np.asarray(vertices, dtype=float)
    faces = np.asarray(faces, dtype=int)
    pairs = candidate_face_pairs(vertices, faces)
    hits = []
    for start in range(0, len(pairs), chunk):
        block = pairs[start:start + chunk]
        found = np.zeros(len(block), dtype=bool)
        for first, second in ((0, 1), (1, 0)):
            edges_of = faces[block[:, first]]
            target = vertices[faces[block[:, second]]]
            for i, j in ((0, 1), (1, 2), (2, 0)):
                found |= _segment_hits(vertices[edges_of[:, i]], vertices[edges_of[:, j]],
                                       target[:, 0], target[:, 1], target[:, 2])
        hits.append(block[found])
    result = np.concatenate(hits) if hits else np.zeros((0, 2), dtype=int)
    logger.debug("self-intersection check: %d candidate pairs, %d hits", len(pairs), len(result))
    return result
