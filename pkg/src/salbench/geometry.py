"""Geometry containers and spatial primitives.

Provides the point-cloud / triangle-mesh types used across the package,
a kd-tree backed neighbor index, bounding-sphere scale estimation, PCA
normal estimation, and MST-based consistent normal orientation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components, minimum_spanning_tree
from scipy.spatial import cKDTree


class SaliencyWarning(UserWarning):
    """Non-fatal data conditions (isolated points, degenerate frames, ...)."""


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"expected an (n, 3) point array, got shape {pts.shape}")
    return pts


@dataclass(frozen=True)
class Provenance:
    """Per-point link back to a base mesh: triangle index + barycentric triple."""

    triangles: np.ndarray  # (n,) int
    bary: np.ndarray       # (n, 3) float, nonnegative, rows sum to 1

    def __post_init__(self):
        tri = np.asarray(self.triangles, dtype=np.int64)
        bary = np.asarray(self.bary, dtype=np.float64)
        if tri.ndim != 1 or bary.shape != (tri.shape[0], 3):
            raise ValueError("provenance arrays have inconsistent shapes")
        if np.any(bary < -1e-6):
            raise ValueError("barycentric coordinates must be nonnegative")
        if np.any(np.abs(bary.sum(axis=1) - 1.0) > 1e-6):
            raise ValueError("barycentric triples must sum to 1")
        object.__setattr__(self, "triangles", tri)
        object.__setattr__(self, "bary", bary)

    def __len__(self) -> int:
        return len(self.triangles)


@dataclass(frozen=True)
class PointCloud:
    """Immutable 3D point set with optional unit normals and scan provenance."""

    points: np.ndarray
    normals: Optional[np.ndarray] = None
    provenance: Optional[Provenance] = None

    def __post_init__(self):
        pts = _as_points(self.points)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.normals is not None:
            nrm = np.asarray(self.normals, dtype=np.float64)
            if nrm.shape != pts.shape:
                raise ValueError("normals must match points in shape")
            lengths = np.linalg.norm(nrm, axis=1)
            if np.any(np.abs(lengths - 1.0) > 1e-6):
                raise ValueError("normals must have unit length (within 1e-6)")
            nrm.setflags(write=False)
            object.__setattr__(self, "normals", nrm)
        if self.provenance is not None and len(self.provenance) != len(pts):
            raise ValueError("provenance must cover every point")

    def __len__(self) -> int:
        return len(self.points)

    def with_normals(self, normals: np.ndarray) -> "PointCloud":
        return PointCloud(self.points, normals, self.provenance)


@dataclass(frozen=True)
class TriangleMesh:
    """Triangle mesh with optional shape-class label."""

    vertices: np.ndarray
    faces: np.ndarray
    class_label: Optional[str] = None

    def __post_init__(self):
        verts = _as_points(self.vertices)
        faces = np.asarray(self.faces, dtype=np.int64)
        if faces.size == 0:
            faces = faces.reshape(0, 3)
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise ValueError(f"expected an (m, 3) face array, got shape {faces.shape}")
        if faces.size and (faces.min() < 0 or faces.max() >= len(verts)):
            raise ValueError("face index out of range")
        if faces.size and np.any(
            (faces[:, 0] == faces[:, 1]) | (faces[:, 1] == faces[:, 2]) | (faces[:, 0] == faces[:, 2])
        ):
            raise ValueError("degenerate face (repeated vertex index)")
        verts.setflags(write=False)
        faces.setflags(write=False)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "faces", faces)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def face_areas(self) -> np.ndarray:
        v = self.vertices
        a = v[self.faces[:, 1]] - v[self.faces[:, 0]]
        b = v[self.faces[:, 2]] - v[self.faces[:, 0]]
        return 0.5 * np.linalg.norm(np.cross(a, b), axis=1)


@dataclass(frozen=True)
class ShapeScale:
    """Bounding sphere (centroid-based) used to express all radii as fractions of R."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        center = np.asarray(self.center, dtype=np.float64).reshape(3)
        if self.radius < 0:
            raise ValueError("bounding sphere radius must be nonnegative")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "radius", float(self.radius))


def bounding_sphere(points) -> ShapeScale:
    """Centroid + max-distance bounding sphere of a point set."""
    pts = _as_points(points)
    if len(pts) == 0:
        raise ValueError("empty point set")
    center = pts.mean(axis=0)
    radius = float(np.linalg.norm(pts - center, axis=1).max())
    return ShapeScale(center, radius)


class NeighborIndex:
    """Read-only kd-tree over a point set.

    Radius queries return points strictly closer than r, excluding the query
    point itself; k-NN queries return k distinct points sorted by distance.
    """

    def __init__(self, points):
        pts = _as_points(points)
        if len(pts) == 0:
            raise ValueError("empty point set")
        self.points = pts
        self._tree = cKDTree(pts)

    def __len__(self) -> int:
        return len(self.points)

    def radius_neighbors(self, i: int, r: float) -> np.ndarray:
        """Indices of points with 0 < dist(p_i, p_j) < r, sorted ascending by index."""
        idx = np.asarray(self._tree.query_ball_point(self.points[i], r), dtype=np.int64)
        if idx.size == 0:
            return idx
        d = np.linalg.norm(self.points[idx] - self.points[i], axis=1)
        keep = (d < r) & (idx != i)
        return np.sort(idx[keep])

    def radius_neighbors_all(self, r: float) -> List[np.ndarray]:
        """radius_neighbors for every point, in one batched tree pass."""
        raw = self._tree.query_ball_point(self.points, r)
        out: List[np.ndarray] = []
        for i, lst in enumerate(raw):
            idx = np.asarray(lst, dtype=np.int64)
            if idx.size:
                d = np.linalg.norm(self.points[idx] - self.points[i], axis=1)
                idx = np.sort(idx[(d < r) & (idx != i)])
            out.append(idx)
        return out

    def knn(self, i: int, k: int) -> np.ndarray:
        """Indices of the k nearest points to p_i (self excluded), sorted by distance."""
        if k < 1 or k >= len(self.points):
            raise ValueError("k must satisfy 1 <= k < n")
        _, idx = self._tree.query(self.points[i], k=k + 1)
        idx = np.atleast_1d(idx)
        return idx[idx != i][:k]

    def knn_all(self, k: int) -> np.ndarray:
        """(n, k) array of k-NN indices for every point."""
        if k < 1 or k >= len(self.points):
            raise ValueError("k must satisfy 1 <= k < n")
        _, idx = self._tree.query(self.points, k=k + 1)
        rows = np.arange(len(self.points))
        out = np.empty((len(self.points), k), dtype=np.int64)
        for i in rows:
            row = idx[i]
            out[i] = row[row != i][:k]
        return out

    def nearest(self, xyz, k: int = 1):
        """k nearest members to an arbitrary query position (no self-exclusion)."""
        return self._tree.query(np.asarray(xyz, dtype=np.float64), k=k)


def build_index(points) -> NeighborIndex:
    """Build the spatial index used by all neighborhood queries."""
    return NeighborIndex(points)


def estimate_normals(cloud: PointCloud, k: int = 10) -> PointCloud:
    """Estimate per-point normals from the k-NN covariance matrix.

    The normal is the unit eigenvector with smallest eigenvalue; its sign is
    arbitrary until orient_normals_mst is applied. Degenerate (collinear)
    neighborhoods fall back to a vector orthogonal to the dominant direction
    and emit a SaliencyWarning.
    """
    pts = cloud.points
    if k < 3 or k >= len(pts):
        raise ValueError("insufficient neighborhood: need 3 <= k < n")
    index = build_index(pts)
    nbr = index.knn_all(k)
    normals = np.empty_like(pts)
    degenerate = 0
    for i in range(len(pts)):
        nn = pts[nbr[i]]
        centered = nn - nn.mean(axis=0)
        cov = centered.T @ centered / k
        evals, evecs = np.linalg.eigh(cov)
        if evals[1] <= 1e-12 * max(evals[2], 1e-300):
            # collinear neighbors: two near-zero eigenvalues, normal ill-defined
            dominant = evecs[:, 2]
            helper = np.array([1.0, 0.0, 0.0])
            if abs(dominant[0]) > 0.9:
                helper = np.array([0.0, 1.0, 0.0])
            n = np.cross(dominant, helper)
            n /= np.linalg.norm(n)
            degenerate += 1
        else:
            n = evecs[:, 0]
        normals[i] = n
    if degenerate:
        warnings.warn(
            f"{degenerate} degenerate (collinear) neighborhoods during normal estimation",
            SaliencyWarning,
        )
    return cloud.with_normals(normals)


def orient_normals_mst(cloud: PointCloud, k: int = 8) -> PointCloud:
    """Consistently orient normals by propagation along an MST of the Riemann graph.

    Edges connect k-NN pairs with weight 1 - |n_i . n_j|; orientation spreads
    from a seed (max-z point, flipped to face away from the centroid) and flips
    a neighbor whenever the running dot product is negative. Disconnected
    graph components are seeded independently.
    """
    if cloud.normals is None:
        raise ValueError("missing normals")
    pts = cloud.points
    normals = cloud.normals.copy()
    n = len(pts)
    if n == 1:
        return cloud

    k = min(k, n - 1)
    index = build_index(pts)
    nbr = index.knn_all(k)
    rows = np.repeat(np.arange(n), k)
    cols = nbr.ravel()
    dots = np.abs(np.einsum("ij,ij->i", normals[rows], normals[cols]))
    # shift weights by +1 so zero-weight (parallel) edges survive sparse storage
    w = 2.0 - np.minimum(dots, 1.0)
    graph = coo_matrix((w, (rows, cols)), shape=(n, n)).tocsr()
    graph = graph.maximum(graph.T)  # symmetrize: weights are symmetric, keep one-way edges
    mst = minimum_spanning_tree(graph)
    und = mst + mst.T

    centroid = pts.mean(axis=0)
    n_comp, labels = connected_components(und, directed=False)
    for comp in range(n_comp):
        members = np.where(labels == comp)[0]
        seed = members[np.argmax(pts[members, 2])]
        outward = pts[seed] - centroid
        if np.linalg.norm(outward) > 0 and np.dot(normals[seed], outward) < 0:
            normals[seed] = -normals[seed]
        order, predecessors = breadth_first_order(und, seed, directed=False)
        for node in order[1:]:
            parent = predecessors[node]
            if np.dot(normals[parent], normals[node]) < 0:
                normals[node] = -normals[node]
    return cloud.with_normals(normals)


def gaussian_smooth_field(points, values, sigma: float, cutoff: float = 3.0) -> np.ndarray:
    """Euclidean Gaussian smoothing of a per-point scalar field.

    Each output value is the w-weighted mean of values within cutoff*sigma,
    w = exp(-d^2 / (2 sigma^2)); the point itself always contributes with w=1.
    sigma <= 0 returns the field unchanged.
    """
    pts = _as_points(points)
    vals = np.asarray(values, dtype=np.float64)
    if len(vals) != len(pts):
        raise ValueError("field length must match point count")
    if sigma <= 0:
        return vals.copy()
    tree = cKDTree(pts)
    out = np.empty_like(vals)
    inv = 1.0 / (2.0 * sigma * sigma)
    neighborhoods = tree.query_ball_point(pts, cutoff * sigma)
    for i, lst in enumerate(neighborhoods):
        idx = np.asarray(lst, dtype=np.int64)
        d2 = np.sum((pts[idx] - pts[i]) ** 2, axis=1)
        w = np.exp(-d2 * inv)
        out[i] = np.dot(w, vals[idx]) / w.sum()
    return out
