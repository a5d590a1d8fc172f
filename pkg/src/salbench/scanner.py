"""Simulated range scanner: icosahedron camera rig, ray casting, provenance.

Scans are single-view point clouds in the object coordinate system. Every
scan point carries (triangle index, barycentric coordinates) back to the base
mesh so per-vertex fields can be transferred onto scans exactly.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from .geometry import (
    PointCloud,
    Provenance,
    SaliencyWarning,
    ShapeScale,
    TriangleMesh,
    estimate_normals,
)

N_VIEWS = 12


@dataclass(frozen=True)
class ScanConfig:
    """Virtual camera settings; icosahedron_scale is a multiple of the shape radius."""

    image_width: int = 256
    image_height: int = 256
    fov_degrees: float = 45.0
    icosahedron_scale: float = 2.5

    def __post_init__(self):
        if self.image_width < 16 or self.image_height < 16:
            raise ValueError("image size must be at least 16x16")
        if not 10.0 <= self.fov_degrees <= 120.0:
            raise ValueError("fov must be within [10, 120] degrees")
        if self.icosahedron_scale <= 1.0:
            raise ValueError("icosahedron_scale must exceed 1")


@dataclass(frozen=True)
class CameraPose:
    position: np.ndarray
    look_at: np.ndarray
    up: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64).reshape(3))
        object.__setattr__(self, "look_at", np.asarray(self.look_at, dtype=np.float64).reshape(3))
        object.__setattr__(self, "up", np.asarray(self.up, dtype=np.float64).reshape(3))

    @property
    def forward(self) -> np.ndarray:
        f = self.look_at - self.position
        return f / np.linalg.norm(f)


@dataclass(frozen=True)
class RangeScan:
    """One rendered view: scan cloud with provenance plus its camera."""

    cloud: PointCloud
    camera: CameraPose
    base_shape_id: str
    view_index: int

    def __post_init__(self):
        if self.cloud.provenance is None:
            raise ValueError("scan points must carry provenance")
        if not 0 <= self.view_index < N_VIEWS:
            raise ValueError(f"view_index must be in [0, {N_VIEWS})")

    def __len__(self) -> int:
        return len(self.cloud)


def _icosahedron_vertices() -> np.ndarray:
    t = (1.0 + math.sqrt(5.0)) / 2.0
    v = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=np.float64,
    )
    return v / np.linalg.norm(v[0])


def icosahedron_cameras(scale: ShapeScale, config: ScanConfig = ScanConfig()) -> List[CameraPose]:
    """12 poses at the vertices of a regular icosahedron, all looking at the center."""
    if scale.radius <= 0:
        raise ValueError("shape radius must be positive")
    poses = []
    for v in _icosahedron_vertices():
        pos = scale.center + config.icosahedron_scale * scale.radius * v
        view = scale.center - pos
        view = view / np.linalg.norm(view)
        up = np.array([0.0, 0.0, 1.0])
        if abs(np.dot(view, up)) > math.cos(math.radians(1.0)):
            up = np.array([1.0, 0.0, 0.0])  # looking along z: avoid roll ambiguity
        poses.append(CameraPose(pos, scale.center, up))
    return poses


def _pixel_rays(camera: CameraPose, config: ScanConfig) -> np.ndarray:
    """(W*H, 3) unit ray directions through pixel centers, row-major."""
    f = camera.forward
    right = np.cross(f, camera.up)
    right /= np.linalg.norm(right)
    up = np.cross(right, f)
    w, h = config.image_width, config.image_height
    tan_half = math.tan(math.radians(config.fov_degrees) / 2.0)
    aspect = w / h
    xs = ((np.arange(w) + 0.5) / w * 2.0 - 1.0) * tan_half * aspect
    ys = (1.0 - (np.arange(h) + 0.5) / h * 2.0) * tan_half
    gx, gy = np.meshgrid(xs, ys)  # rows = y, cols = x
    dirs = f[None, :] + gx.reshape(-1, 1) * right[None, :] + gy.reshape(-1, 1) * up[None, :]
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


_T_MIN = 1e-9
_TIE_EPS = 1e-9


def _render_rays(origin: np.ndarray, dirs: np.ndarray, mesh: TriangleMesh,
                 ray_chunk: int = 1024, tri_chunk: int = 4096):
    """Nearest intersection per ray (Moller-Trumbore). Misses have tri -1.

    Triangle blocks are visited in ascending index order and a strictly
    smaller t is required to displace the current best, so exact-tie hits
    on shared edges resolve to the lowest triangle index.
    """
    verts, faces = mesh.vertices, mesh.faces
    v0 = verts[faces[:, 0]]
    e1 = verts[faces[:, 1]] - v0
    e2 = verts[faces[:, 2]] - v0
    n_rays = len(dirs)
    best_t = np.full(n_rays, np.inf)
    best_tri = np.full(n_rays, -1, dtype=np.int64)
    best_u = np.zeros(n_rays)
    best_v = np.zeros(n_rays)

    for rs in range(0, n_rays, ray_chunk):
        re = min(rs + ray_chunk, n_rays)
        d = dirs[rs:re]  # (r, 3)
        for ts in range(0, len(faces), tri_chunk):
            te = min(ts + tri_chunk, len(faces))
            b0, b1, b2 = v0[ts:te], e1[ts:te], e2[ts:te]
            # p = d x e2 : (r, t, 3)
            p = np.cross(d[:, None, :], b2[None, :, :])
            det = np.einsum("tk,rtk->rt", b1, p)
            with np.errstate(divide="ignore", invalid="ignore"):
                inv = np.where(np.abs(det) > 1e-12, 1.0 / det, 0.0)
                tvec = origin[None, :] - b0  # (t, 3)
                u = np.einsum("tk,rtk->rt", tvec, p) * inv
                q = np.cross(tvec, b1)  # (t, 3)
                vv = np.einsum("rk,tk->rt", d, q) * inv
                tt = np.einsum("tk,tk->t", b2, q)[None, :] * inv
            valid = (
                (np.abs(det) > 1e-12)
                & (u >= 0.0) & (u <= 1.0)
                & (vv >= 0.0) & (u + vv <= 1.0)
                & (tt > _T_MIN)
            )
            tmat = np.where(valid, tt, np.inf)
            tmin = tmat.min(axis=1)
            hit = np.isfinite(tmin)
            if not np.any(hit):
                continue
            # lowest triangle index among near-equal minima inside this block
            near = tmat <= (tmin[:, None] + _TIE_EPS)
            col = np.argmax(near, axis=1)
            rows = np.where(hit)[0]
            col = col[rows]
            cand_t = tmat[rows, col]
            # strict improvement keeps earlier (lower-index) blocks on ties
            better = cand_t < best_t[rs + rows] - _TIE_EPS
            rows, col, cand_t = rows[better], col[better], cand_t[better]
            best_t[rs + rows] = cand_t
            best_tri[rs + rows] = ts + col
            best_u[rs + rows] = u[rows, col]
            best_v[rs + rows] = vv[rows, col]
    return best_t, best_tri, best_u, best_v


def render_scan(
    mesh: TriangleMesh,
    camera: CameraPose,
    config: ScanConfig = ScanConfig(),
    base_shape_id: str = "",
    view_index: int = 0,
) -> RangeScan:
    """Ray-cast the mesh through a perspective pixel grid from one camera pose.

    Each hit pixel yields one scan point (object coordinates) with provenance
    (triangle index, barycentric triple). Pixels without intersections are
    dropped; a scan with zero hits is returned empty with a warning.
    """
    if mesh.n_faces == 0:
        raise ValueError("cannot scan an empty mesh")
    dirs = _pixel_rays(camera, config)
    t, tri, u, v = _render_rays(camera.position, dirs, mesh)
    hit = tri >= 0
    if not np.any(hit):
        warnings.warn("scan produced zero hits (mesh outside frustum?)", SaliencyWarning)
        cloud = PointCloud(
            np.zeros((0, 3)),
            provenance=Provenance(np.zeros(0, dtype=np.int64), np.zeros((0, 3))),
        )
        return RangeScan(cloud, camera, base_shape_id, view_index)
    points = camera.position[None, :] + t[hit, None] * dirs[hit]
    bu, bv = u[hit], v[hit]
    bary = np.stack([1.0 - bu - bv, bu, bv], axis=1)
    bary = np.clip(bary, 0.0, None)
    bary /= bary.sum(axis=1, keepdims=True)
    cloud = PointCloud(points, provenance=Provenance(tri[hit], bary))
    return RangeScan(cloud, camera, base_shape_id, view_index)


def transfer_ground_truth(gt: np.ndarray, scan: RangeScan, mesh: TriangleMesh) -> np.ndarray:
    """Barycentric interpolation of a per-vertex field onto the scan points."""
    gt = np.asarray(gt, dtype=np.float64)
    if len(gt) != mesh.n_vertices:
        raise ValueError("field length must match base mesh vertex count")
    prov = scan.cloud.provenance
    if prov is None:
        raise ValueError("scan has no provenance")
    corners = mesh.faces[prov.triangles]  # (n, 3)
    return np.einsum("nc,nc->n", gt[corners], prov.bary)


# ---------------------------------------------------------- reconstruction --

def _tangent_basis(normal: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    helper = np.array([1.0, 0.0, 0.0]) if abs(normal[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(normal, helper)
    u /= np.linalg.norm(u)
    return u, np.cross(normal, u)


def _triangles_overlap_2d(a: np.ndarray, b: np.ndarray, eps: float = 1e-12) -> bool:
    """Positive-area intersection test via separating axes; touching is not overlap."""
    for tri_pair in ((a, b), (b, a)):
        t0, t1 = tri_pair
        for i in range(3):
            edge = t0[(i + 1) % 3] - t0[i]
            axis = np.array([-edge[1], edge[0]])
            n = np.linalg.norm(axis)
            if n < 1e-30:
                continue
            axis /= n
            p0 = t0 @ axis
            p1 = t1 @ axis
            if p0.max() <= p1.min() + eps or p1.max() <= p0.min() + eps:
                return False
    return True


def reconstruct_partial_mesh(scan, k: int = 12, max_edge_factor: float = 4.0) -> TriangleMesh:
    """Greedy projection triangulation of a scan (or point cloud).

    Every point's k-neighborhood is projected on its tangent plane and locally
    Delaunay-triangulated; the point's incident (star) triangles become
    candidates. Candidates are accepted greedily, most-voted first, unless
    they geometrically overlap an already accepted triangle sharing a vertex.
    Edges longer than max_edge_factor times the local spacing are rejected,
    which keeps occlusion boundaries open. Output vertices are input points.
    """
    cloud: PointCloud = scan.cloud if isinstance(scan, RangeScan) else scan
    pts = cloud.points
    n = len(pts)
    if n < 3:
        raise ValueError("need at least 3 points to triangulate")
    if n == 3:
        if np.linalg.norm(np.cross(pts[1] - pts[0], pts[2] - pts[0])) < 1e-30:
            raise ValueError("points are collinear")
        return TriangleMesh(pts, np.array([[0, 1, 2]]))

    if cloud.normals is None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SaliencyWarning)
            cloud = estimate_normals(cloud, k=min(10, n - 1))
    normals = cloud.normals

    k = min(k, n - 1)
    tree = cKDTree(pts)
    dist, nbr = tree.query(pts, k=k + 1)
    local_spacing = dist[:, 1]  # nearest-neighbor distance per point

    votes = {}
    for i in range(n):
        ring = nbr[i][nbr[i] != i][:k]
        ids = np.concatenate([[i], ring])
        u, v = _tangent_basis(normals[i])
        rel = pts[ids] - pts[i]
        flat = np.stack([rel @ u, rel @ v], axis=1)
        try:
            dela = Delaunay(flat)
        except Exception:
            continue  # degenerate (collinear) neighborhood
        for simplex in dela.simplices:
            if 0 not in simplex:
                continue
            tri = tuple(sorted(int(ids[s]) for s in simplex))
            votes[tri] = votes.get(tri, 0) + 1

    max_edge = max_edge_factor * local_spacing
    candidates = sorted(votes, key=lambda tri: (-votes[tri], tri))
    accepted: List[Tuple[int, int, int]] = []
    by_vertex = [[] for _ in range(n)]
    for tri in candidates:
        a, b, c = tri
        ea = np.linalg.norm(pts[b] - pts[a])
        eb = np.linalg.norm(pts[c] - pts[b])
        ec = np.linalg.norm(pts[a] - pts[c])
        limit = max(max_edge[a], max_edge[b], max_edge[c])
        if max(ea, eb, ec) > limit:
            continue
        nrm = np.cross(pts[b] - pts[a], pts[c] - pts[a])
        area2 = np.linalg.norm(nrm)
        if area2 < 1e-14 * limit * limit:
            continue
        nrm = nrm / area2
        u, v = _tangent_basis(nrm)
        cand2d = np.stack([(pts[list(tri)] - pts[a]) @ u, (pts[list(tri)] - pts[a]) @ v], axis=1)
        neighbors = {t for vid in tri for t in by_vertex[vid]}
        clash = False
        for t in neighbors:
            other = accepted[t]
            if set(other) == set(tri):
                clash = True
                break
            o2d = np.stack([(pts[list(other)] - pts[a]) @ u, (pts[list(other)] - pts[a]) @ v], axis=1)
            if _triangles_overlap_2d(cand2d, o2d):
                clash = True
                break
        if clash:
            continue
        by_vertex[a].append(len(accepted))
        by_vertex[b].append(len(accepted))
        by_vertex[c].append(len(accepted))
        accepted.append(tri)

    faces = np.asarray(accepted, dtype=np.int64).reshape(-1, 3)
    return TriangleMesh(pts, faces)
