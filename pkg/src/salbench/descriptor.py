"""SPFH/FPFH local surface descriptors and the chi-squared histogram distance.

A point's descriptor is three concatenated 11-bin histograms over the Darboux
angle triple (alpha, phi, theta), computed against every neighbor strictly
within a support radius. Absolute values of the angles are taken, so the
descriptor is invariant to normal sign and to reflections.
"""

from __future__ import annotations

import warnings
from typing import List, Optional

import numpy as np

from .geometry import NeighborIndex, PointCloud, SaliencyWarning, build_index

N_BINS = 11
DESCRIPTOR_SIZE = 3 * N_BINS
# fixed angle ranges after taking absolute values: alpha, phi are cosines
ANGLE_RANGES = ((0.0, 1.0), (0.0, 1.0), (0.0, np.pi))
BLOCK_SUM = 100.0  # each 11-bin block is normalized to percentages

_DEGENERATE_EPS = 1e-9
_PERTURB = 1e-8


def darboux_angles_batch(p_i: np.ndarray, n_i: np.ndarray, p_j: np.ndarray, n_j: np.ndarray) -> np.ndarray:
    """Angle triples between one source point and m targets.

    Args:
        p_i: (3,) source position.
        n_i: (3,) unit source normal.
        p_j: (m, 3) target positions, none coincident with p_i.
        n_j: (m, 3) unit target normals.

    Returns:
        (m, 3) array of (alpha, phi, theta), all absolute values.
    """
    p_j = np.atleast_2d(np.asarray(p_j, dtype=np.float64))
    n_j = np.atleast_2d(np.asarray(n_j, dtype=np.float64))
    d = p_j - p_i
    dist = np.linalg.norm(d, axis=1)
    if np.any(dist == 0.0):
        raise ValueError("zero baseline: coincident point pair")
    d = d / dist[:, None]

    u = np.asarray(n_i, dtype=np.float64)
    v = np.cross(u, d)
    vnorm = np.linalg.norm(v, axis=1)
    bad = vnorm < _DEGENERATE_EPS
    if np.any(bad):
        # normal parallel to the baseline: nudge the direction off-axis
        d = d.copy()
        axes = np.argmin(np.abs(d[bad]), axis=1)
        d[np.where(bad)[0], axes] += _PERTURB
        d[bad] /= np.linalg.norm(d[bad], axis=1, keepdims=True)
        v = np.cross(u, d)
        vnorm = np.linalg.norm(v, axis=1)
    v = v / vnorm[:, None]
    w = np.cross(u, v)

    alpha = np.abs(np.einsum("ij,ij->i", v, n_j))
    phi = np.abs(d @ u)
    theta = np.abs(np.arctan2(np.einsum("ij,ij->i", w, n_j), n_j @ u))
    return np.stack([alpha, phi, theta], axis=1)


def darboux_angles(p_i, n_i, p_j, n_j):
    """Single-pair convenience wrapper; returns (alpha, phi, theta) floats."""
    out = darboux_angles_batch(
        np.asarray(p_i, dtype=np.float64),
        np.asarray(n_i, dtype=np.float64),
        np.asarray(p_j, dtype=np.float64).reshape(1, 3),
        np.asarray(n_j, dtype=np.float64).reshape(1, 3),
    )[0]
    return float(out[0]), float(out[1]), float(out[2])


def _histogram_block(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    idx = np.floor((values - lo) / (hi - lo) * N_BINS).astype(np.int64)
    np.clip(idx, 0, N_BINS - 1, out=idx)  # upper edge falls into the last bin
    return np.bincount(idx, minlength=N_BINS).astype(np.float64)


def _spfh_from_angles(angles: np.ndarray) -> np.ndarray:
    hist = np.empty(DESCRIPTOR_SIZE)
    for c, (lo, hi) in enumerate(ANGLE_RANGES):
        block = _histogram_block(angles[:, c], lo, hi)
        total = block.sum()
        if total > 0:
            block *= BLOCK_SUM / total
        hist[c * N_BINS:(c + 1) * N_BINS] = block
    return hist


def compute_spfh_all(
    cloud: PointCloud,
    index: NeighborIndex,
    r: float,
    neighbors: Optional[List[np.ndarray]] = None,
):
    """SPFH for every point.

    Returns (spfh, neighbors): the (n, 33) descriptor array and the per-point
    neighbor index lists (reused by the FPFH combination step). Points with no
    neighbors inside r get all-zero rows; one warning reports how many.
    """
    if cloud.normals is None:
        raise ValueError("descriptors require oriented normals")
    if r <= 0:
        raise ValueError("support radius must be positive")
    pts, nrm = cloud.points, cloud.normals
    if neighbors is None:
        neighbors = index.radius_neighbors_all(r)
    out = np.zeros((len(pts), DESCRIPTOR_SIZE))
    isolated = 0
    for i, idx in enumerate(neighbors):
        if idx.size == 0:
            isolated += 1
            continue
        angles = darboux_angles_batch(pts[i], nrm[i], pts[idx], nrm[idx])
        out[i] = _spfh_from_angles(angles)
    if isolated:
        warnings.warn(
            f"{isolated} isolated points (no neighbors within r={r:g}) got zero descriptors",
            SaliencyWarning,
        )
    return out, neighbors


def normalize_blocks(descriptors: np.ndarray, total: float = BLOCK_SUM) -> np.ndarray:
    """Rescale each 11-bin block to sum `total` (rows with zero-sum blocks unchanged)."""
    out = np.array(descriptors, dtype=np.float64, copy=True)
    single = out.ndim == 1
    if single:
        out = out[None, :]
    for c in range(3):
        block = out[:, c * N_BINS:(c + 1) * N_BINS]
        s = block.sum(axis=1)
        nz = s > 0
        block[nz] *= (total / s[nz])[:, None]
    return out[0] if single else out


def compute_fpfh_all(
    cloud: PointCloud,
    r: float,
    index: Optional[NeighborIndex] = None,
    normalize: bool = False,
) -> np.ndarray:
    """FPFH for every point: H(p) = S(p) + (1/|N|) sum_q S(q)/dist(p,q).

    By default the weighted sum is kept as-is, matching the two-stage
    descriptor definition; normalize=True rescales each block back to sum 100
    (the reference-library output convention), which keeps chi-squared
    distances on a density-independent scale. Isolated points keep their
    (zero) SPFH either way.
    """
    if index is None:
        index = build_index(cloud.points)
    spfh, neighbors = compute_spfh_all(cloud, index, r)
    pts = cloud.points
    out = spfh.copy()
    for i, idx in enumerate(neighbors):
        if idx.size == 0:
            continue
        dist = np.linalg.norm(pts[idx] - pts[i], axis=1)
        out[i] += (spfh[idx] / dist[:, None]).sum(axis=0) / idx.size
    return normalize_blocks(out) if normalize else out


def spfh(i: int, cloud: PointCloud, index: NeighborIndex, r: float) -> np.ndarray:
    """SPFH of a single point (33,)."""
    if cloud.normals is None:
        raise ValueError("descriptors require oriented normals")
    idx = index.radius_neighbors(i, r)
    if idx.size == 0:
        warnings.warn(f"point {i} has no neighbors within r={r:g}", SaliencyWarning)
        return np.zeros(DESCRIPTOR_SIZE)
    angles = darboux_angles_batch(cloud.points[i], cloud.normals[i], cloud.points[idx], cloud.normals[idx])
    return _spfh_from_angles(angles)


def fpfh(i: int, cloud: PointCloud, index: NeighborIndex, r: float) -> np.ndarray:
    """FPFH of a single point (33,)."""
    own = spfh(i, cloud, index, r)
    idx = index.radius_neighbors(i, r)
    if idx.size == 0:
        return own
    dist = np.linalg.norm(cloud.points[idx] - cloud.points[i], axis=1)
    acc = own.copy()
    for q, d in zip(idx, dist):
        acc += spfh(int(q), cloud, index, r) / d / idx.size
    return acc


def chi2_distance(a, b) -> float:
    """0.5 * sum (a_i - b_i)^2 / (a_i + b_i), skipping zero-sum bins."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("descriptor shapes differ")
    s = a + b
    mask = s > 0
    diff = a[mask] - b[mask]
    return float(0.5 * np.sum(diff * diff / s[mask]))


def chi2_cross(a: np.ndarray, b: np.ndarray, chunk: int = 256) -> np.ndarray:
    """(n, m) chi-squared distances between two descriptor sets, row-chunked."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n, m = len(a), len(b)
    out = np.empty((n, m))
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        aa = a[start:stop, None, :]
        bb = b[None, :, :]
        s = aa + bb
        d = aa - bb
        with np.errstate(invalid="ignore", divide="ignore"):
            terms = np.where(s > 0, d * d / np.where(s > 0, s, 1.0), 0.0)
        out[start:stop] = 0.5 * terms.sum(axis=2)
    return out
