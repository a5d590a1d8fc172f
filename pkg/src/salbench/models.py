"""The six benchmarked saliency models.

LS: two-scale descriptor distinctiveness plus focus-of-attention association.
MS: spectral irregularity of the log-Laplacian spectrum across five scales.
CS: cluster-level distinctiveness + spatial distribution, smoothed to points.
PS: magnitude of the first principal component of the descriptor matrix.
RS: seeded uniform-random baseline. HS: human inter-participant baseline.

All radii and kernel widths in ModelParams are fractions of the shape's
bounding-sphere radius R. Descriptor-based models (LS, CS, PS) run on a copy
of the cloud rescaled to R = 1, which makes them invariant to uniform scaling.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.spatial import cKDTree

from .descriptor import chi2_cross, compute_fpfh_all, normalize_blocks
from .geometry import (
    PointCloud,
    SaliencyWarning,
    TriangleMesh,
    bounding_sphere,
    build_index,
    gaussian_smooth_field,
)
from .spectral import DegenerateMeshError, laplacian_smooth, mesh_spectrum, spectral_irregularity_map

MODEL_TAGS = ("LS", "MS", "CS", "PS", "RS", "HS", "GS")

_EPS = 1e-12


def minmax_normalize(values) -> np.ndarray:
    """Affine rescale to [0,1]; constant input maps to all zeros."""
    v = np.asarray(values, dtype=np.float64)
    lo, hi = v.min(), v.max()
    if hi - lo < _EPS:
        return np.zeros_like(v)
    return (v - lo) / (hi - lo)


@dataclass(frozen=True)
class SaliencyMap:
    """Per-point saliency in [0,1] produced by one model on one shape.

    Model outputs are min-max normalized, so they span [0,1] unless constant
    (then all zero). Maps that went through histogram matching keep arbitrary
    values inside [0,1]; they are built with normalized=False.
    """

    shape_id: str
    values: np.ndarray
    model: str
    normalized: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        if self.model not in MODEL_TAGS:
            raise ValueError(f"unknown model tag {self.model!r}")
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or len(v) == 0:
            raise ValueError("saliency values must be a nonempty 1D array")
        if not np.all(np.isfinite(v)):
            raise ValueError("saliency values must be finite")
        if v.min() < -1e-9 or v.max() > 1.0 + 1e-9:
            raise ValueError("saliency values must lie in [0,1]")
        if self.normalized:
            constant = v.max() < 1e-9
            if not constant and (v.min() > 1e-9 or v.max() < 1.0 - 1e-9):
                raise ValueError("non-constant maps must span [0,1] after normalization")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class ModelParams:
    """Model parameters; radii and sigmas are fractions of the bounding radius R.

    `r` is the shared cluster/descriptor radius override: when set it is used
    for both the CS and PS descriptor scales, otherwise each keeps its own
    default (0.02 for CS, 0.01 for PS).
    """

    r_low: float = 0.01
    r_high: float = 0.1
    r: Optional[float] = None
    epsilon: float = 0.004
    n: int = 9
    K: int = 100
    n_p: int = 1
    seed: int = 0
    sigma_f: float = 0.1       # LS focus-association kernel
    sigma_chi: Optional[float] = None  # CS similarity scale; None = median heuristic
    sigma_cs: float = 0.05     # CS cluster-to-point smoothing
    sigma_hs: float = 0.03     # HS / ground-truth field smoothing
    sigma_ms: float = 0.03     # MS multi-scale aggregation smoothing
    normalize_descriptors: bool = True  # feed unit-mass FPFH blocks to LS/CS/PS
    ls_exact: bool = False     # force the O(n^2) LS path
    ls_cap: int = 5000         # above this size LS switches to sampling
    ls_near: int = 512
    ls_far: int = 512

    def __post_init__(self):
        for name in ("r_low", "r_high", "epsilon", "sigma_f", "sigma_cs", "sigma_hs", "sigma_ms"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.r is not None and self.r <= 0:
            raise ValueError("r must be positive")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.n_p < 1:
            raise ValueError("n_p must be >= 1")

    @property
    def r_cs(self) -> float:
        return self.r if self.r is not None else 0.02

    @property
    def r_ps(self) -> float:
        return self.r if self.r is not None else 0.01


@dataclass(frozen=True)
class LsIntermediate:
    """Per-point pieces of the LS pipeline, kept for inspection and tests."""

    d_low: np.ndarray
    d_high: np.ndarray
    a_low: np.ndarray
    foci: np.ndarray

    def __post_init__(self):
        expected = math.ceil(0.2 * len(self.d_low))
        if len(self.foci) != expected:
            raise ValueError(f"expected {expected} foci, got {len(self.foci)}")


def _unit_scale_points(cloud: PointCloud) -> np.ndarray:
    """Cloud positions centered and rescaled so the bounding radius is 1."""
    scale = bounding_sphere(cloud.points)
    if scale.radius < _EPS:
        return cloud.points - scale.center
    return (cloud.points - scale.center) / scale.radius


def _require_normals(cloud: PointCloud) -> None:
    if cloud.normals is None:
        raise ValueError("model requires oriented normals on the cloud")



def _model_descriptors(scaled: PointCloud, r: float, params: "ModelParams", index=None) -> np.ndarray:
    """FPFHs as consumed by LS/CS/PS: blocks renormalized back to percentages.

    The raw weighted FPFH sum scales with sampling density through its 1/d
    weights; renormalizing keeps chi-squared distances density-independent.
    """
    desc = compute_fpfh_all(scaled, r, index)
    if params.normalize_descriptors:
        desc = normalize_blocks(desc)
    return desc


# ---------------------------------------------------------------- LS --------

def ls_distinctiveness(
    points: np.ndarray,
    descriptors: np.ndarray,
    radius: float = 1.0,
    exact: bool = True,
    cap: int = 5000,
    n_near: int = 512,
    n_far: int = 512,
    seed: int = 0,
    rescale: bool = True,
) -> np.ndarray:
    """Distance-weighted descriptor distinctiveness, min-max rescaled to [0,1].

    D(p_i) = 1 - exp(-mean_j chi2(H_i,H_j) / (1 + ||p_i - p_j|| / radius)).
    The mean runs over all j != i when exact (or n <= cap); otherwise over the
    n_near nearest neighbors plus n_far seeded uniform samples of the rest.
    rescale=False returns the raw 1 - exp(-mean) values.
    """
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    if n < 2:
        return np.zeros(n)
    raw = np.empty(n)
    if exact or n <= cap:
        chunk = max(1, int(2e7) // max(n, 1))
        for start in range(0, n, chunk):
            stop = min(start + chunk, n)
            chi = chi2_cross(descriptors[start:stop], descriptors)
            d = np.linalg.norm(pts[start:stop, None, :] - pts[None, :, :], axis=2)
            diss = chi / (1.0 + d / radius)
            rows = np.arange(stop - start)
            diss[rows, np.arange(start, stop)] = 0.0
            raw[start:stop] = diss.sum(axis=1) / (n - 1)
    else:
        rng = np.random.default_rng(seed)
        tree = cKDTree(pts)
        k = min(n_near + 1, n)
        _, near = tree.query(pts, k=k)
        for i in range(n):
            nbr = near[i][near[i] != i][:n_near]
            others = np.setdiff1d(np.arange(n), np.append(nbr, i), assume_unique=False)
            if len(others) > n_far:
                far = rng.choice(others, size=n_far, replace=False)
            else:
                far = others
            idx = np.concatenate([nbr, far])
            chi = chi2_cross(descriptors[i:i + 1], descriptors[idx])[0]
            d = np.linalg.norm(pts[idx] - pts[i], axis=1)
            raw[i] = np.mean(chi / (1.0 + d / radius))
    out = 1.0 - np.exp(-raw)
    return minmax_normalize(out) if rescale else out


def ls_foci_and_association(
    points: np.ndarray,
    d_low: np.ndarray,
    radius: float = 1.0,
    sigma_f: float = 0.1,
) -> Tuple[np.ndarray, np.ndarray]:
    """Foci (top 20% by d_low, ties to the lower index) and focus association.

    a_low(p) = exp(-dist(p, nearest focus)^2 / (2 sigma^2)) * d_low(focus),
    which already lies in [0,1] because d_low does and the kernel is <= 1.
    """
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    k = math.ceil(0.2 * n)
    order = np.argsort(-d_low, kind="stable")
    foci = np.sort(order[:k])
    tree = cKDTree(pts[foci])
    dist, which = tree.query(pts)
    sigma = sigma_f * radius
    a_low = np.exp(-(dist ** 2) / (2.0 * sigma * sigma)) * d_low[foci[which]]
    return foci, a_low


def compute_ls_full(
    cloud: PointCloud, params: ModelParams = ModelParams(), shape_id: str = ""
) -> Tuple[SaliencyMap, LsIntermediate]:
    """LS saliency S = (D_low + D_high)/2 + A_low/2, plus its intermediates."""
    _require_normals(cloud)
    pts = _unit_scale_points(cloud)
    n = len(pts)
    if n < 2:
        inter = LsIntermediate(np.zeros(n), np.zeros(n), np.zeros(n), np.arange(math.ceil(0.2 * n)))
        return SaliencyMap(shape_id, np.zeros(n), "LS"), inter
    scaled = PointCloud(pts, cloud.normals)
    index = build_index(pts)
    kwargs = dict(exact=params.ls_exact, cap=params.ls_cap, n_near=params.ls_near,
                  n_far=params.ls_far, seed=params.seed)
    desc_low = _model_descriptors(scaled, params.r_low, params, index)
    d_low = ls_distinctiveness(pts, desc_low, 1.0, **kwargs)
    desc_high = _model_descriptors(scaled, params.r_high, params, index)
    d_high = ls_distinctiveness(pts, desc_high, 1.0, **kwargs)
    foci, a_low = ls_foci_and_association(pts, d_low, 1.0, params.sigma_f)
    s = 0.5 * (d_low + d_high) + 0.5 * a_low
    inter = LsIntermediate(d_low, d_high, a_low, foci)
    return SaliencyMap(shape_id, minmax_normalize(s), "LS"), inter


def compute_ls(cloud: PointCloud, params: ModelParams = ModelParams(), shape_id: str = "") -> SaliencyMap:
    return compute_ls_full(cloud, params, shape_id)[0]


# ---------------------------------------------------------------- MS --------

N_SCALES = 5


def compute_ms(mesh: TriangleMesh, params: ModelParams = ModelParams(), shape_id: str = "") -> SaliencyMap:
    """Spectral saliency over smoothing scales {eps^2, ..., 5 eps^2}.

    Each scale k applies one more explicit Laplacian smoothing round of step
    (eps*R)^2, takes the n lowest eigenpairs, and maps spectral irregularity
    back to vertices; the final map is log(1 + smoothed sum of consecutive
    scale differences). Degenerate meshes get the all-zero default map.
    """
    try:
        radius = bounding_sphere(mesh.vertices).radius
        if radius < _EPS:
            raise DegenerateMeshError("zero-extent mesh")
        step = (params.epsilon * radius) ** 2
        maps = []
        current = mesh
        for _ in range(N_SCALES):
            current = laplacian_smooth(current, step, rounds=1)
            spec = mesh_spectrum(current, params.n)
            maps.append(spectral_irregularity_map(spec))
        agg = np.zeros(mesh.n_vertices)
        for a, b in zip(maps[:-1], maps[1:]):
            agg += np.abs(b - a)
        smoothed = gaussian_smooth_field(mesh.vertices, agg, params.sigma_ms * radius)
        values = minmax_normalize(np.log1p(smoothed))
    except DegenerateMeshError as exc:
        warnings.warn(f"degenerate mesh for spectral saliency ({exc}); default 0 map", SaliencyWarning)
        values = np.zeros(mesh.n_vertices)
    return SaliencyMap(shape_id, values, "MS")


# ---------------------------------------------------------------- CS --------

def cs_cluster_stats(
    points: np.ndarray, descriptors: np.ndarray, labels: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Member-mean centroid positions and descriptors per cluster label."""
    ids = np.unique(labels)
    centroids = np.stack([points[labels == c].mean(axis=0) for c in ids])
    mean_desc = np.stack([descriptors[labels == c].mean(axis=0) for c in ids])
    return centroids, mean_desc


def cs_distinctiveness(mean_desc: np.ndarray, centroids: np.ndarray, radius: float = 1.0) -> np.ndarray:
    """1 - exp(-mean_j chi2(F_i,F_j) / (1 + ||c_i - c_j|| / radius)), j != i."""
    k = len(centroids)
    if k < 2:
        return np.zeros(k)
    chi = chi2_cross(mean_desc, mean_desc)
    d = np.linalg.norm(centroids[:, None, :] - centroids[None, :, :], axis=2)
    diss = chi / (1.0 + d / radius)
    np.fill_diagonal(diss, 0.0)
    return 1.0 - np.exp(-diss.sum(axis=1) / (k - 1))


def cs_spatial_distribution(
    mean_desc: np.ndarray, centroids: np.ndarray, sigma_chi: Optional[float] = None
) -> np.ndarray:
    """1 - normalized variance of centroids under descriptor-similarity weights."""
    k = len(centroids)
    chi = chi2_cross(mean_desc, mean_desc)
    if sigma_chi is None:
        off = chi[~np.eye(k, dtype=bool)]
        sigma_chi = float(np.median(off)) if off.size else 1.0
    if sigma_chi <= 0:
        sigma_chi = 1.0
    w = np.exp(-chi / sigma_chi)
    wsum = w.sum(axis=1, keepdims=True)
    mu = (w @ centroids) / wsum
    sq = np.linalg.norm(centroids[None, :, :] - mu[:, None, :], axis=2) ** 2
    var = (w * sq).sum(axis=1) / wsum[:, 0]
    top = var.max()
    if top < _EPS:
        return np.ones(k)
    return 1.0 - var / top


@dataclass(frozen=True)
class CsIntermediate:
    """Cluster-level pieces of the CS pipeline."""

    labels: np.ndarray           # (n,) cluster label per point, compacted to 0..k-1
    centroids: np.ndarray        # (k, 3) member-mean positions (unit-scale frame)
    mean_descriptors: np.ndarray
    distinctiveness: np.ndarray
    spatial: np.ndarray
    cluster_saliency: np.ndarray


def compute_cs_full(
    cloud: PointCloud, params: ModelParams = ModelParams(), shape_id: str = ""
) -> Tuple[SaliencyMap, CsIntermediate]:
    """Cluster saliency (distinctiveness + spatial distribution) smoothed to points."""
    _require_normals(cloud)
    n = len(cloud)
    if params.K > n:
        raise ValueError("too many clusters")
    pts = _unit_scale_points(cloud)
    scaled = PointCloud(pts, cloud.normals)
    descriptors = _model_descriptors(scaled, params.r_cs, params)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # kmeans2 warns on empty clusters; we drop them
        _, labels = kmeans2(pts, params.K, minit="++", seed=params.seed)
    kept, labels = np.unique(labels, return_inverse=True)
    if len(kept) < params.K:
        warnings.warn(f"{params.K - len(kept)} empty clusters dropped", SaliencyWarning)
    centroids, mean_desc = cs_cluster_stats(pts, descriptors, labels)
    distinct = cs_distinctiveness(mean_desc, centroids, 1.0)
    spatial = cs_spatial_distribution(mean_desc, centroids, params.sigma_chi)
    cluster_sal = minmax_normalize(minmax_normalize(distinct) + minmax_normalize(spatial))

    sigma = params.sigma_cs
    d2 = np.linalg.norm(pts[:, None, :] - centroids[None, :, :], axis=2) ** 2
    w = np.exp(-d2 / (2.0 * sigma * sigma))
    wsum = w.sum(axis=1)
    values = np.empty(n)
    ok = wsum > 0
    values[ok] = (w[ok] @ cluster_sal) / wsum[ok]
    if np.any(~ok):
        # all weights underflowed: fall back to the nearest cluster's value
        nearest = np.argmin(d2[~ok], axis=1)
        values[~ok] = cluster_sal[nearest]
    inter = CsIntermediate(labels, centroids, mean_desc, distinct, spatial, cluster_sal)
    return SaliencyMap(shape_id, minmax_normalize(values), "CS"), inter


def compute_cs(cloud: PointCloud, params: ModelParams = ModelParams(), shape_id: str = "") -> SaliencyMap:
    return compute_cs_full(cloud, params, shape_id)[0]


# ---------------------------------------------------------------- PS --------

def principal_projection(matrix: np.ndarray) -> np.ndarray:
    """|mean-centered rows projected on the first principal axis|."""
    x = np.asarray(matrix, dtype=np.float64)
    centered = x - x.mean(axis=0)
    if np.allclose(centered, 0.0, atol=1e-14):
        return np.zeros(len(x))
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    return np.abs(centered @ vt[0])


def compute_ps(cloud: PointCloud, params: ModelParams = ModelParams(), shape_id: str = "") -> SaliencyMap:
    """PCA saliency: first-principal-axis magnitude of the descriptor matrix."""
    _require_normals(cloud)
    if len(cloud) < 2:
        raise ValueError("PCA saliency needs at least 2 points")
    pts = _unit_scale_points(cloud)
    scaled = PointCloud(pts, cloud.normals)
    descriptors = _model_descriptors(scaled, params.r_ps, params)
    values = minmax_normalize(principal_projection(descriptors))
    return SaliencyMap(shape_id, values, "PS")


# ---------------------------------------------------------------- RS --------

def compute_rs(count: int, seed: int = 0, shape_id: str = "") -> SaliencyMap:
    """Uniform-random saliency in [0,1], deterministic per seed."""
    if count < 1:
        raise ValueError("need at least one point")
    rng = np.random.default_rng(seed)
    values = minmax_normalize(rng.uniform(0.0, 1.0, size=count))
    return SaliencyMap(shape_id, values, "RS")


# ---------------------------------------------------------------- HS --------

def selection_frequency(selections: Sequence[np.ndarray], chosen: Sequence[int], n_points: int) -> np.ndarray:
    """How many of the chosen participants selected each vertex."""
    freq = np.zeros(n_points)
    for p in chosen:
        idx = np.unique(np.asarray(selections[p], dtype=np.int64))
        if idx.size and (idx.min() < 0 or idx.max() >= n_points):
            raise ValueError("selection index out of range")
        freq[idx] += 1.0
    return freq


def compute_hs(
    selections: Sequence[np.ndarray],
    chosen: Sequence[int],
    points: np.ndarray,
    sigma: float,
    shape_id: str = "",
) -> SaliencyMap:
    """Human baseline: smoothed selection frequency of the chosen participants.

    sigma is the absolute Gaussian width (callers usually pass 0.03 * R);
    sigma <= 0 keeps the raw frequencies.
    """
    if len(chosen) == 0:
        raise ValueError("need at least one participant")
    pts = np.asarray(points, dtype=np.float64)
    freq = selection_frequency(selections, chosen, len(pts))
    smoothed = gaussian_smooth_field(pts, freq, sigma)
    return SaliencyMap(shape_id, minmax_normalize(smoothed), "HS")
