"""Cotangent Laplacian, lumped mass, eigen-decomposition and mesh smoothing.

Supports the spectral saliency model: the Laplacian here is the standard
positive semi-definite cotangent stiffness matrix; the Laplace-Beltrami
operator is M^-1 L with a lumped (diagonal) mass matrix.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix, diags
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import ArpackError, ArpackNoConvergence, eigsh

from .geometry import SaliencyWarning, TriangleMesh


class DegenerateMeshError(ValueError):
    """Mesh has no usable real Laplacian spectrum (isolated vertices, disconnection, ...)."""


@dataclass(frozen=True)
class SpectralData:
    """Lowest part of a mesh's Laplacian spectrum plus derived log quantities."""

    frequencies: np.ndarray   # (k,) eigenvalues, ascending
    basis: np.ndarray         # (n_vertices, k) M-orthonormal eigenvectors
    log_spectrum: np.ndarray  # (k,) log(1 + |lambda|)
    avg_spectrum: np.ndarray  # (k,) windowed average of log_spectrum

    def __post_init__(self):
        if np.any(self.frequencies < -1e-8):
            raise ValueError("Laplacian eigenvalues must be nonnegative (within 1e-8)")
        if self.basis.shape[1] != len(self.frequencies):
            raise ValueError("basis / frequency count mismatch")


def check_spectrum_usable(mesh: TriangleMesh) -> None:
    """Raise DegenerateMeshError when the mesh cannot carry a real spectrum.

    Degenerate cases: no faces, vertices not referenced by any face, or a
    vertex graph with more than one connected component.
    """
    if mesh.n_faces == 0:
        raise DegenerateMeshError("mesh has no faces")
    referenced = np.zeros(mesh.n_vertices, dtype=bool)
    referenced[mesh.faces.ravel()] = True
    if not referenced.all():
        raise DegenerateMeshError(f"{int((~referenced).sum())} isolated vertices")
    edges_i = mesh.faces[:, [0, 1, 2]].ravel()
    edges_j = mesh.faces[:, [1, 2, 0]].ravel()
    adj = coo_matrix(
        (np.ones(len(edges_i)), (edges_i, edges_j)), shape=(mesh.n_vertices,) * 2
    )
    n_comp, _ = connected_components(adj, directed=False)
    if n_comp != 1:
        raise DegenerateMeshError(f"mesh has {n_comp} connected components")


def cotangent_laplacian(mesh: TriangleMesh) -> csr_matrix:
    """Positive semi-definite cotangent stiffness matrix (n x n, sparse).

    w_ij = (cot a + cot b) / 2 over the one or two triangles sharing edge ij;
    L_ii = sum_j w_ij, L_ij = -w_ij. Faces with near-zero area are skipped.
    """
    v = mesh.vertices
    f = mesh.faces
    n = mesh.n_vertices

    rows, cols, vals = [], [], []
    skipped = 0
    # loop corners: opposite edge gets cot(corner angle) / 2
    e1 = v[f[:, 1]] - v[f[:, 0]]
    e2 = v[f[:, 2]] - v[f[:, 0]]
    double_area = np.linalg.norm(np.cross(e1, e2), axis=1)
    for corner in range(3):
        i = f[:, (corner + 1) % 3]
        j = f[:, (corner + 2) % 3]
        k = f[:, corner]
        a = v[i] - v[k]
        b = v[j] - v[k]
        cos = np.einsum("ij,ij->i", a, b)
        ok = double_area > 1e-30
        cot = np.zeros(len(f))
        cot[ok] = cos[ok] / double_area[ok]
        skipped = int((~ok).sum())
        half = 0.5 * cot
        rows.extend([i, j, i, j])
        cols.extend([j, i, i, j])
        vals.extend([-half, -half, half, half])
    if skipped:
        warnings.warn(f"{skipped} zero-area faces skipped in Laplacian", SaliencyWarning)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    return coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


def lumped_mass(mesh: TriangleMesh) -> np.ndarray:
    """Diagonal (barycentric) vertex masses: one third of incident face area."""
    areas = mesh.face_areas()
    m = np.zeros(mesh.n_vertices)
    for corner in range(3):
        np.add.at(m, mesh.faces[:, corner], areas / 3.0)
    return m


def laplacian_smooth(mesh: TriangleMesh, step: float, rounds: int = 1) -> TriangleMesh:
    """Explicit Laplacian smoothing: v <- v - step * M^-1 L v, `rounds` times.

    The operator is rebuilt from the deformed geometry after every round.
    """
    out = mesh
    for _ in range(rounds):
        lap = cotangent_laplacian(out)
        mass = lumped_mass(out)
        if np.any(mass <= 0):
            raise DegenerateMeshError("zero-mass vertex during smoothing")
        verts = out.vertices - step * (lap @ out.vertices) / mass[:, None]
        out = TriangleMesh(verts, out.faces, out.class_label)
    return out


def mesh_spectrum(mesh: TriangleMesh, n_freq: int, window: int = 9) -> SpectralData:
    """Lowest n_freq eigenpairs of the generalized problem L b = lambda M b.

    Eigenvectors are M-orthonormal. log_spectrum is log(1 + |lambda|);
    avg_spectrum is its centered moving average (window truncated at the ends).
    Raises DegenerateMeshError when the mesh is unusable or the solver fails.
    """
    check_spectrum_usable(mesh)
    k = min(n_freq, mesh.n_vertices - 2)
    if k < 1:
        raise DegenerateMeshError("mesh too small for a spectrum")
    lap = cotangent_laplacian(mesh)
    mass = lumped_mass(mesh)
    if np.any(mass <= 0):
        raise DegenerateMeshError("zero-mass vertex")
    m_mat = diags(mass)
    v0 = np.random.default_rng(12345).standard_normal(mesh.n_vertices)
    try:
        # shift-invert around a small negative sigma: L + |sigma| M is positive
        # definite, so the factorization is safe even though L itself is singular;
        # fixed v0 keeps the Lanczos iteration (and the basis) deterministic
        vals, vecs = eigsh(lap, k=k, M=m_mat, sigma=-1e-3, which="LM", v0=v0)
    except (ArpackError, ArpackNoConvergence, RuntimeError) as exc:
        raise DegenerateMeshError(f"eigensolver failed: {exc}") from exc
    order = np.argsort(vals)
    vals = vals[order]
    vecs = vecs[:, order]
    vals = np.where(np.abs(vals) < 1e-10, 0.0, vals)  # clean tiny negative noise
    log_spec = np.log1p(np.abs(vals))
    avg = _windowed_average(log_spec, window)
    return SpectralData(vals, vecs, log_spec, avg)


def _windowed_average(x: np.ndarray, window: int) -> np.ndarray:
    half = window // 2
    out = np.empty_like(x)
    for i in range(len(x)):
        lo = max(0, i - half)
        hi = min(len(x), i + half + 1)
        out[i] = x[lo:hi].mean()
    return out


def spectral_irregularity_map(spec: SpectralData) -> np.ndarray:
    """Spatial saliency of one scale: sum_f |L_f - A_f| * b_f(v)^2, min-max rescaled."""
    irregularity = np.abs(spec.log_spectrum - spec.avg_spectrum)
    raw = (spec.basis ** 2) @ irregularity
    lo, hi = raw.min(), raw.max()
    if hi - lo < 1e-300:
        return np.zeros_like(raw)
    return (raw - lo) / (hi - lo)
