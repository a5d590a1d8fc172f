"""Shared geometry generators for the test suite."""

import numpy as np


def fibonacci_sphere(n, radius=1.0, center=(0.0, 0.0, 0.0)):
    """Near-uniform points on a sphere via the golden-angle spiral."""
    i = np.arange(n, dtype=np.float64)
    phi = np.pi * (3.0 - np.sqrt(5.0)) * i
    z = 1.0 - 2.0 * (i + 0.5) / n
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    pts = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    return radius * pts + np.asarray(center, dtype=np.float64)


def icosahedron():
    """Regular icosahedron with unit circumradius: (12, 3) vertices, (20, 3) faces."""
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=np.float64,
    )
    verts /= np.linalg.norm(verts[0])
    faces = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    return verts, faces


def icosphere(subdiv=2, radius=1.0, center=(0.0, 0.0, 0.0)):
    """Icosahedron subdivided `subdiv` times, vertices projected to the sphere."""
    verts, faces = icosahedron()
    verts = [v for v in verts]
    for _ in range(subdiv):
        midpoint = {}

        def midindex(a, b):
            key = (min(a, b), max(a, b))
            if key not in midpoint:
                m = verts[a] + verts[b]
                m /= np.linalg.norm(m)
                midpoint[key] = len(verts)
                verts.append(m)
            return midpoint[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midindex(a, b), midindex(b, c), midindex(c, a)
            new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = np.asarray(new_faces, dtype=np.int64)
    verts = np.asarray(verts, dtype=np.float64)
    return radius * verts + np.asarray(center, dtype=np.float64), faces


def cube_mesh(side=1.0, center=(0.0, 0.0, 0.0)):
    """Axis-aligned cube: 8 vertices, 12 triangles with outward winding."""
    h = side / 2.0
    verts = np.array(
        [[x, y, z] for x in (-h, h) for y in (-h, h) for z in (-h, h)],
        dtype=np.float64,
    ) + np.asarray(center, dtype=np.float64)
    faces = np.array(
        [
            [0, 1, 3], [0, 3, 2],  # x = -h
            [4, 6, 7], [4, 7, 5],  # x = +h
            [0, 4, 5], [0, 5, 1],  # y = -h
            [2, 3, 7], [2, 7, 6],  # y = +h
            [0, 2, 6], [0, 6, 4],  # z = -h
            [1, 5, 7], [1, 7, 3],  # z = +h
        ],
        dtype=np.int64,
    )
    return verts, faces


def grid_cloud(nx=20, ny=20, spacing=0.05):
    """Planar grid in the z = 0 plane, centered at the origin."""
    x = (np.arange(nx) - (nx - 1) / 2.0) * spacing
    y = (np.arange(ny) - (ny - 1) / 2.0) * spacing
    gx, gy = np.meshgrid(x, y, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel(), np.zeros(nx * ny)], axis=1)
    return pts


def ring_neighborhood(n_ring=12, radius=0.1):
    """A center point surrounded by a symmetric ring in the z = 0 plane."""
    ang = 2.0 * np.pi * np.arange(n_ring) / n_ring
    ring = np.stack([radius * np.cos(ang), radius * np.sin(ang), np.zeros(n_ring)], axis=1)
    return np.vstack([[0.0, 0.0, 0.0], ring])


def sphere_with_bump(subdiv=3, radius=1.0, bump_height=0.15, bump_width=0.35):
    """Icosphere with a smooth radial bump around the +z pole.

    Returns (vertices, faces, bump_mask) where bump_mask flags displaced vertices.
    """
    verts, faces = icosphere(subdiv, radius=1.0)
    z = verts[:, 2]
    ang = np.arccos(np.clip(z, -1.0, 1.0))
    w = np.exp(-((ang / bump_width) ** 2))
    scale = 1.0 + bump_height * w
    out = radius * verts * scale[:, None]
    return out, faces, w > 0.05


def jitter(points, scale, seed=0):
    rng = np.random.default_rng(seed)
    return points + rng.normal(0.0, scale, size=points.shape)


def cube_surface_cloud(per_face=12, half=1.0):
    """Points sampled on all six faces of an axis-aligned cube."""
    t = np.linspace(-half, half, per_face)
    a, b = np.meshgrid(t, t, indexing="ij")
    a, b = a.ravel(), b.ravel()
    h = np.full_like(a, half)
    faces = [
        np.stack([h, a, b], axis=1), np.stack([-h, a, b], axis=1),
        np.stack([a, h, b], axis=1), np.stack([a, -h, b], axis=1),
        np.stack([a, b, h], axis=1), np.stack([a, b, -h], axis=1),
    ]
    pts = np.vstack(faces)
    # faces share edges: drop duplicate positions
    _, keep = np.unique(np.round(pts, 9), axis=0, return_index=True)
    return pts[np.sort(keep)]


def dented_cube_cloud(per_face=12, depth=0.35, rho=0.9):
    """Cube-surface cloud with a scoop pressed into the (+,+,+) corner.

    Returns (points, dent_mask).
    """
    pts = cube_surface_cloud(per_face)
    corner = np.array([1.0, 1.0, 1.0])
    d = np.linalg.norm(pts - corner, axis=1)
    mask = d < rho
    w = np.cos(np.pi * d[mask] / (2.0 * rho)) ** 2
    pts = pts.copy()
    pts[mask] -= (depth * w)[:, None] * (corner / np.sqrt(3.0))
    return pts, mask
