"""Mesh, scan and ground-truth file formats.

Meshes travel as OFF or PLY (ascii or binary little-endian). Scans are PLY
point clouds with three extra per-vertex properties carrying provenance:
triangle_id (uint32) and bary_u/bary_v (float32); the third barycentric
weight is implicit. Ground truth is a CSV of participant_id,vertex_index
rows plus an optional one-float-per-line field file.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from .evaluation import GroundTruth
from .geometry import (
    PointCloud,
    Provenance,
    TriangleMesh,
    bounding_sphere,
    gaussian_smooth_field,
)
from .models import minmax_normalize
from .scanner import CameraPose, RangeScan


class MeshParseError(ValueError):
    """Raised for malformed mesh or scan files; message carries line/offset."""


_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


# ------------------------------------------------------------------- OFF ----

def _load_off(lines: List[str], path: str) -> TriangleMesh:
    def fail(lineno, msg):
        raise MeshParseError(f"{path}: line {lineno + 1}: {msg}")

    # strip comments and blanks but remember original line numbers
    rows = [(i, ln.split("#", 1)[0].strip()) for i, ln in enumerate(lines)]
    rows = [(i, ln) for i, ln in rows if ln]
    if not rows:
        raise MeshParseError(f"{path}: empty file")
    pos = 0
    lineno, first = rows[pos]
    if first.upper().startswith("OFF"):
        rest = first[3:].strip()
        pos += 1
        if rest:  # counts on the header line
            rows.insert(pos, (lineno, rest))
    if pos >= len(rows):
        fail(lineno, "missing vertex/face counts")
    lineno, counts = rows[pos]
    parts = counts.split()
    if len(parts) < 2:
        fail(lineno, "expected 'n_vertices n_faces [n_edges]'")
    try:
        n_v, n_f = int(parts[0]), int(parts[1])
    except ValueError:
        fail(lineno, "vertex/face counts must be integers")
    pos += 1

    if pos + n_v > len(rows):
        fail(rows[-1][0], f"truncated: expected {n_v} vertex lines")
    verts = np.empty((n_v, 3))
    for k in range(n_v):
        lineno, ln = rows[pos + k]
        parts = ln.split()
        if len(parts) < 3:
            fail(lineno, "vertex line needs 3 coordinates")
        try:
            verts[k] = [float(parts[0]), float(parts[1]), float(parts[2])]
        except ValueError:
            fail(lineno, "bad vertex coordinate")
    pos += n_v

    if pos + n_f > len(rows):
        fail(rows[-1][0], f"truncated: expected {n_f} face lines")
    faces = []
    for k in range(n_f):
        lineno, ln = rows[pos + k]
        parts = ln.split()
        try:
            cnt = int(parts[0])
            idx = [int(p) for p in parts[1 : 1 + cnt]]
        except (ValueError, IndexError):
            fail(lineno, "bad face line")
        if len(idx) != cnt or cnt < 3:
            fail(lineno, "face needs at least 3 indices")
        if min(idx) < 0 or max(idx) >= n_v:
            fail(lineno, f"face index out of range (vertex count {n_v})")
        for j in range(1, cnt - 1):  # fan-triangulate polygons
            faces.append([idx[0], idx[j], idx[j + 1]])
    return TriangleMesh(verts, np.asarray(faces, dtype=np.int64).reshape(-1, 3))


def _save_off(path: Path, mesh: TriangleMesh) -> None:
    with open(path, "w") as fh:
        fh.write("OFF\n")
        fh.write(f"{mesh.n_vertices} {mesh.n_faces} 0\n")
        for v in mesh.vertices:
            fh.write(f"{v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
        for f in mesh.faces:
            fh.write(f"3 {f[0]} {f[1]} {f[2]}\n")


# ------------------------------------------------------------------- PLY ----

class _PlyHeader:
    def __init__(self):
        self.fmt = None  # "ascii" | "binary_little_endian"
        self.elements = []  # (name, count, [(prop_name, dtype) or ("list", cnt_dt, val_dt, name)])
        self.comments = []
        self.data_start = 0


def _parse_ply_header(blob: bytes, path: str) -> _PlyHeader:
    end = blob.find(b"end_header")
    if end < 0:
        raise MeshParseError(f"{path}: offset 0: missing end_header")
    nl = blob.find(b"\n", end)
    if nl < 0:
        raise MeshParseError(f"{path}: offset {end}: header not terminated")
    header = _PlyHeader()
    header.data_start = nl + 1
    text = blob[:end].decode("ascii", errors="replace")
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise MeshParseError(f"{path}: line 1: not a PLY file")
    current = None
    for i, ln in enumerate(lines[1:], start=2):
        parts = ln.split()
        if not parts:
            continue
        kw = parts[0]
        if kw == "format":
            if parts[1] not in ("ascii", "binary_little_endian"):
                raise MeshParseError(f"{path}: line {i}: unsupported format {parts[1]!r}")
            header.fmt = parts[1]
        elif kw == "comment":
            header.comments.append(ln.split(" ", 1)[1] if len(parts) > 1 else "")
        elif kw == "element":
            try:
                current = (parts[1], int(parts[2]), [])
            except (ValueError, IndexError):
                raise MeshParseError(f"{path}: line {i}: bad element declaration")
            header.elements.append(current)
        elif kw == "property":
            if current is None:
                raise MeshParseError(f"{path}: line {i}: property before element")
            if parts[1] == "list":
                if parts[2] not in _PLY_TYPES or parts[3] not in _PLY_TYPES:
                    raise MeshParseError(f"{path}: line {i}: unknown list type")
                current[2].append(("list", _PLY_TYPES[parts[2]], _PLY_TYPES[parts[3]], parts[4]))
            else:
                if parts[1] not in _PLY_TYPES:
                    raise MeshParseError(f"{path}: line {i}: unknown type {parts[1]!r}")
                current[2].append((parts[2], _PLY_TYPES[parts[1]]))
    if header.fmt is None:
        raise MeshParseError(f"{path}: missing format line")
    return header


def _read_ply_elements(blob: bytes, header: _PlyHeader, path: str):
    """Returns {element: {prop: array}}; list properties become list of rows."""
    out = {}
    if header.fmt == "ascii":
        text = blob[header.data_start:].decode("ascii", errors="replace")
        tokens = text.split()
        cursor = 0

        def take(n, lineno_hint):
            nonlocal cursor
            if cursor + n > len(tokens):
                raise MeshParseError(f"{path}: truncated data ({lineno_hint})")
            vals = tokens[cursor : cursor + n]
            cursor += n
            return vals

        for name, count, props in header.elements:
            cols = {p[-1] if p[0] == "list" else p[0]: [] for p in props}
            for r in range(count):
                for p in props:
                    if p[0] == "list":
                        cnt = int(take(1, f"element {name} row {r}")[0])
                        vals = [int(v) for v in take(cnt, f"element {name} row {r}")]
                        cols[p[3]].append(vals)
                    else:
                        cols[p[0]].append(float(take(1, f"element {name} row {r}")[0]))
            out[name] = {k: (v if v and isinstance(v[0], list) else np.asarray(v))
                         for k, v in cols.items()}
        return out

    offset = header.data_start
    for name, count, props in header.elements:
        has_list = any(p[0] == "list" for p in props)
        if not has_list:
            dt = np.dtype([(p[0], "<" + p[1]) for p in props])
            need = dt.itemsize * count
            if offset + need > len(blob):
                raise MeshParseError(f"{path}: offset {offset}: truncated element {name!r}")
            rec = np.frombuffer(blob, dtype=dt, count=count, offset=offset)
            offset += need
            out[name] = {p[0]: rec[p[0]].astype(np.float64) for p in props}
        else:
            cols = {p[-1] if p[0] == "list" else p[0]: [] for p in props}
            for r in range(count):
                for p in props:
                    if p[0] == "list":
                        cnt_dt = np.dtype("<" + p[1])
                        if offset + cnt_dt.itemsize > len(blob):
                            raise MeshParseError(f"{path}: offset {offset}: truncated list count")
                        cnt = int(np.frombuffer(blob, cnt_dt, 1, offset)[0])
                        offset += cnt_dt.itemsize
                        val_dt = np.dtype("<" + p[2])
                        need = val_dt.itemsize * cnt
                        if offset + need > len(blob):
                            raise MeshParseError(f"{path}: offset {offset}: truncated list values")
                        cols[p[3]].append(np.frombuffer(blob, val_dt, cnt, offset).tolist())
                        offset += need
                    else:
                        dt = np.dtype("<" + p[1])
                        if offset + dt.itemsize > len(blob):
                            raise MeshParseError(f"{path}: offset {offset}: truncated element {name!r}")
                        cols[p[0]].append(float(np.frombuffer(blob, dt, 1, offset)[0]))
                        offset += dt.itemsize
            out[name] = {k: (v if v and isinstance(v[0], list) else np.asarray(v))
                         for k, v in cols.items()}
    return out


def _load_ply_mesh(blob: bytes, path: str) -> TriangleMesh:
    header = _parse_ply_header(blob, path)
    data = _read_ply_elements(blob, header, path)
    if "vertex" not in data:
        raise MeshParseError(f"{path}: no vertex element")
    vd = data["vertex"]
    for axis in ("x", "y", "z"):
        if axis not in vd:
            raise MeshParseError(f"{path}: vertex element lacks {axis!r}")
    verts = np.stack([vd["x"], vd["y"], vd["z"]], axis=1)
    faces = []
    if "face" in data:
        fd = data["face"]
        key = next((k for k in fd if k.startswith("vertex_ind")), None)
        if key is None:
            raise MeshParseError(f"{path}: face element lacks vertex indices")
        for row in fd[key]:
            idx = [int(v) for v in row]
            if len(idx) < 3:
                raise MeshParseError(f"{path}: face with fewer than 3 indices")
            if min(idx) < 0 or max(idx) >= len(verts):
                raise MeshParseError(f"{path}: face index out of range")
            for j in range(1, len(idx) - 1):
                faces.append([idx[0], idx[j], idx[j + 1]])
    return TriangleMesh(verts, np.asarray(faces, dtype=np.int64).reshape(-1, 3))


def _save_ply_mesh(path: Path, mesh: TriangleMesh, binary: bool) -> None:
    fmt = "binary_little_endian" if binary else "ascii"
    header = (
        "ply\n"
        f"format {fmt} 1.0\n"
        f"element vertex {mesh.n_vertices}\n"
        "property double x\nproperty double y\nproperty double z\n"
        f"element face {mesh.n_faces}\n"
        "property list uchar int vertex_indices\n"
        "end_header\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        if binary:
            fh.write(mesh.vertices.astype("<f8").tobytes())
            for f in mesh.faces:
                fh.write(struct.pack("<B3i", 3, int(f[0]), int(f[1]), int(f[2])))
        else:
            for v in mesh.vertices:
                fh.write(f"{v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n".encode("ascii"))
            for f in mesh.faces:
                fh.write(f"3 {f[0]} {f[1]} {f[2]}\n".encode("ascii"))


# ------------------------------------------------------------- public API ----

def load_mesh(path) -> TriangleMesh:
    """Read an OFF or PLY mesh, chosen by file content."""
    path = Path(path)
    blob = path.read_bytes()
    if blob[:3] == b"ply":
        return _load_ply_mesh(blob, str(path))
    try:
        text = blob.decode("ascii")
    except UnicodeDecodeError as exc:
        raise MeshParseError(f"{path}: not a recognized mesh format") from exc
    return _load_off(text.splitlines(), str(path))


def save_mesh(path, mesh: TriangleMesh, binary: bool = True) -> None:
    """Write OFF (for .off paths) or PLY (everything else)."""
    path = Path(path)
    if path.suffix.lower() == ".off":
        _save_off(path, mesh)
    else:
        _save_ply_mesh(path, mesh, binary)


def save_scan(path, scan: RangeScan) -> None:
    """Binary little-endian PLY point cloud with provenance properties."""
    prov = scan.cloud.provenance
    cam = scan.camera
    n = len(scan.cloud)
    header = (
        "ply\n"
        "format binary_little_endian 1.0\n"
        f"comment base_shape_id {scan.base_shape_id}\n"
        f"comment view_index {scan.view_index}\n"
        f"comment camera_position {cam.position[0]:.17g} {cam.position[1]:.17g} {cam.position[2]:.17g}\n"
        f"comment camera_look_at {cam.look_at[0]:.17g} {cam.look_at[1]:.17g} {cam.look_at[2]:.17g}\n"
        f"comment camera_up {cam.up[0]:.17g} {cam.up[1]:.17g} {cam.up[2]:.17g}\n"
        f"element vertex {n}\n"
        "property double x\nproperty double y\nproperty double z\n"
        "property uint triangle_id\n"
        "property float bary_u\nproperty float bary_v\n"
        "end_header\n"
    )
    rec = np.empty(n, dtype=np.dtype(
        [("x", "<f8"), ("y", "<f8"), ("z", "<f8"),
         ("triangle_id", "<u4"), ("bary_u", "<f4"), ("bary_v", "<f4")]))
    pts = scan.cloud.points
    rec["x"], rec["y"], rec["z"] = pts[:, 0], pts[:, 1], pts[:, 2]
    rec["triangle_id"] = prov.triangles
    rec["bary_u"] = prov.bary[:, 1]
    rec["bary_v"] = prov.bary[:, 2]
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(rec.tobytes())


def load_scan(path) -> RangeScan:
    """Read a scan PLY written by save_scan."""
    path = Path(path)
    blob = path.read_bytes()
    if blob[:3] != b"ply":
        raise MeshParseError(f"{path}: not a PLY file")
    header = _parse_ply_header(blob, str(path))
    data = _read_ply_elements(blob, header, str(path))
    vd = data.get("vertex")
    if vd is None or "triangle_id" not in vd:
        raise MeshParseError(f"{path}: not a scan file (missing provenance)")
    pts = np.stack([vd["x"], vd["y"], vd["z"]], axis=1)
    u = np.asarray(vd["bary_u"], dtype=np.float64)
    v = np.asarray(vd["bary_v"], dtype=np.float64)
    bary = np.stack([1.0 - u - v, u, v], axis=1)
    bary = np.clip(bary, 0.0, None)
    sums = bary.sum(axis=1, keepdims=True)
    bary = np.divide(bary, sums, out=np.full_like(bary, 1.0 / 3.0), where=sums > 0)
    meta = {}
    for c in header.comments:
        parts = c.split()
        if parts:
            meta[parts[0]] = parts[1:]
    def vec(key, default):
        return np.array([float(x) for x in meta[key]]) if key in meta else default
    camera = CameraPose(
        vec("camera_position", np.array([0.0, 0.0, 1.0])),
        vec("camera_look_at", np.zeros(3)),
        vec("camera_up", np.array([0.0, 0.0, 1.0])),
    )
    shape_id = meta.get("base_shape_id", [""])
    view_index = int(meta.get("view_index", ["0"])[0])
    cloud = PointCloud(pts, provenance=Provenance(
        np.asarray(vd["triangle_id"], dtype=np.int64), bary))
    return RangeScan(cloud, camera, " ".join(shape_id), view_index)


# ----------------------------------------------------------- ground truth ----

def load_ground_truth(path, points: np.ndarray, field_path=None,
                      shape_id: Optional[str] = None, sigma_factor: float = 0.03) -> GroundTruth:
    """Read participant selections; field read from file or synthesized.

    CSV rows are participant_id,vertex_index (a header row is skipped).
    Without a field file, the field is the min-max normalized Gaussian
    smoothing of total selection counts at sigma_factor times the shape radius.
    """
    path = Path(path)
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    per_participant = {}
    order = []
    with open(path) as fh:
        lines = fh.read().splitlines()
    data_rows = 0
    for lineno, ln in enumerate(lines, start=1):
        ln = ln.strip()
        if not ln:
            continue
        parts = [p.strip() for p in ln.split(",")]
        if len(parts) < 2:
            raise MeshParseError(f"{path}: line {lineno}: expected participant_id,vertex_index")
        try:
            idx = int(parts[1])
        except ValueError:
            if data_rows == 0:  # header row
                continue
            raise MeshParseError(f"{path}: line {lineno}: bad vertex index {parts[1]!r}")
        if not 0 <= idx < n:
            raise MeshParseError(f"{path}: line {lineno}: vertex index {idx} out of range "
                                 f"(vertex count {n})")
        pid = parts[0]
        if pid not in per_participant:
            per_participant[pid] = []
            order.append(pid)
        per_participant[pid].append(idx)
        data_rows += 1
    if data_rows == 0:
        raise MeshParseError(f"{path}: no selection rows")
    participants = tuple(np.asarray(per_participant[pid], dtype=np.int64) for pid in order)

    if field_path is not None:
        field_lines = [ln for ln in Path(field_path).read_text().splitlines() if ln.strip()]
        if len(field_lines) != n:
            raise MeshParseError(f"{field_path}: expected {n} values, found {len(field_lines)}")
        try:
            field = np.array([float(ln) for ln in field_lines])
        except ValueError as exc:
            raise MeshParseError(f"{field_path}: bad field value") from exc
    else:
        counts = np.zeros(n)
        for sel in participants:
            np.add.at(counts, sel, 1.0)
        radius = bounding_sphere(points).radius
        field = minmax_normalize(gaussian_smooth_field(points, counts, sigma_factor * radius))
    return GroundTruth(shape_id if shape_id is not None else path.stem, field, participants)


def save_ground_truth(path, gt: GroundTruth, field_path=None) -> None:
    with open(path, "w") as fh:
        fh.write("participant_id,vertex_index\n")
        for pid, sel in enumerate(gt.participants):
            for idx in sel:
                fh.write(f"p{pid},{idx}\n")
    if field_path is not None:
        with open(field_path, "w") as fh:
            for v in gt.field:
                fh.write(f"{v:.17g}\n")


# ------------------------------------------------------------ colored maps ----

def colormap_table() -> np.ndarray:
    """256-entry blue-to-yellow ramp: entry i is (i, i, 255-i)."""
    i = np.arange(256, dtype=np.uint8)
    return np.stack([i, i, 255 - i], axis=1)


def export_colored_map(geometry, values: np.ndarray, path) -> None:
    """PLY with per-vertex colors from the shipped blue-to-yellow table."""
    if isinstance(geometry, TriangleMesh):
        pts, faces = geometry.vertices, geometry.faces
    elif isinstance(geometry, PointCloud):
        pts, faces = geometry.points, np.zeros((0, 3), dtype=np.int64)
    else:
        pts = np.asarray(geometry, dtype=np.float64)
        faces = np.zeros((0, 3), dtype=np.int64)
    values = np.asarray(values, dtype=np.float64)
    if len(values) != len(pts):
        raise ValueError("map length does not match geometry")
    table = colormap_table()
    idx = np.rint(np.clip(values, 0.0, 1.0) * 255.0).astype(np.int64)
    colors = table[idx]
    header = (
        "ply\n"
        "format binary_little_endian 1.0\n"
        f"element vertex {len(pts)}\n"
        "property double x\nproperty double y\nproperty double z\n"
        "property uchar red\nproperty uchar green\nproperty uchar blue\n"
        f"element face {len(faces)}\n"
        "property list uchar int vertex_indices\n"
        "end_header\n"
    )
    rec = np.empty(len(pts), dtype=np.dtype(
        [("x", "<f8"), ("y", "<f8"), ("z", "<f8"),
         ("red", "u1"), ("green", "u1"), ("blue", "u1")]))
    rec["x"], rec["y"], rec["z"] = pts[:, 0], pts[:, 1], pts[:, 2]
    rec["red"], rec["green"], rec["blue"] = colors[:, 0], colors[:, 1], colors[:, 2]
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(rec.tobytes())
        for f in faces:
            fh.write(struct.pack("<B3i", 3, int(f[0]), int(f[1]), int(f[2])))
