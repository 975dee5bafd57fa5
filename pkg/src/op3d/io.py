"""Reading and writing OFF meshes and plain-text XYZ point clouds.

Malformed files raise ParseError carrying the 1-based line number. Float
output uses shortest round-trip formatting so saved files are byte-stable.
"""

from __future__ import annotations

import os

import numpy as np

from .core3d import Geometry, PointCloud, TriMesh
from .errors import ParseError

GEOMETRY_EXTENSIONS = (".off", ".xyz")


def _fmt(v: float) -> str:
    return repr(float(v))


def load_xyz(path) -> PointCloud:
    """Parse a whitespace-separated ``x y z`` file, one point per line."""
    pts = []
    with open(path, "r") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ParseError(f"expected 3 coordinates, got {len(parts)}", lineno)
            try:
                pts.append([float(p) for p in parts])
            except ValueError:
                raise ParseError(f"non-numeric coordinate in {parts!r}", lineno) from None
    if len(pts) < 3:
        raise ParseError(f"point cloud needs >= 3 points, found {len(pts)}")
    try:
        return PointCloud(np.array(pts))
    except ValueError as e:
        raise ParseError(str(e)) from None


def save_xyz(cloud: PointCloud, path) -> None:
    with open(path, "w") as f:
        for p in cloud.points:
            f.write(f"{_fmt(p[0])} {_fmt(p[1])} {_fmt(p[2])}\n")


def _off_tokens(path):
    """Yield (lineno, token-list) for non-empty, non-comment lines."""
    with open(path, "r") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield lineno, line.split()


def load_off(path) -> TriMesh:
    """Parse an ASCII OFF mesh.

    Accepts both a bare ``OFF`` header line and the common malformed variant
    where the counts are glued to the keyword (``OFF490 312 0``). Only
    triangular faces are supported.
    """
    lines = _off_tokens(path)
    try:
        lineno, head = next(lines)
    except StopIteration:
        raise ParseError("empty file", 1) from None

    counts = None
    if head[0].upper() == "OFF":
        if len(head) > 1:
            counts = (lineno, head[1:])
    elif head[0].upper().startswith("OFF"):
        counts = (lineno, [head[0][3:]] + head[1:])
    else:
        raise ParseError(f"missing OFF header, got {head[0]!r}", lineno)

    if counts is None:
        try:
            counts = next(lines)
        except StopIteration:
            raise ParseError("missing vertex/face counts", lineno) from None
    lineno, fields = counts
    if len(fields) < 2:
        raise ParseError("count line needs at least n_vertices n_faces", lineno)
    try:
        n_verts, n_faces = int(fields[0]), int(fields[1])
    except ValueError:
        raise ParseError(f"non-integer counts {fields!r}", lineno) from None

    verts = np.empty((n_verts, 3))
    for i in range(n_verts):
        try:
            lineno, fields = next(lines)
        except StopIteration:
            raise ParseError(f"expected {n_verts} vertices, file ended at {i}", lineno) from None
        if len(fields) < 3:
            raise ParseError(f"vertex needs 3 coordinates, got {len(fields)}", lineno)
        try:
            verts[i] = [float(v) for v in fields[:3]]
        except ValueError:
            raise ParseError(f"non-numeric vertex {fields!r}", lineno) from None

    faces = np.empty((n_faces, 3), dtype=np.int64)
    for i in range(n_faces):
        try:
            lineno, fields = next(lines)
        except StopIteration:
            raise ParseError(f"expected {n_faces} faces, file ended at {i}", lineno) from None
        try:
            k = int(fields[0])
            idx = [int(v) for v in fields[1 : 1 + k]]
        except ValueError:
            raise ParseError(f"non-integer face record {fields!r}", lineno) from None
        if k != 3 or len(idx) != 3:
            raise ParseError(f"only triangular faces supported, got {k}-gon", lineno)
        if min(idx) < 0 or max(idx) >= n_verts:
            raise ParseError(f"face index out of range in {idx!r}", lineno)
        faces[i] = idx

    try:
        return TriMesh(verts, faces)
    except ValueError as e:
        raise ParseError(str(e)) from None


def save_off(mesh: TriMesh, path) -> None:
    with open(path, "w") as f:
        f.write("OFF\n")
        f.write(f"{mesh.n} {mesh.faces.shape[0]} 0\n")
        for v in mesh.vertices:
            f.write(f"{_fmt(v[0])} {_fmt(v[1])} {_fmt(v[2])}\n")
        for face in mesh.faces:
            f.write(f"3 {face[0]} {face[1]} {face[2]}\n")


def load_geometry(path) -> Geometry:
    """Dispatch on extension: .off -> TriMesh, .xyz -> PointCloud."""
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".off":
        return load_off(path)
    if ext == ".xyz":
        return load_xyz(path)
    raise ParseError(f"unsupported geometry extension {ext!r}")


def save_geometry(geom: Geometry, path) -> None:
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".off":
        if not isinstance(geom, TriMesh):
            raise ValueError("cannot save a point cloud as OFF")
        save_off(geom, path)
    elif ext == ".xyz":
        if isinstance(geom, TriMesh):
            raise ValueError("cannot save a mesh as XYZ without losing faces")
        save_xyz(geom, path)
    else:
        raise ValueError(f"unsupported geometry extension {ext!r}")
