"""Wavefront OBJ input and output.

Only the subset the pipeline needs: v, vn and triangular f records with
1-based indices.  Unknown keywords (o, g, s, usemtl, mtllib) are skipped so
externally produced photogrammetry exports still load.  Coordinates are
written with full float64 round-trip precision.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .errors import EmptyMeshError, ObjFaceError, ObjIndexError, ObjSyntaxError
from .geometry import TriangleMesh

_SKIP_KEYWORDS = {"o", "g", "s", "usemtl", "mtllib", "vt", "vp", "l"}


def write_obj(mesh: TriangleMesh, path) -> None:
    if len(mesh.vertices) == 0 or len(mesh.triangles) == 0:
        raise EmptyMeshError("refusing to write an empty mesh")
    with_normals = mesh.normals is not None
    lines = []
    for x, y, z in mesh.vertices:
        lines.append(f"v {x:.17g} {y:.17g} {z:.17g}")
    if with_normals:
        for x, y, z in mesh.normals:
            lines.append(f"vn {x:.17g} {y:.17g} {z:.17g}")
    for a, b, c in mesh.triangles + 1:
        if with_normals:
            lines.append(f"f {a}//{a} {b}//{b} {c}//{c}")
        else:
            lines.append(f"f {a} {b} {c}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_face_token(token: str, line_no: int) -> tuple:
    """Return (vertex_index, normal_index or None), both 1-based."""
    parts = token.split("/")
    if len(parts) == 1:
        v, n = parts[0], None
    elif len(parts) == 2:
        v, n = parts[0], None
    elif len(parts) == 3:
        v, n = parts[0], parts[2] if parts[2] else None
    else:
        raise ObjSyntaxError(f"line {line_no}: bad face token {token!r}")
    try:
        vi = int(v)
        ni = int(n) if n is not None else None
    except ValueError as exc:
        raise ObjSyntaxError(f"line {line_no}: bad face token {token!r}") from exc
    return vi, ni


def read_obj(path) -> TriangleMesh:
    vertices = []
    normals = []
    faces = []
    face_normals = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            fieldsplit = line.split()
            keyword, rest = fieldsplit[0], fieldsplit[1:]
            if keyword == "v" or keyword == "vn":
                if len(rest) < 3:
                    raise ObjSyntaxError(f"line {line_no}: {keyword} needs 3 floats")
                try:
                    xyz = [float(t) for t in rest[:3]]
                except ValueError as exc:
                    raise ObjSyntaxError(
                        f"line {line_no}: bad coordinate in {line!r}") from exc
                (vertices if keyword == "v" else normals).append(xyz)
            elif keyword == "f":
                if len(rest) != 3:
                    raise ObjFaceError(
                        f"line {line_no}: face has {len(rest)} vertices, need 3")
                parsed = [_parse_face_token(t, line_no) for t in rest]
                faces.append([p[0] for p in parsed])
                face_normals.append([p[1] for p in parsed])
            elif keyword in _SKIP_KEYWORDS:
                continue
            else:
                raise ObjSyntaxError(f"line {line_no}: unknown keyword {keyword!r}")
    if not vertices or not faces:
        raise EmptyMeshError(f"{path}: no geometry found")

    n_verts = len(vertices)
    tri = np.asarray(faces, dtype=np.int64)
    if tri.min() < 1 or tri.max() > n_verts:
        raise ObjIndexError(
            f"face index out of range 1..{n_verts} (got {tri.min()}..{tri.max()})")
    tri -= 1

    out_normals: Optional[np.ndarray] = None
    if normals:
        # Per-vertex normals only: every reference must map vertex i to
        # normal i, which is how write_obj lays them out.
        nn = np.asarray(normals, dtype=np.float64)
        refs = [n for row in face_normals for n in row if n is not None]
        if refs:
            refs_arr = np.asarray(refs, dtype=np.int64)
            if refs_arr.min() < 1 or refs_arr.max() > len(nn):
                raise ObjIndexError("normal index out of range")
            if len(nn) == n_verts:
                out_normals = nn
    return TriangleMesh(np.asarray(vertices, dtype=np.float64),
                        tri.astype(np.int32), out_normals)
