"""Triangle meshes and the axis-aligned box primitives the generator uses.

All coordinates are millimetres.  Triangles store vertex indices with
counter-clockwise winding seen from outside the solid.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .errors import EmptyMeshError

MIN_TRIANGLE_AREA = 1e-9  # mm^2


@dataclass
class TriangleMesh:
    vertices: np.ndarray                  # (n, 3) float64
    triangles: np.ndarray                 # (m, 3) int32
    normals: Optional[np.ndarray] = None  # (n, 3) float64 unit vectors

    def __post_init__(self) -> None:
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int32)
        if self.normals is not None:
            self.normals = np.ascontiguousarray(self.normals, dtype=np.float64)

    def validate(self) -> None:
        if len(self.vertices) == 0 or len(self.triangles) == 0:
            raise EmptyMeshError("mesh has no vertices or no triangles")
        if self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices):
            raise EmptyMeshError("triangle index out of range")
        areas = triangle_areas(self)
        if areas.min() <= MIN_TRIANGLE_AREA:
            raise EmptyMeshError(
                f"degenerate triangle, area {areas.min():g} mm^2")
        if self.normals is not None:
            norms = np.linalg.norm(self.normals, axis=1)
            if np.abs(norms - 1.0).max() > 1e-6:
                raise EmptyMeshError("vertex normals are not unit length")

    def bbox(self) -> Tuple[np.ndarray, np.ndarray]:
        if len(self.vertices) == 0:
            raise EmptyMeshError("empty mesh has no bounding box")
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def translated(self, offset) -> "TriangleMesh":
        v = self.vertices + np.asarray(offset, dtype=np.float64)
        return TriangleMesh(v, self.triangles.copy(),
                            None if self.normals is None else self.normals.copy())

    def rotated_z90(self) -> "TriangleMesh":
        """Rotate +90 degrees about the z axis: (x, y) -> (-y, x)."""
        v = self.vertices.copy()
        v[:, 0], v[:, 1] = -self.vertices[:, 1], self.vertices[:, 0].copy()
        n = None
        if self.normals is not None:
            n = self.normals.copy()
            n[:, 0], n[:, 1] = -self.normals[:, 1], self.normals[:, 0].copy()
        return TriangleMesh(v, self.triangles.copy(), n)


def triangle_corners(mesh: TriangleMesh):
    v = mesh.vertices
    t = mesh.triangles
    return v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]


def triangle_areas(mesh: TriangleMesh) -> np.ndarray:
    a, b, c = triangle_corners(mesh)
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def triangle_normals(mesh: TriangleMesh) -> np.ndarray:
    """Unit geometric normals, zero vector for degenerate triangles."""
    a, b, c = triangle_corners(mesh)
    n = np.cross(b - a, c - a)
    length = np.linalg.norm(n, axis=1, keepdims=True)
    return np.divide(n, length, out=np.zeros_like(n), where=length > 0)


def merge_meshes(meshes: List[TriangleMesh]) -> TriangleMesh:
    if not meshes:
        raise EmptyMeshError("nothing to merge")
    verts, tris = [], []
    offset = 0
    for m in meshes:
        verts.append(m.vertices)
        tris.append(m.triangles + offset)
        offset += len(m.vertices)
    return TriangleMesh(np.vstack(verts), np.vstack(tris))


@dataclass
class BoxFace:
    """One face of a subdivided box, kept for displacement mapping."""
    normal: np.ndarray            # outward unit vector
    vertex_ids: np.ndarray        # (k,) indices into the box mesh
    uv: np.ndarray                # (k, 2) in-plane mm coordinates
    axis: int                     # world axis the face is orthogonal to
    side: int                     # 0 = low side, 1 = high side


# (axis, side) -> the two in-plane axes used for uv coordinates.
_FACE_PLANES = {
    (0, 0): (1, 2), (0, 1): (1, 2),
    (1, 0): (0, 2), (1, 1): (0, 2),
    (2, 0): (0, 1), (2, 1): (0, 1),
}


def subdivided_box(extent, divisions) -> Tuple[TriangleMesh, List[BoxFace]]:
    """Closed axis-aligned box spanning [0, extent] per axis.

    Each face is an nxm quad grid, shared edge and corner vertices are
    welded so the result is watertight.  Returns the mesh and a per-face
    record of vertex ids with in-plane coordinates, which the brick
    generator uses to displace vertices along face normals.
    """
    ext = np.asarray(extent, dtype=np.float64)
    div = np.asarray(divisions, dtype=np.int64)
    if (ext <= 0).any():
        raise EmptyMeshError("box extent must be positive")
    if (div < 1).any():
        raise EmptyMeshError("box needs at least one division per axis")
    nx, ny, nz = int(div[0]), int(div[1]), int(div[2])

    idx = np.full((nx + 1, ny + 1, nz + 1), -1, dtype=np.int64)
    on_surface = np.zeros_like(idx, dtype=bool)
    on_surface[0, :, :] = on_surface[nx, :, :] = True
    on_surface[:, 0, :] = on_surface[:, ny, :] = True
    on_surface[:, :, 0] = on_surface[:, :, nz] = True
    surf = np.argwhere(on_surface)
    idx[surf[:, 0], surf[:, 1], surf[:, 2]] = np.arange(len(surf))
    vertices = surf * (ext / div)

    triangles = []
    faces: List[BoxFace] = []
    steps = ext / div

    for axis in range(3):
        u_ax, v_ax = _FACE_PLANES[(axis, 0)]
        nu, nv = int(div[u_ax]), int(div[v_ax])
        for side in (0, 1):
            fixed = 0 if side == 0 else int(div[axis])
            iu, iv = np.meshgrid(np.arange(nu + 1), np.arange(nv + 1),
                                 indexing="ij")
            key = [None, None, None]
            key[axis] = np.full_like(iu, fixed)
            key[u_ax] = iu
            key[v_ax] = iv
            grid = idx[key[0], key[1], key[2]]
            normal = np.zeros(3)
            normal[axis] = -1.0 if side == 0 else 1.0
            # Winding such that cross(e1, e2) points along the outward normal.
            # In (u, v) order the natural winding points along +cross(u_ax, v_ax),
            # flip when that disagrees with the outward direction.
            flip = (np.cross(_unit(u_ax), _unit(v_ax))[axis] * normal[axis]) < 0
            a = grid[:-1, :-1].reshape(-1)
            b = grid[1:, :-1].reshape(-1)
            c = grid[1:, 1:].reshape(-1)
            d = grid[:-1, 1:].reshape(-1)
            if flip:
                quads = np.stack([a, c, b, a, d, c], axis=1)
            else:
                quads = np.stack([a, b, c, a, c, d], axis=1)
            triangles.append(quads.reshape(-1, 3))
            ids = grid.reshape(-1)
            uv = np.stack(np.meshgrid(np.arange(nu + 1) * steps[u_ax],
                                      np.arange(nv + 1) * steps[v_ax],
                                      indexing="ij"), axis=-1).reshape(-1, 2)
            faces.append(BoxFace(normal=normal, vertex_ids=ids, uv=uv,
                                 axis=axis, side=side))

    mesh = TriangleMesh(vertices, np.vstack(triangles).astype(np.int32))
    return mesh, faces


def _unit(axis: int) -> np.ndarray:
    e = np.zeros(3)
    e[axis] = 1.0
    return e


def box_mesh(extent) -> TriangleMesh:
    """Plain 12-triangle box spanning [0, extent] per axis."""
    mesh, _ = subdivided_box(extent, (1, 1, 1))
    return mesh
