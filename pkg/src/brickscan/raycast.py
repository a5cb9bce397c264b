"""Watertight ray casting against triangle meshes.

The intersection test is the shear-and-scale watertight formulation, which
never lets a ray slip between triangles that share an edge.  Wall meshes are
traversed through a uniform grid; a brute-force every-triangle path with the
identical per-triangle arithmetic is kept as the oracle, and the two agree
bit for bit because they only differ in which candidate set they scan.

Nearest-hit ties (two triangles at the same distance) resolve to the lower
triangle index on both paths.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from numba import njit, prange

from .errors import EmptyMeshError
from .geometry import TriangleMesh, triangle_normals

GRID_CELL_DENSITY = 3.0     # target triangles per occupied cell, build heuristic
MAX_GRID_RES = 192          # per-axis cap


@njit(cache=True, inline="always")
def _isect(px, py, pz, kx, ky, kz, sx, sy, sz, v0, v1, v2, j):
    """Watertight ray-triangle distance, inf on miss.  Accepts t >= 0."""
    ax = v0[j, kx] - px
    ay = v0[j, ky] - py
    az = v0[j, kz] - pz
    bx = v1[j, kx] - px
    by = v1[j, ky] - py
    bz = v1[j, kz] - pz
    cx = v2[j, kx] - px
    cy = v2[j, ky] - py
    cz = v2[j, kz] - pz

    Ax = ax - sx * az
    Ay = ay - sy * az
    Bx = bx - sx * bz
    By = by - sy * bz
    Cx = cx - sx * cz
    Cy = cy - sy * cz

    U = Cx * By - Cy * Bx
    V = Ax * Cy - Ay * Cx
    W = Bx * Ay - By * Ax
    if (U < 0.0 or V < 0.0 or W < 0.0) and (U > 0.0 or V > 0.0 or W > 0.0):
        return np.inf
    det = U + V + W
    if det == 0.0:
        return np.inf
    T = U * (sz * az) + V * (sz * bz) + W * (sz * cz)
    t = T / det
    if t < 0.0:
        return np.inf
    return t


@njit(cache=True, inline="always")
def _ray_axes(dx, dy, dz):
    adx, ady, adz = abs(dx), abs(dy), abs(dz)
    if adz >= adx and adz >= ady:
        kz = 2
    elif ady >= adx:
        kz = 1
    else:
        kz = 0
    kx = (kz + 1) % 3
    ky = (kx + 1) % 3
    d = (dx, dy, dz)
    if d[kz] < 0.0:
        kx, ky = ky, kx
    sz = 1.0 / d[kz]
    sx = d[kx] * sz
    sy = d[ky] * sz
    return kx, ky, kz, sx, sy, sz


@njit(cache=True, parallel=True)
def _cast_brute(origins, dirs, tmax, v0, v1, v2, out_t, out_idx):
    n = origins.shape[0]
    m = v0.shape[0]
    for i in prange(n):
        ox, oy, oz = origins[i, 0], origins[i, 1], origins[i, 2]
        dx, dy, dz = dirs[i, 0], dirs[i, 1], dirs[i, 2]
        kx, ky, kz, sx, sy, sz = _ray_axes(dx, dy, dz)
        o = (ox, oy, oz)
        px, py, pz = o[kx], o[ky], o[kz]
        best_t = np.inf
        best_j = -1
        for j in range(m):
            t = _isect(px, py, pz, kx, ky, kz, sx, sy, sz, v0, v1, v2, j)
            if t <= tmax and (t < best_t or (t == best_t and j < best_j)):
                best_t = t
                best_j = j
        out_t[i] = best_t
        out_idx[i] = best_j


@njit(cache=True, inline="always")
def _grid_ray_range(o, d, gmin, gmax):
    """Clip a ray to the grid box, returns (t0, t1), empty when t0 > t1."""
    t0 = 0.0
    t1 = np.inf
    for a in range(3):
        if d[a] != 0.0:
            inv = 1.0 / d[a]
            ta = (gmin[a] - o[a]) * inv
            tb = (gmax[a] - o[a]) * inv
            if ta > tb:
                ta, tb = tb, ta
            if ta > t0:
                t0 = ta
            if tb < t1:
                t1 = tb
        elif o[a] < gmin[a] or o[a] > gmax[a]:
            return 1.0, 0.0
    return t0, t1


@njit(cache=True)
def _cast_grid_one(ox, oy, oz, dx, dy, dz, tmax, v0, v1, v2,
                   gmin, gmax, cell, res, cell_start, cell_items):
    kx, ky, kz, sx, sy, sz = _ray_axes(dx, dy, dz)
    o = (ox, oy, oz)
    d = (dx, dy, dz)
    px, py, pz = o[kx], o[ky], o[kz]

    t0, t1 = _grid_ray_range(o, d, gmin, gmax)
    if t0 > t1 or t0 > tmax:
        return np.inf, -1
    if t1 > tmax:
        t1 = tmax

    ix = np.empty(3, dtype=np.int64)
    step = np.empty(3, dtype=np.int64)
    tnext = np.empty(3, dtype=np.float64)
    tdelta = np.empty(3, dtype=np.float64)
    for a in range(3):
        pa = o[a] + t0 * d[a]
        ca = int(np.floor((pa - gmin[a]) / cell[a]))
        if ca < 0:
            ca = 0
        if ca >= res[a]:
            ca = res[a] - 1
        ix[a] = ca
        if d[a] > 0.0:
            step[a] = 1
            tnext[a] = t0 + ((gmin[a] + (ca + 1) * cell[a]) - pa) / d[a]
            tdelta[a] = cell[a] / d[a]
        elif d[a] < 0.0:
            step[a] = -1
            tnext[a] = t0 + ((gmin[a] + ca * cell[a]) - pa) / d[a]
            tdelta[a] = -cell[a] / d[a]
        else:
            step[a] = 0
            tnext[a] = np.inf
            tdelta[a] = np.inf

    best_t = np.inf
    best_j = -1
    while True:
        c = (ix[0] * res[1] + ix[1]) * res[2] + ix[2]
        for k in range(cell_start[c], cell_start[c + 1]):
            j = cell_items[k]
            t = _isect(px, py, pz, kx, ky, kz, sx, sy, sz, v0, v1, v2, j)
            if t <= tmax and (t < best_t or (t == best_t and j < best_j)):
                best_t = t
                best_j = j
        t_exit = min(tnext[0], min(tnext[1], tnext[2]))
        # Strictly closer hits cannot appear in later cells; equal-distance
        # ones can, and the tie must go to the lowest triangle index.
        if best_t < t_exit or t_exit > t1:
            break
        if tnext[0] <= tnext[1] and tnext[0] <= tnext[2]:
            a = 0
        elif tnext[1] <= tnext[2]:
            a = 1
        else:
            a = 2
        ix[a] += step[a]
        if ix[a] < 0 or ix[a] >= res[a]:
            break
        tnext[a] += tdelta[a]
    return best_t, best_j


@njit(cache=True, parallel=True)
def _cast_grid(origins, dirs, tmax, v0, v1, v2, gmin, gmax, cell, res,
               cell_start, cell_items, out_t, out_idx):
    for i in prange(origins.shape[0]):
        t, j = _cast_grid_one(origins[i, 0], origins[i, 1], origins[i, 2],
                              dirs[i, 0], dirs[i, 1], dirs[i, 2], tmax,
                              v0, v1, v2, gmin, gmax, cell, res,
                              cell_start, cell_items)
        out_t[i] = t
        out_idx[i] = j


@njit(cache=True, inline="always")
def _any_hit_one(ox, oy, oz, dx, dy, dz, tmin, tmax, v0, v1, v2,
                 gmin, gmax, cell, res, cell_start, cell_items):
    kx, ky, kz, sx, sy, sz = _ray_axes(dx, dy, dz)
    o = (ox, oy, oz)
    d = (dx, dy, dz)
    px, py, pz = o[kx], o[ky], o[kz]
    t0, t1 = _grid_ray_range(o, d, gmin, gmax)
    if t0 > t1 or t0 > tmax:
        return False
    if t1 > tmax:
        t1 = tmax
    ix = np.empty(3, dtype=np.int64)
    step = np.empty(3, dtype=np.int64)
    tnext = np.empty(3, dtype=np.float64)
    tdelta = np.empty(3, dtype=np.float64)
    for a in range(3):
        pa = o[a] + t0 * d[a]
        ca = int(np.floor((pa - gmin[a]) / cell[a]))
        if ca < 0:
            ca = 0
        if ca >= res[a]:
            ca = res[a] - 1
        ix[a] = ca
        if d[a] > 0.0:
            step[a] = 1
            tnext[a] = t0 + ((gmin[a] + (ca + 1) * cell[a]) - pa) / d[a]
            tdelta[a] = cell[a] / d[a]
        elif d[a] < 0.0:
            step[a] = -1
            tnext[a] = t0 + ((gmin[a] + ca * cell[a]) - pa) / d[a]
            tdelta[a] = -cell[a] / d[a]
        else:
            step[a] = 0
            tnext[a] = np.inf
            tdelta[a] = np.inf
    while True:
        c = (ix[0] * res[1] + ix[1]) * res[2] + ix[2]
        for k in range(cell_start[c], cell_start[c + 1]):
            j = cell_items[k]
            t = _isect(px, py, pz, kx, ky, kz, sx, sy, sz, v0, v1, v2, j)
            if t >= tmin and t <= tmax:
                return True
        t_exit = min(tnext[0], min(tnext[1], tnext[2]))
        if t_exit > t1:
            return False
        if tnext[0] <= tnext[1] and tnext[0] <= tnext[2]:
            a = 0
        elif tnext[1] <= tnext[2]:
            a = 1
        else:
            a = 2
        ix[a] += step[a]
        if ix[a] < 0 or ix[a] >= res[a]:
            return False
        tnext[a] += tdelta[a]


@njit(cache=True, parallel=True)
def _ao_fractions(points, normals, base2d, rot, offset, max_dist,
                  v0, v1, v2, gmin, gmax, cell, res, cell_start, cell_items,
                  out):
    n = points.shape[0]
    nrays = base2d.shape[0]
    for i in prange(n):
        nx, ny, nz = normals[i, 0], normals[i, 1], normals[i, 2]
        ox = points[i, 0] + offset * nx
        oy = points[i, 1] + offset * ny
        oz = points[i, 2] + offset * nz
        # Branchless orthonormal basis around the normal.
        s = 1.0 if nz >= 0.0 else -1.0
        a = -1.0 / (s + nz)
        b = nx * ny * a
        t1x = 1.0 + s * nx * nx * a
        t1y = s * b
        t1z = -s * nx
        t2x = b
        t2y = s + ny * ny * a
        t2z = -ny
        free = 0
        for r in range(nrays):
            u = base2d[r, 0] + rot[i, 0]
            if u >= 1.0:
                u -= 1.0
            v = base2d[r, 1] + rot[i, 1]
            if v >= 1.0:
                v -= 1.0
            rad = np.sqrt(u)
            phi = 2.0 * np.pi * v
            lx = rad * np.cos(phi)
            ly = rad * np.sin(phi)
            lz = np.sqrt(1.0 - u)
            dx = lx * t1x + ly * t2x + lz * nx
            dy = lx * t1y + ly * t2y + lz * ny
            dz = lx * t1z + ly * t2z + lz * nz
            if not _any_hit_one(ox, oy, oz, dx, dy, dz, 0.0, max_dist,
                                v0, v1, v2, gmin, gmax, cell, res,
                                cell_start, cell_items):
                free += 1
        out[i] = free / nrays


@njit(cache=True)
def _fill_grid(lo, hi, res, counts, cell_start, cell_items, fill):
    m = lo.shape[0]
    if not fill:
        for j in range(m):
            for x in range(lo[j, 0], hi[j, 0] + 1):
                for y in range(lo[j, 1], hi[j, 1] + 1):
                    for z in range(lo[j, 2], hi[j, 2] + 1):
                        c = (x * res[1] + y) * res[2] + z
                        counts[c] += 1
    else:
        cursor = cell_start.copy()
        for j in range(m):
            for x in range(lo[j, 0], hi[j, 0] + 1):
                for y in range(lo[j, 1], hi[j, 1] + 1):
                    for z in range(lo[j, 2], hi[j, 2] + 1):
                        c = (x * res[1] + y) * res[2] + z
                        cell_items[cursor[c]] = j
                        cursor[c] += 1


@dataclass
class RaycastScene:
    """A mesh prepared for ray queries."""
    v0: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    tri_normals: np.ndarray
    gmin: np.ndarray
    gmax: np.ndarray
    cell: np.ndarray
    res: np.ndarray
    cell_start: np.ndarray
    cell_items: np.ndarray

    @classmethod
    def from_mesh(cls, mesh: TriangleMesh) -> "RaycastScene":
        if len(mesh.vertices) == 0 or len(mesh.triangles) == 0:
            raise EmptyMeshError("cannot build a scene from an empty mesh")
        v = mesh.vertices
        t = mesh.triangles
        v0 = np.ascontiguousarray(v[t[:, 0]])
        v1 = np.ascontiguousarray(v[t[:, 1]])
        v2 = np.ascontiguousarray(v[t[:, 2]])
        m = len(t)

        lo = np.minimum(np.minimum(v0, v1), v2)
        hi = np.maximum(np.maximum(v0, v1), v2)
        gmin = lo.min(axis=0)
        gmax = hi.max(axis=0)
        extent = gmax - gmin
        pad = max(1e-6, 1e-9 * float(extent.max())) + 1e-9 * np.maximum(extent, 1.0)
        gmin = gmin - pad
        gmax = gmax + pad
        extent = gmax - gmin

        # Resolution heuristic: roughly GRID_CELL_DENSITY triangles per cell,
        # cells close to cubical.
        target = max(1.0, (m / GRID_CELL_DENSITY))
        scale = (target / float(extent.prod())) ** (1.0 / 3.0)
        res = np.clip(np.ceil(extent * scale).astype(np.int64), 1, MAX_GRID_RES)
        cell = extent / res

        tlo = np.clip(((lo - gmin) / cell).astype(np.int64), 0, res - 1)
        thi = np.clip(((hi - gmin) / cell).astype(np.int64), 0, res - 1)
        ncells = int(res.prod())
        counts = np.zeros(ncells, dtype=np.int64)
        cell_start = np.zeros(ncells + 1, dtype=np.int64)
        _fill_grid(tlo, thi, res, counts, cell_start, counts, False)
        np.cumsum(counts, out=cell_start[1:])
        cell_items = np.empty(int(cell_start[-1]), dtype=np.int64)
        _fill_grid(tlo, thi, res, counts, cell_start, cell_items, True)

        return cls(v0=v0, v1=v1, v2=v2,
                   tri_normals=triangle_normals(mesh),
                   gmin=gmin, gmax=gmax, cell=cell, res=res,
                   cell_start=cell_start, cell_items=cell_items)

    def cast_nearest(self, origins: np.ndarray, dirs: np.ndarray,
                     tmax: float = np.inf) -> Tuple[np.ndarray, np.ndarray]:
        origins = np.ascontiguousarray(origins, dtype=np.float64)
        dirs = np.ascontiguousarray(dirs, dtype=np.float64)
        out_t = np.empty(len(origins))
        out_idx = np.empty(len(origins), dtype=np.int64)
        _cast_grid(origins, dirs, tmax, self.v0, self.v1, self.v2,
                   self.gmin, self.gmax, self.cell, self.res,
                   self.cell_start, self.cell_items, out_t, out_idx)
        return out_t, out_idx

    def cast_nearest_brute(self, origins: np.ndarray, dirs: np.ndarray,
                           tmax: float = np.inf) -> Tuple[np.ndarray, np.ndarray]:
        """Every-triangle scan, the test oracle for cast_nearest."""
        origins = np.ascontiguousarray(origins, dtype=np.float64)
        dirs = np.ascontiguousarray(dirs, dtype=np.float64)
        out_t = np.empty(len(origins))
        out_idx = np.empty(len(origins), dtype=np.int64)
        _cast_brute(origins, dirs, tmax, self.v0, self.v1, self.v2,
                    out_t, out_idx)
        return out_t, out_idx

    def ao_fractions(self, points: np.ndarray, normals: np.ndarray,
                     base2d: np.ndarray, rotations: np.ndarray,
                     offset: float, max_dist: float) -> np.ndarray:
        out = np.empty(len(points))
        _ao_fractions(np.ascontiguousarray(points, dtype=np.float64),
                      np.ascontiguousarray(normals, dtype=np.float64),
                      np.ascontiguousarray(base2d, dtype=np.float64),
                      np.ascontiguousarray(rotations, dtype=np.float64),
                      offset, max_dist, self.v0, self.v1, self.v2,
                      self.gmin, self.gmax, self.cell, self.res,
                      self.cell_start, self.cell_items, out)
        return out
