"""Orthographic relief baking.

A mesh is rendered from a parallel camera into four single-channel or RGB
maps: height (1.0 at the frame plane falling to 0.0 at ``depth_range``),
an encoded normal map, a curvature map derived from height, and hemisphere
ambient occlusion.  All rays run against :class:`RaycastScene`.

Frame conventions: ``view = right x up`` points from the scene toward the
camera, rays travel along ``-view``, and the origin sits at the top-left
corner of the image on the frame plane.  Pixel (row j, col i) has its center
at ``origin + (i + 0.5) * ps * right - (j + 0.5) * ps * up``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import BrickscanError
from .raycast import RaycastScene
from .rng import hash_unit

DEFAULT_PIXEL_SIZE = 5.0      # mm per pixel
DEFAULT_DEPTH_RANGE = 60.0    # mm from frame plane to height value 0.0
DEFAULT_AO_RAYS = 16
DEFAULT_AO_MAX_DIST = 150.0   # mm
AO_ORIGIN_OFFSET = 1e-3       # mm along the surface normal
MISS_NORMAL_RGB = (0.5, 0.5, 1.0)
_UNIT_TOL = 1e-9


@dataclass(frozen=True)
class OrthoFrame:
    """Parallel-projection image frame in world millimetres."""
    origin: Tuple[float, float, float]
    right: Tuple[float, float, float]
    up: Tuple[float, float, float]
    pixel_size: float
    width: int
    height: int

    def __post_init__(self):
        r = np.asarray(self.right, dtype=np.float64)
        u = np.asarray(self.up, dtype=np.float64)
        if abs(np.linalg.norm(r) - 1.0) > _UNIT_TOL or abs(np.linalg.norm(u) - 1.0) > _UNIT_TOL:
            raise BrickscanError("frame axes must be unit length")
        if abs(float(r @ u)) > _UNIT_TOL:
            raise BrickscanError("frame axes must be orthogonal")
        if self.pixel_size <= 0:
            raise BrickscanError("pixel_size must be positive")
        if self.width < 1 or self.height < 1:
            raise BrickscanError("frame must be at least 1x1 pixels")

    @property
    def view(self) -> np.ndarray:
        """Unit vector from the scene toward the camera."""
        return np.cross(np.asarray(self.right, dtype=np.float64),
                        np.asarray(self.up, dtype=np.float64))

    def pixel_centers(self) -> np.ndarray:
        """World positions of all pixel centers, shape (height*width, 3)."""
        o = np.asarray(self.origin, dtype=np.float64)
        r = np.asarray(self.right, dtype=np.float64)
        u = np.asarray(self.up, dtype=np.float64)
        cols = (np.arange(self.width) + 0.5) * self.pixel_size
        rows = (np.arange(self.height) + 0.5) * self.pixel_size
        pts = (o[None, None, :]
               + cols[None, :, None] * r[None, None, :]
               - rows[:, None, None] * u[None, None, :])
        return pts.reshape(-1, 3)

    def world_to_pixel(self, points: np.ndarray) -> np.ndarray:
        """Project world points onto the image, returns (n, 2) of (x, y) px."""
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        o = np.asarray(self.origin, dtype=np.float64)
        r = np.asarray(self.right, dtype=np.float64)
        u = np.asarray(self.up, dtype=np.float64)
        x = (p - o) @ r / self.pixel_size
        y = -((p - o) @ u) / self.pixel_size
        return np.stack([x, y], axis=-1)

    def to_dict(self) -> dict:
        return {
            "origin": [float(c) for c in self.origin],
            "right": [float(c) for c in self.right],
            "up": [float(c) for c in self.up],
            "pixel_size": float(self.pixel_size),
            "width": int(self.width),
            "height": int(self.height),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OrthoFrame":
        return cls(origin=tuple(d["origin"]), right=tuple(d["right"]),
                   up=tuple(d["up"]), pixel_size=float(d["pixel_size"]),
                   width=int(d["width"]), height=int(d["height"]))


def frame_from_mesh(mesh_bbox: Tuple[np.ndarray, np.ndarray], pixel_size: float,
                    margin: float = 0.0) -> OrthoFrame:
    """Front-facing frame covering the XY extent of a bbox.

    The frame plane sits at the bbox maximum z, so height value 1.0 is the
    closest point of the mesh.
    """
    lo, hi = mesh_bbox
    width = max(1, int(math.ceil((hi[0] - lo[0] + 2 * margin) / pixel_size)))
    height = max(1, int(math.ceil((hi[1] - lo[1] + 2 * margin) / pixel_size)))
    origin = (float(lo[0] - margin), float(hi[1] + margin), float(hi[2]))
    return OrthoFrame(origin=origin, right=(1.0, 0.0, 0.0), up=(0.0, 1.0, 0.0),
                      pixel_size=pixel_size, width=width, height=height)


def rect_world_to_pixel(frame: OrthoFrame, rect_mm: Tuple[float, float, float, float],
                        z: float = 0.0) -> Tuple[float, float, float, float]:
    """Map an (x, y, w, h) world rect with y pointing up onto image pixels.

    Returns (x, y, w, h) in pixel units with y pointing down, as floats.
    """
    x, y, w, h = (float(v) for v in rect_mm)
    corners = np.array([[x, y + h, z], [x + w, y, z]], dtype=np.float64)
    px = frame.world_to_pixel(corners)
    return (float(px[0, 0]), float(px[0, 1]),
            float(px[1, 0] - px[0, 0]), float(px[1, 1] - px[0, 1]))


def _primary_rays(frame: OrthoFrame) -> Tuple[np.ndarray, np.ndarray]:
    origins = frame.pixel_centers()
    dirs = np.broadcast_to(-frame.view, origins.shape).copy()
    return origins, dirs


def bake_height(scene: RaycastScene, frame: OrthoFrame,
                depth_range: float = DEFAULT_DEPTH_RANGE) -> np.ndarray:
    """Height values in [0, 1]; 1.0 at the frame plane, 0.0 on miss."""
    origins, dirs = _primary_rays(frame)
    t, idx = scene.cast_nearest(origins, dirs)
    v = np.clip(1.0 - t / depth_range, 0.0, 1.0)
    v[idx < 0] = 0.0
    return v.reshape(frame.height, frame.width)


def _flipped_hit_normals(scene: RaycastScene, idx: np.ndarray,
                         view: np.ndarray) -> np.ndarray:
    n = scene.tri_normals[np.maximum(idx, 0)]
    facing = n @ view
    n = np.where(facing[:, None] < 0.0, -n, n)
    return n


def encode_normals(normals: np.ndarray, frame: OrthoFrame) -> np.ndarray:
    """World normals (..., 3) to RGB in [0, 1] in the frame basis."""
    basis = np.stack([np.asarray(frame.right, dtype=np.float64),
                      np.asarray(frame.up, dtype=np.float64),
                      frame.view])
    return np.clip((normals @ basis.T + 1.0) * 0.5, 0.0, 1.0)


def bake_normal(scene: RaycastScene, frame: OrthoFrame) -> np.ndarray:
    """Encoded normal map (h, w, 3); misses encode straight-at-camera."""
    origins, dirs = _primary_rays(frame)
    t, idx = scene.cast_nearest(origins, dirs)
    view = frame.view
    n = _flipped_hit_normals(scene, idx, view)
    rgb = encode_normals(n, frame)
    rgb[idx < 0] = MISS_NORMAL_RGB
    return rgb.reshape(frame.height, frame.width, 3)


def bake_ao(scene: RaycastScene, frame: OrthoFrame, seed: int,
            rays_per_pixel: int = DEFAULT_AO_RAYS,
            max_dist: float = DEFAULT_AO_MAX_DIST) -> np.ndarray:
    """Hemisphere ambient occlusion: fraction of unoccluded sample rays.

    Sample directions are cosine weighted over the hemisphere of the
    (camera-facing) surface normal, drawn from a Hammersley set rotated
    per pixel by a hash of the pixel index, so the result is independent
    of traversal order and thread count.
    """
    origins, dirs = _primary_rays(frame)
    t, idx = scene.cast_nearest(origins, dirs)
    hit = idx >= 0
    out = np.ones(len(origins))
    if np.any(hit):
        points = origins[hit] + t[hit, None] * dirs[hit]
        normals = _flipped_hit_normals(scene, idx[hit], frame.view)
        base = _hammersley(rays_per_pixel)
        lin = np.flatnonzero(hit)
        rot = np.stack([hash_unit(seed, lin, np.zeros_like(lin)),
                        hash_unit(seed, lin, np.ones_like(lin))], axis=1)
        out[hit] = scene.ao_fractions(points, normals, base, rot,
                                      AO_ORIGIN_OFFSET, max_dist)
    return out.reshape(frame.height, frame.width)


def _hammersley(n: int) -> np.ndarray:
    """First n points of the Hammersley set in [0, 1)^2."""
    i = np.arange(n, dtype=np.uint32)
    bits = i.copy()
    bits = (bits << np.uint32(16)) | (bits >> np.uint32(16))
    bits = ((bits & np.uint32(0x00FF00FF)) << np.uint32(8)) | ((bits & np.uint32(0xFF00FF00)) >> np.uint32(8))
    bits = ((bits & np.uint32(0x0F0F0F0F)) << np.uint32(4)) | ((bits & np.uint32(0xF0F0F0F0)) >> np.uint32(4))
    bits = ((bits & np.uint32(0x33333333)) << np.uint32(2)) | ((bits & np.uint32(0xCCCCCCCC)) >> np.uint32(2))
    bits = ((bits & np.uint32(0x55555555)) << np.uint32(1)) | ((bits & np.uint32(0xAAAAAAAA)) >> np.uint32(1))
    return np.stack([i / n, bits.astype(np.float64) * 2.0 ** -32], axis=1)


def normal_from_height(values: np.ndarray, pixel_size: float,
                       depth_scale: float) -> np.ndarray:
    """Encoded normal map recovered from a height-value image.

    ``depth_scale`` is the physical depth spanned by value 1.0, normally the
    bake's depth_range.  Central differences inside, one-sided at borders.
    """
    v = np.asarray(values, dtype=np.float64)
    gx = np.empty_like(v)
    gx[:, 1:-1] = (v[:, 2:] - v[:, :-2]) * 0.5
    gx[:, 0] = v[:, 1] - v[:, 0]
    gx[:, -1] = v[:, -1] - v[:, -2]
    # Derivative with respect to the up axis: up runs against row order.
    gy = np.empty_like(v)
    gy[1:-1, :] = (v[:-2, :] - v[2:, :]) * 0.5
    gy[0, :] = v[0, :] - v[1, :]
    gy[-1, :] = v[-2, :] - v[-1, :]
    k = depth_scale / pixel_size
    n = np.stack([-gx * k, -gy * k, np.ones_like(v)], axis=-1)
    n /= np.linalg.norm(n, axis=-1, keepdims=True)
    return np.clip((n + 1.0) * 0.5, 0.0, 1.0)


def curvature_from_height(values: np.ndarray, pixel_size: float,
                          depth_scale: float,
                          gain: Optional[float] = None) -> np.ndarray:
    """Curvature image in [0, 1]; surfaces convex toward the camera > 0.5.

    Encodes the negated 5-point Laplacian of the physical height field,
    ``clip(0.5 + gain * (-lap), 0, 1)``.  The default gain resolves about
    one value step per 0.05/mm of curvature at the working resolution.
    """
    if gain is None:
        gain = 10.0 * pixel_size ** 2
    v = np.asarray(values, dtype=np.float64) * depth_scale
    p = np.pad(v, 1, mode="edge")
    lap = (p[1:-1, 2:] + p[1:-1, :-2] + p[2:, 1:-1] + p[:-2, 1:-1]
           - 4.0 * v) / pixel_size ** 2
    return np.clip(0.5 - gain * lap, 0.0, 1.0)


@dataclass
class BakeParams:
    pixel_size: float = DEFAULT_PIXEL_SIZE
    depth_range: float = DEFAULT_DEPTH_RANGE
    margin: float = 0.0
    rays_per_pixel: int = DEFAULT_AO_RAYS
    ao_max_dist: float = DEFAULT_AO_MAX_DIST
    curvature_gain: Optional[float] = None

    def __post_init__(self):
        if self.pixel_size <= 0 or self.depth_range <= 0:
            raise BrickscanError("pixel_size and depth_range must be positive")
        if self.rays_per_pixel < 1:
            raise BrickscanError("rays_per_pixel must be at least 1")
        if self.ao_max_dist <= 0:
            raise BrickscanError("ao_max_dist must be positive")
        if self.margin < 0:
            raise BrickscanError("margin cannot be negative")


@dataclass
class SurfaceMapSet:
    """The four baked relief maps plus the frame that generated them."""
    frame: OrthoFrame
    depth_range: float
    height: np.ndarray
    normal: np.ndarray
    curvature: np.ndarray
    ao: np.ndarray

    def channel(self, name: str) -> np.ndarray:
        maps = {"height": self.height, "normal": self.normal,
                "curvature": self.curvature, "ao": self.ao}
        if name not in maps:
            raise KeyError(f"unknown map channel {name!r}")
        return maps[name]


def bake_map_set(mesh, params: BakeParams, seed: int,
                 frame: Optional[OrthoFrame] = None) -> SurfaceMapSet:
    """Bake all four maps of a mesh from the front."""
    scene = RaycastScene.from_mesh(mesh)
    if frame is None:
        frame = frame_from_mesh(mesh.bbox(), params.pixel_size, params.margin)
    height = bake_height(scene, frame, params.depth_range)
    normal = bake_normal(scene, frame)
    curvature = curvature_from_height(height, frame.pixel_size,
                                      params.depth_range, params.curvature_gain)
    ao = bake_ao(scene, frame, seed, params.rays_per_pixel, params.ao_max_dist)
    return SurfaceMapSet(frame=frame, depth_range=params.depth_range,
                         height=height, normal=normal, curvature=curvature,
                         ao=ao)
