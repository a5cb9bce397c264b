"""PNG persistence for baked map sets.

Height maps carry the most signal and are stored as 16-bit grayscale;
ambient occlusion and curvature as 8-bit grayscale; normals as 8-bit RGB.
The projection frame and depth range ride along in a JSON sidecar so a map
set can be reloaded with its world geometry intact.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image

from .baking import OrthoFrame, SurfaceMapSet
from .errors import ManifestSchemaError

FRAME_FORMAT = "brickscan-maps-v1"
FRAME_SIDECAR = "frame.json"
MAP_FILES = {"height": "height.png", "normal": "normal.png",
             "curvature": "curvature.png", "ao": "ao.png"}

PathLike = Union[str, Path]


def quantize16(values: np.ndarray) -> np.ndarray:
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    return np.round(v * 65535.0).astype(np.uint16)


def dequantize16(raw: np.ndarray) -> np.ndarray:
    return raw.astype(np.float64) / 65535.0


def quantize8(values: np.ndarray) -> np.ndarray:
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    return np.round(v * 255.0).astype(np.uint8)


def dequantize8(raw: np.ndarray) -> np.ndarray:
    return raw.astype(np.float64) / 255.0


def save_gray16(path: PathLike, values: np.ndarray) -> None:
    Image.fromarray(quantize16(values)).save(Path(path), format="PNG")


def load_gray16(path: PathLike) -> np.ndarray:
    raw = np.asarray(Image.open(Path(path))).astype(np.uint16)
    return dequantize16(raw)


def save_gray8(path: PathLike, values: np.ndarray) -> None:
    Image.fromarray(quantize8(values)).save(Path(path), format="PNG")


def load_gray8(path: PathLike) -> np.ndarray:
    raw = np.asarray(Image.open(Path(path)))
    return dequantize8(raw)


def save_rgb8(path: PathLike, values: np.ndarray) -> None:
    Image.fromarray(quantize8(values)).save(Path(path), format="PNG")


def load_rgb8(path: PathLike) -> np.ndarray:
    raw = np.asarray(Image.open(Path(path)))
    return dequantize8(raw)


def save_map_set(directory: PathLike, maps: SurfaceMapSet) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    save_gray16(d / MAP_FILES["height"], maps.height)
    save_rgb8(d / MAP_FILES["normal"], maps.normal)
    save_gray8(d / MAP_FILES["curvature"], maps.curvature)
    save_gray8(d / MAP_FILES["ao"], maps.ao)
    sidecar = {
        "format": FRAME_FORMAT,
        "frame": maps.frame.to_dict(),
        "depth_range": float(maps.depth_range),
    }
    (d / FRAME_SIDECAR).write_text(json.dumps(sidecar, sort_keys=True,
                                              indent=2) + "\n")


def load_map_set(directory: PathLike) -> SurfaceMapSet:
    d = Path(directory)
    sidecar_path = d / FRAME_SIDECAR
    if not sidecar_path.exists():
        raise ManifestSchemaError(f"no {FRAME_SIDECAR} in {d}")
    try:
        sidecar = json.loads(sidecar_path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestSchemaError(f"unreadable {sidecar_path}: {exc}") from exc
    if sidecar.get("format") != FRAME_FORMAT:
        raise ManifestSchemaError(
            f"unsupported map-set format {sidecar.get('format')!r}")
    try:
        frame = OrthoFrame.from_dict(sidecar["frame"])
        depth_range = float(sidecar["depth_range"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestSchemaError(f"bad frame sidecar: {exc}") from exc
    height = load_gray16(d / MAP_FILES["height"])
    normal = load_rgb8(d / MAP_FILES["normal"])
    curvature = load_gray8(d / MAP_FILES["curvature"])
    ao = load_gray8(d / MAP_FILES["ao"])
    for name, arr in (("height", height), ("curvature", curvature),
                      ("ao", ao)):
        if arr.shape != (frame.height, frame.width):
            raise ManifestSchemaError(
                f"{name} map shape {arr.shape} does not match frame "
                f"{(frame.height, frame.width)}")
    if normal.shape != (frame.height, frame.width, 3):
        raise ManifestSchemaError("normal map shape does not match frame")
    return SurfaceMapSet(frame=frame, depth_range=depth_range, height=height,
                         normal=normal, curvature=curvature, ao=ao)
