"""Training window extraction.

Positive windows come from per-brick renders: each brick is generated on its
own, placed in front of a mortar backdrop so the border radiometry matches a
real wall, baked, and cropped around its annotated face rect with a small
dilation.  Negative windows are cut from a full wall render at random
positions and scales, rejecting any window that overlaps an annotated brick
too much.  Both kinds are resampled to one fixed window size so the
classifier sees a single resolution.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .baking import (BakeParams, OrthoFrame, RaycastScene, bake_ao,
                     bake_height, curvature_from_height, frame_from_mesh,
                     rect_world_to_pixel)
from .cascade import DEFAULT_BASE_H, DEFAULT_BASE_W
from .errors import BrickscanError, ManifestSchemaError, NegativePoolExhaustedError
from .geometry import box_mesh, merge_meshes
from .grouping import iou
from .rng import STREAM_NEGATIVES, STREAM_POSITIVES, hash_u64, hash_unit
from .wallforge import DEFAULT_RECESS, Annotation, BrickSpec, generate_brick

DATASET_FORMAT = "brickscan-dataset-v1"
DATASET_MANIFEST = "dataset.json"
CHANNELS = ("height", "curvature", "ao")
DEFAULT_DILATION = 1.10
MIN_CROP_IOU = 0.64         # floor on IoU(annotation, jittered crop)
MAX_CROP_JITTER = 0.5
DEFAULT_NEG_MAX_IOU = 0.2
DEFAULT_NEG_SCALE_MAX = 3.0
NEG_ATTEMPTS_PER_SAMPLE = 100
BACKDROP_DEPTH = 30.0       # mm of mortar slab behind a lone brick
BACKDROP_MIN_PAD = 30.0     # mm of slab visible around the brick face


@dataclass
class SamplerParams:
    """Window geometry and render settings shared by both sample kinds."""
    base_w: int = DEFAULT_BASE_W
    base_h: int = DEFAULT_BASE_H
    pixel_size: float = 5.0
    depth_range: float = 60.0
    recess: float = DEFAULT_RECESS
    dilation: float = DEFAULT_DILATION
    crop_jitter: float = 0.0
    channel: str = "height"
    rays_per_pixel: int = 16
    ao_max_dist: float = 150.0
    neg_max_iou: float = DEFAULT_NEG_MAX_IOU
    neg_scale_max: float = DEFAULT_NEG_SCALE_MAX

    def __post_init__(self):
        if self.base_w < 4 or self.base_h < 4:
            raise BrickscanError("window size must be at least 4x4")
        if self.pixel_size <= 0 or self.depth_range <= 0:
            raise BrickscanError("pixel_size and depth_range must be positive")
        if self.recess < 0:
            raise BrickscanError("recess cannot be negative")
        if self.dilation < 1.0:
            raise BrickscanError("dilation must be at least 1.0")
        if not 0.0 <= self.crop_jitter <= MAX_CROP_JITTER:
            raise BrickscanError(
                f"crop_jitter must be in [0, {MAX_CROP_JITTER}]")
        if self.channel not in CHANNELS:
            raise BrickscanError(f"channel must be one of {CHANNELS}")
        if self.rays_per_pixel < 1:
            raise BrickscanError("rays_per_pixel must be at least 1")
        if not 0.0 < self.neg_max_iou <= 1.0:
            raise BrickscanError("neg_max_iou must be in (0, 1]")
        if self.neg_scale_max < 1.0:
            raise BrickscanError("neg_scale_max must be at least 1.0")

    def bake_params(self) -> BakeParams:
        return BakeParams(pixel_size=self.pixel_size,
                          depth_range=self.depth_range,
                          rays_per_pixel=self.rays_per_pixel,
                          ao_max_dist=self.ao_max_dist)


@dataclass
class Sample:
    image: np.ndarray
    label: int
    meta: dict = field(default_factory=dict)


def dilate_rect(rect: Tuple[float, float, float, float],
                factor: float) -> Tuple[float, float, float, float]:
    """Grow a rect about its own center."""
    x, y, w, h = (float(v) for v in rect)
    nw = w * factor
    nh = h * factor
    return (x + (w - nw) / 2.0, y + (h - nh) / 2.0, nw, nh)


def resample_window(image: np.ndarray, rect, out_w: int, out_h: int) -> np.ndarray:
    """Bilinearly resample a pixel rect to (out_h, out_w).

    Output pixel centers map onto the rect's own pixel-center lattice, so a
    crop at native scale reproduces the source values exactly.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise BrickscanError("resample_window expects a single-channel image")
    x, y, w, h = (float(v) for v in rect)
    if w <= 0 or h <= 0 or out_w < 1 or out_h < 1:
        raise BrickscanError("resample rect and output size must be positive")
    cols = x + (np.arange(out_w, dtype=np.float64) + 0.5) * (w / out_w) - 0.5
    rows = y + (np.arange(out_h, dtype=np.float64) + 0.5) * (h / out_h) - 0.5
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    return ndimage.map_coordinates(img, [rr, cc], order=1, mode="nearest")


def bake_channel(mesh, frame: OrthoFrame, params: SamplerParams,
                 seed: int) -> np.ndarray:
    """Bake just the configured training channel of a mesh."""
    scene = RaycastScene.from_mesh(mesh)
    if params.channel == "ao":
        return bake_ao(scene, frame, seed, params.rays_per_pixel,
                       params.ao_max_dist)
    height = bake_height(scene, frame, params.depth_range)
    if params.channel == "height":
        return height
    return curvature_from_height(height, frame.pixel_size, params.depth_range)


def _backdrop_slab(spec: BrickSpec, params: SamplerParams):
    grow = params.dilation * (1.0 + params.crop_jitter) - 1.0
    pad = max(BACKDROP_MIN_PAD, grow * spec.face_length)
    extent = (spec.face_length + 2.0 * pad, spec.face_height + 2.0 * pad,
              BACKDROP_DEPTH)
    slab = box_mesh(extent)
    return slab.translated((-pad, -pad, -params.recess - BACKDROP_DEPTH))


def jittered_crop(rect_px: Tuple[float, float, float, float],
                  params: SamplerParams, seed: int,
                  index: int) -> Tuple[float, float, float, float]:
    """Crop rect for one positive: nominal dilation plus seeded framing jitter.

    The detector never sees a brick framed exactly like the nominal crop at
    scan time, so training crops vary their margin and offset.  The
    annotation always stays inside the crop, which bounds IoU(annotation,
    crop) from below by 1 / (grow_w * grow_h) >= MIN_CROP_IOU.
    """
    x, y, w, h = (float(v) for v in rect_px)
    if params.crop_jitter == 0.0:
        return dilate_rect(rect_px, params.dilation)
    u_w = float(hash_unit(seed, STREAM_POSITIVES, index, 1))
    u_h = float(hash_unit(seed, STREAM_POSITIVES, index, 2))
    u_x = float(hash_unit(seed, STREAM_POSITIVES, index, 3))
    u_y = float(hash_unit(seed, STREAM_POSITIVES, index, 4))
    gw = params.dilation * (1.0 + params.crop_jitter * u_w)
    gh = params.dilation * (1.0 + params.crop_jitter * u_h)
    cap = 1.0 / MIN_CROP_IOU
    if gw * gh > cap:
        shrink = np.sqrt(cap / (gw * gh))
        gw *= shrink
        gh *= shrink
    cw = w * gw
    ch = h * gh
    dx = (2.0 * u_x - 1.0) * (cw - w) / 2.0
    dy = (2.0 * u_y - 1.0) * (ch - h) / 2.0
    return (x + (w - cw) / 2.0 + dx, y + (h - ch) / 2.0 + dy, cw, ch)


def generate_positives(spec: BrickSpec, count: int, seed: int,
                       params: Optional[SamplerParams] = None) -> List[Sample]:
    """Render `count` single-brick scenes and crop their annotated faces."""
    if params is None:
        params = SamplerParams()
    if count < 0:
        raise BrickscanError("count cannot be negative")
    slab = _backdrop_slab(spec, params)
    samples: List[Sample] = []
    for i in range(count):
        child = int(hash_u64(seed, STREAM_POSITIVES, i))
        brick, ann = generate_brick(spec, child)
        scene_mesh = merge_meshes([brick, slab])
        frame = frame_from_mesh(scene_mesh.bbox(), params.pixel_size)
        img = bake_channel(scene_mesh, frame, params, child)
        rect_px = rect_world_to_pixel(frame, ann.rect_mm)
        crop = jittered_crop(rect_px, params, seed, i)
        patch = resample_window(img, crop, params.base_w, params.base_h)
        samples.append(Sample(image=patch, label=1, meta={
            "kind": "brick",
            "index": i,
            "seed": child,
            "rect_px": [round(v, 6) for v in rect_px],
            "crop_px": [round(v, 6) for v in crop],
        }))
    return samples


def generate_negatives(image: np.ndarray, exclude_rects: Sequence,
                       count: int, seed: int,
                       params: Optional[SamplerParams] = None,
                       salt: int = 0, strict: bool = True) -> List[Sample]:
    """Cut `count` windows that barely overlap any excluded rect.

    Draws are a pure function of (seed, salt, attempt), so a batch does not
    depend on what was drawn before it.  With `strict` a shortfall raises
    NegativePoolExhaustedError; otherwise the partial batch is returned.
    """
    if params is None:
        params = SamplerParams()
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise BrickscanError("generate_negatives expects a single-channel image")
    if count < 0:
        raise BrickscanError("count cannot be negative")
    ih, iw = img.shape
    excludes = [tuple(float(v) for v in r) for r in exclude_rects]
    limit = NEG_ATTEMPTS_PER_SAMPLE * max(count, 1)
    samples: List[Sample] = []
    for attempt in range(limit):
        if len(samples) == count:
            break
        u_scale = float(hash_unit(seed, STREAM_NEGATIVES, salt, attempt, 0))
        u_x = float(hash_unit(seed, STREAM_NEGATIVES, salt, attempt, 1))
        u_y = float(hash_unit(seed, STREAM_NEGATIVES, salt, attempt, 2))
        s = 1.0 + u_scale * (params.neg_scale_max - 1.0)
        # Same rounding as the detector's scale ladder, so negatives mirror
        # the window shapes seen at scan time.
        w = int(np.floor(params.base_w * s + 0.5))
        h = int(np.floor(params.base_h * s + 0.5))
        if w > iw or h > ih:
            continue
        x = min(int(np.floor(u_x * (iw - w + 1))), iw - w)
        y = min(int(np.floor(u_y * (ih - h + 1))), ih - h)
        rect = (float(x), float(y), float(w), float(h))
        if any(iou(rect, ex) >= params.neg_max_iou for ex in excludes):
            continue
        patch = resample_window(img, rect, params.base_w, params.base_h)
        samples.append(Sample(image=patch, label=0, meta={
            "kind": "window",
            "crop_px": [x, y, w, h],
            "scale": round(s, 9),
            "salt": salt,
            "attempt": attempt,
        }))
    if len(samples) < count and strict:
        raise NegativePoolExhaustedError(
            f"found {len(samples)} of {count} negatives in {limit} attempts")
    return samples


def negative_source(image: np.ndarray, exclude_rects: Sequence, seed: int,
                    params: Optional[SamplerParams] = None,
                    first_salt: int = 1) -> Callable[[int], List[np.ndarray]]:
    """Bootstrap feed for cascade training.

    Each call draws a fresh batch keyed by an advancing salt.  Exhaustion
    shows up as a short or empty batch rather than an exception, which is
    the contract cascade training expects.
    """
    state = {"salt": first_salt}

    def source(n: int) -> List[np.ndarray]:
        salt = state["salt"]
        state["salt"] = salt + 1
        batch = generate_negatives(image, exclude_rects, n, seed,
                                   params=params, salt=salt, strict=False)
        return [s.image for s in batch]

    return source


def annotation_px_rects(frame: OrthoFrame,
                        annotations: Sequence[Annotation]) -> List[Tuple[float, float, float, float]]:
    """Pixel-space face rects for a baked wall's annotations."""
    return [rect_world_to_pixel(frame, a.rect_mm) for a in annotations]


def save_dataset(directory, samples: Sequence[Sample], channel: str,
                 base_w: int, base_h: int) -> None:
    """Write samples as 16-bit PNGs plus a manifest describing them."""
    from .pngio import save_gray16
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, sample in enumerate(samples):
        if sample.image.shape != (base_h, base_w):
            raise BrickscanError(
                f"sample {i} has shape {sample.image.shape}, "
                f"expected {(base_h, base_w)}")
        if sample.label not in (0, 1):
            raise BrickscanError(f"sample {i} has label {sample.label}")
        name = f"sample_{i:05d}.png"
        save_gray16(out / name, sample.image)
        entries.append({"file": name, "label": int(sample.label),
                        "meta": sample.meta})
    manifest = {
        "format": DATASET_FORMAT,
        "channel": channel,
        "base_w": int(base_w),
        "base_h": int(base_h),
        "samples": entries,
    }
    text = json.dumps(manifest, sort_keys=True, indent=2) + "\n"
    (out / DATASET_MANIFEST).write_text(text)


def load_dataset(directory) -> Tuple[List[Sample], dict]:
    """Read a dataset directory back, validating the manifest layout."""
    from .pngio import load_gray16
    root = Path(directory)
    path = root / DATASET_MANIFEST
    if not path.is_file():
        raise ManifestSchemaError(f"missing {DATASET_MANIFEST} in {root}")
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestSchemaError(f"unreadable manifest: {exc}") from exc
    if not isinstance(manifest, dict):
        raise ManifestSchemaError("manifest must be a JSON object")
    if manifest.get("format") != DATASET_FORMAT:
        raise ManifestSchemaError(
            f"unsupported dataset format {manifest.get('format')!r}")
    for key in ("channel", "base_w", "base_h", "samples"):
        if key not in manifest:
            raise ManifestSchemaError(f"manifest lacks key {key!r}")
    if manifest["channel"] not in CHANNELS:
        raise ManifestSchemaError(f"unknown channel {manifest['channel']!r}")
    base_w = manifest["base_w"]
    base_h = manifest["base_h"]
    if not isinstance(base_w, int) or not isinstance(base_h, int) \
            or base_w < 1 or base_h < 1:
        raise ManifestSchemaError("base_w and base_h must be positive ints")
    if not isinstance(manifest["samples"], list):
        raise ManifestSchemaError("samples must be a list")
    samples: List[Sample] = []
    for i, entry in enumerate(manifest["samples"]):
        if not isinstance(entry, dict) or "file" not in entry \
                or "label" not in entry:
            raise ManifestSchemaError(f"sample entry {i} is malformed")
        if entry["label"] not in (0, 1):
            raise ManifestSchemaError(f"sample entry {i} has a bad label")
        img_path = root / entry["file"]
        if not img_path.is_file():
            raise ManifestSchemaError(f"missing sample file {entry['file']}")
        img = load_gray16(img_path)
        if img.shape != (base_h, base_w):
            raise ManifestSchemaError(
                f"sample {entry['file']} has shape {img.shape}, "
                f"manifest says {(base_h, base_w)}")
        samples.append(Sample(image=img, label=int(entry["label"]),
                              meta=entry.get("meta", {})))
    return samples, manifest
