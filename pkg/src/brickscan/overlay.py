"""Detection overlays rendered onto baked maps.

Pure numpy rasterization, so overlay output is identical across platforms.
Text uses a small built-in 5x7 pixel font covering what detection labels
need: digits, a few class letters, and simple punctuation.
"""

from __future__ import annotations

from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .errors import BrickscanError
from .grouping import Detection

BOX_COLOR = (0, 0, 255)
LABEL_COLOR = (255, 127, 0)
BOX_THICKNESS = 2
GLYPH_W = 5
GLYPH_H = 7

_GLYPHS: Dict[str, Tuple[str, ...]] = {
    "0": ("01110", "10001", "10011", "10101", "11001", "10001", "01110"),
    "1": ("00100", "01100", "00100", "00100", "00100", "00100", "01110"),
    "2": ("01110", "10001", "00001", "00110", "01000", "10000", "11111"),
    "3": ("01110", "10001", "00001", "00110", "00001", "10001", "01110"),
    "4": ("00010", "00110", "01010", "10010", "11111", "00010", "00010"),
    "5": ("11111", "10000", "11110", "00001", "00001", "10001", "01110"),
    "6": ("01110", "10000", "10000", "11110", "10001", "10001", "01110"),
    "7": ("11111", "00001", "00010", "00100", "01000", "01000", "01000"),
    "8": ("01110", "10001", "10001", "01110", "10001", "10001", "01110"),
    "9": ("01110", "10001", "10001", "01111", "00001", "00001", "01110"),
    "S": ("01111", "10000", "10000", "01110", "00001", "00001", "11110"),
    "L": ("10000", "10000", "10000", "10000", "10000", "10000", "11111"),
    "H": ("10001", "10001", "10001", "11111", "10001", "10001", "10001"),
    "V": ("10001", "10001", "10001", "10001", "01010", "01010", "00100"),
    "X": ("10001", "10001", "01010", "00100", "01010", "10001", "10001"),
    "-": ("00000", "00000", "00000", "11111", "00000", "00000", "00000"),
    ".": ("00000", "00000", "00000", "00000", "00000", "01100", "01100"),
    " ": ("00000", "00000", "00000", "00000", "00000", "00000", "00000"),
}


def gray_to_rgb(image: np.ndarray) -> np.ndarray:
    """Expand a [0, 1] single-channel map to an 8-bit RGB canvas."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise BrickscanError("gray_to_rgb expects a single-channel image")
    g = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
    return np.stack([g, g, g], axis=-1)


def draw_box(canvas: np.ndarray, rect, color=BOX_COLOR,
             thickness: int = BOX_THICKNESS) -> None:
    """Paint a rect outline in place, clipped to the canvas."""
    if canvas.ndim != 3 or canvas.shape[2] != 3:
        raise BrickscanError("canvas must be an RGB array")
    if thickness < 1:
        raise BrickscanError("thickness must be at least 1")
    h, w = canvas.shape[:2]
    x0 = int(np.floor(rect[0] + 0.5))
    y0 = int(np.floor(rect[1] + 0.5))
    x1 = x0 + int(np.floor(rect[2] + 0.5))
    y1 = y0 + int(np.floor(rect[3] + 0.5))
    col = np.array(color, dtype=np.uint8)

    def fill(r0, r1, c0, c1):
        r0, r1 = max(r0, 0), min(r1, h)
        c0, c1 = max(c0, 0), min(c1, w)
        if r0 < r1 and c0 < c1:
            canvas[r0:r1, c0:c1] = col

    t = thickness
    fill(y0, y0 + t, x0, x1)          # top
    fill(y1 - t, y1, x0, x1)          # bottom
    fill(y0, y1, x0, x0 + t)          # left
    fill(y0, y1, x1 - t, x1)          # right


def glyph_mask(ch: str) -> np.ndarray:
    rows = _GLYPHS.get(ch, _GLYPHS["X"])
    return np.array([[c == "1" for c in row] for row in rows], dtype=bool)


def draw_text(canvas: np.ndarray, x: int, y: int, text: str,
              color=LABEL_COLOR) -> None:
    """Stamp 5x7 glyphs left to right from (x, y), clipped to the canvas."""
    if canvas.ndim != 3 or canvas.shape[2] != 3:
        raise BrickscanError("canvas must be an RGB array")
    h, w = canvas.shape[:2]
    col = np.array(color, dtype=np.uint8)
    cx = int(x)
    for ch in str(text):
        mask = glyph_mask(ch)
        for gy in range(GLYPH_H):
            for gx in range(GLYPH_W):
                if not mask[gy, gx]:
                    continue
                py, px = int(y) + gy, cx + gx
                if 0 <= py < h and 0 <= px < w:
                    canvas[py, px] = col
        cx += GLYPH_W + 1


def render_overlay(image: np.ndarray, detections: Sequence[Detection],
                   labels: Optional[Sequence[str]] = None) -> np.ndarray:
    """Gray base image with one box and label per detection.

    Labels default to 1-based rank.  Text sits just above each box when
    there is room and inside it otherwise.
    """
    canvas = gray_to_rgb(image)
    if labels is not None and len(labels) != len(detections):
        raise BrickscanError("labels must align with detections")
    for i, d in enumerate(detections):
        draw_box(canvas, (d.x, d.y, d.w, d.h))
        text = str(labels[i]) if labels is not None else str(i + 1)
        ty = int(np.floor(d.y + 0.5)) - GLYPH_H - 1
        if ty < 0:
            ty = int(np.floor(d.y + 0.5)) + BOX_THICKNESS + 1
        draw_text(canvas, int(np.floor(d.x + 0.5)) + 1, ty, text)
    return canvas
