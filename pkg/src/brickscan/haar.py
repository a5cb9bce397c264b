"""Rectangular contrast features evaluated on integral images.

A feature is a small arrangement of axis-aligned rectangles inside a base
window; its raw value is the weighted sum of rectangle sums (weights add to
zero, so flat windows score zero) and the reported value is the raw value
divided by window std times the feature's pixel area, which makes it
invariant to brightness offset, contrast scale, and window magnification.

Scaling to a larger window moves the rectangle EDGES, each rounded half-up
independently, so adjacent rectangles stay flush and the whole feature stays
inside the window at every scale.  Rounding can unbalance the partition
areas at fractional scales; the negative weights are rescaled so the
weighted areas cancel again, keeping flat windows at zero everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import List, Sequence, Tuple

import numpy as np

from .errors import BrickscanError
from .integral import FLAT_STD_FLOOR, IntegralImage


class FeatureKind(IntEnum):
    TWO_RECT_H = 0    # left (-) | right (+)
    TWO_RECT_V = 1    # top (-) over bottom (+)
    THREE_RECT_H = 2  # outer (-) | middle (+2) | outer (-)
    THREE_RECT_V = 3
    FOUR_RECT = 4     # checkerboard, main diagonal (+)


_KIND_DIVISORS = {
    FeatureKind.TWO_RECT_H: (2, 1),
    FeatureKind.TWO_RECT_V: (1, 2),
    FeatureKind.THREE_RECT_H: (3, 1),
    FeatureKind.THREE_RECT_V: (1, 3),
    FeatureKind.FOUR_RECT: (2, 2),
}


@dataclass(frozen=True)
class HaarFeature:
    """Feature geometry in base-window pixel units."""
    kind: FeatureKind
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.x < 0 or self.y < 0 or self.w < 1 or self.h < 1:
            raise BrickscanError(f"degenerate feature rect {self}")
        dw, dh = _KIND_DIVISORS[FeatureKind(self.kind)]
        if self.w % dw or self.h % dh:
            raise BrickscanError(
                f"{FeatureKind(self.kind).name} needs w%{dw}==0 and "
                f"h%{dh}==0, got w={self.w} h={self.h}")

    def fits(self, base_w: int, base_h: int) -> bool:
        return self.x + self.w <= base_w and self.y + self.h <= base_h

    def rects(self) -> List[Tuple[int, int, int, int, float]]:
        """Weighted rects as (x0, y0, x1, y1, weight) in base units."""
        x, y, w, h = self.x, self.y, self.w, self.h
        k = FeatureKind(self.kind)
        if k == FeatureKind.TWO_RECT_H:
            xm = x + w // 2
            return [(x, y, xm, y + h, -1.0), (xm, y, x + w, y + h, 1.0)]
        if k == FeatureKind.TWO_RECT_V:
            ym = y + h // 2
            return [(x, y, x + w, ym, -1.0), (x, ym, x + w, y + h, 1.0)]
        if k == FeatureKind.THREE_RECT_H:
            xa = x + w // 3
            xb = x + 2 * (w // 3)
            return [(x, y, xa, y + h, -1.0), (xa, y, xb, y + h, 2.0),
                    (xb, y, x + w, y + h, -1.0)]
        if k == FeatureKind.THREE_RECT_V:
            ya = y + h // 3
            yb = y + 2 * (h // 3)
            return [(x, y, x + w, ya, -1.0), (x, ya, x + w, yb, 2.0),
                    (x, yb, x + w, y + h, -1.0)]
        xm = x + w // 2
        ym = y + h // 2
        return [(x, y, xm, ym, 1.0), (xm, y, x + w, ym, -1.0),
                (x, ym, xm, y + h, -1.0), (xm, ym, x + w, y + h, 1.0)]

    def to_dict(self) -> dict:
        return {"kind": int(self.kind), "x": self.x, "y": self.y,
                "w": self.w, "h": self.h}

    @classmethod
    def from_dict(cls, d: dict) -> "HaarFeature":
        return cls(kind=FeatureKind(d["kind"]), x=int(d["x"]), y=int(d["y"]),
                   w=int(d["w"]), h=int(d["h"]))


def _scale_edge(e: int, s: float) -> int:
    return int(np.floor(e * s + 0.5))


def scaled_rects(feature: HaarFeature, sx: float, sy: float
                 ) -> Tuple[List[Tuple[int, int, int, int, float]], float]:
    """Feature rects at window scale, plus total scaled pixel area.

    Edge rounding can leave the positive and negative partitions with
    unequal pixel counts at fractional scales, which would add a brightness
    term to the value; negative weights are rescaled so the weighted areas
    still cancel (a no-op at any exactly balanced scale, including 1).
    """
    out = []
    pos_mass = 0.0
    neg_mass = 0.0
    for (x0, y0, x1, y1, wgt) in feature.rects():
        a = _scale_edge(x0, sx)
        b = _scale_edge(y0, sy)
        c = _scale_edge(x1, sx)
        d = _scale_edge(y1, sy)
        out.append((a, b, c, d, wgt))
        cells = float(max(c - a, 0) * max(d - b, 0))
        if wgt > 0:
            pos_mass += wgt * cells
        else:
            neg_mass += -wgt * cells
    if pos_mass > 0.0 and neg_mass > 0.0 and pos_mass != neg_mass:
        ratio = pos_mass / neg_mass
        out = [(a, b, c, d, wgt if wgt > 0 else wgt * ratio)
               for (a, b, c, d, wgt) in out]
    ax0 = _scale_edge(feature.x, sx)
    ay0 = _scale_edge(feature.y, sy)
    ax1 = _scale_edge(feature.x + feature.w, sx)
    ay1 = _scale_edge(feature.y + feature.h, sy)
    area = float(max(ax1 - ax0, 1) * max(ay1 - ay0, 1))
    return out, area


def eval_feature_windows(feature: HaarFeature, ii: IntegralImage,
                         xs: np.ndarray, ys: np.ndarray,
                         win_w: int, win_h: int, base_w: int, base_h: int,
                         stds: np.ndarray) -> np.ndarray:
    """Normalized feature values over many same-size windows.

    This is the single evaluation path: scalar classification calls it with
    one window, scanning calls it with the whole survivor set, so the two
    agree bit for bit.
    """
    xs = np.asarray(xs, dtype=np.intp)
    ys = np.asarray(ys, dtype=np.intp)
    sx = win_w / base_w
    sy = win_h / base_h
    rects, area = scaled_rects(feature, sx, sy)
    t = ii.sums
    raw = np.zeros(len(xs))
    for (x0, y0, x1, y1, wgt) in rects:
        if x1 <= x0 or y1 <= y0:
            continue
        a = xs + x0
        b = ys + y0
        c = xs + x1
        d = ys + y1
        raw += wgt * (t[d, c] - t[b, c] - t[d, a] + t[b, a])
    return raw / (stds * area)


def sample_features(base_w: int, base_h: int, count: int,
                    rng: np.random.Generator) -> List[HaarFeature]:
    """Draw distinct random features that fit the base window."""
    kinds = list(FeatureKind)
    seen = set()
    out: List[HaarFeature] = []
    attempts = 0
    max_attempts = 200 * count
    while len(out) < count:
        attempts += 1
        if attempts > max_attempts:
            raise BrickscanError(
                f"could not sample {count} distinct features in a "
                f"{base_w}x{base_h} window")
        kind = kinds[int(rng.integers(len(kinds)))]
        dw, dh = _KIND_DIVISORS[kind]
        w = dw * int(rng.integers(1, base_w // dw + 1))
        h = dh * int(rng.integers(1, base_h // dh + 1))
        x = int(rng.integers(0, base_w - w + 1))
        y = int(rng.integers(0, base_h - h + 1))
        key = (int(kind), x, y, w, h)
        if key in seen:
            continue
        seen.add(key)
        out.append(HaarFeature(kind=kind, x=x, y=y, w=w, h=h))
    return out


def eval_feature_matrix(features: Sequence[HaarFeature],
                        images: Sequence[np.ndarray],
                        base_w: int, base_h: int) -> np.ndarray:
    """Value matrix (n_images, n_features) of base-size training samples.

    Uses batched integral tables but reproduces the scalar path of
    eval_feature_windows bit for bit: same corner arithmetic, same rect
    order, same std flooring.
    """
    n = len(images)
    stack = np.empty((n, base_h, base_w))
    for i, img in enumerate(images):
        if img.shape != (base_h, base_w):
            raise BrickscanError(
                f"training sample {i} has shape {img.shape}, expected "
                f"{(base_h, base_w)}")
        stack[i] = img
    t = np.zeros((n, base_h + 1, base_w + 1))
    np.cumsum(np.cumsum(stack, axis=1), axis=2, out=t[:, 1:, 1:])
    q = np.zeros_like(t)
    np.cumsum(np.cumsum(stack * stack, axis=1), axis=2, out=q[:, 1:, 1:])

    area = float(base_w * base_h)
    s = t[:, base_h, base_w]
    s2 = q[:, base_h, base_w]
    mean = s / area
    var = np.maximum(s2 / area - mean * mean, 0.0)
    std = np.sqrt(var)
    std = np.where(std < FLAT_STD_FLOOR, 1.0, std)

    vals = np.empty((n, len(features)))
    for j, f in enumerate(features):
        rects, farea = scaled_rects(f, 1.0, 1.0)
        raw = np.zeros(n)
        for (x0, y0, x1, y1, wgt) in rects:
            if x1 <= x0 or y1 <= y0:
                continue
            raw += wgt * (t[:, y1, x1] - t[:, y0, x1]
                          - t[:, y1, x0] + t[:, y0, x0])
        vals[:, j] = raw / (std * farea)
    return vals
