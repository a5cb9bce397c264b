"""Summed-area tables with exact rectangle sums.

Tables are float64 cumulative sums with a zero border row and column, so a
rectangle sum is four lookups.  A squared table rides along for window
variance.  All rectangle arguments are (x, y, w, h) with x to the right and
y downward, and must lie fully inside the image.
"""

from __future__ import annotations

import numpy as np

from .errors import RectBoundsError

FLAT_STD_FLOOR = 1e-6   # below this, window std is treated as 1.0


class IntegralImage:
    """Cumulative sum tables of an image and of its square."""

    def __init__(self, image: np.ndarray):
        img = np.asarray(image, dtype=np.float64)
        if img.ndim != 2 or img.size == 0:
            raise RectBoundsError("integral image needs a nonempty 2-D array")
        self.height, self.width = img.shape
        self.sums = np.zeros((self.height + 1, self.width + 1))
        np.cumsum(np.cumsum(img, axis=0), axis=1, out=self.sums[1:, 1:])
        self.squares = np.zeros_like(self.sums)
        np.cumsum(np.cumsum(img * img, axis=0), axis=1,
                  out=self.squares[1:, 1:])

    def _check_rect(self, x, y, w, h):
        if w < 1 or h < 1 or x < 0 or y < 0 or x + w > self.width \
                or y + h > self.height:
            raise RectBoundsError(
                f"rect (x={x}, y={y}, w={w}, h={h}) outside "
                f"{self.width}x{self.height} image")

    def rect_sum(self, x: int, y: int, w: int, h: int) -> float:
        self._check_rect(x, y, w, h)
        t = self.sums
        return float(t[y + h, x + w] - t[y, x + w] - t[y + h, x] + t[y, x])

    def rect_sum_many(self, xs: np.ndarray, ys: np.ndarray,
                      w: int, h: int) -> np.ndarray:
        """Sums of equally sized rects at several origins."""
        xs = np.asarray(xs, dtype=np.intp)
        ys = np.asarray(ys, dtype=np.intp)
        if w < 1 or h < 1 or np.any(xs < 0) or np.any(ys < 0) \
                or np.any(xs + w > self.width) or np.any(ys + h > self.height):
            raise RectBoundsError("rects outside image")
        t = self.sums
        return (t[ys + h, xs + w] - t[ys, xs + w]
                - t[ys + h, xs] + t[ys, xs])

    def window_stats(self, xs: np.ndarray, ys: np.ndarray,
                     w: int, h: int) -> tuple:
        """Mean and effective std of windows; flat windows get std 1.0."""
        xs = np.asarray(xs, dtype=np.intp)
        ys = np.asarray(ys, dtype=np.intp)
        if w < 1 or h < 1 or np.any(xs < 0) or np.any(ys < 0) \
                or np.any(xs + w > self.width) or np.any(ys + h > self.height):
            raise RectBoundsError("windows outside image")
        area = float(w * h)
        t = self.sums
        q = self.squares
        s = (t[ys + h, xs + w] - t[ys, xs + w] - t[ys + h, xs] + t[ys, xs])
        s2 = (q[ys + h, xs + w] - q[ys, xs + w] - q[ys + h, xs] + q[ys, xs])
        mean = s / area
        var = np.maximum(s2 / area - mean * mean, 0.0)
        std = np.sqrt(var)
        std = np.where(std < FLAT_STD_FLOOR, 1.0, std)
        return mean, std
