"""Merging of overlapping detection windows.

Two windows are similar when their corners and sizes differ by less than
``eps`` times their mean dimensions; clusters are the transitive closure of
that relation (union-find).  A cluster survives when it holds at least
``min_neighbors`` windows, and is reported as the member mean rectangle.
``min_neighbors`` of zero disables merging and returns the raw windows.

Because the clustering itself does not depend on ``min_neighbors``, the
number of surviving detections is non-increasing as the requirement rises.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np

from .errors import BrickscanError

DEFAULT_EPS = 0.2
_CHUNK = 512


def iou(a, b) -> float:
    """Intersection over union of two (x, y, w, h) rects."""
    ax, ay, aw, ah = (float(v) for v in a)
    bx, by, bw, bh = (float(v) for v in b)
    if aw <= 0 or ah <= 0 or bw <= 0 or bh <= 0:
        return 0.0
    ix = max(0.0, min(ax + aw, bx + bw) - max(ax, bx))
    iy = max(0.0, min(ay + ah, by + bh) - max(ay, by))
    inter = ix * iy
    union = aw * ah + bw * bh - inter
    return inter / union if union > 0 else 0.0


@dataclass(frozen=True)
class Detection:
    x: float
    y: float
    w: float
    h: float
    neighbors: int
    score: float

    def rect(self) -> np.ndarray:
        return np.array([self.x, self.y, self.w, self.h])

    def center(self) -> np.ndarray:
        return np.array([self.x + 0.5 * self.w, self.y + 0.5 * self.h])

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "w": self.w, "h": self.h,
                "neighbors": self.neighbors, "score": self.score}

    @classmethod
    def from_dict(cls, d: dict) -> "Detection":
        return cls(x=float(d["x"]), y=float(d["y"]), w=float(d["w"]),
                   h=float(d["h"]), neighbors=int(d["neighbors"]),
                   score=float(d["score"]))


def similarity_masks(rects: np.ndarray, block: np.ndarray,
                     eps: float) -> np.ndarray:
    """Pairwise similarity of a block of rects against all rects."""
    x, y, w, h = (rects[:, k] for k in range(4))
    bx, by, bw, bh = (block[:, k, None] for k in range(4))
    mean_w = 0.5 * (bw + w[None, :])
    mean_h = 0.5 * (bh + h[None, :])
    return ((np.abs(bx - x[None, :]) <= eps * mean_w)
            & (np.abs(by - y[None, :]) <= eps * mean_h)
            & (np.abs(bw - w[None, :]) <= eps * mean_w)
            & (np.abs(bh - h[None, :]) <= eps * mean_h))


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, a: int) -> int:
        root = a
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[a] != root:
            self.parent[a], a = root, self.parent[a]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            if rb < ra:
                ra, rb = rb, ra
            self.parent[rb] = ra


def cluster_labels(rects: np.ndarray, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Transitive-closure cluster index per rect, labels are 0..k-1."""
    rects = np.asarray(rects, dtype=np.float64)
    n = len(rects)
    uf = _UnionFind(n)
    for lo in range(0, n, _CHUNK):
        hi = min(lo + _CHUNK, n)
        sim = similarity_masks(rects, rects[lo:hi], eps)
        rows, cols = np.nonzero(sim)
        for r, c in zip(rows.tolist(), cols.tolist()):
            i = lo + r
            if c > i:
                uf.union(i, c)
    roots = np.array([uf.find(i) for i in range(n)], dtype=np.int64)
    _, labels = np.unique(roots, return_inverse=True)
    return labels


def group_detections(rects: np.ndarray, margins: np.ndarray,
                     min_neighbors: int,
                     eps: float = DEFAULT_EPS) -> List[Detection]:
    """Merge raw windows into detections.

    Output is sorted by neighbor count then score, both descending, with
    position as the final tie break, so equal inputs give equal output
    order.
    """
    rects = np.asarray(rects, dtype=np.float64)
    margins = np.asarray(margins, dtype=np.float64)
    if rects.ndim != 2 or rects.shape[1] != 4:
        raise BrickscanError("rects must be (n, 4)")
    if len(margins) != len(rects):
        raise BrickscanError("margins must align with rects")
    if min_neighbors < 0:
        raise BrickscanError("min_neighbors cannot be negative")

    out: List[Detection] = []
    if min_neighbors == 0:
        for r, m in zip(rects, margins):
            out.append(Detection(x=float(r[0]), y=float(r[1]), w=float(r[2]),
                                 h=float(r[3]), neighbors=1, score=float(m)))
    elif len(rects):
        labels = cluster_labels(rects, eps)
        for lab in range(labels.max() + 1):
            members = labels == lab
            count = int(members.sum())
            if count < min_neighbors:
                continue
            mean = rects[members].mean(axis=0)
            out.append(Detection(x=float(mean[0]), y=float(mean[1]),
                                 w=float(mean[2]), h=float(mean[3]),
                                 neighbors=count,
                                 score=float(margins[members].max())))
    out.sort(key=lambda d: (-d.neighbors, -d.score, d.x, d.y, d.w, d.h))
    return out
