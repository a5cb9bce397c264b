"""Normalized cross-correlation template matching.

Scores are classic zero-normalized NCC in [-1, 1]: the template has its
mean removed, each window has its own mean and norm computed from summed
area tables, and an exact sub-image copy scores 1.  Flat windows (no
variance) score 0 rather than dividing by nothing; a flat template is an
error because every score would be undefined.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import FlatTemplateError, RectBoundsError

FLAT_EPS = 1e-12


def match_template_ncc(image: np.ndarray, template: np.ndarray) -> np.ndarray:
    """NCC score map of every template-sized window, shape (H-h+1, W-w+1)."""
    img = np.asarray(image, dtype=np.float64)
    tpl = np.asarray(template, dtype=np.float64)
    if img.ndim != 2 or tpl.ndim != 2:
        raise RectBoundsError("image and template must be 2-D")
    th, tw = tpl.shape
    if th > img.shape[0] or tw > img.shape[1]:
        raise RectBoundsError("template larger than image")
    t0 = tpl - tpl.mean()
    t_norm = float(np.sqrt(np.sum(t0 * t0)))
    if t_norm < FLAT_EPS:
        raise FlatTemplateError("template has no variance")

    windows = sliding_window_view(img, (th, tw))
    # Zero-mean template makes the window mean drop out of the numerator.
    cross = np.einsum("ijkl,kl->ij", windows, t0)

    n = float(th * tw)
    pad = np.zeros((img.shape[0] + 1, img.shape[1] + 1))
    np.cumsum(np.cumsum(img, axis=0), axis=1, out=pad[1:, 1:])
    pad2 = np.zeros_like(pad)
    np.cumsum(np.cumsum(img * img, axis=0), axis=1, out=pad2[1:, 1:])
    s1 = (pad[th:, tw:] - pad[:-th, tw:] - pad[th:, :-tw] + pad[:-th, :-tw])
    s2 = (pad2[th:, tw:] - pad2[:-th, tw:] - pad2[th:, :-tw]
          + pad2[:-th, :-tw])
    win_norm = np.sqrt(np.maximum(s2 - s1 * s1 / n, 0.0))

    scores = np.zeros_like(cross)
    ok = win_norm > FLAT_EPS
    scores[ok] = cross[ok] / (win_norm[ok] * t_norm)
    return np.clip(scores, -1.0, 1.0)


@dataclass(frozen=True)
class TemplateMatch:
    x: int
    y: int
    score: float


def find_matches(scores: np.ndarray, threshold: float, nms_w: int,
                 nms_h: int) -> List[TemplateMatch]:
    """Greedy peak picking: best score first, suppressing any later peak
    within (nms_w, nms_h) of an accepted one."""
    ys, xs = np.nonzero(scores >= threshold)
    if len(xs) == 0:
        return []
    vals = scores[ys, xs]
    # Descending score; ties resolved by scan order for determinism.
    order = np.lexsort((xs, ys, -vals))
    picked: List[TemplateMatch] = []
    for k in order:
        x, y, v = int(xs[k]), int(ys[k]), float(vals[k])
        if any(abs(x - p.x) < nms_w and abs(y - p.y) < nms_h for p in picked):
            continue
        picked.append(TemplateMatch(x=x, y=y, score=v))
    return picked


def match_and_pick(image: np.ndarray, template: np.ndarray,
                   threshold: float = 0.8) -> List[TemplateMatch]:
    scores = match_template_ncc(image, template)
    return find_matches(scores, threshold, template.shape[1],
                        template.shape[0])
