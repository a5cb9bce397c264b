"""Summed-area tables against direct numpy slicing.

Test rasters are quantized to multiples of 2^-10 so every partial sum is
exact in float64 and equality checks can be strict.
"""

import numpy as np
import pytest

from brickscan.errors import RectBoundsError
from brickscan.integral import IntegralImage


def dyadic_image(seed, h, w):
    rng = np.random.default_rng(seed)
    return rng.integers(0, 1024, size=(h, w)).astype(np.float64) / 1024.0


def test_rect_sums_match_slicing_exactly():
    img = dyadic_image(0, 61, 83)
    ii = IntegralImage(img)
    rng = np.random.default_rng(1)
    for _ in range(300):
        w = int(rng.integers(1, 84))
        h = int(rng.integers(1, 62))
        x = int(rng.integers(0, 83 - w + 1))
        y = int(rng.integers(0, 61 - h + 1))
        assert ii.rect_sum(x, y, w, h) == float(np.sum(img[y:y + h, x:x + w]))


def test_rect_sum_many_matches_scalar():
    img = dyadic_image(2, 40, 50)
    ii = IntegralImage(img)
    rng = np.random.default_rng(3)
    xs = rng.integers(0, 30, size=64)
    ys = rng.integers(0, 25, size=64)
    got = ii.rect_sum_many(xs, ys, 12, 9)
    expect = np.array([ii.rect_sum(x, y, 12, 9) for x, y in zip(xs, ys)])
    assert np.array_equal(got, expect)


def test_window_stats_match_numpy():
    img = dyadic_image(4, 30, 30)
    ii = IntegralImage(img)
    xs = np.array([0, 3, 11])
    ys = np.array([0, 5, 14])
    mean, std = ii.window_stats(xs, ys, 16, 10)
    for k, (x, y) in enumerate(zip(xs, ys)):
        win = img[y:y + 10, x:x + 16]
        assert mean[k] == pytest.approx(win.mean(), abs=1e-12)
        assert std[k] == pytest.approx(win.std(), abs=1e-12)


def test_flat_window_std_floors_to_one():
    img = np.full((10, 10), 0.375)
    ii = IntegralImage(img)
    _, std = ii.window_stats(np.array([0]), np.array([0]), 10, 10)
    assert std[0] == 1.0


def test_bounds_checks():
    ii = IntegralImage(np.ones((8, 12)))
    with pytest.raises(RectBoundsError):
        ii.rect_sum(0, 0, 13, 1)
    with pytest.raises(RectBoundsError):
        ii.rect_sum(-1, 0, 3, 3)
    with pytest.raises(RectBoundsError):
        ii.rect_sum(0, 6, 3, 3)
    with pytest.raises(RectBoundsError):
        ii.rect_sum(2, 2, 0, 3)
    with pytest.raises(RectBoundsError):
        ii.rect_sum_many(np.array([0, 10]), np.array([0, 0]), 3, 3)
    with pytest.raises(RectBoundsError):
        IntegralImage(np.ones(5))


def test_full_image_sum():
    img = dyadic_image(5, 17, 23)
    ii = IntegralImage(img)
    assert ii.rect_sum(0, 0, 23, 17) == float(img.sum())
