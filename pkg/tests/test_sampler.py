import json

import numpy as np
import pytest

from brickscan.errors import (BrickscanError, ManifestSchemaError,
                              NegativePoolExhaustedError)
from brickscan.grouping import iou
from brickscan.sampler import (MIN_CROP_IOU, SamplerParams, Sample,
                               annotation_px_rects, dilate_rect,
                               generate_negatives, generate_positives,
                               load_dataset, negative_source,
                               resample_window, save_dataset)
from brickscan.wallforge import BrickSpec, generate_wall, parse_pattern

QUIET = BrickSpec(length_jitter_sd=0.0, height_jitter_sd=0.0,
                  depth_jitter_sd=0.0, damage_amplitude=0.0,
                  chip_probability=0.0)


def synth_image(h=80, w=300):
    return (np.arange(h * w, dtype=np.float64).reshape(h, w) % 977) / 977.0


class TestResample:
    def test_full_rect_is_identity(self):
        img = synth_image(12, 48)
        out = resample_window(img, (0, 0, 48, 12), 48, 12)
        assert np.array_equal(out, img)

    def test_integer_crop_at_native_scale_is_exact(self):
        img = synth_image()
        out = resample_window(img, (17, 23, 48, 12), 48, 12)
        assert np.array_equal(out, img[23:35, 17:65])

    def test_downscale_of_linear_ramp_stays_linear(self):
        img = np.tile(np.arange(100, dtype=np.float64), (40, 1))
        out = resample_window(img, (0, 0, 100, 40), 25, 10)
        expected = (np.arange(25) + 0.5) * 4.0 - 0.5
        assert np.allclose(out, np.tile(expected, (10, 1)), atol=1e-12)

    def test_constant_region_resamples_constant(self):
        img = np.full((30, 90), 0.625)
        out = resample_window(img, (3.7, 2.1, 61.3, 21.9), 48, 12)
        assert np.allclose(out, 0.625, atol=1e-12)

    def test_rejects_bad_inputs(self):
        img = synth_image(12, 48)
        with pytest.raises(BrickscanError):
            resample_window(img[None], (0, 0, 4, 4), 4, 4)
        with pytest.raises(BrickscanError):
            resample_window(img, (0, 0, 0, 4), 4, 4)
        with pytest.raises(BrickscanError):
            resample_window(img, (0, 0, 4, 4), 0, 4)


class TestDilate:
    def test_keeps_center_and_scales_area(self):
        rect = (10.0, 20.0, 40.0, 8.0)
        out = dilate_rect(rect, 1.5)
        assert out[0] + out[2] / 2 == pytest.approx(30.0)
        assert out[1] + out[3] / 2 == pytest.approx(24.0)
        assert out[2] == pytest.approx(60.0)
        assert out[3] == pytest.approx(12.0)

    def test_containment_iou_is_inverse_square(self):
        rect = (5.0, 5.0, 48.0, 9.0)
        out = dilate_rect(rect, 1.1)
        assert iou(rect, out) == pytest.approx(1.0 / 1.21, abs=1e-12)


class TestPositives:
    def test_quiet_brick_layout(self):
        samples = generate_positives(QUIET, 1, seed=11)
        s = samples[0]
        assert s.image.shape == (12, 48)
        assert s.label == 1
        # 240x45 mm face behind a 30 mm apron at 5 mm/px.
        assert s.meta["rect_px"] == [6.0, 6.0, 48.0, 9.0]
        assert s.meta["crop_px"] == pytest.approx([3.6, 5.55, 52.8, 9.9])
        assert iou(s.meta["rect_px"], s.meta["crop_px"]) == pytest.approx(
            1.0 / 1.21, abs=1e-9)

    def test_quiet_brick_values(self):
        s = generate_positives(QUIET, 1, seed=11)[0]
        # Face sits on the frame plane, mortar 12 mm behind over a 60 mm range.
        # Resampling blends equal values, so hold the face to a few ulp only.
        assert np.allclose(s.image[4:8, 10:38], 1.0, atol=1e-12)
        assert s.image.max() == 1.0
        assert s.image.min() == pytest.approx(0.8, abs=1e-9)
        assert s.image[0, 0] < 0.95
        assert s.image[-1, 0] < 0.95

    def test_determinism_and_seed_sensitivity(self):
        spec = BrickSpec()
        a = generate_positives(spec, 3, seed=4)
        b = generate_positives(spec, 3, seed=4)
        c = generate_positives(spec, 3, seed=5)
        for sa, sb in zip(a, b):
            assert np.array_equal(sa.image, sb.image)
            assert sa.meta == sb.meta
        assert not np.array_equal(a[0].image, c[0].image)

    def test_samples_differ_from_each_other(self):
        samples = generate_positives(BrickSpec(), 4, seed=9)
        imgs = [s.image for s in samples]
        for i in range(len(imgs)):
            for j in range(i + 1, len(imgs)):
                assert not np.array_equal(imgs[i], imgs[j])

    def test_crop_jitter_varies_framing_within_iou_floor(self):
        params = SamplerParams(crop_jitter=0.5)
        samples = generate_positives(BrickSpec(), 10, seed=21, params=params)
        crops = [tuple(s.meta["crop_px"]) for s in samples]
        assert len(set(crops)) == len(crops)
        for s in samples:
            rect = s.meta["rect_px"]
            crop = s.meta["crop_px"]
            # Annotation must stay inside the crop, which is what keeps the
            # IoU floor exact.
            assert crop[0] <= rect[0] + 1e-9
            assert crop[1] <= rect[1] + 1e-9
            assert crop[0] + crop[2] >= rect[0] + rect[2] - 1e-9
            assert crop[1] + crop[3] >= rect[1] + rect[3] - 1e-9
            # Manifest coordinates are rounded to 6 decimals, so allow that
            # much slack around the exact floor.
            assert iou(rect, crop) >= MIN_CROP_IOU - 1e-6

    def test_crop_jitter_is_deterministic_and_zero_is_nominal(self):
        params = SamplerParams(crop_jitter=0.4)
        a = generate_positives(QUIET, 3, seed=6, params=params)
        b = generate_positives(QUIET, 3, seed=6, params=params)
        for sa, sb in zip(a, b):
            assert np.array_equal(sa.image, sb.image)
            assert sa.meta == sb.meta
        plain = generate_positives(QUIET, 1, seed=6)[0]
        assert plain.meta["crop_px"] == pytest.approx([3.6, 5.55, 52.8, 9.9])

    def test_ao_channel_bakes_in_range(self):
        params = SamplerParams(channel="ao", rays_per_pixel=32)
        a = generate_positives(QUIET, 1, seed=2, params=params)[0]
        b = generate_positives(QUIET, 1, seed=2, params=params)[0]
        assert np.array_equal(a.image, b.image)
        assert a.image.min() >= 0.0 and a.image.max() <= 1.0
        # Open sky above the face center; the mortar strip left of the face
        # sits under the brick's side wall and loses some hemisphere.
        assert a.image[5, 24] == pytest.approx(1.0, abs=1e-12)
        assert a.image[2:10, 1].mean() < 0.999

    def test_curvature_channel_flat_face_is_midgray(self):
        params = SamplerParams(channel="curvature")
        s = generate_positives(QUIET, 1, seed=2, params=params)[0]
        assert np.allclose(s.image[5:7, 16:32], 0.5, atol=1e-12)
        # Edge responses are one pixel wide in the bake, so the resample
        # blends them toward gray without erasing them.
        assert s.image.min() < 0.3
        assert s.image.max() > 0.7


class TestNegatives:
    def test_windows_respect_exclusion_and_bounds(self):
        img = synth_image()
        excl = [(10.0, 10.0, 48.0, 12.0), (200.0, 40.0, 60.0, 20.0)]
        negs = generate_negatives(img, excl, 20, seed=5)
        assert len(negs) == 20
        for s in negs:
            x, y, w, h = s.meta["crop_px"]
            assert 0 <= x and 0 <= y
            assert x + w <= img.shape[1] and y + h <= img.shape[0]
            assert s.image.shape == (12, 48)
            assert s.label == 0
            for e in excl:
                assert iou((x, y, w, h), e) < 0.2

    def test_scale_one_windows_copy_pixels(self):
        img = synth_image()
        params = SamplerParams(neg_scale_max=1.0)
        negs = generate_negatives(img, [], 6, seed=3, params=params)
        for s in negs:
            x, y, w, h = s.meta["crop_px"]
            assert (w, h) == (48, 12)
            assert np.array_equal(s.image, img[y:y + 12, x:x + 48])

    def test_determinism_and_salt_sensitivity(self):
        img = synth_image()
        a = generate_negatives(img, [], 5, seed=8, salt=0)
        b = generate_negatives(img, [], 5, seed=8, salt=0)
        c = generate_negatives(img, [], 5, seed=8, salt=1)
        for sa, sb in zip(a, b):
            assert np.array_equal(sa.image, sb.image)
        assert not all(np.array_equal(x.image, y.image)
                       for x, y in zip(a, c))

    def test_exhaustion_raises_or_returns_partial(self):
        img = synth_image(20, 60)
        blocker = [(0.0, 0.0, 60.0, 20.0)]
        params = SamplerParams(neg_max_iou=1e-6, neg_scale_max=1.0)
        with pytest.raises(NegativePoolExhaustedError):
            generate_negatives(img, blocker, 3, seed=1, params=params)
        got = generate_negatives(img, blocker, 3, seed=1, params=params,
                                 strict=False)
        assert got == []

    def test_source_advances_between_calls(self):
        img = synth_image()
        src = negative_source(img, [], seed=5)
        b1 = src(4)
        b2 = src(4)
        assert len(b1) == 4 and len(b2) == 4
        assert not np.array_equal(b1[0], b2[0])
        src2 = negative_source(img, [], seed=5)
        assert np.array_equal(src2(4)[0], b1[0])

    def test_source_dries_up_quietly(self):
        img = synth_image(20, 60)
        params = SamplerParams(neg_max_iou=1e-6, neg_scale_max=1.0)
        src = negative_source(img, [(0.0, 0.0, 60.0, 20.0)], seed=5,
                              params=params)
        assert src(4) == []


class TestAnnotationRects:
    def test_quiet_wall_rects(self):
        pattern = parse_pattern("H2 H2\nH2 H2")
        wall = generate_wall(pattern, QUIET, seed=0)
        from brickscan.baking import frame_from_mesh
        frame = frame_from_mesh(wall.mesh.bbox(), 5.0)
        rects = annotation_px_rects(frame, wall.annotations)
        assert len(rects) == 4
        assert rects[0] == pytest.approx((1.5, 1.5, 21.0, 9.0))
        assert rects[1] == pytest.approx((25.5, 1.5, 21.0, 9.0))
        assert rects[2] == pytest.approx((1.5, 13.5, 21.0, 9.0))


class TestDataset:
    def make(self, tmp_path, n=5):
        rng = np.random.default_rng(0)
        samples = [Sample(image=rng.random((12, 48)), label=i % 2,
                          meta={"kind": "test", "i": i}) for i in range(n)]
        save_dataset(tmp_path, samples, "height", 48, 12)
        return samples

    def test_roundtrip(self, tmp_path):
        originals = self.make(tmp_path)
        loaded, manifest = load_dataset(tmp_path)
        assert manifest["channel"] == "height"
        assert len(loaded) == len(originals)
        for orig, back in zip(originals, loaded):
            assert back.label == orig.label
            assert back.meta["kind"] == "test"
            assert np.max(np.abs(back.image - orig.image)) <= 0.5 / 65535 + 1e-12

    def test_save_is_byte_deterministic(self, tmp_path):
        a_dir = tmp_path / "a"
        b_dir = tmp_path / "b"
        rng = np.random.default_rng(1)
        samples = [Sample(image=rng.random((12, 48)), label=1)]
        save_dataset(a_dir, samples, "height", 48, 12)
        save_dataset(b_dir, samples, "height", 48, 12)
        for name in ("dataset.json", "sample_00000.png"):
            assert (a_dir / name).read_bytes() == (b_dir / name).read_bytes()

    def test_rejects_shape_and_label_mismatch(self, tmp_path):
        good = Sample(image=np.zeros((12, 48)), label=1)
        bad_shape = Sample(image=np.zeros((8, 48)), label=1)
        bad_label = Sample(image=np.zeros((12, 48)), label=2)
        with pytest.raises(BrickscanError):
            save_dataset(tmp_path, [good, bad_shape], "height", 48, 12)
        with pytest.raises(BrickscanError):
            save_dataset(tmp_path, [bad_label], "height", 48, 12)

    def test_load_rejects_broken_manifests(self, tmp_path):
        self.make(tmp_path)
        manifest_path = tmp_path / "dataset.json"

        with pytest.raises(ManifestSchemaError):
            load_dataset(tmp_path / "nope")

        data = json.loads(manifest_path.read_text())
        data["format"] = "something-else"
        manifest_path.write_text(json.dumps(data))
        with pytest.raises(ManifestSchemaError):
            load_dataset(tmp_path)

        data = json.loads(self_heal(tmp_path))
        data["samples"][0]["label"] = 3
        manifest_path.write_text(json.dumps(data))
        with pytest.raises(ManifestSchemaError):
            load_dataset(tmp_path)

        data = json.loads(self_heal(tmp_path))
        data["base_w"] = 40
        manifest_path.write_text(json.dumps(data))
        with pytest.raises(ManifestSchemaError):
            load_dataset(tmp_path)

        data = json.loads(self_heal(tmp_path))
        data["samples"][0]["file"] = "missing.png"
        manifest_path.write_text(json.dumps(data))
        with pytest.raises(ManifestSchemaError):
            load_dataset(tmp_path)

        manifest_path.write_text("{not json")
        with pytest.raises(ManifestSchemaError):
            load_dataset(tmp_path)


def self_heal(tmp_path):
    rng = np.random.default_rng(0)
    samples = [Sample(image=rng.random((12, 48)), label=i % 2,
                      meta={"kind": "test", "i": i}) for i in range(5)]
    save_dataset(tmp_path, samples, "height", 48, 12)
    return (tmp_path / "dataset.json").read_text()


class TestParams:
    def test_validation(self):
        with pytest.raises(BrickscanError):
            SamplerParams(channel="normal")
        with pytest.raises(BrickscanError):
            SamplerParams(dilation=0.9)
        with pytest.raises(BrickscanError):
            SamplerParams(neg_max_iou=0.0)
        with pytest.raises(BrickscanError):
            SamplerParams(neg_scale_max=0.5)
        with pytest.raises(BrickscanError):
            SamplerParams(base_w=2)
        with pytest.raises(BrickscanError):
            SamplerParams(pixel_size=0.0)
