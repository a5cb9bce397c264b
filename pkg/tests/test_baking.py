"""Baked map values against analytic surfaces."""

import math

import numpy as np
import pytest

from brickscan.baking import (BakeParams, OrthoFrame, bake_ao, bake_height,
                              bake_map_set, bake_normal, curvature_from_height,
                              frame_from_mesh, normal_from_height, _hammersley)
from brickscan.errors import BrickscanError
from brickscan.geometry import TriangleMesh, merge_meshes, subdivided_box
from brickscan.raycast import RaycastScene
from brickscan.wallforge import BrickSpec, generate_wall, parse_pattern


def quiet_spec():
    return BrickSpec(length_jitter_sd=0.0, height_jitter_sd=0.0,
                     depth_jitter_sd=0.0, damage_amplitude=0.0,
                     chip_probability=0.0)


def quad(p0, p1, p2, p3):
    return TriangleMesh(vertices=np.array([p0, p1, p2, p3], dtype=np.float64),
                        triangles=np.array([[0, 1, 2], [0, 2, 3]],
                                           dtype=np.int32))


def flat_plane(w=200.0, h=100.0, z=0.0):
    return quad([0, 0, z], [w, 0, z], [w, h, z], [0, h, z])


class TestOrthoFrame:
    def test_view_points_toward_camera(self):
        f = OrthoFrame(origin=(0, 0, 0), right=(1, 0, 0), up=(0, 1, 0),
                       pixel_size=5.0, width=4, height=2)
        assert np.array_equal(f.view, [0.0, 0.0, 1.0])

    def test_pixel_centers_layout(self):
        f = OrthoFrame(origin=(10.0, 50.0, 3.0), right=(1, 0, 0), up=(0, 1, 0),
                       pixel_size=5.0, width=3, height=2)
        pts = f.pixel_centers().reshape(2, 3, 3)
        assert np.allclose(pts[0, 0], [12.5, 47.5, 3.0])
        assert np.allclose(pts[1, 2], [22.5, 42.5, 3.0])

    def test_world_to_pixel_inverts_centers(self):
        f = OrthoFrame(origin=(-7.0, 31.0, 2.0), right=(1, 0, 0),
                       up=(0, 1, 0), pixel_size=2.5, width=6, height=4)
        pts = f.pixel_centers()
        uv = f.world_to_pixel(pts)
        jj, ii = np.meshgrid(np.arange(4), np.arange(6), indexing="ij")
        expect = np.stack([ii.ravel() + 0.5, jj.ravel() + 0.5], axis=1)
        assert np.allclose(uv, expect, atol=1e-12)

    def test_rejects_bad_axes(self):
        with pytest.raises(BrickscanError):
            OrthoFrame(origin=(0, 0, 0), right=(2, 0, 0), up=(0, 1, 0),
                       pixel_size=1.0, width=1, height=1)
        with pytest.raises(BrickscanError):
            OrthoFrame(origin=(0, 0, 0), right=(1, 0, 0), up=(1, 0, 0),
                       pixel_size=1.0, width=1, height=1)
        with pytest.raises(BrickscanError):
            OrthoFrame(origin=(0, 0, 0), right=(1, 0, 0), up=(0, 1, 0),
                       pixel_size=0.0, width=1, height=1)

    def test_dict_roundtrip(self):
        f = OrthoFrame(origin=(1.0, 2.0, 3.0), right=(0, 0, 1), up=(0, 1, 0),
                       pixel_size=4.0, width=7, height=9)
        assert OrthoFrame.from_dict(f.to_dict()) == f


class TestFlatPlane:
    def test_height_is_one_everywhere(self):
        mesh = flat_plane()
        scene = RaycastScene.from_mesh(mesh)
        frame = frame_from_mesh(mesh.bbox(), 5.0)
        assert (frame.width, frame.height) == (40, 20)
        h = bake_height(scene, frame, 60.0)
        assert h.shape == (20, 40)
        assert np.all(h == 1.0)

    def test_normal_encodes_straight_at_camera(self):
        mesh = flat_plane()
        scene = RaycastScene.from_mesh(mesh)
        frame = frame_from_mesh(mesh.bbox(), 5.0)
        n = bake_normal(scene, frame)
        assert np.allclose(n, [0.5, 0.5, 1.0], atol=1e-12)

    def test_ao_is_fully_open(self):
        mesh = flat_plane()
        scene = RaycastScene.from_mesh(mesh)
        frame = frame_from_mesh(mesh.bbox(), 5.0)
        ao = bake_ao(scene, frame, seed=5, rays_per_pixel=8)
        assert np.all(ao == 1.0)

    def test_curvature_is_neutral(self):
        c = curvature_from_height(np.ones((20, 40)), 5.0, 60.0)
        assert np.all(c == 0.5)


class TestRecession:
    def test_recessed_backdrop_maps_to_point_eight(self):
        # Front face at z=0, backdrop at z=-12, depth range 60.
        front = flat_plane(w=100.0, h=100.0, z=0.0)
        back = quad([0, 0, -12.0], [200, 0, -12.0], [200, 100, -12.0],
                    [0, 100, -12.0])
        mesh = merge_meshes([front, back])
        scene = RaycastScene.from_mesh(mesh)
        frame = frame_from_mesh(mesh.bbox(), 5.0)
        h = bake_height(scene, frame, 60.0)
        assert h.shape == (20, 40)
        assert np.allclose(h[:, :20], 1.0, atol=1e-12)
        assert np.allclose(h[:, 20:], 0.8, atol=1e-9)

    def test_beyond_depth_range_clamps_to_zero(self):
        mesh = flat_plane(z=-80.0)
        scene = RaycastScene.from_mesh(mesh)
        frame = OrthoFrame(origin=(0.0, 100.0, 0.0), right=(1, 0, 0),
                           up=(0, 1, 0), pixel_size=5.0, width=40, height=20)
        h = bake_height(scene, frame, 60.0)
        assert np.all(h == 0.0)

    def test_miss_is_zero(self):
        mesh = flat_plane(w=50.0, h=100.0)
        scene = RaycastScene.from_mesh(mesh)
        frame = OrthoFrame(origin=(0.0, 100.0, 0.0), right=(1, 0, 0),
                           up=(0, 1, 0), pixel_size=5.0, width=40, height=20)
        h = bake_height(scene, frame, 60.0)
        assert np.all(h[:, :10] == 1.0)
        assert np.all(h[:, 10:] == 0.0)


class TestRamp:
    def ramp_mesh(self, slope, size=40.0):
        zmax = slope * size
        return quad([0, 0, 0], [size, 0, zmax], [size, size, zmax],
                    [0, size, 0])

    @pytest.mark.parametrize("angle_deg", [10.0, 30.0, 45.0])
    def test_height_profile_matches_analytic(self, angle_deg):
        slope = math.tan(math.radians(angle_deg))
        mesh = self.ramp_mesh(slope)
        scene = RaycastScene.from_mesh(mesh)
        frame = frame_from_mesh(mesh.bbox(), 5.0)
        depth = 60.0
        h = bake_height(scene, frame, depth)
        x = (np.arange(frame.width) + 0.5) * 5.0
        expect = np.clip(1.0 - (slope * 40.0 - slope * x) / depth, 0.0, 1.0)
        assert np.allclose(h, expect[None, :], atol=1e-9)

    @pytest.mark.parametrize("angle_deg", [5.0, 15.0, 30.0])
    def test_normal_recovered_from_height_within_half_degree(self, angle_deg):
        slope = math.tan(math.radians(angle_deg))
        mesh = self.ramp_mesh(slope, size=200.0)
        scene = RaycastScene.from_mesh(mesh)
        frame = frame_from_mesh(mesh.bbox(), 5.0)
        depth = slope * 200.0 + 10.0
        h = bake_height(scene, frame, depth)
        enc = normal_from_height(h, 5.0, depth)
        n = enc * 2.0 - 1.0
        n /= np.linalg.norm(n, axis=-1, keepdims=True)
        true_n = np.array([-slope, 0.0, 1.0])
        true_n /= np.linalg.norm(true_n)
        dots = np.clip(n @ true_n, -1.0, 1.0)
        worst = np.degrees(np.arccos(dots.min()))
        assert worst <= 0.5

    def test_geometric_normal_matches_height_normal_on_ramp(self):
        slope = math.tan(math.radians(20.0))
        mesh = self.ramp_mesh(slope, size=100.0)
        scene = RaycastScene.from_mesh(mesh)
        frame = frame_from_mesh(mesh.bbox(), 5.0)
        depth = slope * 100.0 + 5.0
        geo = bake_normal(scene, frame)
        der = normal_from_height(bake_height(scene, frame, depth), 5.0, depth)
        rms = float(np.sqrt(np.mean((geo - der) ** 2)))
        assert rms < 0.002


class TestCurvature:
    def test_paraboloid_matches_analytic_laplacian(self):
        # Discrete 5-point Laplacian is exact on quadratics.
        ps, depth, radius = 2.0, 50.0, 400.0
        x = (np.arange(60) + 0.5) * ps
        y = (np.arange(40) + 0.5) * ps
        xx, yy = np.meshgrid(x - 60.0, y - 40.0)
        h_mm = 40.0 - (xx ** 2 + yy ** 2) / (2.0 * radius)
        vals = h_mm / depth
        gain = 20.0
        c = curvature_from_height(vals, ps, depth, gain=gain)
        expect = 0.5 + gain * (2.0 / radius)
        inner = c[1:-1, 1:-1]
        assert np.allclose(inner, expect, atol=1e-9)
        assert np.all(inner > 0.5)

    def test_concave_bowl_encodes_below_half(self):
        ps, depth, radius = 2.0, 50.0, 400.0
        x = (np.arange(30) + 0.5) * ps
        xx, yy = np.meshgrid(x - 30.0, x - 30.0)
        vals = (10.0 + (xx ** 2 + yy ** 2) / (2.0 * radius)) / depth
        c = curvature_from_height(vals, ps, depth, gain=20.0)
        assert np.all(c[1:-1, 1:-1] < 0.5)

    def test_default_gain_saturates_sharp_brick_edges(self):
        vals = np.ones((10, 20))
        vals[:, 10:] = 0.8
        c = curvature_from_height(vals, 5.0, 60.0)
        assert c[5, 9] == 1.0
        assert c[5, 10] == 0.0


class TestAO:
    def test_step_shadow_darkens_base(self):
        # A tall box on a ground plane: ground pixels tight against the box
        # see less sky than pixels far away.
        ground = flat_plane(w=400.0, h=200.0, z=0.0)
        box, _ = subdivided_box(np.array([40.0, 200.0, 80.0]), (1, 2, 1))
        box = box.translated(np.array([180.0, 0.0, 0.0]))
        mesh = merge_meshes([ground, box])
        scene = RaycastScene.from_mesh(mesh)
        frame = frame_from_mesh(mesh.bbox(), 5.0)
        ao = bake_ao(scene, frame, seed=9, rays_per_pixel=64)
        row = ao[20]
        near_left = row[34]   # ~5 mm from the box side
        far_left = row[4]     # ~155 mm away
        assert near_left < 0.8
        assert far_left > 0.9
        assert near_left < far_left

    def test_seed_changes_rotation_but_not_open_result(self):
        mesh = flat_plane()
        scene = RaycastScene.from_mesh(mesh)
        frame = frame_from_mesh(mesh.bbox(), 5.0)
        a = bake_ao(scene, frame, seed=1, rays_per_pixel=4)
        b = bake_ao(scene, frame, seed=2, rays_per_pixel=4)
        assert np.array_equal(a, b)
        assert np.all(a == 1.0)


def test_hammersley_first_points_are_pinned():
    pts = _hammersley(4)
    expect = np.array([[0.0, 0.0], [0.25, 0.5], [0.5, 0.25], [0.75, 0.75]])
    assert np.array_equal(pts, expect)


class TestMapSet:
    def test_wall_bake_is_deterministic(self):
        pattern = parse_pattern("H2 H2\n")
        wall = generate_wall(pattern, quiet_spec(), seed=21)
        params = BakeParams(rays_per_pixel=4)
        a = bake_map_set(wall.mesh, params, seed=77)
        b = bake_map_set(wall.mesh, params, seed=77)
        for ch in ("height", "normal", "curvature", "ao"):
            assert np.array_equal(a.channel(ch), b.channel(ch))

    def test_quiet_wall_maps_have_expected_structure(self):
        pattern = parse_pattern("H2 H2\n")
        spec = quiet_spec()
        wall = generate_wall(pattern, spec, seed=4)
        ms = bake_map_set(wall.mesh, BakeParams(rays_per_pixel=8), seed=3)
        assert ms.height.shape == (12, 48)
        # Brick faces at value 1.0, mortar joints at 0.8.
        assert np.isclose(ms.height.max(), 1.0, atol=1e-9)
        vals = np.unique(np.round(ms.height, 6))
        assert 0.8 in vals
        # Mortar runs between the two bricks around x = 120 mm (column 24).
        assert np.allclose(ms.height[6, 23:25], 0.8, atol=1e-9)
        assert np.allclose(ms.height[6, 10], 1.0, atol=1e-9)
        # All faces are frontoparallel, so every normal encodes (.5, .5, 1).
        hit = ms.height > 0.0
        assert np.allclose(ms.normal[hit], [0.5, 0.5, 1.0], atol=1e-9)
        # Mortar sits in a trench, so it is more occluded than brick centers.
        assert ms.ao[6, 24] < ms.ao[6, 10]
        # Sharp brick borders saturate curvature on the brick side.
        assert ms.curvature.max() == 1.0
        assert ms.curvature.min() == 0.0

    def test_normal_consistency_on_quiet_wall(self):
        # Away from depth discontinuities the raytraced normal map and the
        # height-derived one must agree closely.
        pattern = parse_pattern("H2 H2\n")
        wall = generate_wall(pattern, quiet_spec(), seed=4)
        ms = bake_map_set(wall.mesh, BakeParams(rays_per_pixel=1), seed=3)
        der = normal_from_height(ms.height, ms.frame.pixel_size,
                                 ms.depth_range)
        spread = np.zeros_like(ms.height)
        h = ms.height
        local_max = h.copy()
        local_min = h.copy()
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                sh = np.roll(np.roll(h, dy, axis=0), dx, axis=1)
                local_max = np.maximum(local_max, sh)
                local_min = np.minimum(local_min, sh)
        flat = (local_max - local_min) < 0.01
        flat[:1, :] = flat[-1:, :] = False
        flat[:, :1] = flat[:, -1:] = False
        assert flat.sum() > 100
        rms = float(np.sqrt(np.mean((ms.normal[flat] - der[flat]) ** 2)))
        assert rms < 0.02

    def test_params_validation(self):
        with pytest.raises(BrickscanError):
            BakeParams(pixel_size=0.0)
        with pytest.raises(BrickscanError):
            BakeParams(rays_per_pixel=0)
        with pytest.raises(BrickscanError):
            BakeParams(margin=-1.0)
