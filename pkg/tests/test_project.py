import math

import numpy as np
import pytest

from op3d.core3d import PointCloud, RotationQ, TriMesh, normalize_to_unit, rotate
from op3d.errors import EmptyProjection, StyleUnsupportedForInput
from op3d.project import (
    CameraConfig,
    GrayImage,
    ProjectionStyle,
    ViewAngles,
    VoxelParams,
    camera_from_angles,
    fixed_view_sets,
    project,
    project_mesh_depth,
    project_pointcloud_depth,
    render_mesh,
)
from op3d.shapes import make_planks, make_slab


def pinhole_pixels(points, phi, cfg):
    """Independent pinhole projection of points to continuous pixel coords."""
    cam = camera_from_angles(phi, cfg)
    cc = cam.world_to_camera(np.asarray(points))
    t = cfg.tan_half_fov
    u = cc[:, 0] / (cc[:, 2] * t)
    v = cc[:, 1] / (cc[:, 2] * t)
    col = (u + 1.0) / 2.0 * cfg.image_px
    row = (1.0 - v) / 2.0 * cfg.image_px
    return row, col


def mask_bbox(mask):
    rows = np.where(mask.any(axis=1))[0]
    cols = np.where(mask.any(axis=0))[0]
    return rows.min(), rows.max(), cols.min(), cols.max()


class TestCamera:
    def test_pole(self):
        cam = camera_from_angles(ViewAngles(90, 0), CameraConfig())
        assert np.allclose(cam.position, [0, 0, 2.2], atol=1e-12)

    def test_equator(self):
        cam = camera_from_angles(ViewAngles(0, 0), CameraConfig())
        assert np.allclose(cam.position, [2.2, 0, 0], atol=1e-12)

    def test_oblique_trig_oracle(self):
        e1, a2 = math.radians(30), math.radians(45)
        expected = 2.2 * np.array(
            [math.cos(e1) * math.cos(a2), math.cos(e1) * math.sin(a2), math.sin(e1)]
        )
        cam = camera_from_angles(ViewAngles(30, 45), CameraConfig())
        assert np.allclose(cam.position, expected, atol=1e-9)
        assert np.allclose(cam.position, [1.3472, 1.3472, 1.1000], atol=5e-5)

    def test_basis_orthonormal_looks_at_origin(self):
        for phi in (ViewAngles(30, 45), ViewAngles(90, 10), ViewAngles(-90, 120)):
            cam = camera_from_angles(phi, CameraConfig())
            basis = np.stack([cam.right, cam.up, cam.forward])
            assert np.allclose(basis @ basis.T, np.eye(3), atol=1e-12)
            # forward points from the camera straight at the origin
            assert np.allclose(cam.forward, -cam.position / np.linalg.norm(cam.position), atol=1e-12)

    def test_angle_validation(self):
        with pytest.raises(ValueError):
            ViewAngles(91, 0)
        assert ViewAngles(0, 370).phi2 == pytest.approx(10.0)


class TestPointCloudDepth:
    def test_single_point_center_blob(self):
        cloud = PointCloud(np.array([[0, 0, 0], [1e-9, 0, 0], [0, 1e-9, 0]]))
        img = project_pointcloud_depth(cloud, ViewAngles(90, 0))
        c = img.width // 2
        assert img.pixels.max() > 0
        # the peak sits at the image center (ties allowed)
        assert img.pixels[c - 1 : c + 2, c - 1 : c + 2].max() == img.pixels.max()
        assert (img.pixels > 0).mean() < 0.01

    def test_cube_corner_pinhole_oracle(self):
        s = 1.0 / math.sqrt(3.0)
        corners = np.array(
            [[sx, sy, sz] for sx in (-s, s) for sy in (-s, s) for sz in (-s, s)]
        )
        cfg = CameraConfig()  # r_p = 2.2, fov 60, 224 px
        phi = ViewAngles(30, 45)
        row, col = pinhole_pixels(corners, phi, cfg)
        # isolated landmarks: a fine grid keeps the per-point blobs tight
        img = project_pointcloud_depth(PointCloud(corners), phi, cfg, VoxelParams(grid=256))
        r0, r1, c0, c1 = mask_bbox(img.pixels > 0.05)
        # compare measured pixel centers against the analytic extremes
        assert abs((r0 + 0.5) - row.min()) <= 2.0
        assert abs((r1 + 0.5) - row.max()) <= 2.0
        assert abs((c0 + 0.5) - col.min()) <= 2.0
        assert abs((c1 + 0.5) - col.max()) <= 2.0

    def test_all_points_behind_camera(self):
        # a tight clump far beyond the camera position is outside the frustum
        cloud = PointCloud(np.array([[5.0, 0, 0.01], [5.0, 0.01, 0], [5.0, 0, -0.01]]))
        with pytest.raises(EmptyProjection):
            project_pointcloud_depth(cloud, ViewAngles(0, 0))

    def test_nearer_is_brighter(self):
        # three laterally separated points at distinct heights, seen from above
        cloud = PointCloud(np.array([[0.0, 0, 0.5], [0.5, 0, -0.3], [-0.5, 0, 0.1]]))
        cfg = CameraConfig(image_px=64)
        img = project_pointcloud_depth(cloud, ViewAngles(90, 0), cfg, VoxelParams(grid=64))
        row, col = pinhole_pixels(cloud.points, ViewAngles(90, 0), cfg)
        near = img.pixels[int(row[0]), int(col[0])]
        mid = img.pixels[int(row[2]), int(col[2])]
        far = img.pixels[int(row[1]), int(col[1])]
        assert near > mid > far

    def test_intensity_range(self):
        img = project_pointcloud_depth(
            normalize_to_unit(make_slab(800, 1)), ViewAngles(35, 20),
            CameraConfig(image_px=64), VoxelParams(grid=64),
        )
        assert img.pixels.min() >= 0.0
        assert img.pixels.max() <= 1.0


class TestRenderMesh:
    def _triangle(self):
        verts = np.array([[0.0, -0.5, -0.5], [0.0, 0.5, -0.5], [0.0, 0.0, 0.5]])
        return TriMesh(verts, np.array([[0, 1, 2]]))

    def test_facing_triangle_analytic_lambert(self):
        img = render_mesh(self._triangle(), ViewAngles(0, 0))
        inside = img.pixels[img.pixels > 0]
        assert inside.size > 500
        assert np.allclose(inside, 1.0, atol=1e-12)

    def test_tilted_triangle_lambert_value(self):
        angle = math.radians(55.0)
        mesh = rotate(self._triangle(), RotationQ.from_axis_angle([0, 1, 0], angle))
        img = render_mesh(mesh, ViewAngles(0, 0))
        inside = img.pixels[img.pixels > 0]
        assert np.allclose(inside, math.cos(angle), atol=1e-9)

    def test_edge_on_near_zero_coverage(self):
        mesh = rotate(self._triangle(), RotationQ.from_axis_angle([0, 1, 0], math.pi / 2))
        img = render_mesh(mesh, ViewAngles(0, 0))
        assert (img.pixels > 0).mean() < 0.01

    def test_depth_buffer_nearer_wins(self):
        # two triangles stacked along the camera axis; camera sits at +x
        verts = np.array(
            [
                [0.2, -0.5, -0.5], [0.2, 0.5, -0.5], [0.2, 0.0, 0.5],
                [-0.2, -0.5, -0.5], [-0.2, 0.5, -0.5], [-0.2, 0.0, 0.5],
            ]
        )
        tilt = RotationQ.from_axis_angle([0, 0, 1], math.radians(25))
        far = rotate(TriMesh(verts[3:] + [0.2, 0, 0], np.array([[0, 1, 2]])), tilt)
        mesh = TriMesh(
            np.vstack([verts[:3], far.vertices - [0.2, 0, 0]]),
            np.array([[0, 1, 2], [3, 4, 5]]),
        )
        img = render_mesh(mesh, ViewAngles(0, 0))
        row, col = pinhole_pixels([[0.2, 0.0, -0.1]], ViewAngles(0, 0), CameraConfig())
        # near the shared center the nearer (unrotated, lambert=1) face wins
        assert img.pixels[int(row[0]), int(col[0])] == pytest.approx(1.0)

    def test_mesh_depth_style(self):
        img = project_mesh_depth(self._triangle(), ViewAngles(0, 0))
        assert img.pixels.max() <= 1.0
        assert (img.pixels > 0).sum() > 100

    def test_mesh_behind_camera(self):
        mesh = TriMesh(np.array([[5.0, 0, 0], [5.0, 0.1, 0], [5.0, 0, 0.1]]), np.array([[0, 1, 2]]))
        with pytest.raises(EmptyProjection):
            render_mesh(mesh, ViewAngles(0, 0))


class TestDispatchAndInvariants:
    def test_render_requires_mesh(self):
        cloud = normalize_to_unit(make_slab(400, 2))
        with pytest.raises(StyleUnsupportedForInput):
            project(cloud, ViewAngles(30, 0), ProjectionStyle.RENDER)

    def test_cloud_depth_dispatch_identity(self):
        cloud = normalize_to_unit(make_slab(400, 3))
        cfg, vox = CameraConfig(image_px=64), VoxelParams(grid=64)
        a = project(cloud, ViewAngles(30, 10), ProjectionStyle.DEPTH, cfg, vox)
        b = project_pointcloud_depth(cloud, ViewAngles(30, 10), cfg, vox)
        assert np.array_equal(a.pixels, b.pixels)

    def test_edge_images_binary(self):
        cloud = normalize_to_unit(make_slab(800, 4))
        img = project(cloud, ViewAngles(40, 25), ProjectionStyle.EDGE,
                      CameraConfig(image_px=64), VoxelParams(grid=64))
        assert set(np.unique(img.pixels)) <= {0.0, 1.0}
        assert img.pixels.sum() > 0

    def test_mesh_edge_uses_render(self):
        verts = np.array([[0.0, -0.5, -0.5], [0.0, 0.5, -0.5], [0.0, 0.0, 0.5]])
        mesh = TriMesh(verts, np.array([[0, 1, 2]]))
        img = project(mesh, ViewAngles(0, 0), ProjectionStyle.EDGE)
        assert set(np.unique(img.pixels)) <= {0.0, 1.0}
        assert img.pixels.sum() > 0

    def test_determinism(self):
        cloud = normalize_to_unit(make_planks(600, 5))
        cfg, vox = CameraConfig(image_px=64), VoxelParams(grid=64)
        a = project(cloud, ViewAngles(33, 77), ProjectionStyle.DEPTH, cfg, vox)
        b = project(cloud, ViewAngles(33, 77), ProjectionStyle.DEPTH, cfg, vox)
        assert np.array_equal(a.pixels, b.pixels)

    def test_azimuth_periodicity(self):
        cloud = normalize_to_unit(make_planks(600, 6))
        cfg, vox = CameraConfig(image_px=64), VoxelParams(grid=64)
        a = project(cloud, ViewAngles(25, 40), ProjectionStyle.DEPTH, cfg, vox)
        b = project(cloud, ViewAngles(25, 40 + 360), ProjectionStyle.DEPTH, cfg, vox)
        assert np.array_equal(a.pixels, b.pixels)

    def test_object_rotation_camera_duality(self):
        cloud = normalize_to_unit(make_planks(1500, 7))
        alpha = 33.0
        qz = RotationQ.from_axis_angle([0, 0, 1], math.radians(alpha))
        a = project(rotate(cloud, qz), ViewAngles(30, 50), ProjectionStyle.DEPTH)
        b = project(cloud, ViewAngles(30, 50 - alpha), ProjectionStyle.DEPTH)
        ma, mb = a.pixels > 0, b.pixels > 0
        iou = (ma & mb).sum() / (ma | mb).sum()
        assert iou >= 0.98


class TestFixedViews:
    def test_single_is_top_view(self):
        assert [v.as_tuple() for v in fixed_view_sets("single")] == [(90.0, 0.0)]

    def test_cube_axis_enumeration(self):
        views = {v.as_tuple() for v in fixed_view_sets("cube")}
        assert views == {(90.0, 0.0), (-90.0, 0.0), (0.0, 0.0), (0.0, 90.0), (0.0, 180.0), (0.0, 270.0)}

    def test_circular_uniform_spacing(self):
        views = fixed_view_sets("circular", n_views=4, phi1=30)
        assert [v.phi2 for v in views] == [0.0, 90.0, 180.0, 270.0]
        assert all(v.phi1 == 30.0 for v in views)

    def test_circular_rejects_zero_views(self):
        with pytest.raises(ValueError):
            fixed_view_sets("circular", n_views=0)


class TestGrayImage:
    def test_value_range_enforced(self):
        with pytest.raises(ValueError):
            GrayImage(np.array([[0.0, 1.5]]))

    def test_png_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        img = GrayImage(np.round(rng.random((32, 32)) * 255) / 255.0)
        path = tmp_path / "img.png"
        img.save_png(path)
        back = GrayImage.load_png(path)
        assert np.allclose(back.pixels, img.pixels, atol=1 / 510)
