"""Synthetic shape generators and a small three-class benchmark.

The toy classes are three thin plates: an elliptic disk, a solid rectangular
slab, and a pair of parallel planks whose outer envelope matches the slab.
Seen obliquely the classes collapse into each other (plates foreshorten into
similar blobs and the plank gap closes under projection), but their top-view
silhouettes are unmistakable, and all three have well-separated covariance
eigenvalues so pose normalization is stable. That makes the benchmark hard
for fixed global views and easy once the viewing angle is refined in the
object's own frame.
"""

from __future__ import annotations

import os

import numpy as np

from .core3d import PointCloud
from .io import save_xyz
from .match import TemplateBank, build_template_bank
from .posegen import PoseManifest, generate_openpose_dataset
from .project import CameraConfig, ProjectionStyle, VoxelParams

TOY_CLASSES = ("disk", "planks", "slab")

_HALF_THICK = 0.05


def _with_thickness(rng, xy: np.ndarray, rim_xy: np.ndarray) -> np.ndarray:
    """Stack two z = +-h faces from ``xy`` plus a vertical rim from ``rim_xy``."""
    n_face = xy.shape[0] // 2
    z = np.concatenate([np.full(n_face, _HALF_THICK), np.full(xy.shape[0] - n_face, -_HALF_THICK)])
    faces = np.column_stack([xy, z])
    rim = np.column_stack([rim_xy, rng.uniform(-_HALF_THICK, _HALF_THICK, rim_xy.shape[0])])
    return np.concatenate([faces, rim], axis=0)


def _rect_plate(rng, half_x: float, half_y: float, center_y: float, n: int) -> np.ndarray:
    n_face, n_rim = int(n * 0.85), n - int(n * 0.85)
    xy = rng.uniform(-1.0, 1.0, size=(n_face, 2)) * [half_x, half_y]
    edge = rng.integers(0, 4, size=n_rim)
    t = rng.uniform(-1.0, 1.0, size=n_rim)
    rim = np.empty((n_rim, 2))
    rim[:, 0] = np.where(edge < 2, np.where(edge == 0, -half_x, half_x), t * half_x)
    rim[:, 1] = np.where(edge < 2, t * half_y, np.where(edge == 2, -half_y, half_y))
    pts = _with_thickness(rng, xy, rim)
    pts[:, 1] += center_y
    return pts


def make_disk(n: int = 1600, seed: int = 0) -> PointCloud:
    """Thin elliptic plate, radii 1.0 and 0.62."""
    rng = np.random.default_rng(seed)
    n_face, n_rim = int(n * 0.85), n - int(n * 0.85)
    r = np.sqrt(rng.random(n_face))
    th = rng.random(n_face) * 2.0 * np.pi
    xy = np.column_stack([r * np.cos(th), 0.62 * r * np.sin(th)])
    th = rng.random(n_rim) * 2.0 * np.pi
    rim = np.column_stack([np.cos(th), 0.62 * np.sin(th)])
    return PointCloud(_with_thickness(rng, xy, rim))


def make_slab(n: int = 1600, seed: int = 0) -> PointCloud:
    """Thin solid rectangular plate, half-extents 1.0 and 0.65."""
    rng = np.random.default_rng(seed)
    return PointCloud(_rect_plate(rng, 1.0, 0.65, 0.0, n))


def make_planks(n: int = 1600, seed: int = 0) -> PointCloud:
    """Two parallel planks with the slab's outer envelope and a 0.50 gap."""
    rng = np.random.default_rng(seed)
    top = _rect_plate(rng, 1.0, 0.20, 0.45, n // 2)
    bottom = _rect_plate(rng, 1.0, 0.20, -0.45, n - n // 2)
    return PointCloud(np.concatenate([top, bottom], axis=0))


_MAKERS = {"disk": make_disk, "planks": make_planks, "slab": make_slab}


def make_shape(name: str, n: int = 1600, seed: int = 0) -> PointCloud:
    return _MAKERS[name](n, seed)


def toy_canonical(n: int = 1600, seed: int = 7) -> dict[str, PointCloud]:
    """One canonical (aligned-pose) sample per toy class."""
    return {cls: _MAKERS[cls](n, seed) for cls in TOY_CLASSES}


def toy_camera(image_px: int = 64) -> tuple[CameraConfig, VoxelParams]:
    """Projection settings small enough for interactive experiments."""
    return CameraConfig(image_px=image_px), VoxelParams(grid=64, dilate_passes=2)


def build_toy_bank(
    cfg: CameraConfig | None = None,
    vox: VoxelParams | None = None,
    n_views: int = 12,
    phi1: float = 90.0,
) -> TemplateBank:
    if cfg is None or vox is None:
        cfg, vox = toy_camera()
    return build_template_bank(
        toy_canonical(), n_views=n_views, phi1=phi1,
        style=ProjectionStyle.DEPTH, cfg=cfg, vox=vox,
    )


def write_toy_source_tree(out_dir, n_per_class: int = 10, n_points: int = 1600,
                          seed: int = 11) -> None:
    """Write aligned-pose .xyz samples, one directory per class."""
    for ci, cls in enumerate(TOY_CLASSES):
        cls_dir = os.path.join(out_dir, cls)
        os.makedirs(cls_dir, exist_ok=True)
        for i in range(n_per_class):
            cloud = _MAKERS[cls](n_points, seed=seed + 101 * ci + i)
            save_xyz(cloud, os.path.join(cls_dir, f"{cls}_{i:04d}.xyz"))


def build_toy_benchmark(work_dir, n_per_class: int = 10, seed: int = 42) -> tuple[str, PoseManifest]:
    """Aligned source tree + its open-pose counterpart; returns (rotated dir, manifest)."""
    source = os.path.join(work_dir, "source")
    rotated = os.path.join(work_dir, "openpose")
    write_toy_source_tree(source, n_per_class=n_per_class)
    manifest = generate_openpose_dataset(source, "toy3", seed, rotated)
    return rotated, manifest
