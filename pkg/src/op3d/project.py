"""Perspective projection of 3D geometry into grayscale images.

Three styles are produced: shaded renders (meshes), depth maps (point clouds
via frustum voxelization, or mesh depth buffers), and Canny edge maps derived
from the style appropriate to the input kind. Everything is deterministic:
identical inputs give bit-identical images.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core3d import Geometry, PointCloud, TriMesh
from .errors import EmptyProjection, StyleUnsupportedForInput

# Canny thresholds per input kind; the mesh pair is raised to suppress
# shading noise on curved surfaces (at the cost of some interior detail).
CLOUD_CANNY = (0.10, 0.20)
MESH_CANNY = (0.20, 0.40)

_BINOMIAL5 = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


class ProjectionStyle(enum.Enum):
    RENDER = "render"
    DEPTH = "depth"
    EDGE = "edge"

    @classmethod
    def parse(cls, name: str) -> "ProjectionStyle":
        return cls(name.strip().lower())


@dataclass(frozen=True)
class ViewAngles:
    """Camera angles in degrees: phi1 = elevation in [-90, 90], phi2 = azimuth
    (stored modulo 360)."""

    phi1: float
    phi2: float

    def __post_init__(self):
        if not (math.isfinite(self.phi1) and math.isfinite(self.phi2)):
            raise ValueError("angles must be finite")
        if not -90.0 <= self.phi1 <= 90.0:
            raise ValueError(f"phi1 must lie in [-90, 90], got {self.phi1}")
        object.__setattr__(self, "phi2", float(self.phi2) % 360.0)
        object.__setattr__(self, "phi1", float(self.phi1))

    def as_tuple(self) -> tuple[float, float]:
        return (self.phi1, self.phi2)


@dataclass(frozen=True)
class CameraConfig:
    """Pinhole camera: distance to the object, vertical fov, square output."""

    r_p: float = 2.2
    fov_deg: float = 60.0
    image_px: int = 224

    def __post_init__(self):
        if not self.r_p > 1.0:
            raise ValueError("r_p must exceed 1 (outside the unit-normalized object)")
        if not 0.0 < self.fov_deg < 180.0:
            raise ValueError("fov must lie in (0, 180)")
        if self.image_px < 32:
            raise ValueError("image_px must be >= 32")

    @property
    def tan_half_fov(self) -> float:
        return math.tan(math.radians(self.fov_deg) / 2.0)


@dataclass(frozen=True)
class VoxelParams:
    """Stage parameters of the point-cloud projection pipeline.

    The default grid suits clouds of a few thousand points at 224 px output:
    cell spacing stays below the dilation radius, so the squeeze sees solid
    surfaces. Geometric-precision work (isolated landmarks) wants a finer
    grid; very sparse clouds want a coarser one or more dilation passes.
    """

    grid: int = 128          # cells per axis of the frustum grid
    dilate_passes: int = 1   # 3x3x3 morphological dilation passes
    blur_px: int = 5         # binomial blur width applied per depth slice
    support: float = 0.5     # occupancy level that counts as filled

    def __post_init__(self):
        if self.grid < 16:
            raise ValueError("grid must be >= 16")
        if self.blur_px not in (0, 3, 5):
            raise ValueError("blur_px must be 0, 3 or 5")


@dataclass(frozen=True)
class GrayImage:
    """Square grayscale image with row-major intensities in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 2:
            raise ValueError("pixels must be 2D")
        if px.size and (px.min() < 0.0 or px.max() > 1.0):
            raise ValueError("intensities must lie in [0, 1]")
        px = np.ascontiguousarray(px)
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def mask(self, threshold: float = 0.0) -> np.ndarray:
        """Boolean foreground mask (pixels strictly above threshold)."""
        return self.pixels > threshold

    def save_png(self, path) -> None:
        from PIL import Image

        Image.fromarray(np.round(self.pixels * 255.0).astype(np.uint8), mode="L").save(path)

    @classmethod
    def load_png(cls, path) -> "GrayImage":
        from PIL import Image

        arr = np.asarray(Image.open(path).convert("L"), dtype=np.float64) / 255.0
        return cls(arr)


@dataclass(frozen=True)
class VoxelGrid:
    """Occupancy grid in frustum coordinates (rows, cols, depth slices)."""

    resolution: int
    cells: np.ndarray

    def __post_init__(self):
        if self.resolution < 16:
            raise ValueError("resolution must be >= 16")
        if self.cells.shape != (self.resolution,) * 3:
            raise ValueError("cells must be resolution^3")


@dataclass(frozen=True)
class CameraPose:
    """Camera placement: position, orthonormal basis, and the look-at origin."""

    position: np.ndarray
    right: np.ndarray
    up: np.ndarray
    forward: np.ndarray  # unit vector from camera toward the origin

    def world_to_camera(self, pts: np.ndarray) -> np.ndarray:
        """Map world points to (right, up, depth-along-view) coordinates."""
        rel = pts - self.position
        return np.stack([rel @ self.right, rel @ self.up, rel @ self.forward], axis=1)


def camera_from_angles(phi: ViewAngles, cfg: CameraConfig) -> CameraPose:
    """Place the camera on the sphere of radius r_p looking at the origin.

    position = r_p * (cos phi1 cos phi2, cos phi1 sin phi2, sin phi1). The up
    hint is global +z; within 0.1 degrees of the poles it switches to
    (-cos phi2, -sin phi2, 0), which is the limit of the +z rule and keeps the
    frame continuous (and azimuth-equivariant) across the pole.
    """
    e1, a2 = math.radians(phi.phi1), math.radians(phi.phi2)
    position = cfg.r_p * np.array(
        [math.cos(e1) * math.cos(a2), math.cos(e1) * math.sin(a2), math.sin(e1)]
    )
    forward = -position / np.linalg.norm(position)
    if abs(phi.phi1) > 89.9:
        hint = np.array([-math.cos(a2), -math.sin(a2), 0.0])
        if phi.phi1 < 0:
            hint = -hint
    else:
        hint = np.array([0.0, 0.0, 1.0])
    right = np.cross(forward, hint)
    right = right / np.linalg.norm(right)
    up = np.cross(right, forward)
    return CameraPose(position, right, up, forward)


def _bilinear_resize(img: np.ndarray, out_px: int) -> np.ndarray:
    """Resize a square image, aligning pixel centers."""
    src = img.shape[0]
    if src == out_px:
        return img.astype(np.float64)
    scale = src / out_px
    coords = (np.arange(out_px) + 0.5) * scale - 0.5
    rows, cols = np.meshgrid(coords, coords, indexing="ij")
    return ndimage.map_coordinates(
        img.astype(np.float64), [rows, cols], order=1, mode="nearest"
    )


def _slice_blur(grid: np.ndarray, blur_px: int) -> np.ndarray:
    """Binomial blur within each depth slice (axes 0 and 1)."""
    if blur_px == 0:
        return grid
    kernel = _BINOMIAL5 if blur_px == 5 else np.array([1.0, 2.0, 1.0]) / 4.0
    out = ndimage.convolve1d(grid, kernel, axis=0, mode="constant")
    return ndimage.convolve1d(out, kernel, axis=1, mode="constant")


def voxelize_frustum(
    x: PointCloud, phi: ViewAngles, cfg: CameraConfig, vox: VoxelParams
) -> tuple[VoxelGrid, float, float]:
    """Bin points into a perspective-warped grid over the view frustum.

    Grid axes are (image row, image column, depth slice); lateral coordinates
    are the normalized perspective coordinates u = (x/d)/tan(fov/2), so a
    column of cells maps to a fixed image pixel. Returns the occupancy grid
    and the camera-space depth range [d_lo, d_hi] the slices cover.
    """
    cam = camera_from_angles(phi, cfg)
    cc = cam.world_to_camera(x.points)
    d = cc[:, 2]
    in_front = d > 1e-9
    if not np.any(in_front):
        raise EmptyProjection("all points behind the camera")
    t = cfg.tan_half_fov
    u = np.full_like(d, np.inf)
    v = np.full_like(d, np.inf)
    u[in_front] = cc[in_front, 0] / (d[in_front] * t)
    v[in_front] = cc[in_front, 1] / (d[in_front] * t)
    inside = in_front & (np.abs(u) < 1.0) & (np.abs(v) < 1.0)
    if not np.any(inside):
        raise EmptyProjection("no point falls inside the frustum")

    g = vox.grid
    # Unit-normalized objects fit in [r_p - 1, r_p + 1]; pad a little for
    # callers projecting slightly un-normalized geometry.
    d_lo, d_hi = cfg.r_p - 1.02, cfg.r_p + 1.02
    rows = np.clip(((1.0 - v[inside]) * 0.5 * g).astype(np.int64), 0, g - 1)
    cols = np.clip(((u[inside] + 1.0) * 0.5 * g).astype(np.int64), 0, g - 1)
    deps = np.clip(((d[inside] - d_lo) / (d_hi - d_lo) * g).astype(np.int64), 0, g - 1)
    cells = np.zeros((g, g, g), dtype=bool)
    cells[rows, cols, deps] = True
    return VoxelGrid(g, cells), d_lo, d_hi


def project_pointcloud_depth(
    x: PointCloud,
    phi: ViewAngles,
    cfg: CameraConfig = CameraConfig(),
    vox: VoxelParams = VoxelParams(),
) -> GrayImage:
    """Depth image of a point cloud: voxelize, densify, smooth, squeeze.

    Occupied cells are dilated (3^3 box) to close gaps between samples, each
    depth slice is blurred, and the grid is squeezed along the view axis
    keeping the nearest sufficiently-occupied cell. Depth maps to intensity
    as 1 - (d - d_min)/(d_max - d_min), so nearer is brighter; background 0.
    """
    grid, d_lo, d_hi = voxelize_frustum(x, phi, cfg, vox)
    occ = grid.cells
    if vox.dilate_passes > 0:
        occ = ndimage.binary_dilation(
            occ, structure=np.ones((3, 3, 3), dtype=bool), iterations=vox.dilate_passes
        )
    soft = _slice_blur(occ.astype(np.float32), vox.blur_px)
    filled = soft >= vox.support

    has = filled.any(axis=2)
    if not has.any():
        raise EmptyProjection("squeeze produced an empty image")
    first = filled.argmax(axis=2)  # nearest filled slice per pixel
    g = grid.resolution
    dz = (d_hi - d_lo) / g
    depth = d_lo + (first + 0.5) * dz
    d_min = depth[has].min()
    d_max = depth[has].max()
    if d_max - d_min < 1e-12:
        intensity = np.ones_like(depth)
    else:
        intensity = 1.0 - (depth - d_min) / (d_max - d_min)
    img = np.where(has, intensity, 0.0)
    out = _bilinear_resize(img, cfg.image_px)
    return GrayImage(np.clip(out, 0.0, 1.0))


def _rasterize(
    m: TriMesh, phi: ViewAngles, cfg: CameraConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Depth-buffered flat-shaded rasterization.

    Returns (shade, depth) arrays; depth is +inf on background. Shading is a
    two-sided Lambert term against a distant light along the viewing axis.
    Depth is interpolated via 1/z, which is exact under perspective.
    """
    cam = camera_from_angles(phi, cfg)
    px = cfg.image_px
    cc = cam.world_to_camera(m.vertices)
    d = cc[:, 2]
    if np.all(d <= 1e-9):
        raise EmptyProjection("all vertices behind the camera")
    t = cfg.tan_half_fov
    with np.errstate(divide="ignore", invalid="ignore"):
        u = cc[:, 0] / (d * t)
        v = cc[:, 1] / (d * t)
    if not np.any((d > 1e-9) & (np.abs(u) < 1.0) & (np.abs(v) < 1.0)):
        raise EmptyProjection("no vertex falls inside the frustum")
    sx = (u + 1.0) * 0.5 * px  # continuous column coordinate
    sy = (1.0 - v) * 0.5 * px  # continuous row coordinate

    shade = np.zeros((px, px))
    zbuf = np.full((px, px), np.inf)
    light = cam.position / np.linalg.norm(cam.position)

    for face in m.faces:
        if np.any(d[face] <= 1e-9):
            continue  # behind-camera faces are skipped (objects sit inside r_p +- 1)
        xs, ys = sx[face], sy[face]
        lo_c = max(int(math.floor(xs.min())), 0)
        hi_c = min(int(math.ceil(xs.max())) + 1, px)
        lo_r = max(int(math.floor(ys.min())), 0)
        hi_r = min(int(math.ceil(ys.max())) + 1, px)
        if lo_c >= hi_c or lo_r >= hi_r:
            continue

        x0, y0 = xs[0], ys[0]
        e1x, e1y = xs[1] - x0, ys[1] - y0
        e2x, e2y = xs[2] - x0, ys[2] - y0
        area = e1x * e2y - e1y * e2x
        if abs(area) < 1e-12:
            continue

        cols, rows = np.meshgrid(
            np.arange(lo_c, hi_c) + 0.5, np.arange(lo_r, hi_r) + 0.5
        )
        px_x, px_y = cols - x0, rows - y0
        w1 = (px_x * e2y - px_y * e2x) / area
        w2 = (e1x * px_y - e1y * px_x) / area
        w0 = 1.0 - w1 - w2
        inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        if not inside.any():
            continue

        inv_z = w0 * (1.0 / d[face[0]]) + w1 * (1.0 / d[face[1]]) + w2 * (1.0 / d[face[2]])
        z = 1.0 / inv_z

        va, vb, vc = m.vertices[face]
        n = np.cross(vb - va, vc - va)
        nn = np.linalg.norm(n)
        if nn < 1e-15:
            continue
        lambert = min(abs(float(n @ light)) / nn, 1.0)

        sub_z = zbuf[lo_r:hi_r, lo_c:hi_c]
        sub_s = shade[lo_r:hi_r, lo_c:hi_c]
        win = inside & (z < sub_z)
        sub_z[win] = z[win]
        sub_s[win] = lambert

    # Degenerate orientations (e.g. a triangle seen edge-on) legitimately
    # cover zero pixels; only a mesh outside the frustum is an error.
    return shade, zbuf


def render_mesh(
    m: TriMesh, phi: ViewAngles, cfg: CameraConfig = CameraConfig()
) -> GrayImage:
    """Shaded perspective render of a mesh (flat, two-sided Lambert)."""
    shade, _ = _rasterize(m, phi, cfg)
    return GrayImage(np.clip(shade, 0.0, 1.0))


def project_mesh_depth(
    m: TriMesh, phi: ViewAngles, cfg: CameraConfig = CameraConfig()
) -> GrayImage:
    """Depth-buffer image of a mesh, encoded like the point-cloud path."""
    _, zbuf = _rasterize(m, phi, cfg)
    has = np.isfinite(zbuf)
    if not has.any():
        return GrayImage(np.zeros_like(zbuf))
    d_min, d_max = zbuf[has].min(), zbuf[has].max()
    if d_max - d_min < 1e-12:
        img = has.astype(np.float64)
    else:
        img = np.where(has, 1.0 - (zbuf - d_min) / (d_max - d_min), 0.0)
    return GrayImage(np.clip(img, 0.0, 1.0))


def _sobel(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    kx = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
    gx = ndimage.convolve(img, kx, mode="nearest")
    gy = ndimage.convolve(img, kx.T, mode="nearest")
    return gx, gy


def canny_edges(img: GrayImage, low: float = 0.10, high: float = 0.20) -> GrayImage:
    """Classic Canny edge detection; output pixels are exactly 0 or 1.

    Gaussian smoothing, Sobel gradients, non-maximum suppression along the
    quantized gradient direction, then double threshold with hysteresis.
    Thresholds apply to gradient magnitude normalized by its maximum, and are
    strict, so ``high = 1.0`` can never seed an edge.
    """
    if not (0.0 <= low < high <= 1.0):
        raise ValueError("need 0 <= low < high <= 1")
    smoothed = ndimage.gaussian_filter(img.pixels, sigma=1.0, mode="nearest")
    gx, gy = _sobel(smoothed)
    mag = np.hypot(gx, gy)
    peak = mag.max()
    if peak <= 1e-9:  # flat image up to float noise
        return GrayImage(np.zeros_like(mag))
    mag = mag / peak

    # Quantize gradient direction into 4 bins and keep local maxima along it.
    angle = np.rad2deg(np.arctan2(gy, gx)) % 180.0
    off = np.empty(angle.shape + (2,), dtype=np.int64)
    horiz = (angle < 22.5) | (angle >= 157.5)
    diag1 = (angle >= 22.5) & (angle < 67.5)
    vert = (angle >= 67.5) & (angle < 112.5)
    diag2 = (angle >= 112.5) & (angle < 157.5)
    off[horiz] = (0, 1)
    off[diag1] = (1, 1)
    off[vert] = (1, 0)
    off[diag2] = (1, -1)

    padded = np.pad(mag, 1, mode="constant")
    rr, cc = np.indices(mag.shape)
    ahead = padded[rr + 1 + off[..., 0], cc + 1 + off[..., 1]]
    behind = padded[rr + 1 - off[..., 0], cc + 1 - off[..., 1]]
    nms = np.where((mag >= ahead) & (mag >= behind), mag, 0.0)

    strong = nms > high
    candidate = nms > low
    if not strong.any():
        return GrayImage(np.zeros_like(mag))
    labels, _ = ndimage.label(candidate, structure=np.ones((3, 3), dtype=bool))
    keep = np.unique(labels[strong])
    edges = candidate & np.isin(labels, keep[keep != 0])
    return GrayImage(edges.astype(np.float64))


def project(
    x: Geometry,
    phi: ViewAngles,
    style: ProjectionStyle,
    cfg: CameraConfig = CameraConfig(),
    vox: VoxelParams = VoxelParams(),
) -> GrayImage:
    """Dispatch to the style-appropriate projection for the input kind.

    Render requires a mesh; Edge is the Canny map of the render (meshes) or
    of the depth image (point clouds), using kind-specific thresholds.
    """
    if isinstance(x, TriMesh):
        if style is ProjectionStyle.RENDER:
            return render_mesh(x, phi, cfg)
        if style is ProjectionStyle.DEPTH:
            return project_mesh_depth(x, phi, cfg)
        if style is ProjectionStyle.EDGE:
            return canny_edges(render_mesh(x, phi, cfg), *MESH_CANNY)
    elif isinstance(x, PointCloud):
        if style is ProjectionStyle.RENDER:
            raise StyleUnsupportedForInput("render projection needs mesh faces")
        if style is ProjectionStyle.DEPTH:
            return project_pointcloud_depth(x, phi, cfg, vox)
        if style is ProjectionStyle.EDGE:
            return canny_edges(project_pointcloud_depth(x, phi, cfg, vox), *CLOUD_CANNY)
    raise StyleUnsupportedForInput(f"{style!r} on {type(x).__name__}")


def fixed_view_sets(kind: str, n_views: int = 4, phi1: float = 30.0) -> list[ViewAngles]:
    """Pre-defined camera placements: ``single`` (top), ``cube`` (six axis
    directions), or ``circular`` (n azimuths at a fixed elevation)."""
    kind = kind.lower()
    if kind == "single":
        return [ViewAngles(90.0, 0.0)]
    if kind == "cube":
        return [
            ViewAngles(90.0, 0.0),
            ViewAngles(-90.0, 0.0),
            ViewAngles(0.0, 0.0),
            ViewAngles(0.0, 90.0),
            ViewAngles(0.0, 180.0),
            ViewAngles(0.0, 270.0),
        ]
    if kind == "circular":
        if n_views < 1:
            raise ValueError("n_views must be >= 1")
        return [ViewAngles(phi1, i * 360.0 / n_views) for i in range(n_views)]
    raise ValueError(f"unknown view set {kind!r}")
