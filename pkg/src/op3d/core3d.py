"""Core 3D geometry: point clouds, triangle meshes, rotations, and the
covariance eigen-frame used for pose normalization.

All types are immutable after construction and all operations are pure
functions, so everything here is safe to call from parallel workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AllPointsCoincident, NonUnitQuaternion, NotCentered

# Eigenvalue gaps below this are treated as a degenerate (symmetric) spectrum.
DEGENERATE_EIGENGAP = 1e-9


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


def _check_coords(pts: np.ndarray, what: str) -> np.ndarray:
    pts = np.asarray(pts, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"{what} must have shape (N, 3), got {pts.shape}")
    if pts.shape[0] < 3:
        raise ValueError(f"{what} needs at least 3 entries, got {pts.shape[0]}")
    if not np.all(np.isfinite(pts)):
        raise ValueError(f"{what} contains non-finite coordinates")
    return _freeze(pts.copy())


@dataclass(frozen=True)
class PointCloud:
    """An ordered set of 3D points plus free-form metadata.

    Parameters
    ----------
    points : (N, 3) array_like
        Vertex coordinates, N >= 3, all finite.
    meta : dict, optional
        Carried through geometric operations (e.g. ``pca_degenerate``).
    """

    points: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "points", _check_coords(self.points, "points"))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def coords(self) -> np.ndarray:
        return self.points

    def with_coords(self, pts, **extra_meta) -> "PointCloud":
        return PointCloud(pts, meta={**self.meta, **extra_meta})


@dataclass(frozen=True)
class TriMesh:
    """A triangle mesh: vertices plus faces indexing into them."""

    vertices: np.ndarray
    faces: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "vertices", _check_coords(self.vertices, "vertices"))
        faces = np.asarray(self.faces, dtype=np.int64)
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise ValueError(f"faces must have shape (M, 3), got {faces.shape}")
        if faces.shape[0] < 1:
            raise ValueError("mesh needs at least one face")
        if faces.min() < 0 or faces.max() >= self.vertices.shape[0]:
            raise ValueError("face index out of vertex range")
        object.__setattr__(self, "faces", _freeze(faces.copy()))

    @property
    def n(self) -> int:
        return self.vertices.shape[0]

    def coords(self) -> np.ndarray:
        return self.vertices

    def with_coords(self, pts, **extra_meta) -> "TriMesh":
        return TriMesh(pts, self.faces, meta={**self.meta, **extra_meta})


Geometry = PointCloud | TriMesh


@dataclass(frozen=True)
class RotationQ:
    """Unit quaternion (w, x, y, z)."""

    w: float
    x: float
    y: float
    z: float

    def __post_init__(self):
        n = math.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2)
        if abs(n - 1.0) > 1e-9:
            raise NonUnitQuaternion(f"|q| = {n!r}")

    @classmethod
    def identity(cls) -> "RotationQ":
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def normalized(cls, w, x, y, z) -> "RotationQ":
        n = math.sqrt(w * w + x * x + y * y + z * z)
        if n == 0.0:
            raise NonUnitQuaternion("zero quaternion")
        return cls(w / n, x / n, y / n, z / n)

    @classmethod
    def from_axis_angle(cls, axis, angle_rad: float) -> "RotationQ":
        ax = np.asarray(axis, dtype=np.float64)
        ax = ax / np.linalg.norm(ax)
        h = 0.5 * angle_rad
        s = math.sin(h)
        return cls.normalized(math.cos(h), s * ax[0], s * ax[1], s * ax[2])

    def as_matrix(self) -> np.ndarray:
        """3x3 rotation matrix acting on column vectors."""
        w, x, y, z = self.w, self.x, self.y, self.z
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.w, self.x, self.y, self.z)


@dataclass(frozen=True)
class CovarianceFrame:
    """Covariance matrix with (optionally) its sorted eigen-decomposition.

    ``eigvecs`` holds e1, e2, e3 as columns; eigenvalues are sorted
    descending and the frame is right-handed after sign fixing.
    """

    sigma: np.ndarray
    eigvals: np.ndarray | None = None
    eigvecs: np.ndarray | None = None

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=np.float64)
        if sigma.shape != (3, 3):
            raise ValueError("sigma must be 3x3")
        if np.abs(sigma - sigma.T).max() > 1e-9:
            raise ValueError("sigma must be symmetric")
        object.__setattr__(self, "sigma", _freeze(sigma.copy()))
        if self.eigvals is not None:
            object.__setattr__(self, "eigvals", _freeze(np.asarray(self.eigvals, dtype=np.float64).copy()))
        if self.eigvecs is not None:
            object.__setattr__(self, "eigvecs", _freeze(np.asarray(self.eigvecs, dtype=np.float64).copy()))

    @property
    def degenerate(self) -> bool:
        """True when any adjacent eigenvalue gap is below DEGENERATE_EIGENGAP."""
        if self.eigvals is None:
            raise ValueError("frame has no eigen-decomposition")
        gaps = np.diff(self.eigvals[::-1])
        return bool(np.any(np.abs(gaps) < DEGENERATE_EIGENGAP))


def normalize_to_unit(x: Geometry) -> Geometry:
    """Translate the centroid to the origin and scale the farthest vertex to norm 1.

    Raises AllPointsCoincident when the geometry has zero extent. Idempotent up
    to floating-point rounding; face topology is untouched.
    """
    pts = x.coords()
    centered = pts - pts.mean(axis=0)
    r = float(np.linalg.norm(centered, axis=1).max())
    if r < 1e-12:
        raise AllPointsCoincident("all points coincide; nothing to normalize")
    return x.with_coords(centered / r)


def rotate(x: Geometry, q: RotationQ) -> Geometry:
    """Rotate every vertex about the origin by the unit quaternion q."""
    if not isinstance(q, RotationQ):
        raise NonUnitQuaternion("rotation must be a RotationQ")
    R = q.as_matrix()
    return x.with_coords(x.coords() @ R.T)


def covariance(x: Geometry) -> CovarianceFrame:
    """Second-moment matrix (coords^T . coords) / N of an origin-centered sample.

    Raises NotCentered when the centroid norm exceeds 1e-4; run
    normalize_to_unit first.
    """
    pts = x.coords()
    if np.linalg.norm(pts.mean(axis=0)) > 1e-4:
        raise NotCentered("centroid too far from origin; normalize first")
    n = pts.shape[0]
    sigma = (pts.T @ pts) / n
    sigma = 0.5 * (sigma + sigma.T)  # kill rounding asymmetry
    return CovarianceFrame(sigma)


def _jacobi_eigh3(a: np.ndarray, tol: float = 1e-10, max_sweeps: int = 64):
    """Eigen-decomposition of a symmetric 3x3 via cyclic Jacobi rotations.

    Returns (eigvals, eigvecs-as-columns), unsorted. Fixed-size problem, so a
    handful of sweeps reaches the tolerance.
    """
    a = np.array(a, dtype=np.float64)
    v = np.eye(3)
    for _ in range(max_sweeps):
        off = math.sqrt(a[0, 1] ** 2 + a[0, 2] ** 2 + a[1, 2] ** 2)
        if off < tol:
            break
        for p, q in ((0, 1), (0, 2), (1, 2)):
            apq = a[p, q]
            if abs(apq) < 1e-300:
                continue
            theta = (a[q, q] - a[p, p]) / (2.0 * apq)
            t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
            c = 1.0 / math.sqrt(t * t + 1.0)
            s = t * c
            rot = np.eye(3)
            rot[p, p] = rot[q, q] = c
            rot[p, q] = s
            rot[q, p] = -s
            a = rot.T @ a @ rot
            v = v @ rot
    return np.diag(a).copy(), v


def eigen_frame(sigma) -> CovarianceFrame:
    """Complete a covariance into a sorted, sign-fixed, right-handed eigen-frame.

    Eigenvalues descend; each eigenvector is flipped so its largest-magnitude
    component is positive; e3 is negated if needed to make det(+1). Degenerate
    spectra are accepted (any orthonormal basis of the eigenspace is valid).
    """
    if isinstance(sigma, CovarianceFrame):
        sigma = sigma.sigma
    sigma = np.asarray(sigma, dtype=np.float64)
    vals, vecs = _jacobi_eigh3(sigma)
    order = np.argsort(vals)[::-1]
    vals = vals[order]
    vecs = vecs[:, order]
    for i in range(3):
        k = int(np.argmax(np.abs(vecs[:, i])))
        if vecs[k, i] < 0:
            vecs[:, i] = -vecs[:, i]
    if np.linalg.det(vecs) < 0:
        vecs[:, 2] = -vecs[:, 2]
    return CovarianceFrame(sigma, vals, vecs)


def pca_align(x: Geometry) -> Geometry:
    """Re-express the sample in the eigenbasis of its covariance.

    Normalizes first, then maps coords -> coords @ [e1, e2, e3], so the output
    covariance is diagonal with descending variance. Degenerate spectra are
    flagged with ``meta['pca_degenerate'] = True``.
    """
    xn = normalize_to_unit(x)
    frame = eigen_frame(covariance(xn).sigma)
    aligned = xn.coords() @ frame.eigvecs
    return xn.with_coords(aligned, pca_degenerate=frame.degenerate)
