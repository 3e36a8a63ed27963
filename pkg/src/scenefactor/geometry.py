"""Rotations, poses, and the pinhole camera model shared by all modules.

Coordinate conventions, used consistently across the package:

* Camera frame: the camera sits at the origin with x right, y down and
  z forward (right-handed).  Depth is the z coordinate, in meters.
* Quaternions are scalar-first ``(w, x, y, z)``.  ``q`` and ``-q`` encode
  the same rotation.
* Canonical object frame: axes parallel to the camera axes, shapes live
  inside ``[-0.5, 0.5]^3`` and the object's front face points along -z.

All types here are immutable values and all operations are pure
functions, so they are safe for unrestricted parallel use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DEFAULT_CAMERA",
    "Camera",
    "Pose",
    "UnitQuaternion",
    "apply_pose",
    "backproject",
    "matrix_to_quat",
    "project",
    "quat_to_matrix",
    "random_unit_quaternion",
    "rotation_about_y",
    "rotation_geodesic",
    "validate_rotation_matrix",
]

# Maximum allowed deviation of a quaternion norm from 1.
UNIT_NORM_TOL = 1e-6


def _vec3(value, name: str) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if arr.shape != (3,):
        raise ValueError(f"{name} must be a 3-vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite, got {arr}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class UnitQuaternion:
    """Unit rotation quaternion, stored scalar-first as (w, x, y, z)."""

    w: float
    x: float
    y: float
    z: float

    def __post_init__(self):
        for name in ("w", "x", "y", "z"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"quaternion component {name} is not finite")
            object.__setattr__(self, name, v)
        norm = math.sqrt(self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z)
        if abs(norm - 1.0) > UNIT_NORM_TOL:
            raise ValueError(f"quaternion is not unit length (norm {norm!r})")

    @classmethod
    def identity(cls) -> "UnitQuaternion":
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def normalized(cls, wxyz) -> "UnitQuaternion":
        """Build a unit quaternion from any nonzero 4-vector."""
        arr = np.asarray(wxyz, dtype=float)
        if arr.shape != (4,):
            raise ValueError(f"expected a 4-vector, got shape {arr.shape}")
        norm = float(np.linalg.norm(arr))
        if not math.isfinite(norm) or norm < 1e-12:
            raise ValueError("cannot normalize a zero or non-finite quaternion")
        w, x, y, z = (arr / norm).tolist()
        return cls(w, x, y, z)

    @classmethod
    def from_axis_angle(cls, axis, angle: float) -> "UnitQuaternion":
        ax = np.asarray(axis, dtype=float)
        norm = float(np.linalg.norm(ax))
        if norm < 1e-12:
            raise ValueError("rotation axis must be nonzero")
        ax = ax / norm
        half = 0.5 * float(angle)
        s = math.sin(half)
        return cls(math.cos(half), s * ax[0], s * ax[1], s * ax[2])

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z])

    def dot(self, other: "UnitQuaternion") -> float:
        return self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z

    def conjugate(self) -> "UnitQuaternion":
        return UnitQuaternion(self.w, -self.x, -self.y, -self.z)

    def __neg__(self) -> "UnitQuaternion":
        return UnitQuaternion(-self.w, -self.x, -self.y, -self.z)

    def multiply(self, other: "UnitQuaternion") -> "UnitQuaternion":
        """Hamilton product self * other.

        Composition order matches matrices: rotating by the product applies
        ``other`` first, then ``self``.
        """
        w1, x1, y1, z1 = self.w, self.x, self.y, self.z
        w2, x2, y2, z2 = other.w, other.x, other.y, other.z
        return UnitQuaternion.normalized([
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ])


def rotation_about_y(angle: float) -> UnitQuaternion:
    """Rotation about the vertical (y) axis, the common case for furniture."""
    return UnitQuaternion.from_axis_angle((0.0, 1.0, 0.0), angle)


def random_unit_quaternion(rng: np.random.Generator) -> UnitQuaternion:
    """Draw a rotation uniformly over the rotation group."""
    while True:
        v = rng.normal(size=4)
        if np.linalg.norm(v) > 1e-6:
            return UnitQuaternion.normalized(v)


def quat_to_matrix(q: UnitQuaternion) -> np.ndarray:
    """Convert a unit quaternion to a 3x3 rotation matrix."""
    w, x, y, z = q.w, q.x, q.y, q.z
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def validate_rotation_matrix(R: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    """Check orthonormality and det=+1; returns the matrix as float64."""
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        raise ValueError(f"rotation matrix must be 3x3, got {R.shape}")
    if not np.allclose(R.T @ R, np.eye(3), atol=tol):
        raise ValueError("matrix is not orthonormal")
    if abs(np.linalg.det(R) - 1.0) > tol:
        raise ValueError("matrix determinant is not +1 (improper rotation)")
    return R


def matrix_to_quat(R: np.ndarray) -> UnitQuaternion:
    """Convert a rotation matrix to a unit quaternion (Shepperd's method)."""
    R = validate_rotation_matrix(R)
    trace = R[0, 0] + R[1, 1] + R[2, 2]
    if trace > 0.0:
        s = math.sqrt(trace + 1.0) * 2.0
        w = 0.25 * s
        x = (R[2, 1] - R[1, 2]) / s
        y = (R[0, 2] - R[2, 0]) / s
        z = (R[1, 0] - R[0, 1]) / s
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
        w = (R[2, 1] - R[1, 2]) / s
        x = 0.25 * s
        y = (R[0, 1] + R[1, 0]) / s
        z = (R[0, 2] + R[2, 0]) / s
    elif R[1, 1] > R[2, 2]:
        s = math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2.0
        w = (R[0, 2] - R[2, 0]) / s
        x = (R[0, 1] + R[1, 0]) / s
        y = 0.25 * s
        z = (R[1, 2] + R[2, 1]) / s
    else:
        s = math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2.0
        w = (R[1, 0] - R[0, 1]) / s
        x = (R[0, 2] + R[2, 0]) / s
        y = (R[1, 2] + R[2, 1]) / s
        z = 0.25 * s
    return UnitQuaternion.normalized([w, x, y, z])


def rotation_geodesic(a: UnitQuaternion, b: UnitQuaternion) -> float:
    """Geodesic distance between two rotations, in radians; always in
    [0, pi] and invariant to the sign of either quaternion.

    Equals ``2 * arccos(|<a, b>|)`` and the Frobenius norm of the relative
    rotation's matrix logarithm divided by sqrt(2) (the matrix form is kept
    as a test oracle only).  Evaluated through the sign-folded chordal
    distance, which stays exact at 0 where the arccos form loses digits.
    """
    av = a.as_array()
    bv = b.as_array()
    chord = min(float(np.linalg.norm(av - bv)), float(np.linalg.norm(av + bv)))
    return 4.0 * math.asin(min(1.0, 0.5 * chord))


@dataclass(frozen=True)
class Pose:
    """Similarity pose: anisotropic scale, then rotation, then translation.

    Maps canonical-frame points p to camera-frame points
    ``R(q) @ diag(scale) @ p + translation``.
    """

    scale: np.ndarray
    rotation: UnitQuaternion
    translation: np.ndarray

    def __post_init__(self):
        scale = _vec3(self.scale, "scale")
        if np.any(scale <= 0.0):
            raise ValueError(f"scale components must be strictly positive, got {scale}")
        object.__setattr__(self, "scale", scale)
        if not isinstance(self.rotation, UnitQuaternion):
            object.__setattr__(self, "rotation", UnitQuaternion(*np.asarray(self.rotation, dtype=float)))
        object.__setattr__(self, "translation", _vec3(self.translation, "translation"))

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.ones(3), UnitQuaternion.identity(), np.zeros(3))

    @property
    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.rotation)


def apply_pose(pose: Pose, points: np.ndarray, inverse: bool = False) -> np.ndarray:
    """Apply a pose (or its inverse) to one point or an (N, 3) batch."""
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[-1] != 3:
        raise ValueError(f"points must have 3 components, got shape {points.shape}")
    R = pose.rotation_matrix
    if inverse:
        out = ((pts - pose.translation) @ R) / pose.scale
    else:
        out = (pts * pose.scale) @ R.T + pose.translation
    return out[0] if single else out


@dataclass(frozen=True)
class Camera:
    """Pinhole intrinsics.  Pixel coordinates are continuous; the center of
    image-grid pixel (row i, col j) is at (u, v) = (j + 0.5, i + 0.5)."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        for name in ("fx", "fy", "cx", "cy"):
            object.__setattr__(self, name, float(getattr(self, name)))
        for name in ("width", "height"):
            object.__setattr__(self, name, int(getattr(self, name)))
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    def scaled(self, width: int, height: int) -> "Camera":
        """Intrinsics for the same field of view at another resolution."""
        sx = width / self.width
        sy = height / self.height
        return Camera(self.fx * sx, self.fy * sy, self.cx * sx, self.cy * sy, width, height)


DEFAULT_CAMERA = Camera(fx=519.0, fy=519.0, cx=320.0, cy=240.0, width=640, height=480)


def backproject(cam: Camera, u, v, depth) -> np.ndarray:
    """Lift pixel coordinates plus depth to camera-frame 3D points.

    Accepts scalars or broadcastable arrays; returns shape (..., 3).
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    depth = np.asarray(depth, dtype=float)
    if np.any(depth <= 0.0):
        raise ValueError("depth must be strictly positive")
    x = (u - cam.cx) * depth / cam.fx
    y = (v - cam.cy) * depth / cam.fy
    return np.stack(np.broadcast_arrays(x, y, depth), axis=-1)


def project(cam: Camera, points: np.ndarray):
    """Project camera-frame 3D points; returns (u, v, depth)."""
    pts = np.asarray(points, dtype=float)
    z = pts[..., 2]
    if np.any(z <= 0.0):
        raise ValueError("points must have strictly positive z to project")
    u = pts[..., 0] * cam.fx / z + cam.cx
    v = pts[..., 1] * cam.fy / z + cam.cy
    return u, v, z
