"""Rigid point-cloud alignment and the shared nearest-neighbor index.

The index is exact: distances come from a kd-tree and equidistant
candidates resolve to the lowest point index.  ICP alternates exact
nearest-neighbor correspondence with a closed-form least-squares fit from
identity initialization; its fitness (mean squared residual divided by the
squared object size) never increases across iterations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import validate_rotation_matrix

__all__ = [
    "IcpResult",
    "NNIndex",
    "RigidTransform",
    "bbox_diagonal",
    "icp",
    "kabsch_align",
]


class NNIndex:
    """Exact Euclidean nearest-neighbor lookup over a fixed point set."""

    def __init__(self, points: np.ndarray):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) == 0:
            raise ValueError("index needs a non-empty (N, 3) point array")
        self.points = pts
        self._tree = cKDTree(pts)

    def __len__(self) -> int:
        return len(self.points)

    def query(self, queries: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Nearest indexed point per query; returns (distances, indices).

        Ties break to the lowest index.  The second-nearest distance from
        the tree tells us when a tie is possible; only those queries pay
        for the exhaustive ball lookup.
        """
        q = np.asarray(queries, dtype=float)
        single = q.ndim == 1
        q = np.atleast_2d(q)
        k = min(2, len(self.points))
        dist, idx = self._tree.query(q, k=k)
        if k == 1:
            dist = dist[:, None] if dist.ndim == 1 else dist
            idx = idx[:, None] if idx.ndim == 1 else idx
        best_d = dist[:, 0]
        best_i = idx[:, 0].astype(int)
        if k == 2:
            tied = dist[:, 1] <= best_d
            for row in np.flatnonzero(tied):
                ball = self._tree.query_ball_point(q[row], r=best_d[row], p=2.0)
                best_i[row] = min(ball)
        if single:
            return float(best_d[0]), int(best_i[0])
        return best_d, best_i


def bbox_diagonal(points: np.ndarray) -> float:
    """Diagonal length of the axis-aligned bounding box of a point set,
    the package-wide convention for "object size"."""
    pts = np.asarray(points, dtype=float)
    if len(pts) == 0:
        raise ValueError("cannot size an empty point set")
    return float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))


@dataclass(frozen=True)
class RigidTransform:
    """Rotation followed by translation: p -> R @ p + t."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = validate_rotation_matrix(self.rotation, tol=1e-6)
        t = np.array(self.translation, dtype=float)
        if t.shape != (3,) or not np.all(np.isfinite(t)):
            raise ValueError("translation must be a finite 3-vector")
        R = np.array(R)
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.rotation.T + self.translation


def kabsch_align(src: np.ndarray, dst: np.ndarray) -> RigidTransform:
    """Least-squares rigid transform mapping src points onto dst points.

    ``src`` and ``dst`` are paired by position and must contain at least 3
    non-collinear correspondences.  Reflections are excluded through the
    usual determinant correction.
    """
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 3:
        raise ValueError("src and dst must be matching (N, 3) arrays")
    if len(src) < 3:
        raise ValueError("need at least 3 correspondence pairs")
    src_mean = src.mean(axis=0)
    dst_mean = dst.mean(axis=0)
    cov = (src - src_mean).T @ (dst - dst_mean)
    U, s, Vt = np.linalg.svd(cov)
    # Collinear or coincident configurations leave the rotation
    # under-determined.
    scale = max(s[0], 1.0)
    if s[1] <= 1e-12 * scale:
        raise ValueError("degenerate correspondences (collinear or coincident)")
    d = np.sign(np.linalg.det(Vt.T @ U.T))
    R = Vt.T @ np.diag([1.0, 1.0, d]) @ U.T
    t = dst_mean - R @ src_mean
    return RigidTransform(R, t)


@dataclass(frozen=True)
class IcpResult:
    """Alignment outcome; fitness is mean squared residual / size_norm^2."""

    transform: RigidTransform
    fitness: float
    iterations: int
    converged: bool
    fitness_history: tuple[float, ...]


def icp(src: np.ndarray, dst: np.ndarray, size_norm: float,
        max_iter: int = 50, rel_tol: float = 1e-6) -> IcpResult:
    """Point-to-point ICP from identity initialization.

    Alternates exact nearest-neighbor correspondence against ``dst`` with a
    full Kabsch refit of the global transform applied to the original
    ``src``.  Stops at ``max_iter`` or when the relative fitness
    improvement drops below ``rel_tol`` (relative, so the trajectory does
    not depend on the normalization).  ``size_norm`` (meters) is the object
    size used to normalize the fitness; the bounding-box diagonal of the
    ground-truth object is the package convention (:func:`bbox_diagonal`).
    """
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    if src.ndim != 2 or src.shape[1] != 3 or len(src) == 0:
        raise ValueError("src must be a non-empty (N, 3) array")
    if dst.ndim != 2 or dst.shape[1] != 3 or len(dst) == 0:
        raise ValueError("dst must be a non-empty (N, 3) array")
    if not size_norm > 0:
        raise ValueError("size_norm must be positive")

    index = NNIndex(dst)
    norm2 = size_norm * size_norm
    transform = RigidTransform.identity()

    def fitness_of(T: RigidTransform) -> tuple[float, np.ndarray]:
        moved = T.apply(src)
        d, i = index.query(moved)
        return float(np.mean(d * d)) / norm2, dst[i]

    fitness, corr = fitness_of(transform)
    history = [fitness]
    converged = False
    iterations = 0
    for _ in range(max_iter):
        iterations += 1
        try:
            candidate = kabsch_align(src, corr)
        except ValueError:
            # Degenerate inner alignment: keep the best transform so far.
            break
        new_fitness, new_corr = fitness_of(candidate)
        if new_fitness > fitness:
            # Cannot happen in exact arithmetic; guards float round-off.
            converged = True
            break
        improvement = (fitness - new_fitness) / max(fitness, 1e-300)
        transform, fitness, corr = candidate, new_fitness, new_corr
        history.append(fitness)
        if improvement < rel_tol:
            converged = True
            break
    return IcpResult(transform=transform, fitness=fitness, iterations=iterations,
                     converged=converged, fitness_history=tuple(history))
