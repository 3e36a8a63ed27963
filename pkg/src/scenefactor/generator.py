"""Deterministic synthetic indoor scenes with exact ground truth.

A scene is a single axis-aligned room box (the camera at the origin,
strictly inside), furniture objects resting on the floor with rotations
about the vertical axis only, and an analytically rendered amodal layout.
All world bounding boxes are pairwise disjoint.  A seed fully determines
the scene.

Two realism constraints keep the 8 cm scene grid well resolved: each room
gets one large anchor piece (bed or sofa by default), and televisions are
capped at one per scene.  Both are configurable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .geometry import Camera, DEFAULT_CAMERA, Pose, project, rotation_about_y
from .render import depth_to_disparity, render_depth_analytic
from .scene import CLASS_LABELS, FactoredScene, SceneObject, parametric_shape, shape_voxels
from .voxels import Cuboid

__all__ = ["GeneratorConfig", "generate_scene"]

# World-size ranges (x width, y height, z depth) per class, in meters.
# The canonical solid spans the unit box in x/y/z for all classes except
# television, whose thin panel sets its own world thickness via scale.
CLASS_SIZE_RANGES: dict[str, tuple[tuple[float, float], ...]] = {
    "bed": ((1.4, 1.9), (0.85, 1.15), (1.9, 2.2)),
    "chair": ((0.5, 0.65), (0.85, 1.05), (0.5, 0.65)),
    "desk": ((1.1, 1.6), (0.72, 0.8), (0.55, 0.8)),
    "sofa": ((1.6, 2.2), (0.8, 1.0), (0.85, 1.05)),
    "table": ((1.0, 1.7), (0.65, 0.78), (0.8, 1.1)),
    "television": ((0.85, 1.2), (0.5, 0.7), (0.9, 1.4)),
}


def _range_pair(value, name: str) -> tuple[float, float]:
    lo, hi = (float(v) for v in value)
    if not (np.isfinite(lo) and np.isfinite(hi) and lo <= hi):
        raise ValueError(f"{name} must be a non-empty (lo, hi) range, got {value}")
    return lo, hi


@dataclass(frozen=True)
class GeneratorConfig:
    """Everything the generator needs; the seed fully determines the output.

    Room ranges are expressed directly in camera coordinates (y down), so
    ``floor_y_range`` is the floor height below the camera and the ceiling
    range is negative.  Defaults keep the whole room inside the default
    scene voxel grid.
    """

    seed: int = 0
    object_count_range: tuple[int, int] = (3, 5)
    room_x_min_range: tuple[float, float] = (-2.4, -1.5)
    room_x_max_range: tuple[float, float] = (1.5, 2.4)
    floor_y_range: tuple[float, float] = (0.95, 1.25)
    ceiling_y_range: tuple[float, float] = (-1.25, -0.95)
    back_wall_z_range: tuple[float, float] = (-1.0, -0.4)
    front_wall_z_range: tuple[float, float] = (3.4, 5.0)
    class_mix: Mapping[str, float] = field(
        default_factory=lambda: {label: 1.0 for label in CLASS_LABELS})
    anchor_classes: tuple[str, ...] = ("bed", "sofa")
    max_televisions: int = 1
    max_attempts: int = 60
    placement_margin: float = 0.06
    min_object_z: float = 0.9
    camera: Camera = field(default_factory=lambda: DEFAULT_CAMERA.scaled(64, 48))

    def __post_init__(self):
        lo, hi = (int(v) for v in self.object_count_range)
        if lo < 0 or hi < lo:
            raise ValueError(f"bad object_count_range {self.object_count_range}")
        object.__setattr__(self, "object_count_range", (lo, hi))
        for name in ("room_x_min_range", "room_x_max_range", "floor_y_range",
                     "ceiling_y_range", "back_wall_z_range", "front_wall_z_range"):
            object.__setattr__(self, name, _range_pair(getattr(self, name), name))
        mix = {str(k): float(v) for k, v in dict(self.class_mix).items()}
        if not mix or any(k not in CLASS_LABELS for k in mix) or any(v < 0 for v in mix.values()):
            raise ValueError(f"class_mix must map known classes to non-negative weights, got {mix}")
        if sum(mix.values()) <= 0:
            raise ValueError("class_mix weights must not all be zero")
        object.__setattr__(self, "class_mix", mix)
        anchors = tuple(self.anchor_classes)
        if any(a not in CLASS_LABELS for a in anchors):
            raise ValueError(f"unknown anchor class in {anchors}")
        object.__setattr__(self, "anchor_classes", anchors)
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be at least 1")


def _sample_room(cfg: GeneratorConfig, rng: np.random.Generator) -> Cuboid:
    x_min = rng.uniform(*cfg.room_x_min_range)
    x_max = rng.uniform(*cfg.room_x_max_range)
    floor_y = rng.uniform(*cfg.floor_y_range)
    ceil_y = rng.uniform(*cfg.ceiling_y_range)
    z_back = rng.uniform(*cfg.back_wall_z_range)
    z_front = rng.uniform(*cfg.front_wall_z_range)
    lo = np.array([x_min, ceil_y, z_back])
    hi = np.array([x_max, floor_y, z_front])
    return Cuboid((lo + hi) / 2.0, (hi - lo) / 2.0)


def _snap(value: float, unit: float = 1.0 / 32.0) -> float:
    return round(value / unit) * unit


def _shape_params(kind: str, rng: np.random.Generator) -> dict[str, float]:
    """Mild per-scene variation of the class default proportions.

    Every length is snapped to the canonical voxel lattice (1/32), which
    makes the 32^3 voxelization of the sampled solid exact: every cuboid
    face lands on a lattice plane, so the voxel shape, the analytic solid,
    and the trilinear iso-surface all coincide.  The television panel snaps
    to an even cell count because its faces sit at +-half its size.
    """
    jitter = {
        "table": {"top_thickness": (0.14, 0.22), "leg_width": (0.2, 0.28)},
        "desk": {"top_thickness": (0.16, 0.24), "leg_width": (0.22, 0.29)},
        "chair": {"seat_top": (-0.08, 0.08), "seat_thickness": (0.15, 0.22),
                  "back_thickness": (0.15, 0.22), "leg_width": (0.16, 0.24)},
        "bed": {"mattress_depth": (0.45, 0.65), "headboard_thickness": (0.12, 0.2)},
        "sofa": {"seat_depth": (0.4, 0.55), "back_thickness": (0.2, 0.3),
                 "arm_width": (0.14, 0.22), "arm_top": (-0.22, -0.08)},
        "television": {"panel_width": (0.8, 0.95), "panel_thickness": (0.06, 0.09)},
    }[kind]
    centered = ("panel_width", "panel_thickness")
    out = {}
    for name, (lo, hi) in jitter.items():
        unit = 1.0 / 16.0 if name in centered else 1.0 / 32.0
        out[name] = _snap(float(rng.uniform(lo, hi)), unit)
    return out


def _solid_bounds(cuboids) -> tuple[np.ndarray, np.ndarray]:
    lows = np.array([c.bounds[0] for c in cuboids])
    highs = np.array([c.bounds[1] for c in cuboids])
    return lows.min(axis=0), highs.max(axis=0)


def _project_box(cuboids, pose: Pose, cam: Camera):
    corners = np.concatenate([c.corners() for c in cuboids])
    world = corners * pose.scale @ pose.rotation_matrix.T + pose.translation
    if np.any(world[:, 2] <= 1e-6):
        return None
    u, v, _ = project(cam, world)
    x0 = max(0.0, float(u.min()))
    y0 = max(0.0, float(v.min()))
    x1 = min(float(cam.width), float(u.max()))
    y1 = min(float(cam.height), float(v.max()))
    if x0 >= x1 or y0 >= y1:
        return None
    return (x0, y0, x1, y1)


def generate_scene(cfg: GeneratorConfig) -> FactoredScene:
    """Generate one ground-truth scene; identical configs give identical
    scenes bit for bit.

    Placement is rejection sampling on world-space bounding boxes.  If an
    object cannot be placed within ``max_attempts`` tries it is skipped and
    the scene carries a warning.
    """
    rng = np.random.default_rng(cfg.seed)
    room = _sample_room(cfg, rng)
    room_lo, room_hi = room.bounds
    floor_y = float(room_hi[1])

    count = int(rng.integers(cfg.object_count_range[0], cfg.object_count_range[1] + 1))
    labels = list(cfg.class_mix)
    weights = np.array([cfg.class_mix[k] for k in labels], dtype=float)

    objects: list[SceneObject] = []
    placed_boxes: list[tuple[np.ndarray, np.ndarray]] = []
    warnings: list[str] = []
    margin = cfg.placement_margin

    for slot in range(count):
        placed = False
        for _ in range(cfg.max_attempts):
            if slot == 0 and cfg.anchor_classes:
                kind = str(rng.choice(cfg.anchor_classes))
            else:
                pool = weights.copy()
                n_tv = sum(1 for o in objects if o.class_label == "television")
                if n_tv >= cfg.max_televisions and "television" in labels:
                    pool[labels.index("television")] = 0.0
                if pool.sum() <= 0:
                    pool = weights.copy()
                kind = str(rng.choice(labels, p=pool / pool.sum()))

            size_ranges = CLASS_SIZE_RANGES[kind]
            scale = np.array([rng.uniform(lo, hi) for lo, hi in size_ranges])
            solid = parametric_shape(kind, **_shape_params(kind, rng))
            theta = float(rng.uniform(0.0, 2.0 * np.pi))
            rotation = rotation_about_y(theta)

            lo_c, hi_c = _solid_bounds(solid)
            half = (hi_c - lo_c) / 2.0 * scale
            # Rotation about y turns the footprint into a larger AABB.
            cos_t, sin_t = abs(np.cos(theta)), abs(np.sin(theta))
            half_x = cos_t * half[0] + sin_t * half[2]
            half_z = sin_t * half[0] + cos_t * half[2]

            x_lo = room_lo[0] + margin + half_x
            x_hi = room_hi[0] - margin - half_x
            z_lo = max(cfg.min_object_z + half_z, room_lo[2] + margin + half_z)
            z_hi = room_hi[2] - margin - half_z
            if x_lo >= x_hi or z_lo >= z_hi:
                continue
            tx = rng.uniform(x_lo, x_hi)
            tz = rng.uniform(z_lo, z_hi)
            # The solid reaches +0.5 in canonical y for every class, so this
            # rests the object exactly on the floor.
            ty = floor_y - 0.5 * scale[1]

            center_y = ty + (lo_c[1] + hi_c[1]) / 2.0 * scale[1]
            box_lo = np.array([tx - half_x, center_y - half[1], tz - half_z])
            box_hi = np.array([tx + half_x, center_y + half[1], tz + half_z])
            overlap = any(
                np.all(box_lo < other_hi) and np.all(other_lo < box_hi)
                for other_lo, other_hi in placed_boxes
            )
            if overlap:
                continue

            pose = Pose(scale, rotation, np.array([tx, ty, tz]))
            box2d = _project_box(solid, pose, cfg.camera)
            if box2d is None:
                # Entirely outside the camera frustum: not usable ground
                # truth for image-based evaluation.
                continue
            objects.append(SceneObject(
                shape=shape_voxels(solid),
                pose=pose,
                score=1.0,
                class_label=kind,
                box2d=box2d,
                solid=tuple(solid),
            ))
            placed_boxes.append((box_lo, box_hi))
            placed = True
            break
        if not placed:
            warnings.append(
                f"placement failed after {cfg.max_attempts} attempts; "
                f"placed {len(objects)} of {count} objects")
            break

    partial = FactoredScene(camera=cfg.camera, objects=tuple(objects), room=room,
                            warnings=tuple(warnings))
    layout = depth_to_disparity(render_depth_analytic(partial, include_objects=False))
    return FactoredScene(camera=cfg.camera, objects=tuple(objects), layout=layout,
                         room=room, warnings=tuple(warnings))
