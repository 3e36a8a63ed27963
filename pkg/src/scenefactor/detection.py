"""Proposal assignment, five-predicate detection matching, PR, and AP.

A detection is a true positive only if it satisfies the thresholds on all
five component metrics (2D box IoU, shape IoU, rotation, translation,
scale) against some still-unmatched ground-truth object.  Any threshold
can be a wildcard (None), which removes that predicate; relaxing
predicates one at a time diagnoses which factor limits performance.

Detections are processed in descending score, ties in insertion order.
Among the ground truths that satisfy every active predicate, a detection
matches the one with the highest 2D box IoU, or the smallest translation
error when the box threshold is wildcarded.  Average precision is the
exact area under the precision envelope over recall (all-point
interpolation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .metrics import DEFAULT_DELTAS, box_iou_2d, component_errors
from .scene import SceneObject

__all__ = [
    "DEFAULT_THRESHOLDS",
    "ApRow",
    "EvalOutcome",
    "MatchRecord",
    "ProposalLabel",
    "ThresholdTuple",
    "ap_sweep",
    "assign_proposals",
    "evaluate_dataset",
    "evaluate_detections",
]

FOREGROUND_IOU = 0.7
BACKGROUND_IOU = 0.3


@dataclass(frozen=True)
class ThresholdTuple:
    """The five detection predicates; None means wildcard (relaxed)."""

    box2d: float | None = DEFAULT_DELTAS["box2d"]
    shape: float | None = DEFAULT_DELTAS["shape"]
    rotation: float | None = DEFAULT_DELTAS["rotation"]
    translation: float | None = DEFAULT_DELTAS["translation"]
    scale: float | None = DEFAULT_DELTAS["scale"]

    def __post_init__(self):
        for name in ("box2d", "shape"):
            v = getattr(self, name)
            if v is not None and not (0.0 < v <= 1.0):
                raise ValueError(f"{name} threshold must lie in (0, 1], got {v}")
        for name in ("rotation", "translation", "scale"):
            v = getattr(self, name)
            if v is not None and v <= 0.0:
                raise ValueError(f"{name} threshold must be positive, got {v}")

    def relax(self, name: str) -> "ThresholdTuple":
        if name not in ("box2d", "shape", "rotation", "translation", "scale"):
            raise ValueError(f"unknown predicate {name!r}")
        return replace(self, **{name: None})

    @classmethod
    def box_only(cls, box2d: float = DEFAULT_DELTAS["box2d"]) -> "ThresholdTuple":
        return cls(box2d=box2d, shape=None, rotation=None, translation=None, scale=None)


DEFAULT_THRESHOLDS = ThresholdTuple()


@dataclass(frozen=True)
class ProposalLabel:
    """Foreground / background / ignore label for one 2D proposal."""

    kind: str
    gt_index: int | None = None
    iou: float = 0.0


def assign_proposals(proposals, gt_boxes) -> list[ProposalLabel]:
    """Label proposals by their best 2D IoU against the ground-truth boxes.

    IoU above 0.7 is foreground (assigned to the argmax box, ties to the
    lowest index), below 0.3 against every box is background, anything in
    between is ignored.
    """
    labels = []
    gt = [tuple(float(v) for v in b) for b in gt_boxes]
    for box in proposals:
        if not gt:
            labels.append(ProposalLabel("background", None, 0.0))
            continue
        ious = np.array([box_iou_2d(box, g) for g in gt])
        best = int(np.argmax(ious))
        best_iou = float(ious[best])
        if best_iou > FOREGROUND_IOU:
            labels.append(ProposalLabel("foreground", best, best_iou))
        elif best_iou < BACKGROUND_IOU:
            labels.append(ProposalLabel("background", None, best_iou))
        else:
            labels.append(ProposalLabel("ignore", None, best_iou))
    return labels


@dataclass(frozen=True)
class MatchRecord:
    """Outcome for one detection after matching."""

    score: float
    tp: bool
    scene_index: int
    det_index: int
    gt_index: int | None


@dataclass(frozen=True)
class EvalOutcome:
    """Pooled detection results: per-detection records, PR arrays, and AP."""

    matches: tuple[MatchRecord, ...]
    precision: np.ndarray
    recall: np.ndarray
    ap: float
    n_gt: int

    def tp_count(self) -> int:
        return sum(m.tp for m in self.matches)


def _passes(errors, thresholds: ThresholdTuple) -> bool:
    if thresholds.box2d is not None:
        if errors.box_iou is None or not errors.box_iou > thresholds.box2d:
            return False
    if thresholds.shape is not None and not errors.shape_iou > thresholds.shape:
        return False
    if thresholds.rotation is not None and not errors.rot_err < thresholds.rotation:
        return False
    if thresholds.translation is not None and not errors.trans_err < thresholds.translation:
        return False
    if thresholds.scale is not None and not errors.scale_err < thresholds.scale:
        return False
    return True


def _match_scene(dets, gts, thresholds: ThresholdTuple, tau: float,
                 scene_index: int) -> list[MatchRecord]:
    """Greedy matching inside one scene; each GT matches at most once."""
    for d in dets:
        if d.score is None or not math.isfinite(d.score):
            raise ValueError("detections must carry finite scores")
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    errors = {}
    taken = set()
    records = []
    for det_index in order:
        det = dets[det_index]
        best_gt = None
        best_key = None
        for gt_index, gt in enumerate(gts):
            if gt_index in taken:
                continue
            if (det_index, gt_index) not in errors:
                errors[(det_index, gt_index)] = component_errors(det, gt, tau)
            err = errors[(det_index, gt_index)]
            if not _passes(err, thresholds):
                continue
            if thresholds.box2d is not None:
                key = (-err.box_iou, gt_index)
            else:
                key = (err.trans_err, gt_index)
            if best_key is None or key < best_key:
                best_key = key
                best_gt = gt_index
        if best_gt is not None:
            taken.add(best_gt)
            records.append(MatchRecord(det.score, True, scene_index, det_index, best_gt))
        else:
            records.append(MatchRecord(det.score, False, scene_index, det_index, None))
    return records


def evaluate_dataset(scene_pairs, thresholds: ThresholdTuple = DEFAULT_THRESHOLDS,
                     tau: float = 0.5) -> EvalOutcome:
    """Match every (detections, ground_truths) pair and pool the records
    into one PR curve and AP.

    Pooled detections sort by descending score; equal scores keep scene
    order then insertion order.  AP needs at least one ground truth.
    """
    all_records: list[MatchRecord] = []
    n_gt = 0
    for scene_index, (dets, gts) in enumerate(scene_pairs):
        n_gt += len(gts)
        all_records.extend(_match_scene(list(dets), list(gts), thresholds, tau, scene_index))
    if n_gt == 0:
        raise ValueError("cannot evaluate without ground-truth objects")

    scores = np.array([r.score for r in all_records])
    order = np.argsort(-scores, kind="stable")
    ordered = [all_records[i] for i in order]
    tp = np.array([r.tp for r in ordered], dtype=float)
    cum_tp = np.cumsum(tp)
    cum_fp = np.cumsum(1.0 - tp)
    recall = cum_tp / n_gt
    precision = cum_tp / np.maximum(cum_tp + cum_fp, 1.0)
    ap = _envelope_ap(precision, recall)
    return EvalOutcome(tuple(ordered), precision, recall, ap, n_gt)


def evaluate_detections(dets, gts, thresholds: ThresholdTuple = DEFAULT_THRESHOLDS,
                        tau: float = 0.5) -> EvalOutcome:
    """Single-collection evaluation; see :func:`evaluate_dataset`."""
    return evaluate_dataset([(dets, gts)], thresholds, tau)


def _envelope_ap(precision: np.ndarray, recall: np.ndarray) -> float:
    """Exact area under the running-maximum precision envelope."""
    if len(precision) == 0:
        return 0.0
    env = np.maximum.accumulate(precision[::-1])[::-1]
    prev_r = 0.0
    ap = 0.0
    for p, r in zip(env, recall):
        ap += (r - prev_r) * p
        prev_r = r
    return float(ap)


@dataclass(frozen=True)
class ApRow:
    name: str
    thresholds: ThresholdTuple
    ap: float


def ap_sweep(scene_pairs, base: ThresholdTuple = DEFAULT_THRESHOLDS,
             tau: float = 0.5) -> list[ApRow]:
    """AP table over the standard relaxation families.

    Emits the full tuple, each single-predicate relaxation, the box-only
    tuple, and box-only plus each single predicate restored.
    """
    pairs = [(list(d), list(g)) for d, g in scene_pairs]
    rows = [ApRow("all", base, evaluate_dataset(pairs, base, tau).ap)]
    for name in ("shape", "rotation", "translation", "scale", "box2d"):
        relaxed = base.relax(name)
        rows.append(ApRow(f"all-{name}", relaxed, evaluate_dataset(pairs, relaxed, tau).ap))
    box_only = ThresholdTuple(box2d=base.box2d, shape=None, rotation=None,
                              translation=None, scale=None)
    rows.append(ApRow("box2d", box_only, evaluate_dataset(pairs, box_only, tau).ap))
    for name in ("shape", "rotation", "translation", "scale"):
        t = replace(box_only, **{name: getattr(base, name)})
        rows.append(ApRow(f"box2d+{name}", t, evaluate_dataset(pairs, t, tau).ap))
    return rows
