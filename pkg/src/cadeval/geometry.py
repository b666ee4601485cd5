"""Box geometry, center-point matching and non-maximum suppression.

Boxes use continuous pixel coordinates in the image frame (origin top-left);
area is ``(x_max - x_min) * (y_max - y_min)`` with no +1 pixel convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, InputError

BENIGN = "benign"
MALIGNANT = "malignant"
LESION_CLASSES = (BENIGN, MALIGNANT)


@dataclass(frozen=True, order=True)
class BoundingBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        coords = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(c) for c in coords):
            raise InputError(f"box coordinates must be finite, got {coords}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise InputError(f"box must have positive area, got {coords}")

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x_min + self.x_max) / 2, (self.y_min + self.y_max) / 2)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    def scaled(self, s: float) -> BoundingBox:
        return BoundingBox(self.x_min * s, self.y_min * s, self.x_max * s, self.y_max * s)


@dataclass(frozen=True)
class Detection:
    """A scored, classed box emitted by a detector for one image."""

    box: BoundingBox
    score: float
    lesion_class: str
    image_id: str
    model_id: str = "model"

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise InputError(f"detection score must lie in [0, 1], got {self.score!r}")
        if self.lesion_class not in LESION_CLASSES:
            raise InputError(
                f"detection class must be one of {LESION_CLASSES}, got {self.lesion_class!r}"
            )

    @property
    def is_malignant(self) -> bool:
        return self.lesion_class == MALIGNANT


@dataclass(frozen=True)
class NmsConfig:
    """NMS settings. The 0.1 default IoU is the value used at inference time
    for mammograms, where overlapping lesions are rare."""

    iou_threshold: float = 0.1

    def __post_init__(self):
        if not (0.0 <= self.iou_threshold <= 1.0):
            raise ConfigError(f"iou_threshold must lie in [0, 1], got {self.iou_threshold!r}")


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes, in [0, 1]."""
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def center_in_box(d: Detection | BoundingBox, g: BoundingBox) -> bool:
    """True if the center of ``d`` lies inside ``g``; edges count as inside."""
    box = d.box if isinstance(d, Detection) else d
    cx, cy = box.center
    return g.x_min <= cx <= g.x_max and g.y_min <= cy <= g.y_max


def transform_boxes(boxes: Iterable[BoundingBox], s: float) -> list[BoundingBox]:
    """Scale every coordinate by ``s`` (tracks an isotropic image resize)."""
    if not s > 0:
        raise ConfigError(f"scale factor must be positive, got {s!r}")
    return [b.scaled(s) for b in boxes]


def priority_key(d: Detection) -> tuple:
    """Sort key used by NMS: score descending, then box coordinates ascending."""
    return (-d.score, d.box.as_tuple(), d.lesion_class)


def _iou_against(coords: np.ndarray, areas: np.ndarray, i: int, rest: np.ndarray) -> np.ndarray:
    x1 = np.maximum(coords[i, 0], coords[rest, 0])
    y1 = np.maximum(coords[i, 1], coords[rest, 1])
    x2 = np.minimum(coords[i, 2], coords[rest, 2])
    y2 = np.minimum(coords[i, 3], coords[rest, 3])
    iw = x2 - x1
    ih = y2 - y1
    inter = np.where((iw > 0) & (ih > 0), iw * ih, 0.0)
    return inter / (areas[i] + areas[rest] - inter)


def _nms_one_class(dets: list[Detection], threshold: float) -> list[Detection]:
    dets = sorted(dets, key=priority_key)
    coords = np.array([d.box.as_tuple() for d in dets], dtype=np.float64).reshape(-1, 4)
    areas = (coords[:, 2] - coords[:, 0]) * (coords[:, 3] - coords[:, 1])
    alive = np.arange(len(dets))
    keep = []
    while alive.size:
        i = alive[0]
        keep.append(dets[i])
        rest = alive[1:]
        alive = rest[_iou_against(coords, areas, i, rest) <= threshold]
    return keep


def nms(detections: Sequence[Detection], cfg: NmsConfig = NmsConfig()) -> list[Detection]:
    """Greedy per-class non-maximum suppression for a single image.

    The highest-priority remaining detection is kept and every same-class
    detection overlapping it with IoU strictly above ``cfg.iou_threshold`` is
    discarded. Score ties are broken by the box's ``(x_min, y_min, x_max,
    y_max)`` so the result does not depend on input order.

    Returns:
        Surviving detections, unchanged, ordered by the same priority.

    Raises:
        InputError: if the detections come from more than one image.
    """
    if not detections:
        return []
    image_ids = {d.image_id for d in detections}
    if len(image_ids) > 1:
        raise InputError(f"nms expects detections of one image, got {sorted(image_ids)}")
    by_class: dict[str, list[Detection]] = {}
    for d in detections:
        by_class.setdefault(d.lesion_class, []).append(d)
    kept = []
    for dets in by_class.values():
        kept.extend(_nms_one_class(dets, cfg.iou_threshold))
    return sorted(kept, key=priority_key)
