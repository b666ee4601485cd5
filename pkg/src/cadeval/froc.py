"""Lesion-level FROC analysis.

A detection is correct when its box center falls inside a ground-truth
lesion box. Sensitivity is the fraction of lesions credited by at least one
detection at or above the threshold; false-positive marks are detections
whose center lies in no lesion box, counted per image over all images,
including lesion-free ones. Only malignant-class detections are marks.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bootstrap import BootstrapConfig, bootstrap, percentile_interval
from .errors import DegenerateInputError, InputError
from .geometry import BoundingBox, Detection, center_in_box

DEFAULT_FP_TARGETS = (0.3, 3.0)


@dataclass(frozen=True)
class LesionAnnotation:
    lesion_id: str
    image_id: str
    box: BoundingBox
    lesion_class: str = "malignant"

    def __post_init__(self):
        if self.lesion_class != "malignant":
            raise InputError(
                f"lesion {self.lesion_id!r}: only malignant annotations are evaluated, "
                f"got {self.lesion_class!r}"
            )


@dataclass(frozen=True)
class FrocImage:
    """Everything FROC needs about one image."""

    image_id: str
    detections: tuple[Detection, ...] = ()
    lesions: tuple[LesionAnnotation, ...] = ()


@dataclass
class MatchResult:
    """TP/FP partition of one image's detections.

    ``matched_lesions`` maps each credited lesion to the ``(detection index,
    score)`` pairs crediting it; ``false_positives`` holds ``(image_id,
    detection index, score)`` for detections inside no lesion box.
    """

    matched_lesions: dict[str, list[tuple[int, float]]] = field(default_factory=dict)
    false_positives: list[tuple[str, int, float]] = field(default_factory=list)
    missed_lesions: list[str] = field(default_factory=list)

    def best_scores(self) -> dict[str, float]:
        """Highest crediting score per matched lesion."""
        return {lid: max(s for _, s in hits) for lid, hits in self.matched_lesions.items()}


@dataclass(frozen=True)
class FrocPoint:
    threshold: float
    n_false_positives: int
    n_credited: int
    n_images: int
    n_lesions: int

    @property
    def fp_per_image(self) -> float:
        return self.n_false_positives / self.n_images

    @property
    def sensitivity(self) -> float:
        return self.n_credited / self.n_lesions


@dataclass(frozen=True)
class FrocBand:
    grid: tuple[float, ...]
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def at(self, fp_per_image: float) -> tuple[float, float]:
        """Band at the largest grid value not above ``fp_per_image``."""
        i = bisect_right(self.grid, fp_per_image) - 1
        if i < 0:
            return 0.0, 0.0
        return self.lo[i], self.hi[i]


@dataclass(frozen=True)
class FrocCurve:
    """Points ordered by decreasing threshold, one per distinct detection score."""

    points: tuple[FrocPoint, ...]
    n_images: int
    n_lesions: int
    band: FrocBand | None = None

    @property
    def thresholds(self) -> list[float]:
        return [p.threshold for p in self.points]

    @property
    def fp_per_image(self) -> list[float]:
        return [p.fp_per_image for p in self.points]

    @property
    def sensitivity(self) -> list[float]:
        return [p.sensitivity for p in self.points]


def match_detections(
    detections: Sequence[Detection], lesions: Sequence[LesionAnnotation]
) -> MatchResult:
    """Partition one image's detections into lesion hits and false positives.

    A detection whose center lies inside several lesion boxes credits all of
    them and is not a false positive.

    Raises:
        InputError: if the detections and lesions do not share one image id.
    """
    ids = {d.image_id for d in detections} | {g.image_id for g in lesions}
    if len(ids) > 1:
        raise InputError(f"match_detections expects one image, got {sorted(ids)}")
    result = MatchResult()
    for i, d in enumerate(detections):
        hits = [g.lesion_id for g in lesions if center_in_box(d, g.box)]
        if not hits:
            result.false_positives.append((d.image_id, i, d.score))
        for lid in hits:
            result.matched_lesions.setdefault(lid, []).append((i, d.score))
    result.missed_lesions = [g.lesion_id for g in lesions if g.lesion_id not in result.matched_lesions]
    return result


@dataclass(frozen=True)
class _Tables:
    """Per-image cumulative counts on the global descending threshold list."""

    thresholds: np.ndarray  # (T,)
    credited: np.ndarray  # (I, T): lesions credited at score >= threshold
    false_pos: np.ndarray  # (I, T): FP marks with score >= threshold
    lesions: np.ndarray  # (I,)


def _tables(images: Sequence[FrocImage]) -> _Tables:
    if not images:
        raise DegenerateInputError("FROC needs at least one image")
    seen = set()
    for img in images:
        if img.image_id in seen:
            raise InputError(f"duplicate image id {img.image_id!r}")
        seen.add(img.image_id)
    per_image = []
    for img in images:
        marks = [d for d in img.detections if d.is_malignant]
        for d in marks:
            if d.image_id != img.image_id:
                raise InputError(f"detection of {d.image_id!r} filed under image {img.image_id!r}")
        m = match_detections(marks, img.lesions) if img.lesions or marks else MatchResult()
        per_image.append(
            (
                np.array(sorted(m.best_scores().values())),
                np.array(sorted(s for _, _, s in m.false_positives)),
                len(img.lesions),
                [d.score for d in marks],
            )
        )
    thresholds = np.unique(np.concatenate([np.asarray(p[3], dtype=float) for p in per_image]))[::-1]
    # ascending search on negated values gives counts of scores >= t
    neg_t = -thresholds
    credited = np.stack(
        [np.searchsorted(-best[::-1], neg_t, side="right") for best, *_ in per_image]
    ) if thresholds.size else np.zeros((len(images), 0), dtype=np.int64)
    false_pos = np.stack(
        [np.searchsorted(-fps[::-1], neg_t, side="right") for _, fps, *_ in per_image]
    ) if thresholds.size else np.zeros((len(images), 0), dtype=np.int64)
    lesions = np.array([p[2] for p in per_image], dtype=np.int64)
    return _Tables(thresholds, credited.astype(np.int64), false_pos.astype(np.int64), lesions)


def froc_curve(images: Sequence[FrocImage]) -> FrocCurve:
    """Sensitivity versus false-positive marks per image over all thresholds.

    Thresholds sweep every distinct malignant detection score, highest
    first. Counts are kept as integers so operating points are exact.

    Raises:
        DegenerateInputError: if the dataset holds no lesions.
    """
    t = _tables(images)
    n_lesions = int(t.lesions.sum())
    if n_lesions == 0:
        raise DegenerateInputError("FROC needs at least one lesion in the dataset")
    n_images = len(images)
    credited = t.credited.sum(axis=0)
    false_pos = t.false_pos.sum(axis=0)
    points = tuple(
        FrocPoint(float(th), int(fp), int(c), n_images, n_lesions)
        for th, fp, c in zip(t.thresholds, false_pos, credited)
    )
    return FrocCurve(points, n_images, n_lesions)


def _step_read(fp: np.ndarray, sens: np.ndarray, grid: Sequence[float]) -> np.ndarray:
    """Largest sensitivity with fp_per_image <= g, per row; 0 when none."""
    fp = np.atleast_2d(fp)
    sens = np.atleast_2d(sens)
    rows = np.arange(fp.shape[0])
    out = np.zeros((fp.shape[0], len(grid)))
    if fp.shape[1] == 0:
        return out
    for j, g in enumerate(grid):
        k = np.sum(fp <= g, axis=1) - 1
        out[:, j] = np.where(k >= 0, sens[rows, np.maximum(k, 0)], 0.0)
    return out


def sensitivity_at(curve: FrocCurve, grid: Sequence[float]) -> list[float]:
    """Step-interpolated sensitivity of ``curve`` at each fp_per_image in ``grid``."""
    return _step_read(np.array(curve.fp_per_image), np.array(curve.sensitivity), grid)[0].tolist()


def default_grid(curve: FrocCurve, targets: Sequence[float] = DEFAULT_FP_TARGETS) -> list[float]:
    """Distinct achieved fp_per_image values plus the operating-point targets."""
    return sorted(set(curve.fp_per_image) | {float(x) for x in targets})


def froc_bootstrap_band(
    images: Sequence[FrocImage],
    cfg: BootstrapConfig = BootstrapConfig(),
    grid: Sequence[float] | None = None,
    n_jobs: int = 1,
) -> tuple[FrocBand, int]:
    """Percentile band of sensitivity at fixed fp_per_image values.

    Images are resampled with replacement and their lesions travel with them.
    Each replicate curve is read at the grid by step interpolation.
    Replicates without any lesion are redrawn.

    Returns:
        ``(band, degenerate_redraws)``.
    """
    t = _tables(images)
    if t.lesions.sum() == 0:
        raise DegenerateInputError("FROC needs at least one lesion in the dataset")
    if grid is None:
        grid = default_grid(froc_curve(images))
    grid = [float(g) for g in grid]
    n = len(images)
    cred = t.credited.astype(np.float64)
    fps = t.false_pos.astype(np.float64)
    lesions = t.lesions.astype(np.float64)

    def valid(counts):
        return counts @ lesions > 0

    def statistic(counts):
        c = counts.astype(np.float64)
        sens = (c @ cred) / (c @ lesions)[:, None]
        fp = (c @ fps) / n
        return _step_read(fp, sens, grid)

    values, redraws = bootstrap(n, cfg, statistic, valid, n_jobs)
    lo, hi = percentile_interval(values, cfg)
    return FrocBand(tuple(grid), tuple(lo.tolist()), tuple(hi.tolist())), redraws


def operating_point(curve: FrocCurve, target_fp_per_image: float) -> tuple[float, float]:
    """Best sensitivity reachable within a false-positive budget.

    Among points with ``fp_per_image <= target`` the one with the greatest
    sensitivity is chosen; on ties, the highest threshold wins.

    Returns:
        ``(sensitivity, threshold)``, or ``(0.0, 1.0)`` if no point qualifies.
    """
    best = None
    for p in curve.points:
        if p.fp_per_image <= target_fp_per_image and (best is None or p.n_credited > best.n_credited):
            best = p
    if best is None:
        return 0.0, 1.0
    return best.sensitivity, best.threshold
