"""Collapse detections into image, breast and ensemble scores.

An image is described by its most confident malignant detection; a breast by
the mean of its image scores; an ensemble image score by the mean over
models. Ensembling happens at image level, before breast aggregation.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .errors import InputError
from .geometry import Detection

LATERALITIES = ("L", "R")
_BREAST_ID = re.compile(r"^(?P<patient>.+)[-_](?P<side>[LR])$")


@dataclass(frozen=True)
class ImageScore:
    image_id: str | None
    score: float

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise InputError(f"image score must lie in [0, 1], got {self.score!r}")


@dataclass(frozen=True)
class BreastCase:
    """One laterality of one patient.

    ``breast_id`` is ``<patient>-<L|R>`` (an underscore separator is also
    accepted); ``label`` is 1 for a malignant breast and 0 otherwise.
    """

    breast_id: str
    image_ids: tuple[str, ...]
    label: int

    def __post_init__(self):
        if not self.image_ids:
            raise InputError(f"breast {self.breast_id!r} has no images")
        if _BREAST_ID.match(self.breast_id) is None:
            raise InputError(
                f"breast id {self.breast_id!r} must look like '<patient>-L' or '<patient>-R'"
            )
        if self.label not in (0, 1):
            raise InputError(f"breast {self.breast_id!r} label must be 0 or 1, got {self.label!r}")

    @property
    def patient_id(self) -> str:
        return _BREAST_ID.match(self.breast_id)["patient"]

    @property
    def laterality(self) -> str:
        return _BREAST_ID.match(self.breast_id)["side"]


def _bounded_mean(values: Sequence[float]) -> float:
    # fsum is correctly rounded, so the mean is exactly permutation invariant;
    # the clamp keeps the final division from stepping outside [min, max].
    m = math.fsum(values) / len(values)
    return min(max(m, min(values)), max(values))


def image_score(detections: Iterable[Detection], image_id: str | None = None) -> ImageScore:
    """Maximum score over the malignant detections of one image.

    Benign detections are ignored. An image without malignant detections
    scores 0.0, which ranks it below any image with a positive detection.
    """
    detections = list(detections)
    ids = {d.image_id for d in detections}
    if image_id is not None:
        ids.add(image_id)
    if len(ids) > 1:
        raise InputError(f"image_score expects detections of one image, got {sorted(ids)}")
    score = max((d.score for d in detections if d.is_malignant), default=0.0)
    return ImageScore(next(iter(ids), None), score)


def breast_score(image_scores: Sequence[ImageScore | float]) -> float:
    """Arithmetic mean of the image scores of one breast."""
    if not image_scores:
        raise InputError("breast_score needs at least one image score")
    return _bounded_mean([s.score if isinstance(s, ImageScore) else float(s) for s in image_scores])


def ensemble_score(per_model_scores: Sequence[float]) -> float:
    """Arithmetic mean of one image's scores across models."""
    if not per_model_scores:
        raise InputError("ensemble_score needs at least one model score")
    return _bounded_mean([float(s) for s in per_model_scores])


def ensemble_image_scores(
    per_model: Mapping[str, Mapping[str, float]], image_ids: Iterable[str]
) -> dict[str, float]:
    """Average each image's score over models.

    Args:
        per_model: ``{model_id: {image_id: score}}``. A model with no entry
            for an image contributes 0.0 for it (no detections).
        image_ids: Images to score.
    """
    if not per_model:
        raise InputError("at least one model is required")
    return {
        image_id: ensemble_score([scores.get(image_id, 0.0) for scores in per_model.values()])
        for image_id in image_ids
    }


def score_breasts(
    breasts: Iterable[BreastCase],
    detections_by_model: Mapping[str, Mapping[str, Sequence[Detection]]],
) -> list[tuple[BreastCase, float]]:
    """Breast-level scores from raw per-model, per-image detections.

    Args:
        breasts: Cases to score.
        detections_by_model: ``{model_id: {image_id: detections}}``,
            typically already passed through NMS. Missing images count as
            having no detections.

    Returns:
        ``(breast, score)`` pairs in input order.
    """
    breasts = list(breasts)
    per_model = {
        model_id: {
            image_id: image_score(dets, image_id).score for image_id, dets in by_image.items()
        }
        for model_id, by_image in detections_by_model.items()
    }
    if not per_model:
        per_model = {"model": {}}
    all_images = [i for b in breasts for i in b.image_ids]
    ensembled = ensemble_image_scores(per_model, all_images)
    return [(b, breast_score([ensembled[i] for i in b.image_ids])) for b in breasts]
