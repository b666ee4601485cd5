"""Dataset manifest and detection-file ingestion.

The manifest is one JSON document describing images, breasts, malignant and
benign annotations, an exclusion list and (optionally) the detection files.
Detections are JSON lines, one record per detection::

    {"image_id": "...", "x_min": 0, "y_min": 0, "x_max": 10, "y_max": 10,
     "score": 0.9, "class": "malignant", "model_id": "m1"}

An optional first line ``{"format_version": 1}`` marks the file version.
Loading is all-or-nothing: any problem raises :class:`DatasetError` naming
the file and the record.
"""

from __future__ import annotations

import csv
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import jsonschema

from .errors import DatasetError, InputError
from .froc import FrocImage, LesionAnnotation
from .geometry import MALIGNANT, BoundingBox, Detection, NmsConfig, nms
from .scoring import BreastCase

log = logging.getLogger(__name__)

FORMAT_VERSION = 1

_NUMBER = {"type": "number"}
_ID = {"type": "string", "minLength": 1}

BOX_FIELDS = ("x_min", "y_min", "x_max", "y_max")

MANIFEST_SCHEMA = {
    "type": "object",
    "required": ["format_version", "images", "breasts"],
    "properties": {
        "format_version": {"const": FORMAT_VERSION},
        "images": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["image_id", "breast_id", "width", "height"],
                "properties": {
                    "image_id": _ID,
                    "breast_id": _ID,
                    "view": {"type": "string"},
                    "width": {"type": "integer", "minimum": 1},
                    "height": {"type": "integer", "minimum": 1},
                    "annotations": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["lesion_id", "class", *BOX_FIELDS],
                            "properties": {
                                "lesion_id": _ID,
                                "class": {"enum": ["benign", "malignant"]},
                                **{k: _NUMBER for k in BOX_FIELDS},
                            },
                        },
                    },
                },
            },
        },
        "breasts": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["breast_id", "image_ids", "label"],
                "properties": {
                    "breast_id": _ID,
                    "image_ids": {"type": "array", "items": _ID, "minItems": 1},
                    "label": {"enum": [0, 1]},
                },
            },
        },
        "exclusions": {
            "type": "object",
            "properties": {
                "image_ids": {"type": "array", "items": _ID},
                "breast_ids": {"type": "array", "items": _ID},
            },
            "additionalProperties": False,
        },
        "detections": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["path"],
                "properties": {"path": _ID, "model_id": _ID},
            },
        },
    },
}

DETECTION_SCHEMA = {
    "type": "object",
    "required": ["image_id", *BOX_FIELDS, "score", "class"],
    "properties": {
        "image_id": _ID,
        **{k: _NUMBER for k in BOX_FIELDS},
        "score": {"type": "number", "minimum": 0, "maximum": 1},
        "class": {"enum": ["benign", "malignant"]},
        "model_id": _ID,
    },
}


@dataclass(frozen=True)
class ImageInfo:
    image_id: str
    breast_id: str
    view: str
    width: int
    height: int


@dataclass
class Dataset:
    """A validated, cross-referenced evaluation dataset."""

    images: dict[str, ImageInfo]
    breasts: list[BreastCase]
    lesions: dict[str, list[LesionAnnotation]]
    detections: list[Detection] = field(default_factory=list)
    models: list[str] = field(default_factory=list)
    dropped_benign: int = 0
    excluded_images: int = 0
    dropped_detections: int = 0

    @property
    def n_lesions(self) -> int:
        return sum(len(v) for v in self.lesions.values())

    def detections_by_model(self, nms_cfg: NmsConfig | None = NmsConfig()) -> dict[str, dict[str, list[Detection]]]:
        """``{model_id: {image_id: detections}}`` over every image, NMS applied per image."""
        out = {m: {i: [] for i in self.images} for m in self.models}
        for d in self.detections:
            out[d.model_id][d.image_id].append(d)
        if nms_cfg is not None:
            for by_image in out.values():
                for image_id, dets in by_image.items():
                    by_image[image_id] = nms(dets, nms_cfg)
        return out

    def froc_images(self, model_id: str | None = None, nms_cfg: NmsConfig | None = NmsConfig()) -> list[FrocImage]:
        """Per-image FROC input for one model (the only model when omitted)."""
        if model_id is None:
            if len(self.models) > 1:
                raise InputError(f"several models present ({', '.join(self.models)}); choose one")
            model_id = self.models[0] if self.models else None
        by_image = self.detections_by_model(nms_cfg).get(model_id, {})
        return [
            FrocImage(i, tuple(by_image.get(i, ())), tuple(self.lesions.get(i, ())))
            for i in self.images
        ]


def _located(err: jsonschema.ValidationError, where: str) -> str:
    path = "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path)
    return f"{where}{':' if path else ''}{path.lstrip('.')}"


def _validate(instance, schema, where: str) -> None:
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(instance), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        raise DatasetError(errors[0].message, _located(errors[0], where))


def _box(rec: dict, where: str) -> BoundingBox:
    try:
        return BoundingBox(*(float(rec[k]) for k in BOX_FIELDS))
    except InputError as exc:
        raise DatasetError(str(exc), where) from None


def read_detections(path, default_model: str | None = None, known_images=None) -> list[Detection]:
    """Parse a JSON-lines detection file.

    Args:
        path: File to read.
        default_model: Model id for records that carry none; the file stem
            is used when this is also missing.
        known_images: If given, image ids every record must reference.
    """
    path = Path(path)
    default_model = default_model or path.stem
    dets = []
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise DatasetError(f"cannot read detections: {exc.strerror}", str(path)) from None
    for lineno, line in enumerate(lines, 1):
        where = f"{path}:{lineno}"
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"malformed JSON ({exc.msg})", where) from None
        if isinstance(rec, dict) and set(rec) == {"format_version"}:
            if rec["format_version"] != FORMAT_VERSION:
                raise DatasetError(f"unsupported format_version {rec['format_version']!r}", where)
            continue
        _validate(rec, DETECTION_SCHEMA, where)
        if known_images is not None and rec["image_id"] not in known_images:
            raise DatasetError(f"unknown image_id {rec['image_id']!r}", where)
        dets.append(
            Detection(
                box=_box(rec, where),
                score=float(rec["score"]),
                lesion_class=rec["class"],
                image_id=rec["image_id"],
                model_id=rec.get("model_id", default_model),
            )
        )
    return dets


def write_detections(detections: Iterable[Detection], path) -> None:
    lines = [json.dumps({"format_version": FORMAT_VERSION})]
    for d in detections:
        rec = {"image_id": d.image_id}
        rec.update(zip(BOX_FIELDS, d.box.as_tuple()))
        rec.update({"score": d.score, "class": d.lesion_class, "model_id": d.model_id})
        lines.append(json.dumps(rec))
    Path(path).write_text("\n".join(lines) + "\n")


def load_manifest(path) -> dict:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise DatasetError(f"cannot read manifest: {exc.strerror}", str(path)) from None
    except json.JSONDecodeError as exc:
        raise DatasetError(f"malformed JSON ({exc.msg})", f"{path}:{exc.lineno}") from None
    _validate(data, MANIFEST_SCHEMA, str(path))
    return data


def _duplicates(values: Iterable[str]) -> list[str]:
    return sorted(k for k, n in Counter(values).items() if n > 1)


def load_dataset(manifest_path, detection_paths: Sequence | None = None) -> Dataset:
    """Load and cross-check a manifest and its detection files.

    Exclusions are applied first; benign annotations are dropped and
    counted; detections on excluded images are dropped and counted.

    Args:
        manifest_path: JSON manifest.
        detection_paths: Detection files to use instead of the ones listed
            in the manifest.

    Raises:
        DatasetError: on dangling ids, duplicate ids, inconsistent labels or
            malformed records.
    """
    manifest_path = Path(manifest_path)
    where = str(manifest_path)
    data = load_manifest(manifest_path)

    images = data["images"]
    for label, ids in (
        ("image_id", [im["image_id"] for im in images]),
        ("breast_id", [b["breast_id"] for b in data["breasts"]]),
        ("lesion_id", [a["lesion_id"] for im in images for a in im.get("annotations", [])]),
    ):
        dup = _duplicates(ids)
        if dup:
            raise DatasetError(f"duplicate {label} {dup[0]!r}", where)

    all_images = {im["image_id"]: im for im in images}
    breasts_raw = {b["breast_id"]: b for b in data["breasts"]}
    for k, im in enumerate(images):
        if im["breast_id"] not in breasts_raw:
            raise DatasetError(f"unknown breast_id {im['breast_id']!r}", f"{where}:images[{k}]")
    for k, b in enumerate(data["breasts"]):
        for image_id in b["image_ids"]:
            im = all_images.get(image_id)
            if im is None:
                raise DatasetError(f"unknown image_id {image_id!r}", f"{where}:breasts[{k}]")
            if im["breast_id"] != b["breast_id"]:
                raise DatasetError(
                    f"image {image_id!r} belongs to breast {im['breast_id']!r}", f"{where}:breasts[{k}]"
                )
    for im in images:
        if im["image_id"] not in breasts_raw[im["breast_id"]]["image_ids"]:
            raise DatasetError(
                f"image {im['image_id']!r} missing from its breast's image_ids", where
            )

    excl = data.get("exclusions", {})
    for key, known in (("image_ids", all_images), ("breast_ids", breasts_raw)):
        for x in excl.get(key, []):
            if x not in known:
                raise DatasetError(f"excluded id {x!r} does not exist", f"{where}:exclusions.{key}")
    excluded = set(excl.get("image_ids", []))
    for bid in excl.get("breast_ids", []):
        excluded.update(breasts_raw[bid]["image_ids"])

    kept: dict[str, ImageInfo] = {}
    lesions: dict[str, list[LesionAnnotation]] = {}
    dropped_benign = 0
    for k, im in enumerate(images):
        if im["image_id"] in excluded:
            continue
        kept[im["image_id"]] = ImageInfo(
            im["image_id"], im["breast_id"], im.get("view", ""), im["width"], im["height"]
        )
        for j, a in enumerate(im.get("annotations", [])):
            loc = f"{where}:images[{k}].annotations[{j}]"
            box = _box(a, loc)
            if a["class"] != MALIGNANT:
                dropped_benign += 1
                continue
            lesions.setdefault(im["image_id"], []).append(
                LesionAnnotation(a["lesion_id"], im["image_id"], box)
            )

    breasts = []
    for k, b in enumerate(data["breasts"]):
        ids = tuple(i for i in b["image_ids"] if i in kept)
        if not ids:
            continue
        has_lesion = any(lesions.get(i) for i in ids)
        if has_lesion and b["label"] != 1:
            raise DatasetError(
                f"breast {b['breast_id']!r} has a malignant lesion but label 0", f"{where}:breasts[{k}]"
            )
        try:
            breasts.append(BreastCase(b["breast_id"], ids, b["label"]))
        except InputError as exc:
            raise DatasetError(str(exc), f"{where}:breasts[{k}]") from None

    if detection_paths is None:
        sources = [
            (manifest_path.parent / s["path"], s.get("model_id")) for s in data.get("detections", [])
        ]
    else:
        sources = [(Path(p), None) for p in detection_paths]
    detections: list[Detection] = []
    models: list[str] = []
    dropped = 0
    for src, model_id in sources:
        for d in read_detections(src, model_id, all_images):
            if model_id is not None and d.model_id != model_id:
                raise DatasetError(
                    f"record model_id {d.model_id!r} disagrees with manifest model_id {model_id!r}",
                    str(src),
                )
            if d.image_id in excluded:
                dropped += 1
                continue
            detections.append(d)
            if d.model_id not in models:
                models.append(d.model_id)
        if model_id is not None and model_id not in models:
            models.append(model_id)
    if not models:
        models = ["model"]

    if excluded:
        log.info("excluded %d images by manifest exclusion list", len(excluded))
    if dropped_benign:
        log.info("dropped %d benign annotations", dropped_benign)
    if dropped:
        log.info("dropped %d detections on excluded images", dropped)
    return Dataset(
        images=kept,
        breasts=breasts,
        lesions=lesions,
        detections=detections,
        models=models,
        dropped_benign=dropped_benign,
        excluded_images=len(excluded),
        dropped_detections=dropped,
    )


BREAST_SCORE_FIELDS = ("breast_id", "label", "score")


def write_breast_scores(rows: Iterable[tuple[BreastCase, float]], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BREAST_SCORE_FIELDS)
        for case, score in rows:
            w.writerow([case.breast_id, case.label, repr(float(score))])


def read_breast_scores(path) -> list[tuple[str, float, int]]:
    """Read ``(breast_id, score, label)`` rows written by :func:`write_breast_scores`."""
    rows = []
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DatasetError(f"cannot read scores: {exc.strerror}", str(path)) from None
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not set(BREAST_SCORE_FIELDS) <= set(reader.fieldnames):
            raise DatasetError(f"expected columns {', '.join(BREAST_SCORE_FIELDS)}", str(path))
        for lineno, row in enumerate(reader, 2):
            try:
                label = int(row["label"])
                score = float(row["score"])
            except (TypeError, ValueError):
                raise DatasetError("malformed score row", f"{path}:{lineno}") from None
            if label not in (0, 1) or not 0.0 <= score <= 1.0:
                raise DatasetError("label must be 0/1 and score in [0, 1]", f"{path}:{lineno}")
            rows.append((row["breast_id"], score, label))
    return rows
