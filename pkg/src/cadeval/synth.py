"""Synthetic datasets with known ground truth, for oracle tests.

Every generated image is split into a grid of cells and each object (lesion,
false-positive mark, benign finding) gets a cell of its own. Boxes never
leave their cell, so detections never overlap (NMS keeps all of them) and a
detection credits exactly the lesion of its cell. The generator therefore
knows the TP/FP status of every detection without any geometry, and writes
the resulting FROC curve and breast-level AUC to ``truth.json``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError

IMAGE_WIDTH = 800
IMAGE_HEIGHT = 1000
CELL = 100
SCORE_DECIMALS = 4
VIEWS = ("CC", "MLO")


@dataclass(frozen=True)
class ScoreDist:
    """Score distribution: ``constant`` (a), ``uniform`` (a, b) or ``beta`` (a, b)."""

    kind: str = "beta"
    a: float = 2.0
    b: float = 2.0

    def __post_init__(self):
        if self.kind == "constant":
            ok = 0.0 <= self.a <= 1.0
        elif self.kind == "uniform":
            ok = 0.0 <= self.a <= self.b <= 1.0
        elif self.kind == "beta":
            ok = self.a > 0 and self.b > 0
        else:
            raise ConfigError(f"unknown score distribution {self.kind!r}")
        if not ok:
            raise ConfigError(f"invalid parameters for {self.kind} distribution: {self.a}, {self.b}")

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "constant":
            x = np.full(size, self.a)
        elif self.kind == "uniform":
            x = rng.uniform(self.a, self.b, size)
        else:
            x = rng.beta(self.a, self.b, size)
        return np.round(x, SCORE_DECIMALS)


@dataclass(frozen=True)
class SynthSpec:
    n_images: int = 100
    n_lesions: int = 50
    fp_rate: float = 1.0
    detect_prob: float = 1.0
    tp_scores: ScoreDist = ScoreDist("beta", 5.0, 2.0)
    fp_scores: ScoreDist = ScoreDist("beta", 2.0, 5.0)
    positive_fraction: float = 0.3
    benign_lesions: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.n_images < 1:
            raise ConfigError("n_images must be at least 1")
        if self.n_lesions < 0 or self.benign_lesions < 0:
            raise ConfigError("lesion counts must be non-negative")
        if not 0 <= self.fp_rate <= 20:
            raise ConfigError("fp_rate must lie in [0, 20]")
        if not 0 <= self.detect_prob <= 1:
            raise ConfigError("detect_prob must lie in [0, 1]")
        if not 0 < self.positive_fraction <= 1:
            raise ConfigError("positive_fraction must lie in (0, 1]")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")

    @classmethod
    def from_dict(cls, d: dict) -> SynthSpec:
        d = dict(d)
        for k in ("tp_scores", "fp_scores"):
            if isinstance(d.get(k), dict):
                d[k] = ScoreDist(**d[k])
        return cls(**d)


@dataclass
class _Image:
    image_id: str
    breast_id: str
    view: str
    free_cells: list
    annotations: list = field(default_factory=list)
    detections: list = field(default_factory=list)  # (box, score, class, kind, lesion_id)


def _cells(rng: np.random.Generator) -> list[tuple[int, int]]:
    cells = [(cx, cy) for cy in range(IMAGE_HEIGHT // CELL) for cx in range(IMAGE_WIDTH // CELL)]
    order = rng.permutation(len(cells))
    return [cells[i] for i in order]


def _box_in_cell(rng, cell) -> list[float]:
    x0, y0 = cell[0] * CELL, cell[1] * CELL
    w, h = rng.integers(20, 80, size=2)
    x = x0 + int(rng.integers(5, CELL - 5 - w + 1))
    y = y0 + int(rng.integers(5, CELL - 5 - h + 1))
    return [float(x), float(y), float(x + w), float(y + h)]


def _detection_on(rng, lesion_box, cell) -> list[float]:
    """Box whose center lies strictly inside ``lesion_box`` and which stays in ``cell``."""
    x_min, y_min, x_max, y_max = lesion_box
    cx = float(rng.integers(int(x_min) + 1, int(x_max)))
    cy = float(rng.integers(int(y_min) + 1, int(y_max)))
    left, top = cell[0] * CELL, cell[1] * CELL
    hw = float(rng.integers(1, int(min(cx - left, left + CELL - cx)) + 1))
    hh = float(rng.integers(1, int(min(cy - top, top + CELL - cy)) + 1))
    return [cx - hw, cy - hh, cx + hw, cy + hh]


def _layout(n_images: int) -> list[_Image]:
    images = []
    for i in range(n_images):
        b = i // 2
        breast_id = f"P{b // 2:04d}-{'LR'[b % 2]}"
        images.append(_Image(f"img{i:04d}", breast_id, VIEWS[i % 2], []))
    return images


def _assign_cells(images, rng):
    for im in images:
        im.free_cells = _cells(rng)


def _add_lesion(im: _Image, lesion_id: str, rng) -> tuple[list[float], tuple]:
    cell = im.free_cells.pop()
    box = _box_in_cell(rng, cell)
    im.annotations.append({"lesion_id": lesion_id, "class": "malignant", **dict(zip(("x_min", "y_min", "x_max", "y_max"), box))})
    return box, cell


def _add_tp(im, lesion_box, cell, score, lesion_id, rng):
    im.detections.append((_detection_on(rng, lesion_box, cell), float(score), "malignant", "tp", lesion_id))


def _add_fp(im, score, rng, lesion_class="malignant"):
    cell = im.free_cells.pop()
    im.detections.append((_box_in_cell(rng, cell), float(score), lesion_class, "fp", None))


def _truth(images, seed, extra) -> dict:
    n_lesions = sum(len(im.annotations) - sum(a["class"] != "malignant" for a in im.annotations) for im in images)
    best: dict[str, float] = {}
    fp_scores = []
    for im in images:
        for _, s, cls, kind, lid in im.detections:
            if cls != "malignant":
                continue
            if kind == "tp":
                best[lid] = max(best.get(lid, 0.0), s)
            else:
                fp_scores.append(s)
    all_scores = sorted({s for im in images for _, s, cls, _, _ in im.detections if cls == "malignant"}, reverse=True)
    points = []
    for t in all_scores:
        n_fp = sum(s >= t for s in fp_scores)
        n_cred = sum(s >= t for s in best.values())
        points.append({
            "threshold": t,
            "n_false_positives": n_fp,
            "n_credited": n_cred,
            "fp_per_image": n_fp / len(images),
            "sensitivity": n_cred / n_lesions if n_lesions else None,
        })
    # breast scores straight from the generator's bookkeeping
    image_scores = {
        im.image_id: max((s for _, s, cls, _, _ in im.detections if cls == "malignant"), default=0.0)
        for im in images
    }
    breasts: dict[str, list[str]] = {}
    for im in images:
        breasts.setdefault(im.breast_id, []).append(im.image_id)
    labels = {b: int(any(a["class"] == "malignant" for im in images if im.breast_id == b for a in im.annotations)) for b in breasts}
    bscore = {b: math.fsum(image_scores[i] for i in ids) / len(ids) for b, ids in breasts.items()}
    pos = [bscore[b] for b in breasts if labels[b] == 1]
    neg = [bscore[b] for b in breasts if labels[b] == 0]
    auc = None
    if pos and neg:
        wins = sum((p > q) + 0.5 * (p == q) for p in pos for q in neg)
        auc = wins / (len(pos) * len(neg))
    return {
        "format_version": 1,
        "seed": seed,
        "n_images": len(images),
        "n_lesions": n_lesions,
        "froc": points,
        "generator_auc": auc,
        **extra,
    }


def _write(images, out_dir: Path, truth: dict, model_id: str) -> dict[str, Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    breasts: dict[str, list[str]] = {}
    for im in images:
        breasts.setdefault(im.breast_id, []).append(im.image_id)
    labels = {b: int(any(a["class"] == "malignant" for im in images if im.breast_id == b for a in im.annotations)) for b in breasts}
    manifest = {
        "format_version": 1,
        "images": [
            {
                "image_id": im.image_id,
                "breast_id": im.breast_id,
                "view": im.view,
                "width": IMAGE_WIDTH,
                "height": IMAGE_HEIGHT,
                "annotations": im.annotations,
            }
            for im in images
        ],
        "breasts": [{"breast_id": b, "image_ids": ids, "label": labels[b]} for b, ids in breasts.items()],
        "exclusions": {"image_ids": [], "breast_ids": []},
        "detections": [{"path": "detections.jsonl", "model_id": model_id}],
    }
    paths = {
        "manifest": out_dir / "manifest.json",
        "detections": out_dir / "detections.jsonl",
        "truth": out_dir / "truth.json",
    }
    paths["manifest"].write_text(json.dumps(manifest, indent=1) + "\n")
    lines = [json.dumps({"format_version": 1})]
    for im in images:
        for box, s, cls, _, _ in im.detections:
            lines.append(json.dumps({
                "image_id": im.image_id, "x_min": box[0], "y_min": box[1], "x_max": box[2], "y_max": box[3],
                "score": s, "class": cls, "model_id": model_id,
            }))
    paths["detections"].write_text("\n".join(lines) + "\n")
    paths["truth"].write_text(json.dumps(truth, indent=1) + "\n")
    return paths


def synth_generate(spec: SynthSpec, out_dir, model_id: str = "synth") -> dict[str, Path]:
    """Write ``manifest.json``, ``detections.jsonl`` and ``truth.json`` for ``spec``.

    Output is byte-identical for equal specs.
    """
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    images = _layout(spec.n_images)
    _assign_cells(images, rng)
    breast_ids = sorted({im.breast_id for im in images})
    n_pos = min(spec.n_lesions, max(1, round(spec.positive_fraction * len(breast_ids))))
    lesion_images: list[_Image] = []
    if spec.n_lesions:
        pos = set(rng.choice(breast_ids, size=n_pos, replace=False).tolist())
        candidates = [im for im in images if im.breast_id in pos]
        # every positive breast gets one lesion, the rest land anywhere positive
        first = {}
        for im in candidates:
            first.setdefault(im.breast_id, im)
        lesion_images = list(first.values())
        extra = rng.integers(0, len(candidates), size=spec.n_lesions - len(lesion_images))
        lesion_images += [candidates[i] for i in extra]
    tp_scores = spec.tp_scores.sample(rng, len(lesion_images))
    detected = rng.random(len(lesion_images)) < spec.detect_prob
    for k, im in enumerate(lesion_images):
        if not im.free_cells:
            raise ConfigError("too many objects for one synthetic image")
        lid = f"les{k:04d}"
        box, cell = _add_lesion(im, lid, rng)
        if detected[k]:
            _add_tp(im, box, cell, tp_scores[k], lid, rng)
    n_fp = rng.poisson(spec.fp_rate, size=len(images))
    for im, m in zip(images, n_fp):
        m = min(int(m), len(im.free_cells))
        for s in spec.fp_scores.sample(rng, m):
            _add_fp(im, s, rng)
    for k in range(spec.benign_lesions):
        im = images[int(rng.integers(len(images)))]
        if not im.free_cells:
            continue
        cell = im.free_cells.pop()
        box = _box_in_cell(rng, cell)
        im.annotations.append({"lesion_id": f"ben{k:04d}", "class": "benign", **dict(zip(("x_min", "y_min", "x_max", "y_max"), box))})
        s = float(spec.fp_scores.sample(rng, 1)[0])
        im.detections.append((_detection_on(rng, box, cell), s, "benign", "benign", None))
    spec_dict = asdict(spec)
    return _write(images, Path(out_dir), _truth(images, spec.seed, {"spec": spec_dict}), model_id)


def operating_point_fixture(out_dir, seed: int = 0, model_id: str = "synth") -> dict[str, Path]:
    """100 images and 50 lesions built around two published operating points.

    At threshold 0.5 exactly 45 lesions are credited and 30 false-positive
    marks exist, giving (0.30 FP/image, 0.90 sensitivity). Lowering the
    threshold to 0.1 adds 270 false positives and the last 5 lesions,
    giving (3.0, 1.0).
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    images = _layout(100)
    _assign_cells(images, rng)
    high = lambda k: np.round(rng.uniform(0.5001, 0.9999, k), SCORE_DECIMALS)  # noqa: E731
    low = lambda k: np.round(rng.uniform(0.1001, 0.4999, k), SCORE_DECIMALS)  # noqa: E731
    tp_scores = np.concatenate([[0.5], high(44), low(4), [0.1]])
    for k in range(50):
        im = images[k]
        lid = f"les{k:04d}"
        box, cell = _add_lesion(im, lid, rng)
        _add_tp(im, box, cell, tp_scores[k], lid, rng)
    fp_scores = np.concatenate([np.round(rng.uniform(0.51, 0.99, 30), SCORE_DECIMALS), low(270)])
    owners = rng.integers(0, 100, size=fp_scores.size)
    for s, i in zip(fp_scores, owners):
        _add_fp(images[int(i)], s, rng)
    extra = {"fixture": "published-operating-points", "expected_points": [[0.3, 0.9, 0.5], [3.0, 1.0, 0.1]]}
    return _write(images, Path(out_dir), _truth(images, seed, extra), model_id)


def binormal_cases(
    n_pos: int, n_neg: int, separation: float, rng: np.random.Generator
) -> tuple[list[tuple[float, int]], float]:
    """Scored cases whose latent scores are N(separation, 1) vs N(0, 1).

    Scores are squashed into (0, 1) by a strictly increasing map, so the
    generator AUC is ``Phi(separation / sqrt(2))``.
    """
    latent = np.r_[rng.normal(separation, 1.0, n_pos), rng.normal(0.0, 1.0, n_neg)]
    labels = [1] * n_pos + [0] * n_neg
    scores = 1.0 / (1.0 + np.exp(-latent / 2.0))
    return list(zip(scores.tolist(), labels)), 0.5 * (1.0 + math.erf(separation / 2.0))
