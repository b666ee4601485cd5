"""Report files: CSV curves, JSON summaries and SVG figures.

Floats are written with ``repr`` so every emitted number re-parses to the
identical value; JSON keys keep a fixed order. Identical results therefore
give identical bytes.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import __version__
from .froc import FrocBand, FrocCurve, FrocPoint, operating_point
from .plotting import plot_froc, plot_roc
from .roc import AucBootstrap, RocBand, RocCurve

FORMAT_VERSION = 1

ROC_CURVE_FIELDS = ("threshold", "fpr", "tpr")
ROC_BAND_FIELDS = ("fpr", "tpr", "lo", "hi")
FROC_FIELDS = ("threshold", "fp_per_image", "sensitivity")
FROC_BAND_FIELDS = ("lo", "hi")

_NUM = {"type": "number"}
_NUM_OR_NULL = {"type": ["number", "null"]}

ROC_SUMMARY_SCHEMA = {
    "type": "object",
    "required": ["format_version", "tool_version", "auc", "lo", "hi", "replicates", "seed", "degenerate_redraws"],
    "properties": {
        "format_version": {"const": FORMAT_VERSION},
        "tool_version": {"type": "string"},
        "auc": _NUM,
        "lo": _NUM_OR_NULL,
        "hi": _NUM_OR_NULL,
        "interval": _NUM_OR_NULL,
        "replicates": {"type": "integer", "minimum": 0},
        "seed": {"type": ["integer", "null"]},
        "degenerate_redraws": {"type": "integer", "minimum": 0},
        "n_pos": {"type": "integer"},
        "n_neg": {"type": "integer"},
        "config": {"type": "object"},
    },
}

FROC_SUMMARY_SCHEMA = {
    "type": "object",
    "required": [
        "format_version", "tool_version", "n_images", "n_lesions",
        "operating_points", "replicates", "seed", "degenerate_redraws",
    ],
    "properties": {
        "format_version": {"const": FORMAT_VERSION},
        "tool_version": {"type": "string"},
        "n_images": {"type": "integer", "minimum": 1},
        "n_lesions": {"type": "integer", "minimum": 1},
        "operating_points": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["target_fp_per_image", "sensitivity", "threshold"],
                "properties": {
                    "target_fp_per_image": _NUM,
                    "sensitivity": _NUM,
                    "threshold": _NUM,
                    "lo": _NUM_OR_NULL,
                    "hi": _NUM_OR_NULL,
                },
            },
        },
        "replicates": {"type": "integer", "minimum": 0},
        "seed": {"type": ["integer", "null"]},
        "degenerate_redraws": {"type": "integer", "minimum": 0},
        "config": {"type": "object"},
    },
}


@dataclass
class RocReport:
    curve: RocCurve
    bootstrap: AucBootstrap | None = None


@dataclass
class FrocReport:
    curve: FrocCurve
    targets: Sequence[float] = (0.3, 3.0)
    replicates: int = 0
    seed: int | None = None
    degenerate_redraws: int = 0


@dataclass
class ReportResults:
    roc: RocReport | None = None
    froc: FrocReport | None = None
    config: dict = field(default_factory=dict)


def _fmt(x: float) -> str:
    return repr(float(x))


def _csv(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _json(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def roc_summary(report: RocReport, config: dict | None = None) -> dict:
    b = report.bootstrap
    return {
        "format_version": FORMAT_VERSION,
        "tool_version": __version__,
        "auc": report.curve.auc if b is None else b.auc,
        "lo": None if b is None else b.lo,
        "hi": None if b is None else b.hi,
        "interval": None if b is None else b.interval,
        "replicates": 0 if b is None else b.replicates,
        "seed": None if b is None else b.seed,
        "degenerate_redraws": 0 if b is None else b.degenerate_redraws,
        "n_pos": report.curve.n_pos,
        "n_neg": report.curve.n_neg,
        "config": dict(config or {}),
    }


def froc_summary(report: FrocReport, config: dict | None = None) -> dict:
    curve = report.curve
    points = []
    for target in report.targets:
        sens, thr = operating_point(curve, target)
        entry = {"target_fp_per_image": float(target), "sensitivity": sens, "threshold": thr}
        if curve.band is not None and float(target) in curve.band.grid:
            entry["lo"], entry["hi"] = curve.band.at(float(target))
        points.append(entry)
    return {
        "format_version": FORMAT_VERSION,
        "tool_version": __version__,
        "n_images": curve.n_images,
        "n_lesions": curve.n_lesions,
        "operating_points": points,
        "replicates": report.replicates,
        "seed": report.seed,
        "degenerate_redraws": report.degenerate_redraws,
        "config": dict(config or {}),
    }


def froc_rows(curve: FrocCurve) -> tuple[tuple[str, ...], list[tuple]]:
    """CSV header and rows; lo/hi columns only when the curve has a band."""
    if curve.band is None:
        return FROC_FIELDS, [(p.threshold, p.fp_per_image, p.sensitivity) for p in curve.points]
    rows = []
    for p in curve.points:
        lo, hi = curve.band.at(p.fp_per_image)
        rows.append((p.threshold, p.fp_per_image, p.sensitivity, lo, hi))
    return FROC_FIELDS + FROC_BAND_FIELDS, rows


def _write(path: Path, text: str) -> Path:
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from None
    return path


def emit_report(results: ReportResults, out_dir) -> list[Path]:
    """Write every available curve, summary and figure under ``out_dir``.

    ROC output: ``roc_curve.csv``, ``roc_band.csv`` (with a band),
    ``roc_summary.json``, ``roc.svg``. FROC output: ``froc_curve.csv``,
    ``froc_summary.json``, ``froc.svg``.

    Raises:
        OSError: if the destination cannot be written.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create report directory {out}: {exc.strerror}") from None
    written = []
    if results.roc is not None:
        r = results.roc
        c = r.curve
        written.append(_write(out / "roc_curve.csv", _csv(ROC_CURVE_FIELDS, zip(c.thresholds, c.fpr, c.tpr))))
        band = r.bootstrap.band if r.bootstrap is not None else None
        if band is not None:
            written.append(_write(out / "roc_band.csv", _csv(ROC_BAND_FIELDS, zip(band.fpr, band.tpr, band.lo, band.hi))))
        written.append(_write(out / "roc_summary.json", _json(roc_summary(r, results.config))))
        plot_roc(c, out / "roc.svg", band=band)
        written.append(out / "roc.svg")
    if results.froc is not None:
        f = results.froc
        header, rows = froc_rows(f.curve)
        written.append(_write(out / "froc_curve.csv", _csv(header, rows)))
        written.append(_write(out / "froc_summary.json", _json(froc_summary(f, results.config))))
        plot_froc(f.curve, out / "froc.svg")
        written.append(out / "froc.svg")
    return written


def _read_csv(path) -> tuple[list[str], list[list[float]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [[float(v) for v in row] for row in reader]


def read_roc_curve(path) -> tuple[list[float], list[float], list[float]]:
    """Thresholds, fpr and tpr columns of ``roc_curve.csv``."""
    header, rows = _read_csv(path)
    if tuple(header) != ROC_CURVE_FIELDS:
        raise ValueError(f"{path}: unexpected columns {header}")
    cols = list(zip(*rows))
    return list(cols[0]), list(cols[1]), list(cols[2])


def read_roc_band(path) -> RocBand:
    header, rows = _read_csv(path)
    if tuple(header) != ROC_BAND_FIELDS:
        raise ValueError(f"{path}: unexpected columns {header}")
    return RocBand(*(tuple(c) for c in zip(*rows)))


def read_froc_curve(path, n_images: int, n_lesions: int) -> FrocCurve:
    """Rebuild a :class:`FrocCurve` from ``froc_curve.csv``.

    Integer counts are recovered from the rates and the dataset sizes.
    """
    header, rows = _read_csv(path)
    if tuple(header) not in (FROC_FIELDS, FROC_FIELDS + FROC_BAND_FIELDS):
        raise ValueError(f"{path}: unexpected columns {header}")
    points = tuple(
        FrocPoint(r[0], round(r[1] * n_images), round(r[2] * n_lesions), n_images, n_lesions) for r in rows
    )
    band = None
    if len(header) == 5:
        grid, lo, hi = [], [], []
        for r in rows:
            if r[1] not in grid:
                grid.append(r[1])
                lo.append(r[3])
                hi.append(r[4])
        band = FrocBand(tuple(grid), tuple(lo), tuple(hi))
    return FrocCurve(points, n_images, n_lesions, band)


def load_summary(path) -> dict:
    return json.loads(Path(path).read_text())
