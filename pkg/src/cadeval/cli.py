"""Command-line interface.

Exit status: 0 on success, 1 on invalid input or configuration, 2 on usage
errors (unknown flags, missing arguments).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .bootstrap import BootstrapConfig
from .dataset import load_dataset, read_breast_scores, read_detections, write_breast_scores, write_detections
from .errors import ConfigError, InputError
from .froc import default_grid, froc_bootstrap_band, froc_curve, operating_point
from .geometry import NmsConfig, nms
from .preprocess import OdCalibration, ResizeConfig, WindowConfig, preprocess_file
from .report import FrocReport, ReportResults, RocReport, emit_report
from .roc import DEFAULT_FPR_GRID, auc_bootstrap, roc_curve
from .scoring import ensemble_score, image_score, score_breasts
from .synth import SynthSpec, operating_point_fixture, synth_generate

log = logging.getLogger("cadeval")


def _fp_targets(text: str) -> list[float]:
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not values or any(v < 0 for v in values):
        raise argparse.ArgumentTypeError("targets must be non-negative numbers")
    return values


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("shared options")
    g.add_argument("--seed", type=int, default=0,
                   help="seed for every random draw (default: 0)")
    g.add_argument("--bootstrap", type=int, default=10000, metavar="N",
                   help="bootstrap replicates; 0 disables intervals (default: 10000, the replicate "
                        "count behind the published ROC and FROC intervals)")
    g.add_argument("--ci", type=float, default=95.0,
                   help="central percentile interval width in percent (default: 95, as reported "
                        "for the published curves)")
    g.add_argument("--nms-iou", type=float, default=0.1,
                   help="IoU above which a lower-scored same-class box is suppressed (default: 0.1, "
                        "the final-NMS threshold used at inference for mammograms)")
    g.add_argument("--fp-targets", type=_fp_targets, default=[0.3, 3.0], metavar="LIST",
                   help="FROC operating points in FP marks per image (default: 0.3,3.0; the two "
                        "operating points discussed for the INbreast FROC)")
    g.add_argument("--jobs", type=int, default=1,
                   help="worker threads for bootstrap; never changes results (default: 1)")
    g.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(
        prog="cadeval",
        description="Postprocess detector output and evaluate lesion-detection CAD (ROC/FROC).",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("preprocess", parents=[common], help="normalize and resize mammograms",
                       description="Window (FFDM) or optical-density map (digitized film) grayscale "
                                   "images to 8 bit and resize them isotropically.")
    p.add_argument("images", nargs="+", type=Path, help="PNG or PGM files")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--method", choices=["window", "od"], default="window",
                   help="window: clip around the intensity mode (default); od: optical density")
    p.add_argument("--bit-depth", type=int, default=None, help="nominal source bit depth (default: container depth)")
    p.add_argument("--lower-offset", type=int, default=500,
                   help="window extends this far below the mode (default: 500, INbreast windowing)")
    p.add_argument("--upper-offset", type=int, default=800,
                   help="window extends this far above the mode (default: 800, INbreast windowing)")
    p.add_argument("--background", type=int, default=0,
                   help="intensities at or below this are background for the mode (default: 0)")
    p.add_argument("--calibration", type=Path, help="JSON with slope, intercept, od_min, od_max[, invert, name]")
    p.add_argument("--max-long", type=int, default=2100,
                   help="long-side limit in pixels (default: 2100, detector input size)")
    p.add_argument("--max-short", type=int, default=1700,
                   help="short-side limit in pixels (default: 1700, detector input size)")
    p.add_argument("--no-resize", action="store_true", help="keep the original resolution")

    p = sub.add_parser("nms", parents=[common], help="apply per-class NMS to detection files",
                       description="Greedy per-class NMS per model and image.")
    p.add_argument("--detections", nargs="+", type=Path, required=True, help="JSON-lines detection files")
    p.add_argument("--out", type=Path, required=True, help="output JSON-lines file")

    p = sub.add_parser("aggregate", parents=[common], help="breast-level scores from detections",
                       description="Image score = max malignant detection; ensemble = mean over "
                                   "models; breast score = mean over images.")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--detections", nargs="+", type=Path, help="override the manifest's detection files")
    p.add_argument("--out", type=Path, required=True, help="breast score CSV")
    p.add_argument("--image-scores", type=Path, help="also write per-image scores to this CSV")
    p.add_argument("--no-nms", action="store_true", help="inputs are already suppressed")

    p = sub.add_parser("eval-roc", parents=[common], help="breast-level ROC with bootstrap interval",
                       description="ROC curve, AUC and percentile-bootstrap interval over breasts.")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--scores", type=Path, help="breast score CSV from 'aggregate'")
    src.add_argument("--manifest", type=Path, help="score the manifest's detections directly")
    p.add_argument("--detections", nargs="+", type=Path, help="override the manifest's detection files")
    p.add_argument("--out", type=Path, required=True, help="report directory")
    p.add_argument("--no-nms", action="store_true", help="inputs are already suppressed")

    p = sub.add_parser("eval-froc", parents=[common], help="lesion-level FROC with bootstrap band",
                       description="FROC: a detection is correct when its center lies inside a "
                                   "malignant lesion box; images are the bootstrap unit.")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--detections", nargs="+", type=Path, help="override the manifest's detection files")
    p.add_argument("--model", help="model to evaluate when several are present")
    p.add_argument("--out", type=Path, required=True, help="report directory")
    p.add_argument("--no-nms", action="store_true", help="inputs are already suppressed")

    p = sub.add_parser("synth", parents=[common], help="write a synthetic dataset with known truth",
                       description="Generate manifest.json, detections.jsonl and truth.json.")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--fixture", choices=["random", "published"], default="random",
                   help="published: 100 images / 50 lesions built around the (0.3, 0.9) and (3.0, 1.0) "
                        "operating points; random: driven by the options below (default)")
    p.add_argument("--spec", type=Path, help="JSON file with SynthSpec fields")
    p.add_argument("--n-images", type=int, default=100)
    p.add_argument("--n-lesions", type=int, default=50)
    p.add_argument("--fp-rate", type=float, default=1.0, help="mean FP marks per image (default: 1.0)")
    p.add_argument("--detect-prob", type=float, default=1.0, help="chance a lesion is detected (default: 1.0)")
    p.add_argument("--model-id", default="synth")
    return parser


def _boot_cfg(args) -> BootstrapConfig | None:
    if args.bootstrap < 0:
        raise ConfigError("--bootstrap must be non-negative")
    if args.bootstrap == 0:
        return None
    return BootstrapConfig(replicates=args.bootstrap, interval=args.ci, seed=args.seed)


def _config_echo(args, **extra) -> dict:
    echo = {
        "seed": args.seed,
        "bootstrap": args.bootstrap,
        "ci": args.ci,
        "nms_iou": None if getattr(args, "no_nms", False) else args.nms_iou,
        "fp_targets": list(args.fp_targets),
    }
    echo.update(extra)
    return echo


def _paths(paths) -> list[str] | None:
    return None if paths is None else [str(p) for p in paths]


def cmd_preprocess(args) -> None:
    cal = OdCalibration.from_json(args.calibration) if args.calibration else None
    window = WindowConfig(args.lower_offset, args.upper_offset, args.background)
    resize = None if args.no_resize else ResizeConfig(args.max_long, args.max_short)
    for path in args.images:
        meta = preprocess_file(path, args.out, args.method, window, cal, resize, args.bit_depth)
        log.info("%s -> %dx%d (scale %.4f)", path, meta.width_out, meta.height_out, meta.scale)


def cmd_nms(args) -> None:
    cfg = NmsConfig(args.nms_iou)
    groups: dict[tuple[str, str], list] = {}
    for path in args.detections:
        for d in read_detections(path):
            groups.setdefault((d.model_id, d.image_id), []).append(d)
    kept = []
    for key in groups:
        kept.extend(nms(groups[key], cfg))
    n_in = sum(len(v) for v in groups.values())
    log.info("nms kept %d of %d detections", len(kept), n_in)
    write_detections(kept, args.out)


def _nms_cfg(args) -> NmsConfig | None:
    return None if args.no_nms else NmsConfig(args.nms_iou)


def cmd_aggregate(args) -> None:
    ds = load_dataset(args.manifest, args.detections)
    by_model = ds.detections_by_model(_nms_cfg(args))
    rows = score_breasts(ds.breasts, by_model)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_breast_scores(rows, args.out)
    if args.image_scores:
        with open(args.image_scores, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["image_id", *ds.models, "ensemble"])
            for image_id in ds.images:
                per = [image_score(by_model[m][image_id], image_id).score for m in ds.models]
                w.writerow([image_id, *map(repr, per), repr(ensemble_score(per))])


def cmd_eval_roc(args) -> None:
    if args.scores is not None:
        if args.detections:
            raise ConfigError("--detections only applies together with --manifest")
        cases = [(s, l) for _, s, l in read_breast_scores(args.scores)]
        source = {"scores": str(args.scores)}
    else:
        ds = load_dataset(args.manifest, args.detections)
        rows = score_breasts(ds.breasts, ds.detections_by_model(_nms_cfg(args)))
        cases = [(s, b.label) for b, s in rows]
        source = {"manifest": str(args.manifest), "detections": _paths(args.detections)}
    curve = roc_curve(cases)
    cfg = _boot_cfg(args)
    boot = None if cfg is None else auc_bootstrap(cases, cfg, DEFAULT_FPR_GRID, n_jobs=args.jobs)
    emit_report(ReportResults(roc=RocReport(curve, boot), config=_config_echo(args, **source)), args.out)
    if boot is not None:
        print(f"AUC = {curve.auc:.4f} ({args.ci:g} percentile interval: {boot.lo:.4f} to {boot.hi:.4f}, "
              f"{boot.replicates} bootstrap samples)")
    else:
        print(f"AUC = {curve.auc:.4f}")


def cmd_eval_froc(args) -> None:
    ds = load_dataset(args.manifest, args.detections)
    images = ds.froc_images(args.model, _nms_cfg(args))
    curve = froc_curve(images)
    cfg = _boot_cfg(args)
    redraws = 0
    if cfg is not None:
        band, redraws = froc_bootstrap_band(images, cfg, default_grid(curve, args.fp_targets), n_jobs=args.jobs)
        curve = dataclasses.replace(curve, band=band)
    report = FrocReport(curve, tuple(args.fp_targets), 0 if cfg is None else cfg.replicates,
                        None if cfg is None else cfg.seed, redraws)
    source = {"manifest": str(args.manifest), "detections": _paths(args.detections), "model": args.model}
    emit_report(ReportResults(froc=report, config=_config_echo(args, **source)), args.out)
    for t in args.fp_targets:
        sens, thr = operating_point(curve, t)
        print(f"sensitivity {sens:.4f} at <= {t:g} FP/image (threshold {thr:g})")


def cmd_synth(args) -> None:
    if args.fixture == "published":
        paths = operating_point_fixture(args.out, seed=args.seed, model_id=args.model_id)
    else:
        if args.spec:
            try:
                fields = json.loads(args.spec.read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"{args.spec}: {exc}") from None
            fields.setdefault("seed", args.seed)
            try:
                spec = SynthSpec.from_dict(fields)
            except TypeError as exc:
                raise ConfigError(f"{args.spec}: {exc}") from None
        else:
            spec = SynthSpec(
                n_images=args.n_images, n_lesions=args.n_lesions, fp_rate=args.fp_rate,
                detect_prob=args.detect_prob, seed=args.seed,
            )
        paths = synth_generate(spec, args.out, model_id=args.model_id)
    for p in paths.values():
        print(p)


COMMANDS = {
    "preprocess": cmd_preprocess,
    "nms": cmd_nms,
    "aggregate": cmd_aggregate,
    "eval-roc": cmd_eval_roc,
    "eval-froc": cmd_eval_froc,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except (InputError, OSError) as exc:
        print(f"cadeval {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
