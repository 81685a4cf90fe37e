"""``thermoscreen`` command line.

Exit status: 0 success, 1 bad input or usage, 2 internal error. Data goes to
stdout or the named files; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import shlex
import sys
from collections import defaultdict
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import Image

from . import __version__
from .augment import COEFFICIENT_SETS, AugmentConfig, RgbImage, augment_image, negate
from .config import ConfigError, build_pipeline_config, load_config_file
from .data import (
    GT_FILENAMES, MANIFEST_NAME, SCENARIOS, DataFormatError, DatasetItem, GroundTruthRecord,
    generate_synthetic_dataset, list_dataset, read_ground_truth, read_manifest, write_ground_truth,
)
from .detect import WireFormatError, format_detections, parse_external_detections, parse_external_masks
from .evaluate import evaluate_by_lux, evaluate_images, pr_curve, split_by_timestamp
from .pipeline import Screener, run_stream, sources_from_dataset
from .radiometric import frame_stats, naive_minmax, normalize_frame, to_byte_image
from .screen import format_results, mask_overrides, parse_results, screen_frame

logger = logging.getLogger("thermoscreen")

INPUT_ERRORS = (ValueError, FileNotFoundError, NotADirectoryError, IsADirectoryError, PermissionError,
                ConfigError, DataFormatError, WireFormatError, json.JSONDecodeError)
IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# ---------------------------------------------------------------------------
# shared helpers


def _pipeline_cfg(args):
    overrides = {k: getattr(args, k, None) for k in (
        "lower_clamp", "upper_clamp", "normalization_mode", "body_band", "min_area", "merge_gap",
        "fever_threshold", "mask_delta_threshold", "target_fps", "workers", "detector_command",
    )}
    if overrides.get("body_band") is not None:
        overrides["body_band"] = tuple(overrides["body_band"])
    if overrides.get("detector_command") is not None:
        overrides["detector_command"] = tuple(shlex.split(overrides["detector_command"])) or None
    if getattr(args, "include_latency", False):
        overrides["include_latency"] = True
    return build_pipeline_config(load_config_file(args.config), overrides)


def _frames(args):
    """(image_name, DatasetItem-like) pairs from --dataset or --frame."""
    if getattr(args, "dataset", None):
        return list_dataset(args.dataset)
    if getattr(args, "frame", None):
        p = Path(args.frame)
        return [DatasetItem(0, p.name, p, None, None)]
    raise ValueError("give --dataset DIR or --frame PATH")


def _write_out(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _add_detector_flags(p):
    p.add_argument("--body-band", dest="body_band", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--min-area", dest="min_area", type=int)
    p.add_argument("--merge-gap", dest="merge_gap", type=int)
    p.add_argument("--detector-command", dest="detector_command",
                   help="external detector; run as COMMAND FRAME_PATH, prints detection records")


def _add_norm_flags(p):
    p.add_argument("--lower-clamp", dest="lower_clamp", type=float)
    p.add_argument("--upper-clamp", dest="upper_clamp", type=float)
    p.add_argument("--mode", dest="normalization_mode", choices=("band_clamp", "literal"))


def _add_screen_flags(p):
    p.add_argument("--fever-threshold", dest="fever_threshold", type=float)
    p.add_argument("--mask-delta", dest="mask_delta_threshold", type=float)


# ---------------------------------------------------------------------------
# subcommands


def cmd_normalize(args) -> int:
    cfg = _pipeline_cfg(args)
    out_dir = Path(args.out) if args.out else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    rows = ["image_name,min,max,mean"]
    for item in _frames(args):
        frame = item.load()
        stats = frame_stats(frame)
        rows.append(f"{item.image_name},{stats['min']:.4f},{stats['max']:.4f},{stats['mean']:.4f}")
        img = normalize_frame(frame, cfg.normalization)
        if out_dir:
            stem = Path(item.image_name).stem
            Image.fromarray(to_byte_image(img), mode="L").save(out_dir / f"{stem}_norm.png")
            if args.figures:
                from .reports import plot_normalization
                plot_normalization(naive_minmax(frame).pixels, img.pixels, out_dir / f"{stem}_compare.png")
    sys.stdout.write("\n".join(rows) + "\n")
    return 0


def cmd_augment(args) -> int:
    cfg = AugmentConfig(COEFFICIENT_SETS[args.coefficients], tuple(args.gamma_range), args.seed, args.negatives)
    src, out = Path(args.input), Path(args.out)
    if not src.is_dir():
        raise NotADirectoryError(f"input directory not found: {src}")
    out.mkdir(parents=True, exist_ok=True)
    records = read_ground_truth(args.annotations) if args.annotations else []
    by_image = defaultdict(list)
    for r in records:
        by_image[r.image_name].append(r)
    rng = np.random.default_rng(cfg.seed)
    new_records = list(records)
    images = sorted(p for p in src.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    for path in images:
        with Image.open(path) as im:
            rgb = RgbImage.from_uint8(np.asarray(im.convert("RGB")))
        gray = augment_image(rgb, cfg, rng)
        Image.fromarray(gray.to_uint8(), mode="L").save(out / path.name)
        if cfg.emit_negatives:
            neg_name = f"neg_{path.name}"
            Image.fromarray(negate(gray).to_uint8(), mode="L").save(out / neg_name)
            new_records.extend(
                GroundTruthRecord(neg_name, r.x_min, r.y_min, r.x_max, r.y_max, r.mask) for r in by_image[path.name]
            )
    if args.annotations:
        write_ground_truth(new_records, out / GT_FILENAMES[0])
    print(f"augmented {len(images)} image(s) into {out}", file=sys.stderr)
    return 0


def cmd_detect(args) -> int:
    cfg = _pipeline_cfg(args)
    screener = Screener(cfg)
    chunks = []
    for item in _frames(args):
        frame = item.load()
        dets = screener.detect(frame, str(item.path))
        chunks.append(format_detections([type(d)(d.frame_id, d.bbox, d.confidence, item.image_name) for d in dets]))
    _write_out("".join(chunks), args.out)
    return 0


def cmd_screen(args) -> int:
    cfg = _pipeline_cfg(args)
    items = _frames(args)
    dets_by_frame = defaultdict(list)
    if args.dets:
        names = {it.image_name: it.frame_id for it in items}
        with open(args.dets, encoding="utf-8") as fh:
            for d in parse_external_detections(fh):
                fid = names.get(d.image_name, d.frame_id) if d.image_name else d.frame_id
                dets_by_frame[fid].append(type(d)(fid, d.bbox, d.confidence, d.image_name))
    overrides = None
    if args.masks:
        with open(args.masks, encoding="utf-8") as fh:
            overrides = mask_overrides(parse_external_masks(fh))
    screener = Screener(cfg)
    chunks = []
    for item in items:
        frame = item.load()
        dets = dets_by_frame[item.frame_id] if args.dets else screener.detect(frame, str(item.path))
        chunks.append(format_results(screen_frame(frame, dets, cfg.screening, overrides)))
    _write_out("".join(chunks), args.out)
    return 0


def _image_keys(gt_path: Path, manifest_path: Optional[str]):
    """image_name -> (frame_id, lux) using the manifest order, else sorted ground-truth names."""
    records = read_ground_truth(gt_path)
    mpath = Path(manifest_path) if manifest_path else gt_path.parent / MANIFEST_NAME
    if mpath.is_file():
        entries = read_manifest(mpath)
        return records, {e.image_name: (i, e.lux) for i, e in enumerate(entries)}
    if manifest_path:
        raise FileNotFoundError(f"manifest not found: {mpath}")
    names = sorted({r.image_name for r in records})
    return records, {n: (i, None) for i, n in enumerate(names)}


def cmd_evaluate(args) -> int:
    gt_path = Path(args.gt)
    records, meta = _image_keys(gt_path, args.manifest)
    by_frame = {fid: name for name, (fid, _) in meta.items()}
    gts, gt_masks = defaultdict(list), defaultdict(list)
    for r in records:
        gts[r.image_name].append(r.bbox)
        gt_masks[r.image_name].append(bool(r.mask))

    def key_for(name, fid):
        if name is not None:
            return name
        if fid not in by_frame:
            raise ValueError(f"frame_id {fid} does not correspond to any image")
        return by_frame[fid]

    dets = defaultdict(list)
    with open(args.dets, encoding="utf-8") as fh:
        for d in parse_external_detections(fh):
            dets[key_for(d.image_name, d.frame_id)].append(d)
    predicted = None
    if args.screening:
        predicted = defaultdict(list)
        with open(args.screening, encoding="utf-8") as fh:
            for r in parse_results(fh):
                predicted[key_for(None, r.frame_id)].append((r.bbox, r.mask))
    images = list(meta)
    if args.by_lux:
        lux = {name: l for name, (_, l) in meta.items()}
        report = evaluate_by_lux(dets, gts, lux, args.iou, gt_masks if predicted else None, predicted, args.ap_method)
    else:
        report = evaluate_images(dets, gts, args.iou, gt_masks if predicted else None, predicted, images,
                                 args.ap_method)
    from .reports import plot_lux_buckets, plot_pr_curve, report_csv, summary_table
    if args.format == "json":
        sys.stdout.write(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    elif args.format == "csv":
        sys.stdout.write(report_csv(report))
    else:
        sys.stdout.write(summary_table(report))
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
        (out / "report.csv").write_text(report_csv(report))
        (out / "summary.txt").write_text(summary_table(report))
        precision, recall = pr_curve({k: dets.get(k, []) for k in images}, {k: gts.get(k, []) for k in images},
                                     args.iou)
        plot_pr_curve(precision, recall, out / "pr_curve.png")
        if report.buckets:
            plot_lux_buckets(report, out / "lux_buckets.png")
    return 0


def cmd_synth(args) -> int:
    generate_synthetic_dataset(args.out, args.n, args.scenario, args.seed, args.noise_sigma)
    print(f"wrote {args.n} frames to {args.out}", file=sys.stderr)
    return 0


def cmd_stream(args) -> int:
    cfg = _pipeline_cfg(args)
    events_out = args.events or cfg.events_out
    summary_out = args.summary or cfg.summary_out
    items = sources_from_dataset(list_dataset(args.dataset))
    fh = open(events_out, "w", encoding="utf-8") if events_out else sys.stdout

    def sink(event):
        fh.write(event.to_line(cfg.include_latency) + "\n")

    try:
        events, summary = run_stream(items, cfg, sink)
    finally:
        if events_out:
            fh.close()
    if summary_out:
        Path(summary_out).write_text(summary.csv(), encoding="utf-8")
    if events_out:
        sys.stdout.write(summary.csv())
    else:
        sys.stderr.write(summary.csv())
    if args.figures:
        from .reports import plot_latency
        Path(args.figures).mkdir(parents=True, exist_ok=True)
        plot_latency([e.processing_latency or 0.0 for e in events], Path(args.figures) / "latency.png",
                     cfg.target_fps)
    if summary.errors:
        print(f"{summary.errors} frame(s) failed; see error events", file=sys.stderr)
    return 0


def cmd_split(args) -> int:
    if args.manifest:
        entries = read_manifest(args.manifest)
    else:
        entries = read_manifest(Path(args.dataset) / MANIFEST_NAME)
    train, val, test = split_by_timestamp(entries)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for name, part in (("train", train), ("val", val), ("test", test)):
            (out / f"{name}.txt").write_text("".join(e.image_name + "\n" for e in part), encoding="utf-8")
    for name, part in (("train", train), ("val", val), ("test", test)):
        for e in part:
            sys.stdout.write(f"{name} {e.image_name}\n")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="thermoscreen", description="Thermal fever and mask screening tools")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND", parser_class=_Parser)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="key = value config file (default: $THERMOSCREEN_CONFIG)")
        p.set_defaults(func=func)
        return p

    p = add("normalize", cmd_normalize, "temperature-constrained normalization of frames")
    p.add_argument("--dataset")
    p.add_argument("--frame")
    p.add_argument("--out", help="directory for normalized PNGs")
    p.add_argument("--figures", action="store_true", help="also render naive-vs-constrained comparisons")
    _add_norm_flags(p)

    p = add("augment", cmd_augment, "visual-to-thermal lookalike augmentation")
    p.add_argument("--input", required=True)
    p.add_argument("--annotations")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gamma-range", type=float, nargs=2, default=(0.3, 0.9), metavar=("LO", "HI"))
    p.add_argument("--coefficients", choices=sorted(COEFFICIENT_SETS), default="default")
    p.add_argument("--negatives", action="store_true", help="also write negated copies (mask-classifier crops)")

    p = add("detect", cmd_detect, "face detection (baseline or external command)")
    p.add_argument("--dataset")
    p.add_argument("--frame")
    p.add_argument("--out")
    _add_detector_flags(p)

    p = add("screen", cmd_screen, "fever and mask verdicts per detection")
    p.add_argument("--dataset")
    p.add_argument("--frame")
    p.add_argument("--dets", help="detection records; baseline detector is used when omitted")
    p.add_argument("--masks", help="external mask-classifier records replacing the heuristic")
    p.add_argument("--out")
    _add_detector_flags(p)
    _add_screen_flags(p)

    p = add("evaluate", cmd_evaluate, "MAP, meanIOU, precision/recall (optionally per lux bucket)")
    p.add_argument("--gt", required=True)
    p.add_argument("--dets", required=True)
    p.add_argument("--manifest")
    p.add_argument("--screening", help="screening results for mask metrics")
    p.add_argument("--by-lux", action="store_true")
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--ap-method", choices=("all_points", "11_point"), default="all_points")
    p.add_argument("--format", choices=("table", "json", "csv"), default="table")
    p.add_argument("--out-dir", help="write report.json, report.csv and figures here")

    p = add("synth", cmd_synth, "generate a synthetic radiometric dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--scenario", choices=sorted(SCENARIOS), default="mixed")
    p.add_argument("--noise-sigma", type=float, default=0.1)

    p = add("stream", cmd_stream, "run the end-to-end pipeline over a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--events")
    p.add_argument("--summary")
    p.add_argument("--workers", type=int)
    p.add_argument("--target-fps", dest="target_fps", type=float)
    p.add_argument("--include-latency", action="store_true", help="record per-frame latency in the event log")
    p.add_argument("--figures", help="directory for the latency plot")
    _add_norm_flags(p)
    _add_detector_flags(p)
    _add_screen_flags(p)

    p = add("split", cmd_split, "chronological 70/20/10 split")
    p.add_argument("--dataset")
    p.add_argument("--manifest")
    p.add_argument("--out")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return 0 if exc.code in (0, None) else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if not getattr(args, "func", None):
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.func(args)
    except INPUT_ERRORS as exc:
        print(f"thermoscreen {args.command}: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        logger.exception("internal error: %s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
