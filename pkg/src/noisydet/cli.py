"""``noisydet`` command line interface.

Exit codes: 0 success, 1 invalid input data, 2 usage error. Each command
prints its resolved configuration as a JSON provenance block on stdout.
"""

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .anchors import AnchorConfig, nms, positive_census
from .froc import afroc, bootstrap_afroc, froc_curve
from .geom import CriterionKind, MatchCriterion
from .io import (Dataset, dataset_from_annotations, ensure_parent, read_dataset, read_detections,
                 read_proposals, read_table, write_dataset, write_detections, write_table)
from .mining import build_pool, sample_training_rois
from .noise import NoiseConfig, box_diameter, inject_noise_dataset
from .svg import census_chart, froc_chart
from .synthetic import make_corpus, make_detections
from .validation import ValidationError

DIAMETER_BIN = 10.0


def _provenance(command, **config):
    block = {"command": command, "version": __version__, "config": config}
    print("# provenance")
    print(json.dumps(block, indent=2, sort_keys=True, default=str))


def _write_text(path, text):
    ensure_parent(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(text)


def _threads():
    raw = os.environ.get("NOISYDET_THREADS")
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError(f"NOISYDET_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


# -- argument types ----------------------------------------------------------

def _unit_interval(text):
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"{text} is outside [0, 1]")
    return v


def _nonneg_float(text):
    v = float(text)
    if not (math.isfinite(v) and v >= 0):
        raise argparse.ArgumentTypeError(f"{text} must be a nonnegative number")
    return v


def _positive_float(text):
    v = float(text)
    if not (math.isfinite(v) and v > 0):
        raise argparse.ArgumentTypeError(f"{text} must be a positive number")
    return v


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"{text} must be a positive integer")
    return v


def _criteria(text):
    names = [t.strip() for t in text.split(",") if t.strip()]
    valid = [k.value for k in CriterionKind]
    bad = [n for n in names if n not in valid]
    if bad or not names:
        raise argparse.ArgumentTypeError(
            f"unknown criterion {bad[0] if bad else text!r}; choose from {{{', '.join(valid)}}}")
    return names


def _labeled_path(text):
    if "=" in text:
        label, path = text.split("=", 1)
    else:
        label, path = Path(text).stem, text
    return label, path


# -- commands ----------------------------------------------------------------

def _diameter_histogram(levels):
    """``levels`` maps a label to annotations; shared bins of width 10 px."""
    all_d = [box_diameter(a.box) for anns in levels.values() for a in anns]
    top = math.ceil(max(all_d) / DIAMETER_BIN) * DIAMETER_BIN if all_d else DIAMETER_BIN
    edges = np.arange(0.0, top + DIAMETER_BIN, DIAMETER_BIN)
    rows = []
    for label, anns in levels.items():
        counts, _ = np.histogram([box_diameter(a.box) for a in anns], bins=edges)
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            rows.append((label, float(lo), float(hi), int(c)))
    return rows


def cmd_inject_noise(args):
    config = NoiseConfig(mu=args.mu, clip_high=args.clip_high,
                         max_image_fraction=args.max_fraction, seed=args.seed)
    ds = read_dataset(args.input)
    noisy = inject_noise_dataset(ds.annotations, config)
    write_dataset(args.output, Dataset(noisy, ds.images))
    report = args.report or str(Path(args.output).with_suffix("")) + ".diameters.csv"
    rows = _diameter_histogram({"input": ds.annotations, f"mu={args.mu:g}": noisy})
    write_table(report, ["level", "bin_low", "bin_high", "count"], rows)
    _provenance("inject-noise", input=args.input, output=args.output, report=report,
                mu=config.mu, sigma=config.sigma, clip_low=config.clip_low,
                clip_high=config.clip_high, max_image_fraction=config.max_image_fraction,
                seed=config.seed, rng="philox4x64 inverse-cdf", lesions=len(noisy))
    return 0


def _merge_images(datasets):
    images = {}
    for label, ds in datasets.items():
        for image_id, info in ds.images.items():
            prev = images.setdefault(image_id, (info.width, info.height))
            if prev != (info.width, info.height):
                raise ValidationError(f"image {image_id!r} has different dimensions in {label!r}")
    return [(i, w, h) for i, (w, h) in images.items()]


def cmd_census(args):
    datasets = {}
    for label, path in args.annotations:
        if label in datasets:
            raise ValidationError(f"noise level label {label!r} given twice")
        datasets[label] = read_dataset(path)
    criteria = [MatchCriterion(name, args.t_upper, args.t_lower, args.beta)
                for name in args.criteria]
    config = AnchorConfig(ignore_cross_boundary=not args.keep_cross_boundary)
    rows = positive_census({k: v.annotations for k, v in datasets.items()},
                           _merge_images(datasets), criteria, config)
    ensure_parent(args.out)
    write_table(args.out, ["criterion", "level", "positives_per_lesion"], rows)
    svg = args.svg or str(Path(args.out).with_suffix(".svg"))
    _write_text(svg, census_chart(_census_rows_from_csv(args.out)))
    for r in rows:
        print(f"{r.criterion},{r.level},{r.positives_per_lesion:.4f}")
    _provenance("census", annotations=dict(args.annotations), criteria=args.criteria,
                t_upper=args.t_upper, t_lower=args.t_lower, beta=args.beta,
                scales=list(config.scales), aspect_ratios=[list(r) for r in config.aspect_ratios],
                stride=config.stride, ignore_cross_boundary=config.ignore_cross_boundary,
                out=args.out, svg=svg)
    return 0


def _census_rows_from_csv(path):
    return [(r["criterion"], r["level"], float(r["positives_per_lesion"]))
            for r in read_table(path)]


def cmd_plot_census(args):
    _write_text(args.output, census_chart(_census_rows_from_csv(args.input)))
    return 0


def cmd_eval_froc(args):
    detections = read_detections(args.detections)
    gt = read_dataset(args.ground_truth)
    images = list(gt.images)
    curve = froc_curve(detections, gt.annotations, images, args.fp_cut)
    area = afroc(curve)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_table(out / "froc.csv", ["fp_per_image", "sensitivity"], curve.points)

    summary = None
    if args.bootstrap:
        summary = bootstrap_afroc(detections, gt.annotations, gt.cases(),
                                  n_resamples=args.bootstrap, resample_size=args.cases,
                                  seed=args.seed, fp_cut=args.fp_cut, n_jobs=_threads(),
                                  band_points=101)
        grid, lo, hi = summary.band
        write_table(out / "froc_band.csv", ["fp_per_image", "sensitivity_low", "sensitivity_high"],
                    [(float(f), float(a), float(b)) for f, a, b in zip(grid, lo, hi)])
        line = f"AFROC={area:.3f} CI=[{summary.ci_low:.3f},{summary.ci_high:.3f}]"
    else:
        line = f"AFROC={area:.3f}"
    _write_text(out / "froc.svg", froc_chart(curve.points, args.fp_cut,
                                             summary.band if summary else None))
    _write_text(out / "summary.txt", line + "\n")
    print(line)
    extra = {}
    if summary:
        extra = dict(bootstrap_mean_afroc=summary.mean_afroc, ci_low=summary.ci_low,
                     ci_high=summary.ci_high, n_resamples=summary.n_resamples,
                     resample_size=summary.resample_size, seed=summary.seed,
                     ci_method="percentile 2.5/97.5")
    _provenance("eval-froc", detections=args.detections, ground_truth=args.ground_truth,
                fp_cut=args.fp_cut, images=len(images), lesions=len(gt.annotations),
                matching="centroid inside ground truth", afroc=area, out_dir=str(out), **extra)
    return 0


def cmd_mine(args):
    proposals = read_proposals(args.proposals)
    pool = build_pool(proposals, args.cap)
    chosen = sample_training_rois(pool, args.n, args.seed) if pool.members() else []
    category = {}
    for name in ("easy_pos", "hard_pos", "easy_neg", "hard_neg"):
        for p in getattr(pool, name):
            category[id(p)] = name
    rows = [(p.true_label, p.predicted_prob, p.box.x1, p.box.y1, p.box.x2, p.box.y2,
             p.mining_score, category[id(p)]) for p in chosen]
    ensure_parent(args.output)
    write_table(args.output, ["true_label", "predicted_prob", "x1", "y1", "x2", "y2",
                              "mining_score", "category"], rows)
    stats = {"S_P": None if math.isnan(pool.mean_pos_score) else pool.mean_pos_score,
             "S_N": None if math.isnan(pool.mean_neg_score) else pool.mean_neg_score,
             **pool.sizes(), "selected": len(chosen)}
    print(json.dumps(stats, sort_keys=True))
    _provenance("mine", proposals=args.proposals, seed=args.seed, n=args.n, cap=args.cap,
                output=args.output)
    return 0


def cmd_nms(args):
    detections = read_detections(args.detections)
    by_image = {}
    for d in detections:
        by_image.setdefault(d.image_id, []).append(d)
    kept = []
    for dets in by_image.values():
        kept.extend(nms(dets, args.threshold, args.max))
    ensure_parent(args.output)
    write_detections(args.output, kept)
    _provenance("nms", detections=args.detections, threshold=args.threshold, max=args.max,
                output=args.output, kept=len(kept), total=len(detections), per_image=True)
    return 0


def cmd_synth(args):
    corpus = make_corpus(args.images, seed=args.seed,
                         image_size=(args.image_size, args.image_size),
                         diameter_range=(args.min_diameter, args.max_diameter))
    ensure_parent(args.output)
    write_dataset(args.output, dataset_from_annotations(corpus))
    if args.detections:
        ensure_parent(args.detections)
        write_detections(args.detections, make_detections(corpus, seed=args.seed + 1))
    _provenance("synth", images=args.images, seed=args.seed, image_size=args.image_size,
                diameter_range=[args.min_diameter, args.max_diameter],
                diameter_distribution="log-uniform", output=args.output,
                detections=args.detections, detection_seed=args.seed + 1)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="noisydet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("inject-noise", help="enlarge ground-truth boxes with random noise")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--mu", type=_nonneg_float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--clip-high", type=_positive_float, default=6.0)
    p.add_argument("--max-fraction", type=_positive_float, default=0.8)
    p.add_argument("--report", help="diameter histogram CSV (default: <output>.diameters.csv)")
    p.set_defaults(func=cmd_inject_noise)

    p = sub.add_parser("census", help="positive anchors per lesion for each criterion and level")
    p.add_argument("--annotations", nargs="+", required=True, type=_labeled_path,
                   metavar="LEVEL=PATH")
    p.add_argument("--criteria", type=_criteria, default=["iou", "centroid", "exp_iou"])
    p.add_argument("--t-upper", type=_unit_interval, default=0.5)
    p.add_argument("--t-lower", type=_unit_interval, default=0.3)
    p.add_argument("--beta", type=_positive_float, default=0.1)
    p.add_argument("--keep-cross-boundary", action="store_true",
                   help="label anchors crossing the image border instead of ignoring them")
    p.add_argument("--out", required=True)
    p.add_argument("--svg", help="bar chart path (default: <out>.svg)")
    p.set_defaults(func=cmd_census)

    p = sub.add_parser("plot-census", help="redraw the census bar chart from its CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_plot_census)

    p = sub.add_parser("eval-froc", help="FROC curve, AFROC and bootstrap interval")
    p.add_argument("--detections", required=True)
    p.add_argument("--ground-truth", required=True)
    p.add_argument("--fp-cut", type=_positive_float, default=2.0)
    p.add_argument("--bootstrap", type=_positive_int, metavar="N",
                   help="number of bootstrap resamples (1000 is customary)")
    p.add_argument("--cases", type=_positive_int, default=200, help="cases per resample")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_eval_froc)

    p = sub.add_parser("mine", help="hard sample mining over scored proposals")
    p.add_argument("--proposals", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n", type=_positive_int, default=4)
    p.add_argument("--cap", type=_positive_int, default=25)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("nms", help="greedy non-maximum suppression, per image")
    p.add_argument("--detections", required=True)
    p.add_argument("--threshold", type=_unit_interval, required=True)
    p.add_argument("--max", type=_positive_int, default=300)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_nms)

    p = sub.add_parser("synth", help="write a synthetic lesion corpus (and detections)")
    p.add_argument("--images", type=_positive_int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--image-size", type=_positive_float, default=600.0)
    p.add_argument("--min-diameter", type=_positive_float, default=30.0)
    p.add_argument("--max-diameter", type=_positive_float, default=150.0)
    p.add_argument("--output", required=True)
    p.add_argument("--detections")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "census" and args.t_lower > args.t_upper:
        parser.error("--t-lower must not exceed --t-upper")
    if args.command == "inject-noise" and args.max_fraction > 1:
        parser.error("--max-fraction must lie in (0, 1]")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"noisydet: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"noisydet: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
