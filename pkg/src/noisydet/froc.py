"""FROC curves, their area (AFROC) and case-level bootstrap intervals.

A detection hits a lesion when its box center lies inside the lesion's
ground-truth box (boundary inclusive). Detections are processed from the
highest score down: the first hit on a lesion is a true positive, later hits
on the same lesion are ignored, and detections hitting no lesion are false
positives. The curve is traced by sweeping the score threshold; the area
uses step interpolation and extends the last sensitivity to the FP cut.
"""

import enum
import math
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Optional, Sequence

import numpy as np

from .geom import Box, centroid_distance, centroid_inside
from .validation import ValidationError


@dataclass(frozen=True)
class Detection:
    image_id: str
    box: Box
    score: float

    def __post_init__(self):
        object.__setattr__(self, "score", float(self.score))
        if not math.isfinite(self.score):
            raise ValidationError(f"detection score must be finite, got {self.score!r}")


class Outcome(enum.Enum):
    TP = "tp"
    FP = "fp"
    IGNORED = "ignored"


class Classified(NamedTuple):
    outcome: Outcome
    lesion_id: Optional[str]


@dataclass(frozen=True)
class FrocCurve:
    """Operating points ``(fp_per_image, sensitivity)``, both nondecreasing."""

    points: tuple
    fp_cut: float = 2.0

    def fps(self):
        return np.array([p[0] for p in self.points], dtype=float)

    def sensitivities(self):
        return np.array([p[1] for p in self.points], dtype=float)


@dataclass(frozen=True)
class BootstrapSummary:
    mean_afroc: float
    ci_low: float
    ci_high: float
    n_resamples: int = 1000
    resample_size: int = 200
    seed: int = 0
    afrocs: Optional[np.ndarray] = None
    # (fp grid, lower, upper) sensitivity band, when requested
    band: Optional[tuple] = None

    def __eq__(self, other):
        if not isinstance(other, BootstrapSummary):
            return NotImplemented
        same = (self.mean_afroc, self.ci_low, self.ci_high, self.n_resamples,
                self.resample_size, self.seed) == (other.mean_afroc, other.ci_low, other.ci_high,
                                                   other.n_resamples, other.resample_size,
                                                   other.seed)
        return same and _arrays_equal(self.afrocs, other.afrocs) and _bands_equal(self.band,
                                                                                  other.band)


def _arrays_equal(a, b):
    if a is None or b is None:
        return a is b
    return np.array_equal(a, b, equal_nan=True)


def _bands_equal(a, b):
    if a is None or b is None:
        return a is b
    return all(np.array_equal(x, y) for x, y in zip(a, b))


def _index_ground_truths(ground_truths, images=None):
    by_image = defaultdict(list)
    for g in ground_truths:
        by_image[g.image_id].append(g)
    known = set(by_image)
    if images is not None:
        images = [str(i) for i in images]
        missing = known.difference(images)
        if missing:
            raise ValidationError(f"ground truth references unknown image_id {sorted(missing)[0]!r}")
        known = set(images)
    return by_image, known


def classify_detections(detections: Sequence[Detection], ground_truths, images=None) -> list:
    """Per-detection TP / FP / IGNORED, aligned with the input order.

    A center inside several lesions goes to the one with the nearest center
    (lowest index within the image on ties).
    """
    by_image, known = _index_ground_truths(ground_truths, images)
    for d in detections:
        if d.image_id not in known:
            raise ValidationError(f"detection references unknown image_id {d.image_id!r}")
    order = sorted(range(len(detections)), key=lambda i: -detections[i].score)
    found = set()
    out = [None] * len(detections)
    for i in order:
        d = detections[i]
        hits = [(centroid_distance(d.box, g.box), k)
                for k, g in enumerate(by_image.get(d.image_id, ()))
                if centroid_inside(d.box, g.box)]
        if not hits:
            out[i] = Classified(Outcome.FP, None)
            continue
        lesion = by_image[d.image_id][min(hits)[1]]
        key = (lesion.image_id, lesion.lesion_id)
        if key in found:
            out[i] = Classified(Outcome.IGNORED, lesion.lesion_id)
        else:
            found.add(key)
            out[i] = Classified(Outcome.TP, lesion.lesion_id)
    return out


def _cut(points, fp_cut):
    kept = [p for p in points if p[0] <= fp_cut]
    if len(kept) < len(points) and (not kept or kept[-1][0] < fp_cut):
        kept.append((fp_cut, kept[-1][1] if kept else 0.0))
    return kept


def _sweep(scores, tp, fp, n_lesions, n_images):
    """Operating point at every distinct score, highest threshold first."""
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    cum_tp = np.cumsum(tp[order])
    cum_fp = np.cumsum(fp[order])
    ends = np.flatnonzero(np.append(s[1:] != s[:-1], True)) if len(s) else np.zeros(0, int)
    return cum_fp[ends] / n_images, cum_tp[ends] / n_lesions


def curve_from_counts(scores, tp, fp, n_lesions, n_images, fp_cut=2.0) -> FrocCurve:
    """Build a curve from per-detection scores and TP/FP weights."""
    if n_lesions <= 0:
        raise ValidationError("no lesions in the ground truth: sensitivity is undefined")
    if n_images <= 0:
        raise ValidationError("image list must not be empty")
    fps, sens = _sweep(np.asarray(scores, float), np.asarray(tp, float), np.asarray(fp, float),
                       n_lesions, n_images)
    points = []
    for x, y in zip(fps.tolist(), sens.tolist()):
        if points and points[-1][0] == x:
            points[-1] = (x, y)
        else:
            points.append((x, y))
    return FrocCurve(tuple(_cut(points, fp_cut)), float(fp_cut))


def froc_curve(detections: Sequence[Detection], ground_truths, images: Sequence[str],
               fp_cut: float = 2.0) -> FrocCurve:
    """Sensitivity against mean false positives per image over ``images``.

    Images without detections or lesions still count in the FP denominator.
    """
    if not images:
        raise ValidationError("image list must not be empty")
    classes = classify_detections(detections, ground_truths, images)
    scores = np.array([d.score for d in detections], dtype=float)
    tp = np.array([c.outcome is Outcome.TP for c in classes], dtype=float)
    fp = np.array([c.outcome is Outcome.FP for c in classes], dtype=float)
    return curve_from_counts(scores, tp, fp, len(ground_truths), len(set(map(str, images))),
                             fp_cut)


def afroc(curve: FrocCurve) -> float:
    """Area under the step curve on ``[0, fp_cut]``; zero sensitivity before the first point."""
    area = 0.0
    pts = [p for p in curve.points if p[0] <= curve.fp_cut]
    for (x, y), nxt in zip(pts, pts[1:] + [(curve.fp_cut, None)]):
        area += y * (nxt[0] - x)
    return area


def sensitivity_at(curve: FrocCurve, fp_values) -> np.ndarray:
    """Step-interpolated sensitivity at each FP/image value."""
    return _step_lookup(curve.fps(), curve.sensitivities(), fp_values)


def _step_lookup(fps, sens, xs):
    xs = np.asarray(xs, dtype=float)
    idx = np.searchsorted(fps, xs, side="right") - 1
    return np.where(idx >= 0, sens[np.clip(idx, 0, None)] if len(sens) else 0.0, 0.0)


def _afroc_from_sweep(fps, sens, fp_cut):
    fpc = np.minimum(fps, fp_cut)
    widths = np.diff(np.append(fpc, fp_cut))
    return float(np.sum(sens * widths))


class _BootstrapData(NamedTuple):
    scores: np.ndarray
    tp: np.ndarray
    fp: np.ndarray
    case_of_det: np.ndarray
    images_per_case: np.ndarray
    lesions_per_case: np.ndarray


def _prepare(detections, ground_truths, cases):
    case_ids = list(cases)
    image_case = {}
    for k, cid in enumerate(case_ids):
        for img in cases[cid]:
            img = str(img)
            if img in image_case:
                raise ValidationError(f"image {img!r} belongs to more than one case")
            image_case[img] = k
    classes = classify_detections(detections, ground_truths, list(image_case))
    order = np.argsort(-np.array([d.score for d in detections], dtype=float), kind="stable")
    lesions = np.zeros(len(case_ids))
    for g in ground_truths:
        lesions[image_case[g.image_id]] += 1
    images = np.array([len(set(map(str, cases[c]))) for c in case_ids], dtype=float)
    return _BootstrapData(
        scores=np.array([detections[i].score for i in order], dtype=float),
        tp=np.array([classes[i].outcome is Outcome.TP for i in order], dtype=float),
        fp=np.array([classes[i].outcome is Outcome.FP for i in order], dtype=float),
        case_of_det=np.array([image_case[detections[i].image_id] for i in order], dtype=np.intp),
        images_per_case=images,
        lesions_per_case=lesions,
    )


def _resample_rng(seed, index):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index,))))


def _one_resample(data: _BootstrapData, seed, index, resample_size, fp_cut, grid):
    n_cases = len(data.images_per_case)
    draw = _resample_rng(seed, index).integers(0, n_cases, size=resample_size)
    counts = np.bincount(draw, minlength=n_cases).astype(float)
    n_lesions = float(counts @ data.lesions_per_case)
    if n_lesions == 0:
        return math.nan, None
    n_images = float(counts @ data.images_per_case)
    w = counts[data.case_of_det]
    # detections are pre-sorted, so _sweep's stable sort is the identity
    fps, sens = _sweep(data.scores, data.tp * w, data.fp * w, n_lesions, n_images)
    area = _afroc_from_sweep(fps, sens, fp_cut)
    band_row = _step_lookup(fps, sens, grid) if grid is not None else None
    return area, band_row


def bootstrap_afroc(detections: Sequence[Detection], ground_truths,
                    cases: Mapping[str, Sequence[str]], n_resamples: int = 1000,
                    resample_size: int = 200, seed: int = 0, fp_cut: float = 2.0,
                    n_jobs: Optional[int] = None, band_points: Optional[int] = None,
                    alpha: float = 0.05) -> BootstrapSummary:
    """Percentile bootstrap of the AFROC over cases drawn with replacement.

    A drawn case brings all of its images, lesions and detections, once per
    draw. Resample ``r`` uses its own generator derived from ``(seed, r)``,
    so the result does not depend on ``n_jobs``. Resamples without lesions
    are skipped. ``band_points`` adds a pointwise sensitivity band on an
    evenly spaced FP grid.
    """
    if not cases:
        raise ValidationError("case map must not be empty")
    if n_resamples < 1 or resample_size < 1:
        raise ValidationError("n_resamples and resample_size must be positive")
    data = _prepare(detections, ground_truths, cases)
    if data.lesions_per_case.sum() == 0:
        raise ValidationError("no lesions in the ground truth: sensitivity is undefined")
    grid = np.linspace(0.0, fp_cut, band_points) if band_points else None

    def run(indices):
        return [_one_resample(data, seed, r, resample_size, fp_cut, grid) for r in indices]

    all_idx = list(range(n_resamples))
    if n_jobs and n_jobs > 1:
        chunks = [all_idx[k::n_jobs] for k in range(n_jobs)]
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(run, chunks))
        results = [None] * n_resamples
        for chunk, part in zip(chunks, parts):
            for r, res in zip(chunk, part):
                results[r] = res
    else:
        results = run(all_idx)

    afrocs = np.array([r[0] for r in results], dtype=float)
    valid = afrocs[~np.isnan(afrocs)]
    if not valid.size:
        raise ValidationError("every bootstrap resample was free of lesions")
    lo, hi = np.percentile(valid, [100 * alpha / 2, 100 * (1 - alpha / 2)])
    # identical resamples must give a degenerate summary, free of summation rounding
    mean = valid[0] if np.all(valid == valid[0]) else math.fsum(valid) / valid.size
    band = None
    if grid is not None:
        rows = np.array([r[1] for r in results if r[1] is not None])
        b_lo, b_hi = np.percentile(rows, [100 * alpha / 2, 100 * (1 - alpha / 2)], axis=0)
        band = (grid, b_lo, b_hi)
    afrocs.setflags(write=False)
    return BootstrapSummary(float(mean), float(lo), float(hi), n_resamples, resample_size, seed,
                            afrocs, band)
