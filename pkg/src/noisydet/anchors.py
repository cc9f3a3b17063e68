"""Anchor grids, anchor labeling, the positive-anchor census and greedy NMS."""

import math
from collections import defaultdict
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, NamedTuple, Optional, Sequence

import numpy as np

from .geom import Box, Label, MatchCriterion, array_to_boxes, iou_matrix, match_labels
from .validation import ValidationError, check_boxes


@dataclass(frozen=True)
class AnchorConfig:
    scales: tuple = (128.0, 256.0, 512.0)
    # (height factor, width factor)
    aspect_ratios: tuple = ((1.0, 1.0), (0.7, 1.4), (1.4, 0.7))
    stride: int = 16
    # cross-boundary anchors are labeled neutral and never used as fallback
    ignore_cross_boundary: bool = True

    def __post_init__(self):
        object.__setattr__(self, "scales", tuple(float(s) for s in self.scales))
        object.__setattr__(self, "aspect_ratios",
                           tuple((float(h), float(w)) for h, w in self.aspect_ratios))
        if not self.scales or min(self.scales) <= 0:
            raise ValidationError("scales must be a nonempty list of positive sizes")
        if not self.aspect_ratios or min(min(r) for r in self.aspect_ratios) <= 0:
            raise ValidationError("aspect ratio factors must be positive")
        if int(self.stride) != self.stride or self.stride < 1:
            raise ValidationError("stride must be a positive integer")

    @property
    def anchors_per_location(self):
        return len(self.scales) * len(self.aspect_ratios)


@dataclass(frozen=True)
class LabeledAnchor:
    box: Box
    label: Label
    matched_lesion: Optional[str]
    score: float


def _base_shapes(config: AnchorConfig):
    return np.array([(s * wf, s * hf) for s in config.scales for hf, wf in config.aspect_ratios])


@lru_cache(maxsize=32)
def _cached_grid(image_width, image_height, config):
    nx = int(image_width // config.stride)
    ny = int(image_height // config.stride)
    if nx == 0 or ny == 0:
        return np.zeros((0, 4))
    half = config.stride / 2.0
    cx = np.arange(nx) * config.stride + half
    cy = np.arange(ny) * config.stride + half
    # row-major locations, then scale, then ratio
    gy, gx = np.meshgrid(cy, cx, indexing="ij")
    centers = np.stack([gx.ravel(), gy.ravel()], axis=1)
    wh = _base_shapes(config)
    c = np.repeat(centers, len(wh), axis=0)
    s = np.tile(wh, (len(centers), 1))
    grid = np.concatenate([c - s / 2.0, c + s / 2.0], axis=1)
    grid.setflags(write=False)
    return grid


def anchor_grid(image_width, image_height, config: AnchorConfig = AnchorConfig()) -> np.ndarray:
    """Anchors as a read-only ``(n, 4)`` array, in :func:`generate_anchors` order."""
    return _cached_grid(float(image_width), float(image_height), config)


def cross_boundary(anchors, image_width, image_height) -> np.ndarray:
    """Mask of anchors extending past the image.

    Such anchors stay in the grid; labeling treats them as neutral when
    ``AnchorConfig.ignore_cross_boundary`` is set.
    """
    a = check_boxes(anchors)
    return (a[:, 0] < 0) | (a[:, 1] < 0) | (a[:, 2] > image_width) | (a[:, 3] > image_height)


def generate_anchors(image_width, image_height, config: AnchorConfig = AnchorConfig()) -> list:
    """``k`` anchors per stride cell, centered at ``(i + 1/2) * stride``.

    An image smaller than one stride in either direction has no anchors.
    """
    return array_to_boxes(anchor_grid(image_width, image_height, config))


class AnchorLabels(NamedTuple):
    labels: np.ndarray
    matched: np.ndarray
    scores: np.ndarray


def label_anchor_array(anchors, ground_truths, criterion: MatchCriterion,
                       usable=None) -> AnchorLabels:
    """Threshold labeling followed by the per-ground-truth fallback.

    ``usable`` is an optional boolean mask; anchors outside it are labeled
    neutral and never promoted. A ground truth that received no positive
    anchor gets its best remaining usable anchor promoted: highest criterion
    score, then highest IoU, then lowest index. Anchors already positive for
    another ground truth are not taken over, so no positive is ever demoted.
    """
    anchors = check_boxes(anchors, "anchors")
    gts = check_boxes(ground_truths, "ground_truths")
    labels, matched, scores, smat = match_labels(anchors, gts, criterion)
    if usable is not None:
        usable = np.asarray(usable, dtype=bool)
        labels[~usable] = Label.NEUTRAL
        matched[~usable] = -1
    if len(anchors) == 0 or len(gts) == 0:
        return AnchorLabels(labels, matched, scores)
    ious = None
    for j in range(len(gts)):
        if np.any(matched == j):
            continue
        if ious is None:
            ious = iou_matrix(anchors, gts)
        free = labels != Label.POSITIVE
        if usable is not None:
            free &= usable
        if not free.any():
            break
        # lexsort: last key is primary
        cand = np.flatnonzero(free)
        order = np.lexsort((cand, -ious[cand, j], -smat[cand, j]))
        best = cand[order[0]]
        labels[best] = Label.POSITIVE
        matched[best] = j
        scores[best] = smat[best, j]
    return AnchorLabels(labels, matched, scores)


def label_anchors(anchors: Sequence[Box], ground_truths, criterion: MatchCriterion,
                  config: AnchorConfig = AnchorConfig()) -> list:
    """Label anchors against the annotations of one image.

    With ``config.ignore_cross_boundary`` the image size is taken from the
    annotations; without annotations nothing can be positive anyway.
    """
    gt_boxes = [a.box for a in ground_truths]
    usable = None
    if config.ignore_cross_boundary and ground_truths and len(anchors):
        first = ground_truths[0]
        usable = ~cross_boundary(anchors, first.image_width, first.image_height)
    res = label_anchor_array(anchors, gt_boxes, criterion, usable)
    out = []
    for box, lab, m, s in zip(anchors, res.labels, res.matched, res.scores):
        lesion = ground_truths[m].lesion_id if m >= 0 else None
        out.append(LabeledAnchor(box, Label(int(lab)), lesion, float(s)))
    return out


def _grid_and_mask(dims, config):
    grid = anchor_grid(*dims, config)
    if not config.ignore_cross_boundary:
        return grid, None
    return grid, ~cross_boundary(grid, *dims)


class CensusRow(NamedTuple):
    criterion: str
    level: str
    positives_per_lesion: float


def positive_census(datasets: Mapping[str, Sequence], images, criteria: Sequence[MatchCriterion],
                    config: AnchorConfig = AnchorConfig()) -> list:
    """Mean number of positive anchors per lesion, for each criterion and noise level.

    ``datasets`` maps a level label to its annotations; ``images`` lists
    ``(image_id, width, height)``. Rows come out criterion-major, levels in
    mapping order. The denominator is the total lesion count of the level.
    """
    dims = {str(i): (float(w), float(h)) for i, w, h in images}
    grouped = {}
    for level, annotations in datasets.items():
        by_image = defaultdict(list)
        for a in annotations:
            if a.image_id not in dims:
                raise ValidationError(f"no image dimensions for image_id {a.image_id!r}")
            by_image[a.image_id].append(a.box.as_tuple())
        grouped[level] = (len(annotations), by_image)

    rows = []
    for criterion in criteria:
        for level, (n_lesions, by_image) in grouped.items():
            positives = 0
            for image_id, boxes in by_image.items():
                grid, usable = _grid_and_mask(dims[image_id], config)
                res = label_anchor_array(grid, boxes, criterion, usable)
                positives += int(np.count_nonzero(res.labels == Label.POSITIVE))
            value = positives / n_lesions if n_lesions else math.nan
            rows.append(CensusRow(criterion.name, level, value))
    return rows


def nms_indices(boxes, scores, overlap_threshold: float, max_output: int = 300) -> np.ndarray:
    """Greedy NMS on arrays; returns kept indices in descending score order.

    Ties in score keep input order. A box is suppressed when its IoU with a
    kept box is strictly greater than ``overlap_threshold``.
    """
    if not 0.0 <= overlap_threshold <= 1.0:
        raise ValidationError("overlap_threshold must lie in [0, 1]")
    boxes = check_boxes(boxes)
    scores = np.asarray(scores, dtype=float).reshape(-1)
    if len(scores) != len(boxes):
        raise ValidationError("boxes and scores differ in length")
    if not np.all(np.isfinite(scores)):
        raise ValidationError("scores must be finite")
    order = np.argsort(-scores, kind="stable")
    keep = []
    while order.size and len(keep) < max_output:
        i = order[0]
        keep.append(i)
        rest = order[1:]
        if not rest.size:
            break
        overlap = iou_matrix(boxes[i:i + 1], boxes[rest])[0]
        order = rest[overlap <= overlap_threshold]
    return np.array(keep, dtype=np.intp)


def nms(detections: Sequence, overlap_threshold: float, max_output: int = 300) -> list:
    """Greedy NMS over objects exposing ``.box`` and ``.score``."""
    if not detections:
        return []
    idx = nms_indices([d.box for d in detections], [d.score for d in detections],
                      overlap_threshold, max_output)
    return [detections[i] for i in idx]
