"""Axis-aligned box arithmetic and the anchor/proposal matching criteria.

Boxes are real-valued ``(x1, y1, x2, y2)`` rectangles in pixel coordinates,
top-left to bottom-right, with no +1 pixel convention. Every scalar function
has a vectorised ``*_matrix`` counterpart computing all pairs between two
``(n, 4)`` arrays; both share the same arithmetic so they agree bit for bit.
"""

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .validation import ValidationError, check_boxes


@dataclass(frozen=True)
class Box:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        coords = tuple(float(c) for c in (self.x1, self.y1, self.x2, self.y2))
        for name, c in zip(("x1", "y1", "x2", "y2"), coords):
            object.__setattr__(self, name, c)
        if not all(math.isfinite(c) for c in coords):
            raise ValidationError(f"box coordinates must be finite: {coords}")
        if not (self.x2 > self.x1 and self.y2 > self.y1):
            raise ValidationError(f"box must have positive width and height: {coords}")

    @classmethod
    def from_center(cls, cx, cy, width, height):
        return cls(cx - width / 2.0, cy - height / 2.0, cx + width / 2.0, cy + height / 2.0)

    @property
    def width(self):
        return self.x2 - self.x1

    @property
    def height(self):
        return self.y2 - self.y1

    @property
    def area(self):
        return self.width * self.height

    @property
    def center(self):
        return ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)

    def as_tuple(self):
        return (self.x1, self.y1, self.x2, self.y2)

    def scaled(self, factor):
        return Box(self.x1 * factor, self.y1 * factor, self.x2 * factor, self.y2 * factor)


def boxes_to_array(boxes: Sequence[Box]) -> np.ndarray:
    return check_boxes(boxes)


def array_to_boxes(arr) -> list:
    return [Box(*map(float, row)) for row in np.asarray(arr, dtype=float).reshape(-1, 4)]


# -- scalar operations -------------------------------------------------------

def _intersection(a: Box, b: Box) -> float:
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0 or ih <= 0:
        return 0.0
    return iw * ih


def iou(a: Box, b: Box) -> float:
    inter = _intersection(a, b)
    return inter / (a.area + b.area - inter)


def centroid_distance(a: Box, b: Box) -> float:
    (ax, ay), (bx, by) = a.center, b.center
    return math.hypot(ax - bx, ay - by)


def exp_iou(a: Box, b: Box, beta: float = 0.1) -> float:
    """Average of the IoU and ``exp(-beta * d)``, d the distance between centers."""
    if not beta > 0:
        raise ValidationError(f"beta must be positive, got {beta!r}")
    return (iou(a, b) + math.exp(-beta * centroid_distance(a, b))) / 2.0


def centroid_inside(candidate: Box, reference: Box) -> bool:
    """True iff the center of ``candidate`` lies in ``reference`` (boundary inclusive)."""
    cx, cy = candidate.center
    return reference.x1 <= cx <= reference.x2 and reference.y1 <= cy <= reference.y2


# -- vectorised operations ---------------------------------------------------

def _centers(arr):
    return (arr[:, 0] + arr[:, 2]) / 2.0, (arr[:, 1] + arr[:, 3]) / 2.0


def iou_matrix(a, b) -> np.ndarray:
    a, b = check_boxes(a, "a"), check_boxes(b, "b")
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.where((iw > 0) & (ih > 0), iw * ih, 0.0)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    return inter / (area_a[:, None] + area_b[None, :] - inter)


def centroid_distance_matrix(a, b) -> np.ndarray:
    a, b = check_boxes(a, "a"), check_boxes(b, "b")
    (ax, ay), (bx, by) = _centers(a), _centers(b)
    return np.hypot(ax[:, None] - bx[None, :], ay[:, None] - by[None, :])


def exp_iou_matrix(a, b, beta: float = 0.1) -> np.ndarray:
    if not beta > 0:
        raise ValidationError(f"beta must be positive, got {beta!r}")
    return (iou_matrix(a, b) + np.exp(-beta * centroid_distance_matrix(a, b))) / 2.0


def centroid_inside_matrix(candidates, references) -> np.ndarray:
    """Boolean (n, m): center of candidate i inside reference j."""
    c, r = check_boxes(candidates, "candidates"), check_boxes(references, "references")
    cx, cy = _centers(c)
    return ((r[None, :, 0] <= cx[:, None]) & (cx[:, None] <= r[None, :, 2])
            & (r[None, :, 1] <= cy[:, None]) & (cy[:, None] <= r[None, :, 3]))


# -- matching criteria -------------------------------------------------------

class CriterionKind(str, enum.Enum):
    IOU = "iou"
    CENTROID = "centroid"
    EXP_IOU = "exp_iou"


class Label(enum.IntEnum):
    NEUTRAL = -1
    NEGATIVE = 0
    POSITIVE = 1


@dataclass(frozen=True)
class MatchCriterion:
    """A matching rule plus its thresholds.

    ``t_upper``/``t_lower`` split scores into positive (``>= t_upper``),
    negative (``< t_lower``) and neutral. ``beta`` (1/pixels) only matters for
    :attr:`CriterionKind.EXP_IOU`; the centroid rule is binary and ignores the
    thresholds.
    """

    kind: CriterionKind = CriterionKind.IOU
    t_upper: float = 0.5
    t_lower: float = 0.3
    beta: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "kind", CriterionKind(self.kind))
        if not 0.0 <= self.t_lower <= self.t_upper <= 1.0:
            raise ValidationError(
                f"thresholds must satisfy 0 <= t_lower <= t_upper <= 1, got "
                f"t_lower={self.t_lower}, t_upper={self.t_upper}")
        if self.kind is CriterionKind.EXP_IOU and not self.beta > 0:
            raise ValidationError(f"beta must be positive, got {self.beta!r}")

    @property
    def name(self):
        return self.kind.value

    def score(self, proposal: Box, ground_truth: Box) -> float:
        if self.kind is CriterionKind.IOU:
            return iou(proposal, ground_truth)
        if self.kind is CriterionKind.EXP_IOU:
            return exp_iou(proposal, ground_truth, self.beta)
        return 1.0 if centroid_inside(proposal, ground_truth) else 0.0

    def score_matrix(self, proposals, ground_truths) -> np.ndarray:
        if self.kind is CriterionKind.IOU:
            return iou_matrix(proposals, ground_truths)
        if self.kind is CriterionKind.EXP_IOU:
            return exp_iou_matrix(proposals, ground_truths, self.beta)
        return centroid_inside_matrix(proposals, ground_truths).astype(float)


class Match(NamedTuple):
    label: Label
    index: Optional[int]
    score: float


def match_label(proposal: Box, ground_truths: Sequence[Box], criterion: MatchCriterion) -> Match:
    """Label one proposal against the ground truths of its image.

    ``index`` is the matched ground truth for positives (lowest index on
    ties, first containing box for the centroid rule) and ``None`` otherwise.
    """
    if not ground_truths:
        return Match(Label.NEGATIVE, None, 0.0)
    scores = [criterion.score(proposal, gt) for gt in ground_truths]
    best = max(range(len(scores)), key=lambda i: (scores[i], -i))
    s = scores[best]
    if criterion.kind is CriterionKind.CENTROID:
        if s > 0:
            return Match(Label.POSITIVE, best, s)
        return Match(Label.NEGATIVE, None, s)
    if s >= criterion.t_upper:
        return Match(Label.POSITIVE, best, s)
    if s < criterion.t_lower:
        return Match(Label.NEGATIVE, None, s)
    return Match(Label.NEUTRAL, None, s)


def match_labels(proposals, ground_truths, criterion: MatchCriterion):
    """Vectorised :func:`match_label`.

    Returns ``(labels, matched, scores, score_matrix)``; ``labels`` holds
    :class:`Label` codes, ``matched`` the ground-truth index or -1.
    """
    proposals = check_boxes(proposals, "proposals")
    ground_truths = check_boxes(ground_truths, "ground_truths")
    n = len(proposals)
    if len(ground_truths) == 0 or n == 0:
        return (np.full(n, Label.NEGATIVE, dtype=np.int8), np.full(n, -1, dtype=np.intp),
                np.zeros(n), np.zeros((n, len(ground_truths))))
    smat = criterion.score_matrix(proposals, ground_truths)
    # argmax returns the first maximum, i.e. the lowest index on ties
    matched = np.argmax(smat, axis=1)
    scores = smat[np.arange(n), matched]
    if criterion.kind is CriterionKind.CENTROID:
        positive = scores > 0
        neutral = np.zeros(n, dtype=bool)
    else:
        positive = scores >= criterion.t_upper
        neutral = ~positive & (scores >= criterion.t_lower)
    labels = np.full(n, Label.NEGATIVE, dtype=np.int8)
    labels[positive] = Label.POSITIVE
    labels[neutral] = Label.NEUTRAL
    matched = np.where(positive, matched, -1)
    return labels, matched, scores, smat
