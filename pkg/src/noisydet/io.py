"""CSV readers and writers for annotation, detection and proposal files.

All files are UTF-8, comma separated, LF terminated, with a header row.
Floats are written with ``repr`` so a write/read cycle is exact.

A dataset row with empty ``lesion_id`` and coordinates declares an image
without findings; it still counts in FROC denominators.
"""

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List

from .froc import Detection
from .geom import Box
from .mining import ScoredProposal
from .noise import Annotation, check_unique_keys
from .validation import ValidationError

DATASET_FIELDS = ["image_id", "lesion_id", "x1", "y1", "x2", "y2",
                  "image_width", "image_height", "case_id"]
DETECTION_FIELDS = ["image_id", "x1", "y1", "x2", "y2", "score"]
PROPOSAL_FIELDS = ["true_label", "predicted_prob", "x1", "y1", "x2", "y2"]


@dataclass(frozen=True)
class ImageInfo:
    width: float
    height: float
    case_id: str = ""


@dataclass
class Dataset:
    annotations: List[Annotation] = field(default_factory=list)
    images: Dict[str, ImageInfo] = field(default_factory=dict)

    def image_list(self):
        return [(i, info.width, info.height) for i, info in self.images.items()]

    def cases(self):
        out = {}
        for image_id, info in self.images.items():
            if not info.case_id:
                raise ValidationError(f"image {image_id!r} has no case_id")
            out.setdefault(info.case_id, []).append(image_id)
        return out


def fmt(x) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise ValidationError(f"refusing to write non-finite value {x!r}")
    return repr(x)


def _rows(path, required):
    """Yield ``(line_number, row)``; an empty file yields nothing."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames:
            return
        missing = [f for f in required if f not in reader.fieldnames]
        if missing:
            raise ValidationError(f"{path}: line 1: header lacks columns {missing}")
        for row in reader:
            yield reader.line_num, row


def _float(row, name, where):
    try:
        v = float(row[name])
    except (TypeError, ValueError):
        raise ValidationError(f"{where}: {name} is not a number: {row[name]!r}") from None
    if not math.isfinite(v):
        raise ValidationError(f"{where}: {name} must be finite")
    return v


def _wrap(where, fn):
    try:
        return fn()
    except ValidationError as exc:
        msg = str(exc)
        raise ValidationError(msg if msg.startswith(where) else f"{where}: {msg}") from None


def _box(row, where):
    return _wrap(where, lambda: Box(*(_float(row, k, where) for k in ("x1", "y1", "x2", "y2"))))


def read_dataset(path) -> Dataset:
    ds = Dataset()
    for line, row in _rows(path, DATASET_FIELDS):
        where = f"{path}: line {line}"
        image_id = row["image_id"]
        if not image_id:
            raise ValidationError(f"{where}: empty image_id")
        info = ImageInfo(_float(row, "image_width", where), _float(row, "image_height", where),
                         row.get("case_id") or "")
        prev = ds.images.setdefault(image_id, info)
        if prev != info:
            raise ValidationError(f"{where}: image {image_id!r} redeclared with different "
                                  "dimensions or case")
        if not row["lesion_id"] and not any(row[k] for k in ("x1", "y1", "x2", "y2")):
            continue
        box = _box(row, where)
        ds.annotations.append(_wrap(where, lambda: Annotation(
            image_id, row["lesion_id"], box, info.width, info.height, info.case_id)))
    check_unique_keys(ds.annotations)
    return ds


def write_dataset(path, dataset: Dataset):
    with_lesions = {a.image_id for a in dataset.annotations}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DATASET_FIELDS)
        for a in dataset.annotations:
            b = a.box
            w.writerow([a.image_id, a.lesion_id, fmt(b.x1), fmt(b.y1), fmt(b.x2), fmt(b.y2),
                        fmt(a.image_width), fmt(a.image_height), a.case_id])
        for image_id, info in dataset.images.items():
            if image_id not in with_lesions:
                w.writerow([image_id, "", "", "", "", "", fmt(info.width), fmt(info.height),
                            info.case_id])


def dataset_from_annotations(annotations) -> Dataset:
    images = {}
    for a in annotations:
        images.setdefault(a.image_id, ImageInfo(a.image_width, a.image_height, a.case_id))
    return Dataset(list(annotations), images)


def read_detections(path) -> List[Detection]:
    out = []
    for line, row in _rows(path, DETECTION_FIELDS):
        where = f"{path}: line {line}"
        box = _box(row, where)
        score = _float(row, "score", where)
        out.append(Detection(row["image_id"], box, score))
    return out


def write_detections(path, detections):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DETECTION_FIELDS)
        for d in detections:
            b = d.box
            w.writerow([d.image_id, fmt(b.x1), fmt(b.y1), fmt(b.x2), fmt(b.y2), fmt(d.score)])


def read_proposals(path) -> List[ScoredProposal]:
    out = []
    for line, row in _rows(path, PROPOSAL_FIELDS):
        where = f"{path}: line {line}"
        label = _float(row, "true_label", where)
        prob = _float(row, "predicted_prob", where)
        box = _box(row, where)
        out.append(_wrap(where, lambda: ScoredProposal(box, label, prob)))
    return out


def write_table(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, float) else v for v in row])


def read_table(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def ensure_parent(path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
