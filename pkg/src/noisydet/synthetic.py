"""Synthetic lesion corpora and detector outputs for experiments and tests."""

import numpy as np

from .froc import Detection
from .geom import Box
from .noise import Annotation


def make_corpus(n_images=200, seed=0, image_size=(600, 600), diameter_range=(30.0, 150.0),
                images_per_case=2):
    """One lesion per image with its longest side log-uniform in ``diameter_range``.

    The other side is 70-100% of the longest, oriented at random. Consecutive
    images are grouped into cases of ``images_per_case``.
    """
    rng = np.random.default_rng(seed)
    width, height = map(float, image_size)
    out = []
    for i in range(n_images):
        d = float(np.exp(rng.uniform(*np.log(diameter_range))))
        other = d * rng.uniform(0.7, 1.0)
        w, h = (d, other) if rng.random() < 0.5 else (other, d)
        x1 = rng.uniform(0.0, width - w)
        y1 = rng.uniform(0.0, height - h)
        out.append(Annotation(
            image_id=f"img{i:04d}", lesion_id=f"les{i:04d}",
            box=Box(x1, y1, x1 + w, y1 + h), image_width=width, image_height=height,
            case_id=f"case{i // images_per_case:04d}"))
    return out


def make_detections(annotations, seed=0, hit_rate=0.8, fp_rate=1.5):
    """Fake detector output: a jittered hit on most lesions plus Poisson background FPs.

    Hits score higher than false positives on average, so the FROC curve is
    informative but imperfect.
    """
    rng = np.random.default_rng(seed)
    images = {}
    for a in annotations:
        images.setdefault(a.image_id, (a.image_width, a.image_height))
    dets = []
    for a in annotations:
        if rng.random() < hit_rate:
            cx, cy = a.box.center
            w, h = a.box.width, a.box.height
            jx, jy = rng.normal(0.0, 0.15 * w), rng.normal(0.0, 0.15 * h)
            scale = rng.uniform(0.8, 1.5)
            box = Box.from_center(cx + jx, cy + jy, w * scale, h * scale)
            dets.append(Detection(a.image_id, box, float(rng.beta(5, 2))))
    for image_id, (width, height) in images.items():
        for _ in range(rng.poisson(fp_rate)):
            s = rng.uniform(30.0, 150.0)
            x1, y1 = rng.uniform(0.0, width - s), rng.uniform(0.0, height - s)
            dets.append(Detection(image_id, Box(x1, y1, x1 + s, y1 + s), float(rng.beta(2, 5))))
    return dets
