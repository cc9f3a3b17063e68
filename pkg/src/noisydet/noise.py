"""Multiplicative bounding-box enlargement noise.

Each clean box of size ``(w, h)`` is resized to ``((1 + n_w) w, (1 + n_h) h)``
around its center, with ``n_w, n_h ~ N(mu, 1)`` clamped to
``[clip_low, clip_high)``. The enlarged box is then capped at a fraction of
the image size and shifted (only if needed) to fit inside the image.

Random numbers come from a Philox-4x64 counter-based generator keyed by the
seed. Draw ``k`` is the ``k % 4``-th word of Philox block ``k // 4``, mapped
to a uniform in (0, 1) from its top 53 bits and then to a normal deviate by
the inverse normal CDF. One draw is exactly one word, so any draw can be
recomputed from ``(seed, k)`` alone.
"""

from collections import Counter
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.special import ndtri

from .geom import Box
from .validation import ValidationError, check_finite

_TWO_POW_M53 = 2.0 ** -53


@dataclass(frozen=True)
class NoiseConfig:
    mu: float = 0.0
    sigma: float = 1.0
    clip_low: float = 0.0
    clip_high: float = 6.0
    max_image_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        for name in ("mu", "sigma", "clip_low", "clip_high", "max_image_fraction"):
            check_finite(getattr(self, name), name)
        if not self.sigma > 0:
            raise ValidationError(f"sigma must be positive, got {self.sigma}")
        if not self.clip_low < self.clip_high:
            raise ValidationError("clip_low must be smaller than clip_high")
        if not 0.0 < self.max_image_fraction <= 1.0:
            raise ValidationError("max_image_fraction must lie in (0, 1]")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValidationError("seed must be a 64-bit unsigned integer")

    @property
    def upper_value(self):
        """Largest factor a draw can take: the float just below ``clip_high``."""
        return float(np.nextafter(self.clip_high, -np.inf))


@dataclass(frozen=True)
class Annotation:
    image_id: str
    lesion_id: str
    box: Box
    image_width: float
    image_height: float
    case_id: str = ""

    def __post_init__(self):
        if not (self.image_width > 0 and self.image_height > 0):
            raise ValidationError(f"image {self.image_id!r} must have positive dimensions")
        b = self.box
        if b.x1 < 0 or b.y1 < 0 or b.x2 > self.image_width or b.y2 > self.image_height:
            raise ValidationError(
                f"lesion {self.lesion_id!r} box {b.as_tuple()} exceeds image "
                f"{self.image_id!r} of size {self.image_width}x{self.image_height}")

    @property
    def key(self):
        return (self.image_id, self.lesion_id)


class NoiseStream:
    """Seekable stream of standard-normal deviates.

    ``counter`` is the index of the next draw; copies made with
    :meth:`at` share the seed and start elsewhere in the sequence.
    """

    def __init__(self, seed: int, counter: int = 0):
        self.seed = int(seed)
        self.counter = int(counter)

    def at(self, counter):
        return NoiseStream(self.seed, counter)

    def normals(self, n: int) -> np.ndarray:
        block, offset = divmod(self.counter, 4)
        gen = np.random.Philox(key=self.seed)
        if block:
            gen.advance(block)
        raw = gen.random_raw(offset + n)[offset:]
        self.counter += n
        u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_POW_M53
        return ndtri(u)


def clamp_factors(z, config: NoiseConfig):
    """Clamp raw draws to ``[clip_low, clip_high)``; no redrawing."""
    return np.clip(np.asarray(z, dtype=float), config.clip_low, config.upper_value)


def sample_noise_factors(config: NoiseConfig, stream: NoiseStream, n: int) -> np.ndarray:
    z = config.mu + config.sigma * stream.normals(n)
    return clamp_factors(z, config)


def sample_noise_factor(config: NoiseConfig, stream: NoiseStream) -> float:
    return float(sample_noise_factors(config, stream, 1)[0])


def _fit_axis(center, size, limit):
    lo, hi = center - size / 2.0, center + size / 2.0
    if lo < 0:
        lo, hi = 0.0, size
    elif hi > limit:
        lo, hi = limit - size, limit
    return lo, hi


def resize_box(box: Box, n_w: float, n_h: float, image_width: float, image_height: float,
               max_image_fraction: float = 0.8) -> Box:
    """Apply fixed noise factors to ``box``.

    The size is capped per axis at ``max_image_fraction`` of the matching image
    dimension before the box is translated, as little as possible, to fit.
    """
    cx, cy = box.center
    w = min((1.0 + n_w) * box.width, max_image_fraction * image_width)
    h = min((1.0 + n_h) * box.height, max_image_fraction * image_height)
    x1, x2 = _fit_axis(cx, w, image_width)
    y1, y2 = _fit_axis(cy, h, image_height)
    return Box(x1, y1, x2, y2)


def inject_noise(annotation: Annotation, config: NoiseConfig, stream: NoiseStream) -> Annotation:
    n_w, n_h = sample_noise_factors(config, stream, 2)
    box = resize_box(annotation.box, n_w, n_h, annotation.image_width,
                     annotation.image_height, config.max_image_fraction)
    return replace(annotation, box=box)


def check_unique_keys(annotations: Sequence[Annotation]):
    dupes = [k for k, c in Counter(a.key for a in annotations).items() if c > 1]
    if dupes:
        raise ValidationError(f"duplicate (image_id, lesion_id) pairs: {sorted(dupes)[:5]}")


def inject_noise_dataset(annotations: Sequence[Annotation], config: NoiseConfig) -> list:
    """Noise every annotation in order; annotation ``i`` uses draws ``2i`` and ``2i + 1``."""
    check_unique_keys(annotations)
    stream = NoiseStream(config.seed)
    factors = sample_noise_factors(config, stream, 2 * len(annotations)).reshape(-1, 2)
    return [
        replace(a, box=resize_box(a.box, nw, nh, a.image_width, a.image_height,
                                  config.max_image_fraction))
        for a, (nw, nh) in zip(annotations, factors)
    ]


def box_diameter(box: Box) -> float:
    """Longest side of the box, used for the diameter histograms."""
    return max(box.width, box.height)
