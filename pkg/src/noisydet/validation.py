"""Input validation helpers shared by the library, the estimators and the CLI."""

import math

import numpy as np


class ValidationError(ValueError):
    """Raised when user-supplied data violates a documented invariant."""


def check_finite(value, name="value"):
    value = float(value)
    if not math.isfinite(value):
        raise ValidationError(f"{name} must be finite, got {value!r}")
    return value


def check_probability(value, name="probability"):
    value = check_finite(value, name)
    if not 0.0 <= value <= 1.0:
        raise ValidationError(f"{name} must lie in [0, 1], got {value!r}")
    return value


def check_binary_label(value, name="label"):
    if value not in (0, 1):
        raise ValidationError(f"{name} must be 0 or 1, got {value!r}")
    return int(value)


def check_boxes(boxes, name="boxes", allow_empty=True):
    """Coerce ``boxes`` to a float array of shape (n, 4) with x2 > x1 and y2 > y1.

    Accepts anything ``np.asarray`` understands, including a list of
    :class:`noisydet.geom.Box`.
    """
    if len(boxes) and hasattr(boxes[0], "as_tuple"):
        boxes = [b.as_tuple() for b in boxes]
    arr = np.asarray(boxes, dtype=float)
    if arr.size == 0:
        if not allow_empty:
            raise ValidationError(f"{name} must not be empty")
        return arr.reshape(0, 4)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise ValidationError(f"{name} must have shape (n, 4), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite coordinates")
    bad = (arr[:, 2] <= arr[:, 0]) | (arr[:, 3] <= arr[:, 1])
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise ValidationError(f"{name}[{i}] has non-positive width or height: {arr[i].tolist()}")
    return arr
