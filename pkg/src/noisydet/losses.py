"""Joint classification + box-regression loss of a two-stage detector head.

    L = (1/n_cls) sum_i BCE(p_i, p'_i) + lam (1/n_reg) sum_i p_i SmoothL1(t'_i - t_i)

with ``p_i`` the 0/1 label, ``p'_i`` the predicted probability and ``t``
already-encoded 4-vectors of box offsets. Negatives contribute no regression
term. Analytic gradients are provided for checking against finite
differences.
"""

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .geom import Box
from .validation import ValidationError, check_binary_label

PROB_EPS = 1e-12


class KinkWarning(RuntimeWarning):
    """A smooth-L1 residual sits exactly at |x| = 1 where the curvature jumps."""


@dataclass(frozen=True)
class LossConfig:
    lambda_rpn: float = 8.3
    lambda_det: float = 12.5
    # None means "number of samples"
    n_cls: Optional[float] = None
    n_reg: Optional[float] = None

    def __post_init__(self):
        if not (self.lambda_rpn > 0 and self.lambda_det > 0):
            raise ValidationError("loss weights must be positive")
        for name in ("n_cls", "n_reg"):
            v = getattr(self, name)
            if v is not None and not v >= 1:
                raise ValidationError(f"{name} must be at least 1")


class RegressionTarget(NamedTuple):
    offsets: tuple
    targets: tuple


class Sample(NamedTuple):
    true_label: int
    predicted_prob: float
    regression: RegressionTarget


class LossGradient(NamedTuple):
    d_prob: np.ndarray  # (n,)
    d_offsets: np.ndarray  # (n, 4)


def smooth_l1(x):
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    out = np.where(ax < 1.0, 0.5 * x * x, ax - 0.5)
    return out if out.ndim else float(out)


def smooth_l1_grad(x):
    x = np.asarray(x, dtype=float)
    out = np.where(np.abs(x) < 1.0, x, np.sign(x))
    return out if out.ndim else float(out)


def _clamp(p):
    return np.clip(p, PROB_EPS, 1.0 - PROB_EPS)


def binary_cross_entropy(true_label, predicted_prob):
    y = np.asarray(true_label, dtype=float)
    p = _clamp(np.asarray(predicted_prob, dtype=float))
    out = -(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    return out if out.ndim else float(out)


def _unpack(samples: Sequence[Sample]):
    if not samples:
        raise ValidationError("samples must not be empty")
    y = np.array([check_binary_label(s[0]) for s in samples], dtype=float)
    p = np.array([s[1] for s in samples], dtype=float)
    off = np.array([s[2][0] for s in samples], dtype=float).reshape(-1, 4)
    tgt = np.array([s[2][1] for s in samples], dtype=float).reshape(-1, 4)
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(off)) and np.all(np.isfinite(tgt))):
        raise ValidationError("probabilities and offsets must be finite")
    return y, p, off, tgt


def _normalizers(config, n):
    n_cls = float(config.n_cls) if config.n_cls is not None else float(n)
    n_reg = float(config.n_reg) if config.n_reg is not None else float(n)
    return n_cls, n_reg


def joint_loss(samples: Sequence[Sample], config: LossConfig = LossConfig(),
               lam: Optional[float] = None) -> float:
    """``lam`` defaults to ``config.lambda_rpn``."""
    y, p, off, tgt = _unpack(samples)
    lam = config.lambda_rpn if lam is None else lam
    n_cls, n_reg = _normalizers(config, len(y))
    cls = math.fsum(binary_cross_entropy(y, p)) / n_cls
    reg = math.fsum(y * smooth_l1(off - tgt).sum(axis=1)) / n_reg
    return cls + lam * reg


def regression_term(samples: Sequence[Sample], config: LossConfig = LossConfig()) -> float:
    """The unweighted regression sum, ``(1/n_reg) sum_i p_i SmoothL1``."""
    y, _, off, tgt = _unpack(samples)
    _, n_reg = _normalizers(config, len(y))
    return math.fsum(y * smooth_l1(off - tgt).sum(axis=1)) / n_reg


def joint_loss_gradient(samples: Sequence[Sample], config: LossConfig = LossConfig(),
                        lam: Optional[float] = None) -> LossGradient:
    """Gradient of :func:`joint_loss` w.r.t. every probability and offset.

    Probabilities outside the clamp range get zero gradient. A residual at
    exactly |x| = 1 emits :class:`KinkWarning`; the returned value is still
    the (well-defined) first derivative there.
    """
    y, p, off, tgt = _unpack(samples)
    lam = config.lambda_rpn if lam is None else lam
    n_cls, n_reg = _normalizers(config, len(y))
    inside = (p > PROB_EPS) & (p < 1.0 - PROB_EPS)
    pc = _clamp(p)
    d_prob = np.where(inside, (-y / pc + (1.0 - y) / (1.0 - pc)) / n_cls, 0.0)
    r = off - tgt
    if np.any((np.abs(r) == 1.0) & (y[:, None] == 1.0)):
        warnings.warn("smooth-L1 residual at |x| = 1; finite differences are unreliable here",
                      KinkWarning, stacklevel=2)
    d_off = lam / n_reg * y[:, None] * smooth_l1_grad(r)
    return LossGradient(d_prob, d_off)


def encode_box(anchor: Box, target: Box) -> tuple:
    """Center/size log-ratio encoding of ``target`` relative to ``anchor``."""
    (ax, ay), (tx, ty) = anchor.center, target.center
    return ((tx - ax) / anchor.width, (ty - ay) / anchor.height,
            math.log(target.width / anchor.width), math.log(target.height / anchor.height))


def decode_box(anchor: Box, deltas) -> Box:
    dx, dy, dw, dh = deltas
    ax, ay = anchor.center
    return Box.from_center(ax + dx * anchor.width, ay + dy * anchor.height,
                           anchor.width * math.exp(dw), anchor.height * math.exp(dh))
