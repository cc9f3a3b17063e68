"""scikit-learn compatible wrappers.

These expose the noise model, anchor labeling and hard sample mining with
the usual ``fit``/``transform``/``predict`` and ``get_params``/``set_params``
surface so they can sit in pipelines, be cloned and be grid-searched.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .anchors import AnchorConfig, anchor_grid, cross_boundary, label_anchor_array
from .geom import MatchCriterion
from .mining import ScoredProposal, build_pool, sample_training_rois
from .noise import NoiseConfig, NoiseStream, clamp_factors
from .validation import ValidationError, check_boxes


def _check_box_table(X):
    """``X`` is (n, 6): x1, y1, x2, y2, image_width, image_height."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != 6:
        raise ValidationError(f"expected shape (n, 6), got {X.shape}")
    boxes = check_boxes(X[:, :4], "X[:, :4]")
    dims = X[:, 4:]
    if np.any(dims <= 0):
        raise ValidationError("image dimensions must be positive")
    if (np.any(boxes[:, :2] < 0) or np.any(boxes[:, 2] > dims[:, 0])
            or np.any(boxes[:, 3] > dims[:, 1])):
        raise ValidationError("boxes must lie inside their images")
    return boxes, dims


class BoxNoiseInjector(TransformerMixin, BaseEstimator):
    """Enlarge boxes by clamped-normal multiplicative noise.

    ``transform`` maps rows ``(x1, y1, x2, y2, image_width, image_height)``
    to noisy ``(x1, y1, x2, y2)``. Row ``i`` uses draws ``2i`` and ``2i + 1``
    of the stream seeded by ``random_state``, so results match
    :func:`noisydet.noise.inject_noise_dataset` on the same rows.
    """

    def __init__(self, mu=0.0, clip_high=6.0, max_image_fraction=0.8, random_state=0):
        self.mu = mu
        self.clip_high = clip_high
        self.max_image_fraction = max_image_fraction
        self.random_state = random_state

    def fit(self, X, y=None):
        _check_box_table(X)
        self.config_ = NoiseConfig(mu=self.mu, clip_high=self.clip_high,
                                   max_image_fraction=self.max_image_fraction,
                                   seed=self.random_state)
        self.n_features_in_ = 6
        return self

    def transform(self, X):
        check_is_fitted(self, "config_")
        boxes, dims = _check_box_table(X)
        cfg = self.config_
        z = cfg.mu + cfg.sigma * NoiseStream(cfg.seed).normals(2 * len(boxes))
        n = clamp_factors(z, cfg).reshape(-1, 2)
        w = np.minimum((1 + n[:, 0]) * (boxes[:, 2] - boxes[:, 0]),
                       cfg.max_image_fraction * dims[:, 0])
        h = np.minimum((1 + n[:, 1]) * (boxes[:, 3] - boxes[:, 1]),
                       cfg.max_image_fraction * dims[:, 1])
        cx = (boxes[:, 0] + boxes[:, 2]) / 2
        cy = (boxes[:, 1] + boxes[:, 3]) / 2
        x1 = np.clip(cx - w / 2, 0, dims[:, 0] - w)
        y1 = np.clip(cy - h / 2, 0, dims[:, 1] - h)
        return np.stack([x1, y1, x1 + w, y1 + h], axis=1)


class AnchorLabeler(BaseEstimator):
    """Label an image's anchor grid against its ground-truth boxes.

    ``fit(X)`` takes the (m, 4) ground-truth boxes of one image;
    ``predict()`` (or ``predict(anchors)``) returns labels 1 / 0 / -1 for
    positive / negative / neutral.
    """

    def __init__(self, criterion="iou", t_upper=0.5, t_lower=0.3, beta=0.1,
                 image_width=600, image_height=600, scales=(128, 256, 512),
                 aspect_ratios=((1, 1), (0.7, 1.4), (1.4, 0.7)), stride=16,
                 ignore_cross_boundary=True):
        self.criterion = criterion
        self.t_upper = t_upper
        self.t_lower = t_lower
        self.beta = beta
        self.image_width = image_width
        self.image_height = image_height
        self.scales = scales
        self.aspect_ratios = aspect_ratios
        self.stride = stride
        self.ignore_cross_boundary = ignore_cross_boundary

    def fit(self, X, y=None):
        self.ground_truths_ = check_boxes(X, "ground truth boxes")
        self.criterion_ = MatchCriterion(self.criterion, self.t_upper, self.t_lower, self.beta)
        self.anchor_config_ = AnchorConfig(self.scales, self.aspect_ratios, self.stride,
                                           self.ignore_cross_boundary)
        self.anchors_ = anchor_grid(self.image_width, self.image_height, self.anchor_config_)
        return self

    def _labels(self, anchors):
        check_is_fitted(self, "ground_truths_")
        anchors = self.anchors_ if anchors is None else check_boxes(anchors, "anchors")
        usable = None
        if self.ignore_cross_boundary and len(anchors):
            usable = ~cross_boundary(anchors, self.image_width, self.image_height)
        return label_anchor_array(anchors, self.ground_truths_, self.criterion_, usable)

    def predict(self, anchors=None):
        return self._labels(anchors).labels.astype(int)

    def score_samples(self, anchors=None):
        """Best matching score of each anchor."""
        return self._labels(anchors).scores

    def n_positive(self):
        return int(np.count_nonzero(self.predict() == 1))


class HardSampleMiner(BaseEstimator):
    """Mean-split hard sample mining.

    ``fit(X, y)`` takes predicted probabilities ``X`` (n,) or (n, 1) and
    0/1 labels ``y``; ``sample()`` returns indices of the drawn ROIs.
    """

    def __init__(self, per_category_cap=25, n_rois=4, random_state=0):
        self.per_category_cap = per_category_cap
        self.n_rois = n_rois
        self.random_state = random_state

    def fit(self, X, y):
        probs = np.asarray(X, dtype=float).reshape(-1)
        labels = np.asarray(y).reshape(-1)
        if len(probs) != len(labels):
            raise ValidationError("X and y differ in length")
        self.proposals_ = [ScoredProposal(None, int(lab), float(p))
                           for p, lab in zip(probs, labels)]
        self.pool_ = build_pool(self.proposals_, self.per_category_cap)
        self.mean_pos_score_ = self.pool_.mean_pos_score
        self.mean_neg_score_ = self.pool_.mean_neg_score
        return self

    def sample(self):
        check_is_fitted(self, "pool_")
        chosen = sample_training_rois(self.pool_, self.n_rois, self.random_state)
        position = {id(p): i for i, p in enumerate(self.proposals_)}
        return np.array([position[id(p)] for p in chosen], dtype=int)

    def mining_scores(self):
        check_is_fitted(self, "proposals_")
        return np.array([p.mining_score for p in self.proposals_])
