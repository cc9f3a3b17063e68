"""Bounding-box annotation noise, anchor matching criteria and FROC evaluation."""

__version__ = "0.1.0"

from .anchors import (AnchorConfig, LabeledAnchor, generate_anchors, label_anchors, nms,
                      positive_census)
from .froc import (BootstrapSummary, Detection, FrocCurve, afroc, bootstrap_afroc,
                   classify_detections, froc_curve)
from .geom import (Box, CriterionKind, Label, MatchCriterion, centroid_distance,
                   centroid_inside, exp_iou, iou, match_label)
from .losses import LossConfig, RegressionTarget, joint_loss, joint_loss_gradient
from .mining import MiningPool, ScoredProposal, build_pool, mining_score, sample_training_rois
from .noise import Annotation, NoiseConfig, NoiseStream, inject_noise, inject_noise_dataset
from .validation import ValidationError
