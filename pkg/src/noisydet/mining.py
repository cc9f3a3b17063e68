"""Hard sample mining over labeled region proposals.

Proposals are scored by the squared gap between predicted probability and
true label. Each class is split at its own mean score into easy (below the
mean) and hard (at or above), each category is capped, and the final ROIs
are drawn uniformly from the pooled categories.
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .geom import Box
from .validation import ValidationError, check_binary_label, check_probability


def mining_score(true_label, predicted_prob) -> float:
    label = check_binary_label(true_label, "true_label")
    p = check_probability(predicted_prob, "predicted_prob")
    return (p - label) ** 2


@dataclass(frozen=True)
class ScoredProposal:
    box: Optional[Box]
    true_label: int
    predicted_prob: float

    def __post_init__(self):
        object.__setattr__(self, "true_label", check_binary_label(self.true_label, "true_label"))
        object.__setattr__(self, "predicted_prob",
                           check_probability(self.predicted_prob, "predicted_prob"))

    @property
    def mining_score(self):
        return (self.predicted_prob - self.true_label) ** 2


@dataclass
class MiningPool:
    easy_pos: List[ScoredProposal] = field(default_factory=list)
    hard_pos: List[ScoredProposal] = field(default_factory=list)
    easy_neg: List[ScoredProposal] = field(default_factory=list)
    hard_neg: List[ScoredProposal] = field(default_factory=list)
    # nan when the class is absent
    mean_pos_score: float = math.nan
    mean_neg_score: float = math.nan

    def members(self):
        return self.easy_pos + self.hard_pos + self.easy_neg + self.hard_neg

    def sizes(self):
        return {"easy_pos": len(self.easy_pos), "hard_pos": len(self.hard_pos),
                "easy_neg": len(self.easy_neg), "hard_neg": len(self.hard_neg)}


def _split(proposals, cap):
    if not proposals:
        return [], [], math.nan
    scores = [p.mining_score for p in proposals]
    # rounding must not push the mean outside the observed range
    mean = min(max(math.fsum(scores) / len(scores), min(scores)), max(scores))
    # sorted() is stable: equal scores keep input order
    ranked = sorted(proposals, key=lambda p: -p.mining_score)
    easy = [p for p in ranked if p.mining_score < mean][:cap]
    hard = [p for p in ranked if p.mining_score >= mean][:cap]
    return easy, hard, mean


def build_pool(proposals: Sequence[ScoredProposal], per_category_cap: int = 25) -> MiningPool:
    """Partition proposals into easy/hard positives and negatives.

    Each category keeps at most ``per_category_cap`` members, highest
    mining score first.
    """
    if per_category_cap < 0:
        raise ValidationError("per_category_cap must be nonnegative")
    easy_pos, hard_pos, s_p = _split([p for p in proposals if p.true_label == 1], per_category_cap)
    easy_neg, hard_neg, s_n = _split([p for p in proposals if p.true_label == 0], per_category_cap)
    return MiningPool(easy_pos, hard_pos, easy_neg, hard_neg, s_p, s_n)


def sample_training_rois(pool: MiningPool, n: int = 4, seed: int = 0) -> list:
    """Draw ``n`` members uniformly without replacement from the whole pool."""
    if n < 1:
        raise ValidationError("n must be at least 1")
    members = pool.members()
    if len(members) <= n:
        return list(members)
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(members), size=n, replace=False)
    return [members[i] for i in idx]
