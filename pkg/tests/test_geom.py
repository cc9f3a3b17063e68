import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noisydet.geom import (Box, CriterionKind, Label, MatchCriterion, centroid_distance,
                           centroid_distance_matrix, centroid_inside, centroid_inside_matrix,
                           exp_iou, exp_iou_matrix, iou, iou_matrix, match_label, match_labels)
from noisydet.validation import ValidationError

from conftest import random_boxes, random_int_box
from oracles import exp_iou_high_precision, iou_by_cell_count

coord = st.floats(-500, 500, allow_nan=False)
size = st.floats(0.5, 300, allow_nan=False)


@st.composite
def boxes(draw):
    x, y, w, h = draw(coord), draw(coord), draw(size), draw(size)
    return Box(x, y, x + w, y + h)


class TestBox:
    def test_rejects_degenerate(self):
        with pytest.raises(ValidationError):
            Box(0, 0, 0, 10)
        with pytest.raises(ValidationError):
            Box(0, 5, 10, 4)
        with pytest.raises(ValidationError):
            Box(0, 0, math.inf, 1)

    def test_properties(self):
        b = Box(1, 2, 5, 10)
        assert (b.width, b.height, b.area, b.center) == (4, 8, 32, (3, 6))
        assert Box.from_center(3, 6, 4, 8) == b
        assert type(Box(np.float64(0), 0, 1, 1).x1) is float


class TestIoU:
    def test_identical(self):
        assert iou(Box(0, 0, 10, 10), Box(0, 0, 10, 10)) == 1.0

    def test_disjoint(self):
        assert iou(Box(0, 0, 10, 10), Box(20, 20, 30, 30)) == 0.0

    def test_touching_edges_is_zero(self):
        assert iou(Box(0, 0, 10, 10), Box(10, 0, 20, 10)) == 0.0

    def test_worked_example(self):
        # oracle: 25 shared cells out of 175
        a, b = Box(0, 0, 10, 10), Box(5, 5, 15, 15)
        assert iou_by_cell_count(a.as_tuple(), b.as_tuple()) == pytest.approx(25 / 175, abs=1e-15)
        assert iou(a, b) == pytest.approx(0.14285714285714285, abs=1e-15)

    def test_cell_count_oracle(self, rng):
        for _ in range(500):
            a, b = random_int_box(rng), random_int_box(rng)
            assert abs(iou(a, b) - iou_by_cell_count(a.as_tuple(), b.as_tuple())) <= 1e-12

    def test_matrix_agrees_with_scalar(self, rng):
        a, b = random_boxes(rng, 30), random_boxes(rng, 20)
        m = iou_matrix(a, b)
        for i in range(30):
            for j in range(20):
                assert m[i, j] == iou(Box(*a[i]), Box(*b[j]))

    @given(boxes(), boxes())
    def test_symmetric_and_bounded(self, a, b):
        v = iou(a, b)
        assert v == iou(b, a)
        assert 0.0 <= v <= 1.0

    @given(boxes(), st.floats(0.1, 10))
    def test_scale_invariant(self, a, c):
        b = Box(a.x1 + a.width / 3, a.y1, a.x2 + a.width / 3, a.y2)
        assert iou(a.scaled(c), b.scaled(c)) == pytest.approx(iou(a, b), rel=1e-9, abs=1e-12)


class TestCentroid:
    def test_distance_examples(self):
        assert centroid_distance(Box(0, 0, 10, 10), Box(0, 0, 10, 10)) == 0.0
        assert centroid_distance(Box(0, 0, 10, 10), Box(5, 5, 15, 15)) == pytest.approx(
            math.sqrt(50), abs=1e-12)
        assert centroid_distance(Box(0, 0, 2, 2), Box(3, 0, 5, 2)) == 3.0

    @given(boxes(), boxes())
    def test_distance_symmetric(self, a, b):
        assert centroid_distance(a, b) == centroid_distance(b, a) >= 0

    def test_inside_examples(self):
        ref = Box(0, 0, 10, 10)
        assert centroid_inside(Box(2, 2, 6, 6), ref)
        assert not centroid_inside(Box(20, 20, 24, 24), ref)
        assert centroid_inside(Box(-5, -5, 5, 5), ref)  # center on the corner

    def test_inside_not_symmetric(self):
        big, small = Box(0, 0, 100, 100), Box(0, 0, 10, 10)
        assert centroid_inside(small, big)
        assert not centroid_inside(big, small)

    def test_matrices(self, rng):
        a, b = random_boxes(rng, 25), random_boxes(rng, 15)
        inside = centroid_inside_matrix(a, b)
        dist = centroid_distance_matrix(a, b)
        for i in range(25):
            for j in range(15):
                assert inside[i, j] == centroid_inside(Box(*a[i]), Box(*b[j]))
                assert dist[i, j] == pytest.approx(centroid_distance(Box(*a[i]), Box(*b[j])),
                                                   abs=1e-12)


class TestExpIoU:
    def test_identical(self):
        assert exp_iou(Box(0, 0, 10, 10), Box(0, 0, 10, 10), 0.1) == 1.0

    def test_worked_example(self):
        v = exp_iou(Box(0, 0, 10, 10), Box(5, 5, 15, 15), 0.1)
        ref = exp_iou_high_precision((0, 0, 10, 10), (5, 5, 15, 15), 0.1)
        assert v == pytest.approx(ref, abs=1e-12)
        assert v == pytest.approx(0.31796, abs=1e-5)

    def test_far_apart_stays_positive(self):
        v = exp_iou(Box(0, 0, 1, 1), Box(1e4, 1e4, 1e4 + 1, 1e4 + 1), 0.1)
        assert 0.0 <= v < 1e-6
        assert exp_iou(Box(0, 0, 1, 1), Box(200, 0, 201, 1), 0.1) > 0.0

    def test_beta_must_be_positive(self):
        with pytest.raises(ValidationError):
            exp_iou(Box(0, 0, 1, 1), Box(0, 0, 1, 1), 0.0)

    def test_decreasing_in_distance_at_fixed_iou(self):
        a = Box(0, 0, 10, 10)
        # disjoint translates all have IoU 0
        values = [exp_iou(a, Box(20 + d, 0, 30 + d, 10), 0.1) for d in range(0, 50, 5)]
        assert all(x > y for x, y in zip(values, values[1:]))

    @given(boxes(), boxes())
    def test_symmetric_and_bounded(self, a, b):
        v = exp_iou(a, b, 0.1)
        assert v == exp_iou(b, a, 0.1)
        assert 0.0 <= v <= 1.0

    def test_matrix_matches_scalar(self, rng):
        a, b = random_boxes(rng, 10), random_boxes(rng, 10)
        m = exp_iou_matrix(a, b, 0.1)
        for i in range(10):
            for j in range(10):
                assert m[i, j] == pytest.approx(exp_iou(Box(*a[i]), Box(*b[j]), 0.1), abs=1e-15)


class TestMatchCriterion:
    def test_threshold_validation(self):
        with pytest.raises(ValidationError):
            MatchCriterion("iou", t_upper=0.3, t_lower=0.5)
        with pytest.raises(ValidationError):
            MatchCriterion("exp_iou", beta=-1)
        with pytest.raises(ValueError):
            MatchCriterion("giou")

    def test_kind_from_string(self):
        assert MatchCriterion("exp_iou").kind is CriterionKind.EXP_IOU


class TestMatchLabel:
    crit = MatchCriterion("iou", 0.5, 0.3)

    def test_identical_is_positive(self):
        m = match_label(Box(0, 0, 10, 10), [Box(50, 50, 60, 60), Box(0, 0, 10, 10)], self.crit)
        assert m == (Label.POSITIVE, 1, 1.0)

    def test_disjoint_is_negative(self):
        assert match_label(Box(0, 0, 10, 10), [Box(50, 50, 60, 60)], self.crit).label is \
            Label.NEGATIVE

    def test_neutral_band(self):
        m = match_label(Box(0, 0, 10, 10), [Box(0, 0, 10, 25)], self.crit)
        assert m.label is Label.NEUTRAL
        assert m.score == pytest.approx(0.4)

    def test_empty_ground_truth(self):
        for kind in CriterionKind:
            assert match_label(Box(0, 0, 1, 1), [], MatchCriterion(kind)).label is Label.NEGATIVE

    def test_tie_goes_to_lowest_index(self):
        gt = [Box(0, 0, 10, 20), Box(0, -10, 10, 10)]
        m = match_label(Box(0, 0, 10, 10), gt, self.crit)
        assert m.index == 0 and m.label is Label.POSITIVE

    def test_centroid_first_match(self):
        crit = MatchCriterion("centroid")
        gt = [Box(50, 50, 60, 60), Box(0, 0, 100, 100), Box(0, 0, 20, 20)]
        assert match_label(Box(5, 5, 15, 15), gt, crit) == (Label.POSITIVE, 1, 1.0)
        assert match_label(Box(200, 200, 210, 210), gt, crit).label is Label.NEGATIVE

    def test_centroid_never_neutral(self, rng):
        crit = MatchCriterion("centroid")
        props, gts = random_boxes(rng, 200), random_boxes(rng, 3)
        labels = match_labels(props, gts, crit)[0]
        assert set(np.unique(labels)) <= {Label.POSITIVE, Label.NEGATIVE}

    @pytest.mark.parametrize("kind", list(CriterionKind))
    def test_vectorised_matches_scalar(self, rng, kind):
        crit = MatchCriterion(kind, 0.4, 0.1, 0.05)
        props, gts = random_boxes(rng, 300), random_boxes(rng, 4)
        labels, matched, scores, _ = match_labels(props, gts, crit)
        gt_boxes = [Box(*g) for g in gts]
        for i, p in enumerate(props):
            m = match_label(Box(*p), gt_boxes, crit)
            assert labels[i] == m.label
            assert (matched[i] if matched[i] >= 0 else None) == m.index
            assert scores[i] == pytest.approx(m.score, abs=1e-15)

    @settings(max_examples=200)
    @given(st.lists(boxes(), min_size=1, max_size=4), boxes(), st.floats(0.05, 20),
           st.sampled_from(["iou", "centroid"]))
    def test_scale_covariance(self, gts, proposal, c, kind):
        crit = MatchCriterion(kind, 0.5, 0.3)
        a = match_label(proposal, gts, crit)
        b = match_label(proposal.scaled(c), [g.scaled(c) for g in gts], crit)
        # rounding can only matter for scores sitting on a threshold
        if kind == "iou" and min(abs(a.score - 0.5), abs(a.score - 0.3)) < 1e-9:
            return
        assert a.label == b.label
