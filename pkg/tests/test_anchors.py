import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noisydet.anchors import (AnchorConfig, anchor_grid, cross_boundary, generate_anchors,
                              label_anchor_array, label_anchors, nms, nms_indices,
                              positive_census)
from noisydet.froc import Detection
from noisydet.geom import Box, Label, MatchCriterion, centroid_inside, iou, iou_matrix
from noisydet.noise import Annotation
from noisydet.validation import ValidationError

from conftest import random_boxes
from oracles import census_reference, nms_reference

CRITERIA = [MatchCriterion("iou"), MatchCriterion("centroid"), MatchCriterion("exp_iou")]


class TestGrid:
    def test_single_location(self):
        anchors = generate_anchors(16, 16)
        assert len(anchors) == 9
        assert all(a.center == (8.0, 8.0) for a in anchors)

    def test_counts(self):
        assert len(generate_anchors(160, 160)) == 900
        assert len(anchor_grid(600, 600)) == 37 * 37 * 9
        assert len(generate_anchors(15, 600)) == 0

    def test_ratio_shape(self):
        # scale 128, (h, w) = (0.7, 1.4) -> 179.2 wide, 89.6 high
        a = generate_anchors(16, 16)[1]
        assert a.width == pytest.approx(179.2) and a.height == pytest.approx(89.6)

    def test_order_location_then_scale_then_ratio(self):
        g = anchor_grid(48, 32)
        centers = (g[:, :2] + g[:, 2:]) / 2
        assert np.array_equal(centers[::9], [[8, 8], [24, 8], [40, 8], [8, 24], [24, 24], [40, 24]])
        widths = g[:9, 2] - g[:9, 0]
        assert widths == pytest.approx([128, 179.2, 89.6, 256, 358.4, 179.2, 512, 716.8, 358.4])

    def test_grid_is_read_only(self):
        with pytest.raises(ValueError):
            anchor_grid(64, 64)[0, 0] = 1.0

    def test_config_validation(self):
        with pytest.raises(ValidationError):
            AnchorConfig(scales=())
        with pytest.raises(ValidationError):
            AnchorConfig(aspect_ratios=((0, 1),))
        with pytest.raises(ValidationError):
            AnchorConfig(stride=0)
        assert AnchorConfig().anchors_per_location == 9

    def test_cross_boundary_mask(self):
        m = cross_boundary([[0, 0, 10, 10], [-1, 0, 5, 5], [90, 90, 101, 100]], 100, 100)
        assert m.tolist() == [False, True, True]


def gt_annotation(box, lesion="l0", image="img", size=600.0):
    return Annotation(image, lesion, box, size, size)


class TestLabeling:
    def test_identical_anchor_positive(self):
        anchors = generate_anchors(600, 600)
        target = anchors[37 * 9 * 18 + 9 * 18]  # central 128 px anchor
        out = label_anchors(anchors, [gt_annotation(target)], MatchCriterion("iou"))
        hit = [a for a in out if a.box == target][0]
        assert hit.label is Label.POSITIVE and hit.score == 1.0 and hit.matched_lesion == "l0"

    def test_fallback_promotes_single_best(self):
        anchors = generate_anchors(600, 600)
        gt = Box(300, 300, 320, 320)  # far too small for any anchor to reach 0.5
        out = label_anchors(anchors, [gt_annotation(gt)], MatchCriterion("iou"))
        pos = [i for i, a in enumerate(out) if a.label is Label.POSITIVE]
        assert len(pos) == 1
        usable = [i for i, a in enumerate(anchors)
                  if a.x1 >= 0 and a.y1 >= 0 and a.x2 <= 600 and a.y2 <= 600]
        best = max(iou(anchors[i], gt) for i in usable)
        assert out[pos[0]].score == best

    def test_matched_iff_positive(self, rng):
        anchors = generate_anchors(320, 320)
        gts = [gt_annotation(Box(*b), f"l{k}", size=320) for k, b in
               enumerate(random_boxes(rng, 3, extent=200, max_size=100))]
        for crit in CRITERIA:
            for a in label_anchors(anchors, gts, crit):
                assert (a.matched_lesion is not None) == (a.label is Label.POSITIVE)

    def test_each_gt_gets_a_positive(self, rng):
        anchors = anchor_grid(600, 600)
        for crit in CRITERIA:
            gts = random_boxes(rng, 4, extent=500, max_size=80)
            res = label_anchor_array(anchors, gts, crit)
            assert set(res.matched[res.labels == Label.POSITIVE]) == {0, 1, 2, 3}

    def test_no_ground_truth(self):
        res = label_anchor_array(anchor_grid(64, 64), np.zeros((0, 4)), MatchCriterion("iou"))
        assert np.all(res.labels == Label.NEGATIVE)

    def test_cross_boundary_anchors_neutral(self):
        anchors = generate_anchors(600, 600)
        out = label_anchors(anchors, [gt_annotation(Box(10, 10, 100, 100))], MatchCriterion("iou"))
        for a, lab in zip(anchors, out):
            if a.x1 < 0 or a.y1 < 0 or a.x2 > 600 or a.y2 > 600:
                assert lab.label is Label.NEUTRAL

    def test_keep_cross_boundary(self):
        cfg = AnchorConfig(ignore_cross_boundary=False)
        anchors = generate_anchors(600, 600, cfg)
        out = label_anchors(anchors, [gt_annotation(Box(10, 10, 100, 100))],
                            MatchCriterion("iou"), cfg)
        assert all(a.label is not Label.NEUTRAL or 0.3 <= a.score < 0.5 for a in out)

    @pytest.mark.parametrize("crit", CRITERIA, ids=lambda c: c.name)
    @pytest.mark.parametrize("ignore", [True, False])
    def test_census_matches_reference(self, crit, ignore):
        cfg = AnchorConfig(ignore_cross_boundary=ignore)
        anchors = anchor_grid(600, 600, cfg)
        gts = [(270.0, 250.0, 330.0, 310.0)]
        res = label_anchor_array(anchors, gts, crit, ~cross_boundary(anchors, 600, 600)
                                 if ignore else None)
        ref = census_reference(anchors, gts, crit, (600, 600), ignore)
        assert res.labels.tolist() == ref

    def test_census_matches_reference_two_lesions(self, rng):
        anchors = anchor_grid(320, 320)
        for crit in CRITERIA:
            gts = [tuple(b) for b in random_boxes(rng, 2, extent=240, max_size=80)]
            res = label_anchor_array(anchors, gts, crit, ~cross_boundary(anchors, 320, 320))
            assert res.labels.tolist() == census_reference(anchors, gts, crit, (320, 320))

    def test_centroid_monotone_under_enlargement(self, rng):
        anchors = anchor_grid(600, 600)
        crit = MatchCriterion("centroid")
        for _ in range(20):
            b = random_boxes(rng, 1, extent=400, max_size=100)[0]
            grown = b + np.array([-rng.uniform(0, 50), -rng.uniform(0, 50),
                                  rng.uniform(0, 50), rng.uniform(0, 50)])
            grown = np.clip(grown, 0, 600)
            n0 = np.count_nonzero(label_anchor_array(anchors, [b], crit).labels == 1)
            n1 = np.count_nonzero(label_anchor_array(anchors, [grown], crit).labels == 1)
            assert n1 >= n0


class TestCensus:
    def corpus(self):
        anns = [Annotation(f"i{k}", "l0", Box(200 + 20 * k, 220, 260 + 20 * k, 290), 600, 600)
                for k in range(4)]
        images = [(a.image_id, 600, 600) for a in anns]
        return anns, images

    def test_floor_of_one(self):
        anns, images = self.corpus()
        rows = positive_census({"clean": anns}, images, CRITERIA)
        assert [r.criterion for r in rows] == ["iou", "centroid", "exp_iou"]
        assert all(r.positives_per_lesion >= 1.0 for r in rows)

    def test_matches_per_image_labeling(self):
        anns, images = self.corpus()
        rows = positive_census({"clean": anns}, images, [MatchCriterion("iou")])
        anchors = anchor_grid(600, 600)
        mask = ~cross_boundary(anchors, 600, 600)
        total = sum(np.count_nonzero(label_anchor_array(anchors, [a.box.as_tuple()],
                                                        MatchCriterion("iou"), mask).labels == 1)
                    for a in anns)
        assert rows[0].positives_per_lesion == total / 4

    def test_missing_image(self):
        anns, images = self.corpus()
        with pytest.raises(ValidationError, match="i3"):
            positive_census({"clean": anns}, images[:3], CRITERIA)


class TestNMS:
    def test_basic(self):
        boxes = [[0, 0, 10, 10], [1, 1, 11, 11], [20, 20, 30, 30]]
        assert nms_indices(boxes, [0.9, 0.8, 0.7], 0.5).tolist() == [0, 2]
        assert nms_indices(boxes, [0.9, 0.8, 0.7], 0.68).tolist() == [0, 2]  # IoU 81/119
        assert nms_indices(boxes, [0.9, 0.8, 0.7], 0.69).tolist() == [0, 1, 2]

    def test_ties_keep_input_order(self):
        boxes = [[0, 0, 10, 10], [0, 0, 10, 10]]
        assert nms_indices(boxes, [0.5, 0.5], 0.5).tolist() == [0]

    def test_max_output(self, rng):
        boxes = random_boxes(rng, 50, extent=1000, max_size=5)
        assert len(nms_indices(boxes, rng.random(50), 0.7, max_output=7)) == 7

    def test_validation(self):
        with pytest.raises(ValidationError):
            nms_indices([[0, 0, 1, 1]], [0.5], 1.5)
        with pytest.raises(ValidationError):
            nms_indices([[0, 0, 1, 1]], [np.nan], 0.5)

    def test_objects(self):
        dets = [Detection("a", Box(0, 0, 10, 10), 0.2), Detection("a", Box(1, 1, 10, 10), 0.9)]
        assert nms(dets, 0.5) == [dets[1]]
        assert nms([], 0.5) == []

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 200), st.floats(0.0, 1.0))
    def test_matches_reference(self, seed, n, thr):
        r = np.random.default_rng(seed)
        boxes = random_boxes(r, n)
        scores = np.round(r.random(n), 2)  # rounding forces score ties
        got = nms_indices(boxes, scores, thr).tolist()
        assert got == nms_reference(boxes.tolist(), scores.tolist(), thr)
        kept = boxes[got]
        m = iou_matrix(kept, kept)
        np.fill_diagonal(m, 0.0)
        assert np.all(m <= thr)


def test_centroid_inside_is_the_centroid_criterion():
    a, b = Box(0, 0, 10, 10), Box(4, 4, 100, 100)
    assert MatchCriterion("centroid").score(a, b) == float(centroid_inside(a, b))
