import numpy as np
import pytest
from hypothesis import assume, example, given, settings, strategies as st
from shapely.geometry import box as shapely_box

from guiparse.core import BBox, Kind, Point, ValidationError
from guiparse.geometry import (
    NmsConfig,
    TieBreak,
    box_loss,
    box_loss_matrix,
    contains,
    giou,
    giou_loss,
    iou,
    iou_loss,
    l1_box,
    nms,
    nms_indices,
    nms_order,
)

from helpers import box, el, nms_reference, random_box

coord = st.floats(0.0, 1.0, allow_nan=False)


@st.composite
def boxes(draw):
    x1, x2 = sorted(draw(st.lists(coord, min_size=2, max_size=2, unique=True)))
    y1, y2 = sorted(draw(st.lists(coord, min_size=2, max_size=2, unique=True)))
    b = BBox(x1, y1, x2, y2)
    assume(b.area > 0.0)
    return b


def shapely_iou(a: BBox, b: BBox) -> float:
    pa, pb = shapely_box(*a.as_tuple()), shapely_box(*b.as_tuple())
    return pa.intersection(pb).area / pa.union(pb).area


def shapely_giou(a: BBox, b: BBox) -> float:
    pa, pb = shapely_box(*a.as_tuple()), shapely_box(*b.as_tuple())
    union = pa.union(pb).area
    hull = pa.union(pb).envelope.area
    return pa.intersection(pb).area / union - (hull - union) / hull


class TestIoU:
    def test_identity(self):
        assert iou(box(0, 0, 1, 1), box(0, 0, 1, 1)) == 1.0

    def test_shared_edge(self):
        assert iou(box(0, 0, 0.5, 1), box(0.5, 0, 1, 1)) == 0.0

    def test_half_overlap(self):
        assert iou(box(0, 0, 1, 1), box(0.5, 0, 1, 1)) == pytest.approx(0.5, abs=1e-12)

    def test_degenerate_rejected(self):
        with pytest.raises(ValidationError):
            iou(BBox(0.2, 0.2, 0.2, 0.5), box(0, 0, 1, 1))
        with pytest.raises(ValidationError):
            giou(BBox(0.0, 0.0, 5e-200, 5e-200), box(0, 0, 1, 1))

    def test_matches_polygon_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(500):
            a, b = random_box(rng), random_box(rng)
            assert iou(a, b) == pytest.approx(shapely_iou(a, b), abs=1e-12)
            assert giou(a, b) == pytest.approx(shapely_giou(a, b), abs=1e-12)

    @given(boxes(), boxes())
    def test_symmetric_and_bounded(self, a, b):
        assert iou(a, b) == iou(b, a)
        assert 0.0 <= iou(a, b) <= 1.0


class TestGIoU:
    def test_identity(self):
        b = box(0.1, 0.2, 0.4, 0.9)
        assert giou(b, b) == 1.0
        assert giou_loss(b, b) == 0.0

    def test_disjoint_hand_value(self):
        a, b = box(0, 0, 0.25, 1), box(0.5, 0, 0.75, 1)
        assert giou(a, b) == pytest.approx(-1 / 3, abs=1e-12)
        assert giou_loss(a, b) == pytest.approx(4 / 3, abs=1e-12)

    @given(boxes(), boxes())
    @example(BBox(0.0, 0.0, 1.0, 1e-109), BBox(0.0, 0.0, 1e-109, 1.0))
    def test_bounds(self, a, b):
        # the lower bound is only approached, but can round onto -1
        g = giou(a, b)
        assert -1.0 <= g <= 1.0
        assert g <= iou(a, b) + 1e-15
        assert 0.0 <= giou_loss(a, b) <= 2.0

    @given(boxes(), boxes())
    def test_loss_zero_only_for_equal_boxes(self, a, b):
        # differences far below one ulp of the loss cannot show up in it
        if max(abs(u - v) for u, v in zip(a.as_tuple(), b.as_tuple())) >= 1e-6:
            assert giou_loss(a, b) > 0.0
        if a == b:
            assert giou_loss(a, b) == 0.0

    def test_box_loss_switch(self):
        a, b = box(0, 0, 0.25, 1), box(0.5, 0, 0.75, 1)
        assert box_loss(a, b, "giou") == giou_loss(a, b)
        assert box_loss(a, b, "iou") == iou_loss(a, b) == 1.0
        with pytest.raises(ValueError):
            box_loss(a, b, "l2")

    @pytest.mark.parametrize("kind", ["giou", "iou"])
    def test_matrix_bit_identical_to_scalar(self, kind):
        rng = np.random.default_rng(1)
        a = [random_box(rng) for _ in range(7)]
        b = [random_box(rng) for _ in range(5)]
        m = box_loss_matrix(a, b, kind)
        assert m.shape == (7, 5)
        for i in range(7):
            for j in range(5):
                assert m[i, j] == box_loss(a[i], b[j], kind)


class TestL1AndContains:
    def test_l1_values(self):
        assert l1_box(box(0, 0, 1, 1), box(0, 0, 1, 1)) == 0.0
        assert l1_box(box(0, 0, 1, 1), box(0.1, 0, 1, 1)) == pytest.approx(0.1)

    @given(boxes(), boxes())
    def test_l1_symmetric(self, a, b):
        assert l1_box(a, b) == l1_box(b, a)

    def test_contains(self):
        b = box(0.2, 0.2, 0.6, 0.8)
        assert contains(b, b.center)
        assert contains(b, Point(0.2, 0.2))
        assert contains(b, Point(0.6, 0.8))
        assert not contains(b, Point(0.1, 0.5))


class TestNms:
    def test_identical_boxes(self):
        a = el("a", 0.1, 0.1, 0.4, 0.4, score=0.9)
        b = el("b", 0.1, 0.1, 0.4, 0.4, score=0.8)
        assert nms([b, a]) == [a]

    def test_disjoint_survive(self):
        a = el("a", 0, 0, 0.2, 0.2, score=0.5)
        b = el("b", 0.5, 0.5, 0.7, 0.7, score=0.6)
        assert nms([a, b]) == [b, a]

    def test_three_box_case(self):
        a = el("a", 0.0, 0.0, 0.4, 0.4, score=0.9)
        b = el("b", 0.05, 0.0, 0.45, 0.4, score=0.8)
        c = el("c", 0.6, 0.6, 0.9, 0.9, score=0.7)
        xs = [a, b, c]
        assert nms(xs) == [a, c]
        order = nms_order(xs, TieBreak.BY_SCORE_THEN_AREA)
        for mask in range(1, 8):
            idx = [i for i in range(3) if mask >> i & 1]
            sub = [xs[i] for i in idx]
            ref = nms_reference(sub, 0.5, [idx.index(i) for i in order if i in idx])
            assert nms_indices(sub) == ref

    def test_tie_break_by_area_then_index(self):
        small = el("s", 0.1, 0.1, 0.3, 0.3, score=0.5)
        large = el("l", 0.1, 0.1, 0.32, 0.32, score=0.5)
        assert nms([small, large]) == [large]
        cfg = NmsConfig(tie_break=TieBreak.BY_SCORE_THEN_INDEX)
        assert nms([small, large], cfg) == [small]

    def test_class_aware(self):
        t = el("t", 0.1, 0.1, 0.3, 0.3, score=0.9)
        i = el("i", 0.1, 0.1, 0.3, 0.3, kind=Kind.ICON, score=0.8)
        assert nms([t, i]) == [t]
        assert nms([t, i], NmsConfig(class_aware=True)) == [t, i]

    def test_missing_score(self):
        with pytest.raises(ValidationError):
            nms([el("a", 0, 0, 1, 1)])

    def test_bad_threshold(self):
        with pytest.raises(ValidationError):
            NmsConfig(iou_thresh=0.0)

    def test_pairwise_overlap_property(self):
        rng = np.random.default_rng(2)
        for _ in range(1000):
            n = int(rng.integers(1, 12))
            xs = [
                el(f"e{k}", *random_box(rng, 0.2, 0.8, 0.05).as_tuple(), score=float(rng.integers(0, 5)) / 4)
                for k in range(n)
            ]
            thresh = float(rng.choice([0.3, 0.5, 0.7]))
            kept = nms(xs, NmsConfig(iou_thresh=thresh))
            scores = [k.score for k in kept]
            assert scores == sorted(scores, reverse=True)
            for p in range(len(kept)):
                for q in range(p + 1, len(kept)):
                    assert iou(kept[p].box, kept[q].box) <= thresh
            assert nms(kept, NmsConfig(iou_thresh=thresh)) == kept

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.tuples(boxes(), st.sampled_from([0.1, 0.5, 0.9])), min_size=0, max_size=6),
           st.sampled_from(list(TieBreak)), st.booleans())
    def test_matches_reference(self, items, tie_break, class_aware):
        xs = [el(f"e{k}", *b.as_tuple(), kind=Kind.ICON if k % 2 else Kind.TEXT, score=s)
              for k, (b, s) in enumerate(items)]
        cfg = NmsConfig(0.4, tie_break, class_aware)
        order = nms_order(xs, tie_break)
        assert nms_indices(xs, cfg) == nms_reference(xs, 0.4, order, class_aware)
