import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from guiparse.core import BBox, EvalConfig, GroundingCase, Kind, Language, Platform, Point, PointRule, ValidationError
from guiparse.metrics import REJECT, Reject, aggregate, correctly_localized, grounding_accuracy, parse_metrics
from guiparse.synth import SynthConfig, gen_screen

from helpers import box, el, random_box, screen

GT3 = [el("Save file", 0.1, 0.1, 0.3, 0.2), el("Open photo", 0.5, 0.5, 0.8, 0.6), el("gear icon", 0.0, 0.8, 0.1, 0.9, kind=Kind.ICON)]


class TestCorrectlyLocalized:
    def test_identical(self):
        b = box(0.1, 0.1, 0.2, 0.2)
        assert correctly_localized(b, b, EvalConfig(localize_iou_thresh=1.0))

    def test_half_overlap_threshold(self):
        a, b = box(0, 0, 1, 1), box(0.5, 0, 1, 1)
        assert correctly_localized(a, b, EvalConfig(localize_iou_thresh=0.5))
        assert not correctly_localized(a, b, EvalConfig(localize_iou_thresh=0.51))

    def test_disjoint(self):
        assert not correctly_localized(box(0, 0, 0.2, 0.2), box(0.5, 0.5, 0.7, 0.7))


class TestParseMetrics:
    def test_three_gt_two_pred(self):
        r = parse_metrics(screen(GT3), GT3[:2])
        assert r.element_recall == 2 / 3
        assert r.element_precision == 1.0
        assert r.mean_semantic_similarity == 1.0

    def test_three_gt_four_pred(self):
        pred = GT3[:2] + [el("junk", 0.9, 0.0, 1.0, 0.05), el("more junk", 0.4, 0.3, 0.45, 0.35)]
        r = parse_metrics(screen(GT3), pred)
        assert r.element_recall == 2 / 3
        assert r.element_precision == 0.5

    def test_perfect_on_synthetic_screen(self):
        s = gen_screen(SynthConfig(seed=3), 0).screen
        r = parse_metrics(s, s.elements)
        assert len(s.elements) > 20
        assert (r.element_recall, r.element_precision, r.mean_semantic_similarity) == (1.0, 1.0, 1.0)

    def test_empty_predictions_flagged(self):
        r = parse_metrics(screen(GT3), [])
        assert (r.element_recall, r.element_precision, r.mean_semantic_similarity) == (0.0, 0.0, 0.0)
        assert r.empty_match
        assert "no_predictions" in r.flags and "empty_match" in r.flags

    def test_semantics_read_off_geometric_match(self):
        pred = [dataclasses.replace(GT3[0], semantics="Save files")]
        r = parse_metrics(screen(GT3), pred)
        assert r.matched_count == 1
        assert r.mean_semantic_similarity == pytest.approx(1 - 1 / 10)

    def test_combined_localization_uses_text(self):
        # same box, unrelated text: geometry-only matching still pairs them
        pred = [el("zzzzzzzz", 0.1, 0.1, 0.3, 0.2)]
        assert parse_metrics(screen(GT3[:1]), pred).matched_count == 1
        strict = EvalConfig(combined_localization=True, mu=0.9)
        assert parse_metrics(screen(GT3[:1]), pred, strict).matched_count == 0

    def test_decode_times(self):
        r = parse_metrics(screen(GT3), GT3[:2], decode_times=[0.1, 0.3])
        assert r.mean_time_per_element == pytest.approx(0.2)
        with pytest.raises(ValidationError):
            parse_metrics(screen(GT3), GT3[:2], decode_times=[0.1])

    def test_removal_and_spurious_monotonicity(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            gt = [el(f"e{k}", *random_box(rng, 0.0, 0.5).as_tuple()) for k in range(int(rng.integers(1, 6)))]
            pred = [el(f"e{k}", *random_box(rng, 0.0, 0.5).as_tuple()) for k in range(int(rng.integers(1, 6)))]
            base = parse_metrics(screen(gt), pred)
            for k in range(len(pred)):
                fewer = parse_metrics(screen(gt), pred[:k] + pred[k + 1:])
                assert fewer.matched_count <= base.matched_count
            extra = parse_metrics(screen(gt), pred + [el("far", 0.9, 0.9, 0.95, 0.95)])
            assert extra.element_recall == base.element_recall
            assert extra.element_precision <= base.element_precision
            assert base.element_recall * base.gt_count == base.matched_count
            assert round(base.element_precision * base.pred_count) == base.matched_count


def _case(target, kind=Kind.TEXT, sid="s0", cid="c"):
    return GroundingCase(sid, "Click \"x\"", target, cid, kind if target is not None else None)


class TestGroundingAccuracy:
    def test_center_in_box(self):
        t = box(0.2, 0.2, 0.4, 0.3)
        rep = grounding_accuracy([_case(t)], [box(0.25, 0.2, 0.35, 0.3)])
        assert rep.accuracy == 1.0

    def test_reject_on_absent(self):
        rep = grounding_accuracy([_case(None)], [REJECT])
        assert rep.accuracy == 1.0 and rep.rejection_accuracy == 1.0
        assert Reject() is REJECT

    def test_ten_cases(self):
        t = box(0.2, 0.2, 0.4, 0.3)
        cases = [_case(t, cid=f"p{k}") for k in range(7)] + [_case(None, cid=f"a{k}") for k in range(3)]
        answers = [t] * 7 + [REJECT, REJECT, box(0.5, 0.5, 0.6, 0.6)]
        rep = grounding_accuracy(cases, answers)
        assert rep.accuracy == 9 / 10
        assert rep.rejection_accuracy == 2 / 3
        assert rep.false_positives == 1

    def test_reject_on_present_is_wrong(self):
        assert grounding_accuracy([_case(box(0, 0, 1, 1))], [REJECT]).accuracy == 0.0

    def test_point_answers_use_containment(self):
        t = box(0.2, 0.2, 0.4, 0.3)
        cfg = EvalConfig(point_rule=PointRule.IOU_THRESH)
        assert grounding_accuracy([_case(t)], [Point(0.3, 0.25)], cfg).accuracy == 1.0
        assert grounding_accuracy([_case(t)], [Point(0.5, 0.25)], cfg).accuracy == 0.0

    def test_iou_rule(self):
        t = box(0.2, 0.2, 0.4, 0.3)
        cfg = EvalConfig(point_rule=PointRule.IOU_THRESH)
        assert grounding_accuracy([_case(t)], [box(0.2, 0.2, 0.4, 0.3)], cfg).accuracy == 1.0
        assert grounding_accuracy([_case(t)], [box(0.29, 0.24, 0.31, 0.26)], cfg).accuracy == 0.0

    def test_splits(self):
        screens = {"s0": screen(sid="s0", platform=Platform.WEB)}
        cases = [_case(box(0, 0, 1, 1), Kind.ICON), _case(None)]
        rep = grounding_accuracy(cases, [box(0, 0, 1, 1), REJECT], screens=screens)
        assert set(rep.splits) == {"web/icon", "web/absent"}

    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            grounding_accuracy([_case(None)], [])

    @settings(max_examples=50)
    @given(st.floats(0.01, 0.09), st.floats(0.01, 0.04))
    def test_center_preserving_change(self, half_w, half_h):
        t = box(0.2, 0.2, 0.4, 0.3)
        answer = BBox(0.3 - half_w, 0.25 - half_h, 0.3 + half_w, 0.25 + half_h)
        assert grounding_accuracy([_case(t)], [answer]).accuracy == 1.0


def _report(recall_hits: int, gt_n: int, sid: str, platform=Platform.MOBILE, language=Language.EN):
    gt = [el(f"e{k}", 0.1 * k, 0.0, 0.1 * k + 0.05, 0.05) for k in range(gt_n)]
    s = screen(gt, sid, platform, language)
    return parse_metrics(s, gt[:recall_hits])


class TestAggregate:
    def test_singleton(self):
        r = _report(2, 3, "a")
        summary = aggregate([r]).overall
        for avg in (summary.micro, summary.macro):
            assert avg.recall == r.element_recall
            assert avg.precision == r.element_precision
            assert avg.semantic_similarity == r.mean_semantic_similarity

    def test_macro_vs_micro(self):
        rs = [_report(1, 1, "a"), _report(0, 3, "b")]
        summary = aggregate(rs).overall
        assert summary.macro.recall == 0.5
        assert summary.micro.recall == 0.25

    def test_identical_reports(self):
        r = _report(2, 4, "a")
        summary = aggregate([r, r, r]).overall
        assert summary.macro.recall == summary.micro.recall
        assert summary.macro.precision == summary.micro.precision

    def test_order_insensitive_and_split_keys(self):
        rs = [_report(1, 2, "a", Platform.WEB), _report(2, 3, "b", language=Language.ZH), _report(0, 1, "c")]
        a, b = aggregate(rs), aggregate(rs[::-1])
        assert a.overall.micro == b.overall.micro
        assert a.overall.macro.recall == pytest.approx(b.overall.macro.recall, abs=1e-15)
        assert {"platform=web", "platform=mobile", "language=en", "language=zh", "kind=text"} <= set(a.splits)

    def test_empty(self):
        with pytest.raises(ValidationError):
            aggregate([])
