import math

import pytest
from hypothesis import given, strategies as st

from guiparse.core import (
    BBox,
    Element,
    EvalConfig,
    GroundingCase,
    Kind,
    MatchResult,
    Point,
    Screen,
    ValidationError,
    duplicate_ids,
    validate_screen,
)

from helpers import el, screen


class TestBBox:
    def test_valid_box(self):
        b = BBox(0.1, 0.2, 0.3, 0.5)
        assert b.is_valid()
        assert b.width == pytest.approx(0.2)
        assert b.area == pytest.approx(0.06)
        assert b.center == Point(pytest.approx(0.2), pytest.approx(0.35))

    @pytest.mark.parametrize(
        "coords, rule",
        [
            ((0.3, 0.0, 0.2, 1.0), "x1 < x2"),
            ((0.0, 0.5, 1.0, 0.5), "y1 < y2"),
            ((-0.1, 0.0, 0.5, 0.5), "x1 in [0,1]"),
            ((0.0, 0.0, 1.5, 0.5), "x2 in [0,1]"),
            ((0.0, 0.0, math.nan, 0.5), "x2 must be a finite number"),
        ],
    )
    def test_violations(self, coords, rule):
        assert rule in BBox(*coords).violations()

    def test_checked_raises(self):
        with pytest.raises(ValidationError):
            BBox(0.5, 0.0, 0.5, 1.0).checked()

    def test_from_pixels(self):
        b = BBox.from_pixels([250, 0, 500, 960], 1000, 1920)
        assert b.as_tuple() == (0.25, 0.0, 0.5, 0.5)

    def test_from_seq_length(self):
        with pytest.raises(ValidationError):
            BBox.from_seq([0.0, 0.1, 0.2])

    @given(st.lists(st.floats(0.0, 1.0), min_size=4, max_size=4))
    def test_valid_iff_ordered(self, xs):
        b = BBox(*xs)
        assert b.is_valid() == (xs[0] < xs[2] and xs[1] < xs[3])


class TestElement:
    def test_blank_semantics(self):
        assert "semantics non-empty" in el("  ", 0, 0, 1, 1).violations()

    def test_score_range(self):
        assert "score in [0,1]" in el("ok", 0, 0, 1, 1, score=1.5).violations()
        assert el("ok", 0, 0, 1, 1, score=1.0).violations() == []

    def test_unknown_kind(self):
        bad = Element("button", "ok", BBox(0, 0, 1, 1))
        assert any("kind" in v for v in bad.violations())


class TestValidateScreen:
    def test_inverted_box(self):
        v = validate_screen(screen([el("a", 0.3, 0.0, 0.2, 1.0)]))
        assert len(v) == 1
        assert v[0].rule == "x1 < x2"
        assert v[0].field == "elements[0].box"

    def test_valid_screen(self):
        assert validate_screen(screen([el("a", 0, 0, 0.5, 0.5), el("b", 0.5, 0.5, 1, 1)])) == []

    def test_blank_semantics(self):
        v = validate_screen(screen([el("  ", 0, 0, 1, 1)]))
        assert [x.rule for x in v] == ["semantics non-empty"]

    def test_bad_dimensions(self):
        s = Screen("s", 0, 10, "mobile", "en")
        fields = {v.field for v in validate_screen(s)}
        assert {"width_px", "platform", "language"} <= fields

    def test_pure(self):
        s = screen([el("a", 0.3, 0.0, 0.2, 1.0), el(" ", 0, 0, 1, 1)])
        assert validate_screen(s) == validate_screen(s)

    def test_duplicate_ids(self):
        assert duplicate_ids([screen(sid="a"), screen(sid="b"), screen(sid="a"), screen(sid="a")]) == ["a"]


class TestMatchResult:
    def test_check_accepts_partition(self):
        MatchResult(((0, 1, 0.0),), frozenset({1}), frozenset({0})).check(2, 2)

    def test_check_rejects_reuse(self):
        with pytest.raises(AssertionError):
            MatchResult(((0, 1, 0.0), (1, 1, 0.0)), frozenset(), frozenset({0})).check(2, 2)

    def test_check_rejects_gap(self):
        with pytest.raises(AssertionError):
            MatchResult((), frozenset({0}), frozenset()).check(2, 0)


class TestConfigs:
    def test_grounding_case_rejection(self):
        assert GroundingCase("s", "q", None).tests_rejection
        assert not GroundingCase("s", "q", BBox(0, 0, 1, 1), kind=Kind.ICON).tests_rejection

    @pytest.mark.parametrize(
        "kw", [{"mu": 1.5}, {"lambda_iou_match": -1}, {"localize_iou_thresh": 0.0}, {"box_loss": "l2"},
               {"lambda_iou_match": 0, "lambda_sem_match": 0}]
    )
    def test_eval_config_rejects(self, kw):
        with pytest.raises((ValidationError, ValueError)):
            EvalConfig(**kw)

    def test_eval_config_coerces_enums(self):
        assert EvalConfig(sem_method="exact").sem_method.value == "exact"
