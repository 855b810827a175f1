"""Parsing metrics, grounding accuracy and report aggregation."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

from .core import (
    BBox,
    Element,
    EvalConfig,
    GroundingCase,
    Kind,
    Point,
    PointRule,
    Screen,
    ValidationError,
)
from .geometry import contains, iou
from .matcher import match_elements, semantic_distance


class Reject:
    """Answer marker: the model declined to localize anything."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "REJECT"


REJECT = Reject()
GroundingAnswer = Union[BBox, Point, Reject]


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


@dataclass
class KindCounts:
    gt_count: int = 0
    pred_count: int = 0
    matched_gt: int = 0
    matched_pred: int = 0
    semsim_sum: float = 0.0  # attributed to the ground-truth kind

    @property
    def recall(self) -> float:
        return _ratio(self.matched_gt, self.gt_count)

    @property
    def precision(self) -> float:
        return _ratio(self.matched_pred, self.pred_count)


@dataclass
class ParseReport:
    screen_id: str
    platform: str
    language: str
    element_recall: float
    element_precision: float
    mean_semantic_similarity: float
    matched_count: int
    gt_count: int
    pred_count: int
    semsim_sum: float
    per_kind: dict[str, KindCounts]
    empty_match: bool
    localize_iou_thresh: float
    mean_time_per_element: Optional[float] = None
    time_sum: float = 0.0
    timed_count: int = 0
    flags: list[str] = field(default_factory=list)
    matched_pairs: list[tuple[int, int]] = field(default_factory=list)
    # differs from matched_count only in per-kind views
    matched_pred_count: Optional[int] = None


def correctly_localized(gt_box: BBox, pred_box: BBox, cfg: EvalConfig = EvalConfig()) -> bool:
    return iou(gt_box, pred_box) >= cfg.localize_iou_thresh


def parse_metrics(
    gt: Screen,
    pred: Sequence[Element],
    cfg: EvalConfig = EvalConfig(),
    decode_times: Optional[Sequence[float]] = None,
) -> ParseReport:
    """Element recall/precision and semantic similarity for one screen.

    Elements are paired by the matcher on box cost alone (unless
    ``cfg.combined_localization``); a pair counts as matched when it is also
    correctly localized. Semantic similarity is read off those pairs.
    """
    match_cfg = cfg if cfg.combined_localization else dataclasses.replace(cfg, lambda_sem_match=0.0)
    result = match_elements(gt.elements, pred, match_cfg)

    per_kind = {k.value: KindCounts() for k in Kind}
    for el in gt.elements:
        per_kind[el.kind.value].gt_count += 1
    for el in pred:
        per_kind[el.kind.value].pred_count += 1

    matched = []
    semsim_sum = 0.0
    for i, j, _ in result.pairs:
        if correctly_localized(gt.elements[i].box, pred[j].box, cfg):
            matched.append((i, j))
            sim = 1.0 - semantic_distance(gt.elements[i].semantics, pred[j].semantics, cfg.sem_method)
            semsim_sum += sim
            kc = per_kind[gt.elements[i].kind.value]
            kc.matched_gt += 1
            kc.semsim_sum += sim
            per_kind[pred[j].kind.value].matched_pred += 1

    n_gt, n_pred, n_match = len(gt.elements), len(pred), len(matched)
    flags = []
    if n_pred == 0:
        flags.append("no_predictions")
    if n_gt == 0:
        flags.append("no_ground_truth")
    if n_match == 0:
        flags.append("empty_match")

    mean_time, time_sum, timed = None, 0.0, 0
    if decode_times is not None:
        if len(decode_times) != n_pred:
            raise ValidationError(
                f"screen {gt.id!r}: {len(decode_times)} decode times for {n_pred} predictions"
            )
        time_sum, timed = math.fsum(decode_times), n_pred
        mean_time = _ratio(time_sum, timed) if timed else None

    return ParseReport(
        screen_id=gt.id,
        platform=gt.platform.value,
        language=gt.language.value,
        element_recall=_ratio(n_match, n_gt),
        element_precision=_ratio(n_match, n_pred),
        mean_semantic_similarity=_ratio(semsim_sum, n_match),
        matched_count=n_match,
        gt_count=n_gt,
        pred_count=n_pred,
        semsim_sum=semsim_sum,
        per_kind=per_kind,
        empty_match=n_match == 0,
        localize_iou_thresh=cfg.localize_iou_thresh,
        mean_time_per_element=mean_time,
        time_sum=time_sum,
        timed_count=timed,
        flags=flags,
        matched_pairs=matched,
    )


@dataclass
class SplitCounts:
    correct: int = 0
    total: int = 0

    @property
    def accuracy(self) -> float:
        return _ratio(self.correct, self.total)


@dataclass
class GroundingReport:
    accuracy: float
    correct: int
    total: int
    splits: dict[str, SplitCounts]
    rejection_accuracy: Optional[float]
    correct_rejects: int
    absent_count: int
    false_positives: int
    mean_time: Optional[float] = None


def _answer_correct(case: GroundingCase, answer: GroundingAnswer, cfg: EvalConfig) -> bool:
    if case.target is None:
        return isinstance(answer, Reject)
    if isinstance(answer, Reject):
        return False
    if isinstance(answer, Point):
        # IoU is undefined for a point; points are always judged by containment
        return contains(case.target, answer)
    if cfg.point_rule == PointRule.CENTER_IN_BOX:
        return contains(case.target, answer.center)
    return iou(case.target, answer) >= cfg.localize_iou_thresh


def _split_key(case: GroundingCase, screens: Optional[Mapping[str, Screen]]) -> str:
    platform = "unknown"
    if screens is not None and case.screen_id in screens:
        platform = screens[case.screen_id].platform.value
    if case.target is None:
        kind = "absent"
    else:
        kind = case.kind.value if case.kind is not None else "unknown"
    return f"{platform}/{kind}"


def grounding_accuracy(
    cases: Sequence[GroundingCase],
    answers: Sequence[GroundingAnswer],
    cfg: EvalConfig = EvalConfig(),
    screens: Optional[Mapping[str, Screen]] = None,
    times: Optional[Sequence[float]] = None,
) -> GroundingReport:
    """Accuracy over all cases; an absent target is only answered by ``REJECT``."""
    if len(cases) != len(answers):
        raise ValidationError(f"{len(cases)} grounding cases but {len(answers)} answers")
    splits: dict[str, SplitCounts] = {}
    correct = rejects = absent = false_pos = 0
    for case, ans in zip(cases, answers):
        ok = _answer_correct(case, ans, cfg)
        s = splits.setdefault(_split_key(case, screens), SplitCounts())
        s.total += 1
        s.correct += ok
        correct += ok
        if case.target is None:
            absent += 1
            rejects += ok
            false_pos += not ok
    mean_time = None
    if times is not None:
        mean_time = _ratio(math.fsum(times), len(times)) if len(times) else None
    return GroundingReport(
        accuracy=_ratio(correct, len(cases)),
        correct=correct,
        total=len(cases),
        splits=dict(sorted(splits.items())),
        rejection_accuracy=_ratio(rejects, absent) if absent else None,
        correct_rejects=rejects,
        absent_count=absent,
        false_positives=false_pos,
        mean_time=mean_time,
    )


@dataclass
class Averages:
    recall: float
    precision: float
    semantic_similarity: float
    time_per_element: Optional[float] = None


@dataclass
class SplitSummary:
    screens: int
    gt_count: int
    pred_count: int
    matched_count: int
    micro: Averages
    macro: Averages


@dataclass
class ParseSummary:
    overall: SplitSummary
    splits: dict[str, SplitSummary]


def _summarize(reports: Sequence[ParseReport]) -> SplitSummary:
    gt = sum(r.gt_count for r in reports)
    pred = sum(r.pred_count for r in reports)
    matched = sum(r.matched_count for r in reports)
    matched_pred = sum(r.matched_count if r.matched_pred_count is None else r.matched_pred_count for r in reports)
    timed = sum(r.timed_count for r in reports)
    t_micro = _ratio(math.fsum(r.time_sum for r in reports), timed) if timed else None
    micro = Averages(
        recall=_ratio(matched, gt),
        precision=_ratio(matched_pred, pred),
        semantic_similarity=_ratio(math.fsum(r.semsim_sum for r in reports), matched),
        time_per_element=t_micro,
    )
    n = len(reports)
    with_match = [r for r in reports if not r.empty_match]
    with_time = [r.mean_time_per_element for r in reports if r.mean_time_per_element is not None]
    macro = Averages(
        recall=math.fsum(r.element_recall for r in reports) / n,
        precision=math.fsum(r.element_precision for r in reports) / n,
        # screens without any match carry no semantic evidence
        semantic_similarity=_ratio(math.fsum(r.mean_semantic_similarity for r in with_match), len(with_match)),
        time_per_element=_ratio(math.fsum(with_time), len(with_time)) if with_time else None,
    )
    return SplitSummary(n, gt, pred, matched, micro, macro)


def _kind_report(r: ParseReport, kind: str) -> ParseReport:
    k = r.per_kind[kind]
    return dataclasses.replace(
        r,
        element_recall=k.recall,
        element_precision=k.precision,
        gt_count=k.gt_count,
        pred_count=k.pred_count,
        matched_count=k.matched_gt,
        matched_pred_count=k.matched_pred,
        mean_semantic_similarity=_ratio(k.semsim_sum, k.matched_gt),
        semsim_sum=k.semsim_sum,
        empty_match=k.matched_gt == 0,
        time_sum=0.0,
        timed_count=0,
        mean_time_per_element=None,
    )


def aggregate(reports: Sequence[ParseReport]) -> ParseSummary:
    """Micro (pooled counts) and macro (mean of per-screen ratios) averages.

    Splits are keyed ``platform=<p>``, ``language=<l>`` and ``kind=<k>``.
    """
    if not reports:
        raise ValidationError("aggregate needs at least one report")
    splits: dict[str, SplitSummary] = {}
    for attr in ("platform", "language"):
        for value in sorted({getattr(r, attr) for r in reports}):
            splits[f"{attr}={value}"] = _summarize([r for r in reports if getattr(r, attr) == value])
    for kind in (k.value for k in Kind):
        sub = [_kind_report(r, kind) for r in reports if r.per_kind[kind].gt_count or r.per_kind[kind].pred_count]
        if sub:
            splits[f"kind={kind}"] = _summarize(sub)
    return ParseSummary(overall=_summarize(reports), splits=splits)
