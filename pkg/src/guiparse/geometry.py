"""Box overlap measures, box losses, point tests and greedy NMS."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import BBox, Element, Point, ValidationError


class TieBreak(str, enum.Enum):
    BY_SCORE_THEN_AREA = "score_then_area"
    BY_SCORE_THEN_INDEX = "score_then_index"


@dataclass(frozen=True)
class NmsConfig:
    iou_thresh: float = 0.5
    tie_break: TieBreak = TieBreak.BY_SCORE_THEN_AREA
    class_aware: bool = False

    def __post_init__(self):
        if not 0.0 < self.iou_thresh <= 1.0:
            raise ValidationError("iou_thresh must lie in (0,1]")
        object.__setattr__(self, "tie_break", TieBreak(self.tie_break))


def _require(b: BBox) -> None:
    # the area test also catches widths so small their product underflows
    if not (b.x1 < b.x2 and b.y1 < b.y2) or b.area <= 0.0:
        raise ValidationError(f"degenerate box {b.as_tuple()}")


def _intersection(a: BBox, b: BBox) -> float:
    w = min(a.x2, b.x2) - max(a.x1, b.x1)
    h = min(a.y2, b.y2) - max(a.y1, b.y1)
    if w <= 0.0 or h <= 0.0:
        return 0.0
    return w * h


def iou(a: BBox, b: BBox) -> float:
    _require(a)
    _require(b)
    inter = _intersection(a, b)
    union = a.area + b.area - inter
    return inter / union


def giou(a: BBox, b: BBox) -> float:
    """Generalized IoU: IoU minus the fraction of the enclosing hull not covered."""
    _require(a)
    _require(b)
    inter = _intersection(a, b)
    union = a.area + b.area - inter
    hull = (max(a.x2, b.x2) - min(a.x1, b.x1)) * (max(a.y2, b.y2) - min(a.y1, b.y1))
    # the hull never falls short of the union; rounding can say otherwise
    return inter / union - max(hull - union, 0.0) / hull


def giou_loss(a: BBox, b: BBox) -> float:
    return 1.0 - giou(a, b)


def iou_loss(a: BBox, b: BBox) -> float:
    return 1.0 - iou(a, b)


def box_loss(a: BBox, b: BBox, kind: str = "giou") -> float:
    if kind == "giou":
        return giou_loss(a, b)
    if kind == "iou":
        return iou_loss(a, b)
    raise ValueError(f"unknown box loss {kind!r}")


def box_loss_matrix(a: Sequence[BBox], b: Sequence[BBox], kind: str = "giou") -> np.ndarray:
    """``box_loss(a[i], b[j])`` for every pair, evaluated with the same
    floating-point operations as the scalar version."""
    if kind not in ("giou", "iou"):
        raise ValueError(f"unknown box loss {kind!r}")
    for box in (*a, *b):
        _require(box)
    A = np.array([x.as_tuple() for x in a], dtype=np.float64).reshape(-1, 4)[:, None, :]
    B = np.array([x.as_tuple() for x in b], dtype=np.float64).reshape(-1, 4)[None, :, :]
    w = np.minimum(A[..., 2], B[..., 2]) - np.maximum(A[..., 0], B[..., 0])
    h = np.minimum(A[..., 3], B[..., 3]) - np.maximum(A[..., 1], B[..., 1])
    inter = np.where((w > 0.0) & (h > 0.0), w * h, 0.0)
    area_a = (A[..., 2] - A[..., 0]) * (A[..., 3] - A[..., 1])
    area_b = (B[..., 2] - B[..., 0]) * (B[..., 3] - B[..., 1])
    union = area_a + area_b - inter
    if kind == "iou":
        return 1.0 - inter / union
    hull = (np.maximum(A[..., 2], B[..., 2]) - np.minimum(A[..., 0], B[..., 0])) * (
        np.maximum(A[..., 3], B[..., 3]) - np.minimum(A[..., 1], B[..., 1])
    )
    return 1.0 - (inter / union - np.maximum(hull - union, 0.0) / hull)


def l1_box(a: BBox, b: BBox) -> float:
    return abs(a.x1 - b.x1) + abs(a.y1 - b.y1) + abs(a.x2 - b.x2) + abs(a.y2 - b.y2)


def contains(b: BBox, p: Point) -> bool:
    """Closed-box containment: points on the boundary count as inside."""
    return b.x1 <= p.x <= b.x2 and b.y1 <= p.y <= b.y2


def nms_order(elements: Sequence[Element], tie_break: TieBreak) -> list[int]:
    """Indices in processing order: descending score, then the tie rule."""
    if tie_break == TieBreak.BY_SCORE_THEN_AREA:
        key = lambda i: (-elements[i].score, -elements[i].box.area, i)
    else:
        key = lambda i: (-elements[i].score, i)
    return sorted(range(len(elements)), key=key)


def nms_indices(elements: Sequence[Element], cfg: NmsConfig = NmsConfig()) -> list[int]:
    for i, el in enumerate(elements):
        if el.score is None:
            raise ValidationError(f"element {i} ({el.semantics!r}) has no score")
    kept: list[int] = []
    for i in nms_order(elements, cfg.tie_break):
        box = elements[i].box
        suppressed = False
        for k in kept:
            if cfg.class_aware and elements[k].kind != elements[i].kind:
                continue
            if iou(elements[k].box, box) > cfg.iou_thresh:
                suppressed = True
                break
        if not suppressed:
            kept.append(i)
    return kept


def nms(elements: Sequence[Element], cfg: NmsConfig = NmsConfig()) -> list[Element]:
    """Greedy non-maximum suppression.

    Survivors are returned in processing order, so the output is sorted by
    descending score and no two survivors (of the same kind, if class-aware)
    overlap by more than ``cfg.iou_thresh``.
    """
    return [elements[i] for i in nms_indices(elements, cfg)]
