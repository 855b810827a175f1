"""Shared domain types for screens, elements and evaluation settings.

All coordinates are normalized to [0, 1] as fractions of screen width and
height. Types are frozen dataclasses; construction does not validate, so
that loaders can collect every violation at once via ``validate_screen``.
Use ``BBox.checked`` / ``Element.checked`` where a hard failure is wanted.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence


class ValidationError(ValueError):
    """Raised when a value violates a domain invariant."""


class Kind(str, enum.Enum):
    TEXT = "text"
    ICON = "icon"


class Platform(str, enum.Enum):
    MOBILE = "mobile"
    DESKTOP = "desktop"
    WEB = "web"


class Language(str, enum.Enum):
    EN = "en"
    ZH = "zh"


class SemMethod(str, enum.Enum):
    EXACT = "exact"
    NORMALIZED_EDIT = "normalized_edit"


class PointRule(str, enum.Enum):
    CENTER_IN_BOX = "center_in_box"
    IOU_THRESH = "iou_thresh"


@dataclass(frozen=True)
class BBox:
    x1: float
    y1: float
    x2: float
    y2: float

    def violations(self) -> list[str]:
        out = []
        for name in ("x1", "y1", "x2", "y2"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                out.append(f"{name} must be a finite number")
            elif not 0.0 <= v <= 1.0:
                out.append(f"{name} in [0,1]")
        if out:
            return out
        if not self.x1 < self.x2:
            out.append("x1 < x2")
        if not self.y1 < self.y2:
            out.append("y1 < y2")
        return out

    def is_valid(self) -> bool:
        return not self.violations()

    def checked(self) -> "BBox":
        bad = self.violations()
        if bad:
            raise ValidationError(f"invalid box {self.as_tuple()}: {', '.join(bad)}")
        return self

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    @property
    def center(self) -> "Point":
        return Point((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)

    @classmethod
    def from_seq(cls, seq: Sequence[float]) -> "BBox":
        if len(seq) != 4:
            raise ValidationError(f"box needs 4 coordinates, got {len(seq)}")
        return cls(*(float(v) for v in seq))

    @classmethod
    def from_pixels(cls, seq: Sequence[float], width_px: int, height_px: int) -> "BBox":
        x1, y1, x2, y2 = (float(v) for v in seq)
        return cls(x1 / width_px, y1 / height_px, x2 / width_px, y2 / height_px)


@dataclass(frozen=True)
class Point:
    x: float
    y: float

    def violations(self) -> list[str]:
        out = []
        for name in ("x", "y"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not math.isfinite(v) or not 0.0 <= v <= 1.0:
                out.append(f"{name} in [0,1]")
        return out


@dataclass(frozen=True)
class Element:
    kind: Kind
    semantics: str
    box: BBox
    score: Optional[float] = None

    def violations(self) -> list[str]:
        out = []
        if not isinstance(self.kind, Kind):
            out.append(f"kind must be one of {[k.value for k in Kind]}")
        if not isinstance(self.semantics, str) or not self.semantics.strip():
            out.append("semantics non-empty")
        out.extend(f"box.{v}" for v in self.box.violations())
        if self.score is not None:
            s = self.score
            if not isinstance(s, (int, float)) or not math.isfinite(s) or not 0.0 <= s <= 1.0:
                out.append("score in [0,1]")
        return out

    def checked(self) -> "Element":
        bad = self.violations()
        if bad:
            raise ValidationError(f"invalid element {self.semantics!r}: {', '.join(bad)}")
        return self


@dataclass(frozen=True)
class Screen:
    id: str
    width_px: int
    height_px: int
    platform: Platform
    language: Language
    elements: tuple[Element, ...] = ()

    def __post_init__(self):
        if not isinstance(self.elements, tuple):
            object.__setattr__(self, "elements", tuple(self.elements))


@dataclass(frozen=True)
class Violation:
    """One broken invariant. ``field`` is a dotted path inside the screen."""

    screen_id: str
    field: str
    rule: str

    def __str__(self) -> str:
        return f"screen {self.screen_id!r} {self.field}: {self.rule}"


def validate_screen(s: Screen) -> list[Violation]:
    out: list[Violation] = []
    if not isinstance(s.id, str) or not s.id:
        out.append(Violation(str(s.id), "id", "non-empty string"))
    for name in ("width_px", "height_px"):
        v = getattr(s, name)
        if isinstance(v, bool) or not isinstance(v, int) or v <= 0:
            out.append(Violation(s.id, name, "positive integer"))
    if not isinstance(s.platform, Platform):
        out.append(Violation(s.id, "platform", f"one of {[p.value for p in Platform]}"))
    if not isinstance(s.language, Language):
        out.append(Violation(s.id, "language", f"one of {[l.value for l in Language]}"))
    for i, el in enumerate(s.elements):
        for rule in el.violations():
            if rule.startswith("box."):
                out.append(Violation(s.id, f"elements[{i}].box", rule[len("box."):]))
            else:
                out.append(Violation(s.id, f"elements[{i}]", rule))
    return out


def duplicate_ids(screens: Iterable[Screen]) -> list[str]:
    seen: set[str] = set()
    dups: list[str] = []
    for s in screens:
        if s.id in seen and s.id not in dups:
            dups.append(s.id)
        seen.add(s.id)
    return dups


@dataclass(frozen=True)
class GroundingCase:
    """A grounding query; ``target is None`` means the element does not exist.

    ``kind`` is optional metadata used only for per-kind report splits.
    """

    screen_id: str
    query: str
    target: Optional[BBox] = None
    id: str = ""
    kind: Optional[Kind] = None

    @property
    def tests_rejection(self) -> bool:
        return self.target is None


@dataclass(frozen=True)
class MatchResult:
    pairs: tuple[tuple[int, int, float], ...]
    unmatched_gt: frozenset[int]
    unmatched_pred: frozenset[int]

    def check(self, n_gt: int, n_pred: int) -> None:
        gts = [p[0] for p in self.pairs]
        preds = [p[1] for p in self.pairs]
        if len(set(gts)) != len(gts) or len(set(preds)) != len(preds):
            raise AssertionError("index reused across pairs")
        if sorted(gts + list(self.unmatched_gt)) != list(range(n_gt)):
            raise AssertionError("ground-truth indices not covered exactly once")
        if sorted(preds + list(self.unmatched_pred)) != list(range(n_pred)):
            raise AssertionError("prediction indices not covered exactly once")

    @property
    def total_cost(self) -> float:
        return math.fsum(p[2] for p in self.pairs)


@dataclass(frozen=True)
class EvalConfig:
    mu: float = 0.55
    lambda_iou_match: float = 1.0
    lambda_sem_match: float = 1.0
    localize_iou_thresh: float = 0.5
    sem_method: SemMethod = SemMethod.NORMALIZED_EDIT
    point_rule: PointRule = PointRule.CENTER_IN_BOX
    # "giou" (1 - GIoU) or "iou" (1 - IoU) for the box term of the match cost
    box_loss: str = "giou"
    # parse metrics match on geometry alone unless this is set
    combined_localization: bool = False

    def __post_init__(self):
        if not 0.0 <= self.mu <= 1.0:
            raise ValidationError("mu must lie in [0,1]")
        if self.lambda_iou_match < 0 or self.lambda_sem_match < 0:
            raise ValidationError("match weights must be >= 0")
        if self.lambda_iou_match + self.lambda_sem_match == 0:
            raise ValidationError("at least one match weight must be positive")
        if not 0.0 < self.localize_iou_thresh <= 1.0:
            raise ValidationError("localize_iou_thresh must lie in (0,1]")
        object.__setattr__(self, "sem_method", SemMethod(self.sem_method))
        object.__setattr__(self, "point_rule", PointRule(self.point_rule))
        if self.box_loss not in ("giou", "iou"):
            raise ValidationError("box_loss must be 'giou' or 'iou'")
