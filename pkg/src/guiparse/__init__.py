"""GUI parsing and grounding evaluation toolkit with a toy route-then-predict decoder."""

from .core import BBox, Element, EvalConfig, GroundingCase, Kind, Language, MatchResult, Platform, Point, Screen

__version__ = "0.1.0"

__all__ = [
    "BBox",
    "Element",
    "EvalConfig",
    "GroundingCase",
    "Kind",
    "Language",
    "MatchResult",
    "Platform",
    "Point",
    "Screen",
    "__version__",
]
