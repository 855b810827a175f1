"""Seeded synthetic screens, a deterministic feature rasterizer, and box
quantization for the discrete-token baseline.

Every screen is a pure function of ``(cfg.seed, index)``.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .core import BBox, Element, GroundingCase, Kind, Language, Platform, Screen, ValidationError
from .geometry import iou

_VERBS = ["Save", "Open", "Share", "Delete", "Edit", "View", "Send", "Add", "Find", "Sort", "Copy", "Print"]
_NOUNS = ["file", "photo", "message", "contact", "note", "album", "report", "draft"]
_ZH_VERBS = ["保存", "打开", "分享", "删除", "编辑", "查看", "发送", "添加", "查找", "排序", "复制", "打印"]
_ZH_NOUNS = ["文件", "照片", "消息", "联系人", "笔记", "相册", "报告", "草稿"]
_ICONS = [
    "search", "menu", "back", "close", "home", "settings", "bell", "heart",
    "star", "cart", "camera", "mic", "play", "pause", "download", "upload",
    "lock", "user", "calendar", "clock", "filter", "refresh", "trash", "pin",
    "mail", "phone", "map", "cloud", "wifi", "battery", "info", "help",
]

TEXT_LABELS_EN = tuple(f"{v} {n}" for v in _VERBS for n in _NOUNS)
TEXT_LABELS_ZH = tuple(f"{v}{n}" for v in _ZH_VERBS for n in _ZH_NOUNS)
ICON_LABELS = tuple(f"{name} {suffix}" for suffix in ("icon", "button") for name in _ICONS)

_SCREEN_DIMS = {
    Platform.MOBILE: (1080, 2340),
    Platform.DESKTOP: (1920, 1080),
    Platform.WEB: (1440, 900),
}

QUERY_TEMPLATES = (
    'Click on "{}"',
    'Where is "{}"?',
    'Locate the element "{}"',
    'Tap "{}"',
)
_QUOTED = re.compile(r'"([^"]+)"')
MULTI_TARGET_TEMPLATE = "Find {}"


def all_labels() -> tuple[str, ...]:
    return TEXT_LABELS_EN + TEXT_LABELS_ZH + ICON_LABELS


def label_kind(label: str) -> Kind:
    return Kind.ICON if label in _ICON_SET else Kind.TEXT


_ICON_SET = frozenset(ICON_LABELS)


def query_label(query: str) -> str:
    """Recover the label a templated query refers to."""
    m = _QUOTED.search(query)
    if m is None:
        raise ValidationError(f"query {query!r} does not quote a label")
    return m.group(1)


def query_labels(query: str) -> list[str]:
    """Every quoted label in a query, in order (multi-target queries name several)."""
    labels = _QUOTED.findall(query)
    if not labels:
        raise ValidationError(f"query {query!r} does not quote a label")
    return labels


def multi_target_query(labels: Sequence[str]) -> str:
    return MULTI_TARGET_TEMPLATE.format(", ".join(f'"{l}"' for l in labels))


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    elements_mean: float = 36.0
    text_fraction: float = 0.575
    grid: int = 16
    feature_dim: int = 32
    min_size: float = 0.03
    max_size: float = 0.2
    max_pair_iou: float = 0.3
    absent_fraction: float = 0.1
    max_attempts: int = 200

    def __post_init__(self):
        if not 0.0 <= self.text_fraction <= 1.0:
            raise ValidationError("text_fraction must lie in [0,1]")
        if self.grid < 4:
            raise ValidationError("grid must be >= 4")
        if self.feature_dim < 8:
            raise ValidationError("feature_dim must be >= 8")
        if self.elements_mean < 1:
            raise ValidationError("elements_mean must be >= 1")
        if not 0.0 < self.min_size <= self.max_size <= 1.0:
            raise ValidationError("need 0 < min_size <= max_size <= 1")


@dataclass(frozen=True)
class SynthScreen:
    screen: Screen
    queries: tuple[str, ...]


def _rng(cfg: SynthConfig, index: int, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng([cfg.seed & 0xFFFFFFFFFFFFFFFF, index, stream])


def _sample_box(rng: np.random.Generator, kind: Kind, cfg: SynthConfig) -> BBox:
    lo, hi = cfg.min_size, cfg.max_size
    if kind == Kind.TEXT:
        w = rng.uniform(lo, hi)
        h = rng.uniform(lo, lo + (hi - lo) / 3.0)
    else:
        w = rng.uniform(lo, (lo + hi) / 2.0)
        h = min(hi, w * rng.uniform(0.8, 1.25))
    x1 = rng.uniform(0.0, 1.0 - w)
    y1 = rng.uniform(0.0, 1.0 - h)
    return BBox(float(x1), float(y1), float(x1 + w), float(y1 + h))


def gen_screen(cfg: SynthConfig, index: int) -> SynthScreen:
    rng = _rng(cfg, index)
    platform = list(Platform)[int(rng.integers(len(Platform)))]
    language = list(Language)[int(rng.integers(len(Language)))]
    width, height = _SCREEN_DIMS[platform]
    # 1 + Poisson keeps the mean at elements_mean and never yields an empty screen
    n = 1 + int(rng.poisson(cfg.elements_mean - 1.0))

    text_pool = list(TEXT_LABELS_EN if language == Language.EN else TEXT_LABELS_ZH)
    icon_pool = list(ICON_LABELS)
    rng.shuffle(text_pool)
    rng.shuffle(icon_pool)

    elements: list[Element] = []
    for _ in range(n):
        kind = Kind.TEXT if rng.random() < cfg.text_fraction else Kind.ICON
        pool = text_pool if kind == Kind.TEXT else icon_pool
        if not pool:
            continue
        for _attempt in range(cfg.max_attempts):
            box = _sample_box(rng, kind, cfg)
            if all(iou(box, e.box) <= cfg.max_pair_iou for e in elements):
                elements.append(Element(kind, pool.pop(), box))
                break
    queries = tuple(QUERY_TEMPLATES[int(rng.integers(len(QUERY_TEMPLATES)))].format(e.semantics) for e in elements)
    screen = Screen(
        id=f"synth-{cfg.seed}-{index:06d}",
        width_px=width,
        height_px=height,
        platform=platform,
        language=language,
        elements=tuple(elements),
    )
    return SynthScreen(screen, queries)


def gen_corpus(cfg: SynthConfig, n: int, start: int = 0) -> list[SynthScreen]:
    return [gen_screen(cfg, i) for i in range(start, start + n)]


def gen_grounding_cases(cfg: SynthConfig, screens: Sequence[Screen], per_screen: int = 4) -> list[GroundingCase]:
    """Single-target grounding cases; about ``absent_fraction`` name a label
    that is not on the screen and must be rejected."""
    cases = []
    for s_idx, screen in enumerate(screens):
        rng = np.random.default_rng([cfg.seed & 0xFFFFFFFFFFFFFFFF, s_idx, 7])
        present = {e.semantics for e in screen.elements}
        pool = TEXT_LABELS_EN if screen.language == Language.EN else TEXT_LABELS_ZH
        absent_pool = sorted(set(pool + ICON_LABELS) - present)
        for c in range(per_screen):
            template = QUERY_TEMPLATES[int(rng.integers(len(QUERY_TEMPLATES)))]
            if rng.random() < cfg.absent_fraction or not screen.elements:
                label = absent_pool[int(rng.integers(len(absent_pool)))]
                cases.append(GroundingCase(screen.id, template.format(label), None, f"{screen.id}/{c}", None))
            else:
                el = screen.elements[int(rng.integers(len(screen.elements)))]
                cases.append(GroundingCase(screen.id, template.format(el.semantics), el.box, f"{screen.id}/{c}", el.kind))
    return cases


# -- rasterizer --------------------------------------------------------------

N_OCCUPANCY = 1  # covered area fraction
N_KIND = 2
N_EDGE = 4  # coverage-weighted distances from the patch center to the element's edges
SIG_OFFSET = N_OCCUPANCY + N_KIND + N_EDGE


@lru_cache(maxsize=4096)
def label_signature(label: str, dim: int) -> np.ndarray:
    """Unit vector derived from a hash of the label; stable across runs."""
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    v.setflags(write=False)
    return v


def _axis_overlap(lo: float, hi: float, grid: int) -> np.ndarray:
    """Covered fraction of each patch along one axis."""
    edges = np.arange(grid + 1) / grid
    return np.clip(np.minimum(edges[1:], hi) - np.maximum(edges[:-1], lo), 0.0, None) * grid


def _patch_centers(grid: int) -> np.ndarray:
    return (np.arange(grid) + 0.5) / grid


def rasterize(screen: Screen, cfg: SynthConfig) -> np.ndarray:
    """Encode a screen as a ``(grid, grid, feature_dim)`` array (rows = y).

    Channels: area coverage, text mass, icon mass, the signed distances from
    the patch center to the element's left, right, top and bottom edges (in
    patch units), then the label signature. The kind and edge channels are
    weighted by the covered area; the signature by the covered area relative
    to the element's best-covered patch. Only positive-area overlaps contribute, so shared edges
    leave no trace, and all channels are relative to the patch, so a
    patch-aligned shift of the screen shifts the grid.
    """
    g, f = cfg.grid, cfg.feature_dim
    sig_dim = f - SIG_OFFSET
    pc = _patch_centers(g)
    out = np.zeros((g, g, f), dtype=np.float64)
    for el in screen.elements:
        b = el.box
        ox = _axis_overlap(b.x1, b.x2, g)
        oy = _axis_overlap(b.y1, b.y2, g)
        cov = np.outer(oy, ox)
        out[..., 0] += cov
        out[..., 1 if el.kind == Kind.TEXT else 2] += cov
        out[..., 3] += cov * ((b.x1 - pc) * g)[None, :]
        out[..., 4] += cov * ((b.x2 - pc) * g)[None, :]
        out[..., 5] += cov * ((b.y1 - pc) * g)[:, None]
        out[..., 6] += cov * ((b.y2 - pc) * g)[:, None]
        # relative to the element's own peak, so small elements are as visible
        # as large ones; scaled so entries are O(1), like the other channels
        share = cov / cov.max()
        out[..., SIG_OFFSET:] += share[..., None] * (label_signature(el.semantics, sig_dim) * math.sqrt(sig_dim))
    return out


# -- quantization ------------------------------------------------------------

def quantize_coord(c: float, bins: int) -> int:
    return min(max(int(math.floor(c * bins)), 0), bins - 1)


def dequantize_coord(t: int, bins: int) -> float:
    return (t + 0.5) / bins


def quantize_box(b: BBox, bins: int) -> tuple[int, int, int, int]:
    if bins < 2:
        raise ValidationError("bins must be >= 2")
    return tuple(quantize_coord(c, bins) for c in b.as_tuple())


def dequantize(tokens: Sequence[int], bins: int) -> BBox:
    """Bin centers. The result can be degenerate when two tokens coincide."""
    if bins < 2:
        raise ValidationError("bins must be >= 2")
    return BBox(*(dequantize_coord(int(t), bins) for t in tokens))
