"""Synthetic token vocabulary, scripted output stream, and the token router."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from ..synth import all_labels, label_signature

VG_ID = 0
REJ_ID = 1
RESERVED_IDS = (VG_ID, REJ_ID)
_LABEL_OFFSET = 2
# logit assigned to every id the scripted model does not favour
_FLOOR_LOGIT = -1e9


class Tag(str, enum.Enum):
    TEXT = "text"
    VG = "vg"
    REJ = "rej"


@dataclass(frozen=True)
class LabelVocab:
    """Label strings <-> text-class indices; the last class means "no match"."""

    labels: tuple[str, ...]

    @property
    def no_match(self) -> int:
        return len(self.labels)

    @property
    def n_classes(self) -> int:
        return len(self.labels) + 1

    @property
    def n_token_ids(self) -> int:
        return len(self.labels) + _LABEL_OFFSET

    def index(self, label: str) -> int:
        return _label_index(self.labels)[label]

    def label(self, cls: int) -> Optional[str]:
        return self.labels[cls] if 0 <= cls < len(self.labels) else None

    def token_id(self, label: str) -> int:
        return self.index(label) + _LABEL_OFFSET

    def token_text(self, token_id: int) -> str:
        if token_id == VG_ID:
            return "[VG]"
        if token_id == REJ_ID:
            return "[REJ]"
        return self.labels[token_id - _LABEL_OFFSET]


@lru_cache(maxsize=8)
def _label_index(labels: tuple[str, ...]) -> dict[str, int]:
    return {l: i for i, l in enumerate(labels)}


def default_vocab() -> LabelVocab:
    return LabelVocab(all_labels())


@lru_cache(maxsize=4)
def _embedding_mix(token_dim: int, sig_dim: int) -> np.ndarray:
    rng = np.random.default_rng(20250101)
    return rng.standard_normal((token_dim, sig_dim)) / np.sqrt(sig_dim)


@lru_cache(maxsize=8192)
def token_embedding(label: str, token_dim: int, sig_dim: int) -> np.ndarray:
    """Hidden state the scripted model attaches to tokens about ``label``.

    A fixed random mix of the label's hash signature: it identifies the
    label without being the rasterizer's own signature.
    """
    e = _embedding_mix(token_dim, sig_dim) @ (label_signature(label, sig_dim) * np.sqrt(sig_dim))
    e.setflags(write=False)
    return e


@dataclass(frozen=True)
class StreamToken:
    token_id: int
    logits: np.ndarray
    embedding: np.ndarray


@dataclass(frozen=True)
class TokenEvent:
    tag: Tag
    text: Optional[str] = None
    embedding: Optional[np.ndarray] = None
    position: int = 0

    def __post_init__(self):
        ok = {
            Tag.TEXT: self.text is not None and self.embedding is None,
            Tag.VG: self.text is None and self.embedding is not None,
            Tag.REJ: self.text is None and self.embedding is None,
        }[self.tag]
        if not ok:
            raise ValueError(f"{self.tag.value} event carries the wrong payload")


def route(stream: Sequence[StreamToken], vocab: LabelVocab) -> list[TokenEvent]:
    """Split an output stream into text, [VG] and [REJ] events.

    A token is a location token when its arg-max logit is a reserved id;
    which reserved id wins decides VG versus REJ. One event per token.
    """
    events = []
    for pos, tok in enumerate(stream):
        top = int(np.argmax(tok.logits))
        if top in RESERVED_IDS:
            if tok.logits[VG_ID] >= tok.logits[REJ_ID]:
                events.append(TokenEvent(Tag.VG, embedding=tok.embedding, position=pos))
            else:
                events.append(TokenEvent(Tag.REJ, position=pos))
        else:
            events.append(TokenEvent(Tag.TEXT, text=vocab.token_text(tok.token_id), position=pos))
    return events


def text_token(label: str, vocab: LabelVocab, token_dim: int, sig_dim: int) -> StreamToken:
    logits = np.full(vocab.n_token_ids, _FLOOR_LOGIT)
    tid = vocab.token_id(label)
    logits[tid] = 10.0
    return StreamToken(tid, logits, token_embedding(label, token_dim, sig_dim))


def location_token(
    label: str, presence_logits: np.ndarray, vocab: LabelVocab, token_dim: int, sig_dim: int
) -> StreamToken:
    """Location token whose [VG]/[REJ] logits come from the presence head."""
    logits = np.full(vocab.n_token_ids, _FLOOR_LOGIT)
    logits[VG_ID] = presence_logits[0]
    logits[REJ_ID] = presence_logits[1]
    tid = VG_ID if presence_logits[0] >= presence_logits[1] else REJ_ID
    return StreamToken(tid, logits, token_embedding(label, token_dim, sig_dim))
