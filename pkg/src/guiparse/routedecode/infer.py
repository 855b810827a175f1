"""Route-then-predict inference over a scripted token stream.

The language model is out of scope: ``script_stream`` plays its part by
emitting, for every label a query names, a text token followed by one
location token whose [VG]/[REJ] logits come from the presence head.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from ..core import Element, GroundingCase, Screen
from ..metrics import REJECT, GroundingAnswer, Reject
from ..synth import SynthConfig, label_kind, query_labels, rasterize
from .model import DecoderModel, adapt_vision, decode_coords, decode_discrete, presence_fwd
from .tokens import StreamToken, Tag, TokenEvent, location_token, route, text_token, token_embedding

PARSE_QUERY = "Parse all elements on the screen"
# presence logits used for parse-mode location tokens, which are always [VG]
_PARSE_PRESENCE = np.array([10.0, -10.0])


@dataclass
class InferResult:
    events: list[TokenEvent]
    answers: list[list[Union[Element, Reject]]]  # one list per query
    steps: list[int]  # decoder steps per decoded element
    decoder_calls: int

    @property
    def elements(self) -> list[Element]:
        return [a for per_q in self.answers for a in per_q if isinstance(a, Element)]

    @property
    def rejects(self) -> int:
        return sum(isinstance(a, Reject) for per_q in self.answers for a in per_q)


def script_stream(query: str, screen: Screen, model: DecoderModel, adapted: np.ndarray) -> list[StreamToken]:
    """Token stream a model would emit for ``query``.

    Parse mode enumerates the screen's own labels (the semantic half of
    parsing is taken as given); grounding queries name their labels.
    """
    cfg = model.config
    vocab = model.vocab
    if query == PARSE_QUERY:
        labels = [e.semantics for e in screen.elements]
        presence = np.tile(_PARSE_PRESENCE, (len(labels), 1))
    else:
        labels = query_labels(query)
        E = np.stack([_embedding(l, model) for l in labels])
        presence = presence_fwd(model, adapted, E)[0]
    stream = []
    for label, pres in zip(labels, presence):
        stream.append(text_token(label, vocab, cfg.token_dim, cfg.sig_dim))
        stream.append(location_token(label, pres, vocab, cfg.token_dim, cfg.sig_dim))
    return stream


def _embedding(label: str, model: DecoderModel) -> np.ndarray:
    return token_embedding(label, model.config.token_dim, model.config.sig_dim)


def infer(
    screen: Screen,
    queries: Sequence[str],
    model: DecoderModel,
    grid: Optional[np.ndarray] = None,
    synth_cfg=None,
) -> InferResult:
    """Decode every query: one box per [VG] event, a ``REJECT`` per [REJ] event.

    ``grid`` is the screen's feature grid; when omitted it is rasterized
    with ``synth_cfg`` (or matching defaults).
    """
    if grid is None:
        synth_cfg = synth_cfg or SynthConfig(grid=model.config.grid, feature_dim=model.config.feature_dim)
        grid = rasterize(screen, synth_cfg)
    adapted = adapt_vision(grid, model)
    calls_before = model.counters["decoder_calls"]
    all_events, answers, steps = [], [], []
    for query in queries:
        events = route(script_stream(query, screen, model, adapted), model.vocab)
        per_query: list[Union[Element, Reject]] = []
        label = None
        for ev in events:
            if ev.tag == Tag.TEXT:
                label = ev.text
            elif ev.tag == Tag.REJ:
                per_query.append(REJECT)
            else:
                if model.config.decoder == "continuous":
                    box, n = decode_coords(ev.embedding, adapted, model), 1
                else:
                    box, n = decode_discrete(ev.embedding, adapted, model)
                per_query.append(Element(label_kind(label), label, box))
                steps.append(n)
        all_events.extend(events)
        answers.append(per_query)
    return InferResult(all_events, answers, steps, model.counters["decoder_calls"] - calls_before)


def ground(
    cases: Sequence[GroundingCase],
    screens: dict[str, tuple[Screen, np.ndarray]],
    model: DecoderModel,
) -> tuple[list[GroundingAnswer], list[InferResult]]:
    """Single-target grounding answers (box or ``REJECT``) for each case."""
    answers, results = [], []
    for case in cases:
        screen, grid = screens[case.screen_id]
        res = infer(screen, [case.query], model, grid)
        first = res.answers[0][0]
        answers.append(first if isinstance(first, Reject) else first.box)
        results.append(res)
    return answers, results
