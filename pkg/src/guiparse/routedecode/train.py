"""Training loop for the toy decoders on a synthetic corpus."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .. import neural as nn
from ..core import BBox, Element, Language, Screen
from ..synth import ICON_LABELS, TEXT_LABELS_EN, TEXT_LABELS_ZH, SynthConfig, rasterize
from .loss import LossResult, TrainConfig, matched_loss
from .model import (
    DecoderModel,
    ModelConfig,
    adapter_bwd,
    adapter_fwd,
    box_digits,
    continuous_bwd,
    continuous_fwd,
    discrete_bwd,
    discrete_fwd,
    init_model,
    presence_bwd,
    presence_fwd,
)
from .tokens import LabelVocab, default_vocab, token_embedding

PRESENT, ABSENT = 0, 1  # presence-head classes: [VG] and [REJ]


class TrainingDiverged(FloatingPointError):
    def __init__(self, step: int, detail: str = ""):
        super().__init__(f"non-finite loss at step {step}{': ' + detail if detail else ''}")
        self.step = step


@dataclass
class Instance:
    """One training example: a screen, its features, and the queried labels."""

    screen: Screen
    grid: np.ndarray
    targets: list[Element]
    absent: list[str]


@dataclass
class TrainResult:
    model: DecoderModel
    history: list[float]
    terms: list[dict[str, float]] = field(default_factory=list)


def absent_pool(screen: Screen) -> list[str]:
    present = {e.semantics for e in screen.elements}
    pool = TEXT_LABELS_EN if screen.language == Language.EN else TEXT_LABELS_ZH
    return sorted(set(pool + ICON_LABELS) - present)


def sample_instance(
    screen: Screen, grid: np.ndarray, rng: np.random.Generator, cfg: TrainConfig
) -> Instance:
    """Pick up to ``max_targets`` queries; each is absent with ``absent_fraction``."""
    order = rng.permutation(len(screen.elements))
    targets, absent = [], []
    pool = None
    k = 0
    for _ in range(cfg.max_targets):
        if rng.random() < cfg.absent_fraction or k >= len(order):
            pool = pool or absent_pool(screen)
            absent.append(pool[int(rng.integers(len(pool)))])
        else:
            targets.append(screen.elements[int(order[k])])
            k += 1
    return Instance(screen, grid, targets, absent)


def _embeddings(labels: Sequence[str], model: DecoderModel) -> np.ndarray:
    cfg = model.config
    if not labels:
        return np.zeros((0, cfg.token_dim))
    return np.stack([token_embedding(l, cfg.token_dim, cfg.sig_dim) for l in labels])


def gate_mu(cfg: TrainConfig, step: int) -> float:
    """Match-gate threshold in effect at ``step`` (see ``gate_ramp_fraction``)."""
    ramp = cfg.gate_ramp_fraction * cfg.steps
    if ramp <= 0 or step >= ramp:
        return cfg.mu
    return cfg.mu * step / ramp


def instance_loss(
    model: DecoderModel, inst: Instance, cfg: TrainConfig, weight: float = 1.0, mu: Optional[float] = None
):
    """Loss of one instance; adds ``weight`` times its gradient into ``model.store.grads``.

    Returns ``(loss, terms)``. The presence head is trained with cross-entropy
    on every query; the coordinate decoder on the present targets only.
    """
    vocab = model.vocab
    A, acache = adapter_fwd(model, inst.grid)
    labels = [e.semantics for e in inst.targets] + list(inst.absent)
    E = _embeddings(labels, model)
    dA = np.zeros_like(A)

    pres_logits, pcache = presence_fwd(model, A, E)
    dpres = np.zeros_like(pres_logits)
    pres_terms = []
    for r in range(len(labels)):
        target = PRESENT if r < len(inst.targets) else ABSENT
        l, d = nn.ce_loss(pres_logits[r], target, cfg.lambda_ce)
        pres_terms.append(l)
        dpres[r] = d * weight
    dA += presence_bwd(model, pcache, dpres)
    terms = {"presence": math.fsum(pres_terms)}

    if inst.targets:
        Et = E[: len(inst.targets)]
        if model.config.decoder == "continuous":
            corners, text, ccache = continuous_fwd(model, A, Et)
            preds = [(text[r], BBox(*corners[r])) for r in range(len(inst.targets))]
            res: LossResult = matched_loss(
                preds, inst.targets, cfg, vocab, pred_semantics=[e.semantics for e in inst.targets], mu=mu
            )
            dtext = np.stack(res.dlogits) * weight
            dA += continuous_bwd(model, ccache, res.dboxes * weight, dtext)
            terms.update(res.terms)
            box_loss = res.total
        else:
            box_loss, dA_d, dterms = _discrete_loss(model, A, Et, inst.targets, cfg, weight)
            dA += dA_d
            terms.update(dterms)
    else:
        box_loss = 0.0
    adapter_bwd(model, acache, dA)
    total = math.fsum((terms["presence"], box_loss))
    return total, terms


def _discrete_loss(model: DecoderModel, A, E, targets: Sequence[Element], cfg: TrainConfig, weight: float):
    """Teacher-forced digit cross-entropy; query ``r`` is supervised by ``targets[r]``."""
    mcfg = model.config
    digits = np.array([box_digits(e.box, mcfg) for e in targets], dtype=np.int64)
    prev = np.concatenate([np.full((len(targets), 1), mcfg.base), digits[:, :-1]], axis=1)
    logits, text, dcache = discrete_fwd(model, A, E, prev)
    dlogits = np.zeros_like(logits)
    dtext = np.zeros_like(text)
    digit_terms, text_terms = [], []
    for r, el in enumerate(targets):
        for s in range(digits.shape[1]):
            l, d = nn.ce_loss(logits[r, s], int(digits[r, s]), cfg.lambda_ce)
            digit_terms.append(l)
            dlogits[r, s] = d * weight
        l, d = nn.ce_loss(text[r], model.vocab.index(el.semantics), cfg.lambda_ce)
        text_terms.append(l)
        dtext[r] = d * weight
    dA = discrete_bwd(model, dcache, dlogits, dtext)
    terms = {"digits": math.fsum(digit_terms), "ce": math.fsum(text_terms)}
    return math.fsum(digit_terms + text_terms), dA, terms


def prepare_corpus(screens: Sequence[Screen], synth_cfg: SynthConfig) -> list[tuple[Screen, np.ndarray]]:
    return [(s, rasterize(s, synth_cfg)) for s in screens if s.elements]


def clip_gradients(store: nn.ParamStore, max_norm: float) -> float:
    norm = math.sqrt(math.fsum(float(np.sum(g * g)) for g in store.grads.values()))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for g in store.grads.values():
            g *= scale
    return norm


def train(
    cfg: TrainConfig,
    corpus: Sequence[tuple[Screen, np.ndarray]],
    model_cfg: ModelConfig = ModelConfig(),
    vocab: Optional[LabelVocab] = None,
    model: Optional[DecoderModel] = None,
) -> TrainResult:
    """Adam with linear warmup then cosine decay; one batch of screens per step.

    ``corpus`` holds ``(screen, feature grid)`` pairs, see ``prepare_corpus``.
    Deterministic for a given ``cfg.seed``.
    """
    if not corpus:
        raise ValueError("empty training corpus")
    model = model or init_model(model_cfg, vocab or default_vocab())
    rng = np.random.default_rng([cfg.seed, 101])
    history, term_log = [], []
    for step in range(cfg.steps):
        model.store.zero_grad()
        picks = rng.integers(len(corpus), size=cfg.batch_size)
        mu = gate_mu(cfg, step)
        losses = []
        terms_acc: dict[str, float] = {}
        try:
            for idx in picks:
                screen, grid = corpus[int(idx)]
                inst = sample_instance(screen, grid, rng, cfg)
                loss, terms = instance_loss(model, inst, cfg, weight=1.0 / cfg.batch_size, mu=mu)
                losses.append(loss)
                for k, v in terms.items():
                    terms_acc[k] = terms_acc.get(k, 0.0) + v / cfg.batch_size
        except nn.NonFiniteError as exc:
            raise TrainingDiverged(step, str(exc)) from exc
        loss = math.fsum(losses) / cfg.batch_size
        if not math.isfinite(loss):
            raise TrainingDiverged(step)
        clip_gradients(model.store, cfg.grad_clip)
        lr = nn.warmup_cosine_lr(step, cfg.steps, cfg.lr, cfg.warmup_fraction)
        nn.adam_step(model.store, nn.AdamHyper(lr=lr))
        history.append(loss)
        term_log.append(terms_acc)
    return TrainResult(model, history, term_log)


def windowed(history: Sequence[float], window: int = 100) -> list[float]:
    """Means over consecutive non-overlapping windows (a short tail is dropped)."""
    n = len(history) // window
    return [math.fsum(history[i * window:(i + 1) * window]) / window for i in range(n)]
