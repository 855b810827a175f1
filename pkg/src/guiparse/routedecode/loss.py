"""Set-matched training objective with gradients w.r.t. logits and box corners."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .. import neural as nn
from ..core import BBox, Element, EvalConfig, MatchResult, ValidationError
from ..geometry import giou_loss, l1_box
from ..matcher import assign_with_cutoff, build_cost_matrix, cost_cutoff
from ..synth import label_kind
from .tokens import LabelVocab

# constant box term for a ground-truth element left without a prediction:
# the maximum of the GIoU loss
UNMATCHED_BOX_PENALTY = 2.0


@dataclass(frozen=True)
class TrainConfig:
    lambda_ce: float = 2.0
    lambda_l1: float = 4.0
    lambda_iou: float = 1.0
    mu: float = 0.55
    lr: float = 3e-3
    warmup_fraction: float = 0.03
    steps: int = 5000
    batch_size: int = 4
    seed: int = 0
    corpus_size: int = 400
    max_targets: int = 16
    absent_fraction: float = 0.1
    grad_clip: float = 5.0
    # the match gate opens fully (mu = 0) at the start and tightens linearly
    # to ``mu`` over this fraction of the run
    gate_ramp_fraction: float = 0.2

    def __post_init__(self):
        for name in ("lambda_ce", "lambda_l1", "lambda_iou"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ValidationError("warmup_fraction must lie in [0,1)")
        if not 0.0 <= self.mu <= 1.0:
            raise ValidationError("mu must lie in [0,1]")
        if self.lr < 0 or self.steps < 0 or self.batch_size < 1 or self.max_targets < 1:
            raise ValidationError("need lr >= 0, steps >= 0, batch_size >= 1, max_targets >= 1")
        if not 0.0 <= self.gate_ramp_fraction <= 1.0:
            raise ValidationError("gate_ramp_fraction must lie in [0,1]")
        if not 0.0 <= self.absent_fraction < 1.0:
            raise ValidationError("absent_fraction must lie in [0,1)")


@dataclass
class LossResult:
    total: float
    dlogits: list[np.ndarray]
    dboxes: np.ndarray  # (n_pred, 4) gradient w.r.t. (x1, y1, x2, y2)
    match: MatchResult
    dropped: list[tuple[int, int, float]]
    terms: dict[str, float] = field(default_factory=dict)


def giou_loss_grad(pred: BBox, gt: BBox) -> np.ndarray:
    """Gradient of ``giou_loss(pred, gt)`` w.r.t. the predicted corners.

    At coincident edges (where min/max switch branch) the branch taken is
    the one where the predicted edge is not the active one.
    """
    px1, py1, px2, py2 = pred.as_tuple()
    gx1, gy1, gx2, gy2 = gt.as_tuple()
    pw, ph = px2 - px1, py2 - py1
    iw = min(px2, gx2) - max(px1, gx1)
    ih = min(py2, gy2) - max(py1, gy1)
    overlap = iw > 0.0 and ih > 0.0
    inter = iw * ih if overlap else 0.0
    union = pw * ph + gt.area - inter
    cw = max(px2, gx2) - min(px1, gx1)
    ch = max(py2, gy2) - min(py1, gy1)
    hull = cw * ch

    g_inter = 1.0 / union + inter / union**2 - 1.0 / hull
    g_area = -inter / union**2 + 1.0 / hull
    g_hull = -union / hull**2

    d_area = np.array([-ph, -pw, ph, pw])
    d_inter = np.zeros(4)
    if overlap:
        d_inter[0] = -ih if px1 > gx1 else 0.0
        d_inter[2] = ih if px2 < gx2 else 0.0
        d_inter[1] = -iw if py1 > gy1 else 0.0
        d_inter[3] = iw if py2 < gy2 else 0.0
    d_hull = np.array([
        -ch if px1 < gx1 else 0.0,
        -cw if py1 < gy1 else 0.0,
        ch if px2 > gx2 else 0.0,
        cw if py2 > gy2 else 0.0,
    ])
    return -(g_inter * d_inter + g_area * d_area + g_hull * d_hull)


def unmatched_penalty(cfg: TrainConfig, vocab: LabelVocab) -> float:
    """Loss of a ground-truth element left without a match.

    Its prediction is the designated no-match output, a uniform distribution
    over the text classes, so the text term is ``lambda_ce * ln(n_classes)``;
    the box term is the constant ``UNMATCHED_BOX_PENALTY``.
    """
    return cfg.lambda_ce * math.log(vocab.n_classes) + UNMATCHED_BOX_PENALTY


def l1_grad(pred: BBox, gt: BBox) -> np.ndarray:
    return np.sign(np.subtract(pred.as_tuple(), gt.as_tuple()))


def matched_loss(
    pred: Sequence[tuple[np.ndarray, BBox]],
    gt: Sequence[Element],
    cfg: TrainConfig,
    vocab: LabelVocab,
    pred_semantics: Optional[Sequence[str]] = None,
    mu: Optional[float] = None,
) -> LossResult:
    """Sum over ground truth of the matched per-element loss.

    Predictions are assigned to ground truth by the gated optimal matcher
    (box GIoU cost plus semantic distance, threshold ``cfg.mu``). A matched
    pair costs ``lambda_ce*CE + lambda_l1*L1 + lambda_iou*GIoU-loss``. A
    ground-truth element without a kept match (gated out, or more targets
    than predictions) costs ``unmatched_penalty`` and contributes no
    gradient. ``pred_semantics`` defaults to each prediction's arg-max
    label; ``mu`` overrides ``cfg.mu``.
    """
    if not gt:
        raise ValidationError("matched_loss needs at least one ground-truth element")
    if pred_semantics is None:
        pred_semantics = [vocab.label(int(np.argmax(l))) or "<none>" for l, _ in pred]
    if len(pred_semantics) != len(pred):
        raise ValidationError("pred_semantics must align with pred")
    pred_el = [Element(label_kind(s), s, b) for s, (_, b) in zip(pred_semantics, pred)]
    ecfg = EvalConfig(mu=cfg.mu if mu is None else mu, lambda_iou_match=1.0, lambda_sem_match=1.0)
    cost = build_cost_matrix(gt, pred_el, ecfg)
    match, dropped = assign_with_cutoff(cost, cost_cutoff(ecfg))

    dlogits = [np.zeros_like(np.asarray(l, dtype=np.float64)) for l, _ in pred]
    dboxes = np.zeros((len(pred), 4))
    per_gt = [0.0] * len(gt)
    ce_terms, l1_terms, iou_terms, unmatched_terms = [], [], [], []

    for i, j, _ in match.pairs:
        logits, box = pred[j]
        ce, dl = nn.ce_loss(logits, vocab.index(gt[i].semantics), cfg.lambda_ce)
        l1 = cfg.lambda_l1 * l1_box(box, gt[i].box)
        gl = cfg.lambda_iou * giou_loss(box, gt[i].box)
        per_gt[i] = math.fsum((ce, l1, gl))
        dlogits[j] += dl
        dboxes[j] += cfg.lambda_l1 * l1_grad(box, gt[i].box) + cfg.lambda_iou * giou_loss_grad(box, gt[i].box)
        ce_terms.append(ce)
        l1_terms.append(l1)
        iou_terms.append(gl)
    matched = {i for i, _, _ in match.pairs}
    for i in range(len(gt)):
        if i not in matched:
            per_gt[i] = unmatched_penalty(cfg, vocab)
            unmatched_terms.append(per_gt[i])

    terms = {
        "ce": math.fsum(ce_terms),
        "l1": math.fsum(l1_terms),
        "iou": math.fsum(iou_terms),
        "unmatched": math.fsum(unmatched_terms),
    }
    return LossResult(math.fsum(per_gt), dlogits, dboxes, match, dropped, terms)
