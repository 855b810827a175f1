"""Paired comparison of the continuous decoder against the discrete-token baseline.

Both models see the same training screens, the same seed and the same
training recipe; they differ only in the output head. Evaluation runs on a
held-out slice of the same seeded generator.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, replace
from typing import Optional

import numpy as np

from ..core import BBox, EvalConfig, GroundingCase, Screen
from ..geometry import iou
from ..metrics import grounding_accuracy
from ..synth import SynthConfig, gen_corpus, gen_grounding_cases
from .infer import ground
from .loss import TrainConfig
from .model import DecoderModel, ModelConfig, adapt_vision, decode_coords, decode_discrete
from .tokens import token_embedding
from .train import prepare_corpus, train, windowed


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    steps: int = 5000
    corpus_size: int = 400
    eval_screens: int = 50
    cases_per_screen: int = 4
    absent_fraction: float = 0.1
    hidden: int = 64
    bins: int = 32
    digits: int = 1
    lr: float = 3e-3
    batch_size: int = 4

    def synth_config(self) -> SynthConfig:
        return SynthConfig(seed=self.seed, absent_fraction=self.absent_fraction)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            seed=self.seed,
            steps=self.steps,
            lr=self.lr,
            batch_size=self.batch_size,
            corpus_size=self.corpus_size,
            absent_fraction=self.absent_fraction,
        )

    def model_config(self, decoder: str) -> ModelConfig:
        return ModelConfig(decoder=decoder, hidden=self.hidden, bins=self.bins, digits=self.digits, seed=self.seed)


@dataclass
class Split:
    train: list[tuple[Screen, np.ndarray]]
    eval: list[tuple[Screen, np.ndarray]]
    cases: list[GroundingCase]


def make_split(cfg: ExperimentConfig) -> Split:
    """Training screens ``[0, corpus_size)`` and held-out screens right after them."""
    sc = cfg.synth_config()
    train_set = prepare_corpus([s.screen for s in gen_corpus(sc, cfg.corpus_size)], sc)
    eval_set = prepare_corpus([s.screen for s in gen_corpus(sc, cfg.eval_screens, start=cfg.corpus_size)], sc)
    cases = gen_grounding_cases(sc, [s for s, _ in eval_set], per_screen=cfg.cases_per_screen)
    return Split(train_set, eval_set, cases)


def train_decoder(cfg: ExperimentConfig, decoder: str, split: Optional[Split] = None):
    split = split or make_split(cfg)
    return train(cfg.train_config(), split.train, cfg.model_config(decoder))


def _decode(model: DecoderModel, embedding: np.ndarray, adapted: np.ndarray) -> tuple[BBox, int]:
    if model.config.decoder == "continuous":
        return decode_coords(embedding, adapted, model), 1
    return decode_discrete(embedding, adapted, model)


def localization(model: DecoderModel, split: Split) -> dict[str, float]:
    """Box quality over every target-present case, decoding each one
    regardless of the presence head so both decoders face the same targets."""
    screens = {s.id: (s, g) for s, g in split.eval}
    adapted = {sid: adapt_vision(g, model) for sid, (_, g) in screens.items()}
    cfg = model.config
    centers, coords, ious = [], [], []
    for case in split.cases:
        if case.target is None:
            continue
        label = case.query.split('"')[1]
        box, _ = _decode(model, token_embedding(label, cfg.token_dim, cfg.sig_dim), adapted[case.screen_id])
        p, t = box.center, case.target.center
        centers.append(math.hypot(p.x - t.x, p.y - t.y))
        coords.extend(abs(a - b) for a, b in zip(box.as_tuple(), case.target.as_tuple()))
        ious.append(iou(box, case.target))
    n = len(centers)
    return {
        "localized_cases": n,
        "mean_center_error": math.fsum(centers) / n if n else 0.0,
        "mean_coord_error": math.fsum(coords) / len(coords) if coords else 0.0,
        "mean_iou": math.fsum(ious) / n if n else 0.0,
    }


def evaluate(model: DecoderModel, split: Split, eval_cfg: EvalConfig = EvalConfig()) -> dict:
    """Localization metrics plus the full route-then-predict grounding run."""
    out = localization(model, split)
    screens = {s.id: (s, g) for s, g in split.eval}
    answers, results = ground(split.cases, screens, model)
    report = grounding_accuracy(split.cases, answers, eval_cfg, screens={k: v[0] for k, v in screens.items()})
    rej_results = [r for r in results if r.rejects]
    steps = [n for r in results for n in r.steps]
    out.update(
        {
            "params": model.n_params(),
            "grounding_accuracy": report.accuracy,
            "rejection_accuracy": report.rejection_accuracy,
            "absent_cases": report.absent_count,
            "rej_events": sum(r.rejects for r in results),
            "decoder_calls_on_reject": sum(r.decoder_calls for r in rej_results),
            "decoder_calls": sum(r.decoder_calls for r in results),
            "vg_events": len(steps),
            "steps_per_element": math.fsum(steps) / len(steps) if steps else float(model.config.steps_per_box),
        }
    )
    return out


def _ratio(num: float, den: float) -> Optional[float]:
    return num / den if den else None


def compare_decoders(
    cfg: ExperimentConfig = ExperimentConfig(),
    continuous: Optional[DecoderModel] = None,
    discrete: Optional[DecoderModel] = None,
    split: Optional[Split] = None,
) -> dict:
    """Train whichever model is not given, evaluate both, and report.

    The report is plain JSON data. Everything outside ``"timing"`` is a
    deterministic function of ``cfg`` (and the given models).
    """
    split = split or make_split(cfg)
    models = {"continuous": continuous, "discrete": discrete}
    training: dict[str, dict] = {}
    timing: dict[str, float] = {}
    for name in models:
        if models[name] is None:
            t0 = time.perf_counter()
            res = train(cfg.train_config(), split.train, cfg.model_config(name))
            timing[f"{name}_train_seconds"] = time.perf_counter() - t0
            win = windowed(res.history, 100)
            training[name] = {"steps": len(res.history), "initial_window_loss": win[0] if win else None,
                              "final_window_loss": win[-1] if win else None}
            models[name] = res.model
    for name, model in models.items():
        if model.config.decoder != name:
            raise ValueError(f"the {name} slot holds a {model.config.decoder} model")
    results = {}
    for name, model in models.items():
        t0 = time.perf_counter()
        results[name] = evaluate(model, split)
        results[name].update(training.get(name, {}))
        timing[f"{name}_eval_seconds"] = time.perf_counter() - t0
    c, d = results["continuous"], results["discrete"]
    bins = models["discrete"].config.bins
    return {
        "config": asdict(cfg),
        "decoders": results,
        "ratios": {
            "center_error_discrete_over_continuous": _ratio(d["mean_center_error"], c["mean_center_error"]),
            "coord_error_discrete_over_continuous": _ratio(d["mean_coord_error"], c["mean_coord_error"]),
            "iou_continuous_over_discrete": _ratio(c["mean_iou"], d["mean_iou"]),
            "steps_discrete_over_continuous": _ratio(d["steps_per_element"], c["steps_per_element"]),
        },
        "discrete_floor": 1.0 / (2 * bins),
        "eval": {"screens": len(split.eval), "cases": len(split.cases),
                 "absent_cases": sum(k.target is None for k in split.cases)},
        "timing": timing,
    }


def format_table(report: dict) -> str:
    rows = [
        ("params", "params", "{:d}"),
        ("mean center error", "mean_center_error", "{:.5f}"),
        ("mean coord error", "mean_coord_error", "{:.5f}"),
        ("mean IoU", "mean_iou", "{:.4f}"),
        ("grounding accuracy", "grounding_accuracy", "{:.4f}"),
        ("rejection accuracy", "rejection_accuracy", "{:.4f}"),
        ("steps per element", "steps_per_element", "{:.2f}"),
    ]
    dec = report["decoders"]
    lines = [f"{'metric':<20}{'continuous':>14}{'discrete':>14}"]
    for title, key, fmt in rows:
        vals = []
        for name in ("continuous", "discrete"):
            v = dec[name].get(key)
            vals.append("n/a" if v is None else fmt.format(v))
        lines.append(f"{title:<20}{vals[0]:>14}{vals[1]:>14}")
    lines.append(f"discrete floor (half a bin): {report['discrete_floor']:.5f}")
    for k, v in report["ratios"].items():
        lines.append(f"{k}: {'n/a' if v is None else f'{v:.3f}'}")
    return "\n".join(lines)


def without_timing(report: dict) -> dict:
    return {k: v for k, v in report.items() if k != "timing"}


def quick_config(steps: int = 50, corpus_size: int = 20, eval_screens: int = 5, **kw) -> ExperimentConfig:
    """A small configuration for smoke tests."""
    return replace(ExperimentConfig(), steps=steps, corpus_size=corpus_size, eval_screens=eval_screens, **kw)
