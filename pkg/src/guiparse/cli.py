"""Command-line entry point: ``guiparse <verb> ...``.

Exit codes: 0 success, 1 invalid input, 2 file I/O failure.
Evaluation settings come from ``--config`` (a JSON object) with flags
taking precedence.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from typing import Optional, Sequence

from . import benchio
from .benchio import EXIT_INVALID, EXIT_OK, BenchError, CoordinateMode, FormatError
from .core import ValidationError
from .geometry import NmsConfig, TieBreak, nms
from .matcher import build_cost_matrix, cost_cutoff, match_elements
from .synth import SynthConfig, gen_corpus, gen_grounding_cases


def _eval_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with evaluation settings")
    p.add_argument("--mu", type=float)
    p.add_argument("--lambda-iou", dest="lambda_iou_match", type=float)
    p.add_argument("--lambda-sem", dest="lambda_sem_match", type=float)
    p.add_argument("--iou-thresh", dest="localize_iou_thresh", type=float)
    p.add_argument("--sem-method", choices=["exact", "normalized_edit"])
    p.add_argument("--point-rule", choices=["center_in_box", "iou_thresh"])
    p.add_argument("--box-loss", choices=["giou", "iou"])
    p.add_argument("--combined-localization", action="store_const", const=True, default=None)


def _overrides(args) -> dict:
    keys = ("mu", "lambda_iou_match", "lambda_sem_match", "localize_iou_thresh", "sem_method",
            "point_rule", "box_loss", "combined_localization")
    return {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}


def _out_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", help="write the JSON report here")
    p.add_argument("--table", help="write the text table here (it is always printed)")
    p.add_argument("--no-timing", action="store_true", help="leave every timing field out of the report")


def _experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with experiment settings")
    p.add_argument("--seed", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--bins", type=int)
    p.add_argument("--digits", type=int)
    p.add_argument("--corpus-size", dest="corpus_size", type=int)
    p.add_argument("--eval-screens", dest="eval_screens", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)


class _Parser(argparse.ArgumentParser):
    # usage errors are invalid input (exit 1); exit 2 is reserved for I/O
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="guiparse", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("eval-parse", help="element recall/precision/semantic similarity")
    p.add_argument("--dataset", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--allow-partial", action="store_true", help="score screens without predictions as empty")
    _eval_flags(p)
    _out_flags(p)

    p = sub.add_parser("eval-ground", help="grounding and rejection accuracy")
    p.add_argument("--dataset", required=True)
    p.add_argument("--cases", required=True)
    p.add_argument("--answers", required=True)
    p.add_argument("--allow-partial", action="store_true", help="score unanswered cases as wrong")
    _eval_flags(p)
    _out_flags(p)

    p = sub.add_parser("validate", help="check dataset, prediction, case and answer files")
    p.add_argument("--dataset", required=True)
    p.add_argument("--predictions")
    p.add_argument("--cases")
    p.add_argument("--answers")

    p = sub.add_parser("nms", help="suppress overlapping scored elements in a dataset file")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--iou-thresh", type=float, default=0.5)
    p.add_argument("--tie-break", choices=[t.value for t in TieBreak], default=TieBreak.BY_SCORE_THEN_AREA.value)
    p.add_argument("--class-aware", action="store_true")

    p = sub.add_parser("match", help="dump the matching of one screen's predictions")
    p.add_argument("--dataset", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--screen", required=True, help="screen id")
    _eval_flags(p)

    p = sub.add_parser("synth-gen", help="write a seeded synthetic dataset (and grounding cases)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=100, help="number of screens")
    p.add_argument("--start", type=int, default=0, help="index of the first screen")
    p.add_argument("--out", required=True)
    p.add_argument("--cases", help="also write grounding cases here")
    p.add_argument("--per-screen", type=int, default=4)
    p.add_argument("--pixels", action="store_true", help="write pixel coordinates")

    p = sub.add_parser("train-toy", help="train one toy decoder and save a checkpoint")
    _experiment_flags(p)
    p.add_argument("--decoder", choices=["continuous", "discrete"], default="continuous")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--history", help="write the per-step loss history (JSON) here")

    p = sub.add_parser("compare-decoders", help="continuous decoder vs discrete-token baseline")
    _experiment_flags(p)
    p.add_argument("--train", action="store_true", help="train both models")
    p.add_argument("--continuous", help="continuous-decoder checkpoint")
    p.add_argument("--discrete", help="discrete-decoder checkpoint")
    _out_flags(p)
    return parser


def _emit(outcome: benchio.EvalOutcome, args) -> int:
    if outcome.status != EXIT_OK:
        for e in outcome.errors:
            print(f"error: {e}", file=sys.stderr)
        return outcome.status
    sys.stdout.write(outcome.table)
    return EXIT_OK


def _cmd_eval_parse(args) -> int:
    return _emit(benchio.run_parse_eval(
        args.dataset, args.predictions, args.config, _overrides(args), args.allow_partial,
        timing=not args.no_timing, out_json=args.out, out_table=args.table,
    ), args)


def _cmd_eval_ground(args) -> int:
    return _emit(benchio.run_grounding_eval(
        args.dataset, args.cases, args.answers, args.config, _overrides(args), args.allow_partial,
        timing=not args.no_timing, out_json=args.out, out_table=args.table,
    ), args)


def _cmd_validate(args) -> int:
    return _emit(benchio.validate_files(args.dataset, args.predictions, args.cases, args.answers), args)


def _cmd_nms(args) -> int:
    ds = benchio.load_dataset(args.input)
    try:
        cfg = NmsConfig(iou_thresh=args.iou_thresh, tie_break=args.tie_break, class_aware=args.class_aware)
    except ValidationError as exc:
        raise FormatError(str(exc)) from exc
    screens = []
    for s in ds.screens:
        try:
            kept = nms(s.elements, cfg)
        except ValidationError as exc:
            raise FormatError(str(exc), args.input, subject=f"screen {s.id}") from exc
        screens.append(dataclasses.replace(s, elements=tuple(kept)))
    out = dataclasses.replace(ds, screens=tuple(screens))
    benchio.save_dataset(args.out, out)
    before = sum(len(s.elements) for s in ds.screens)
    after = sum(len(s.elements) for s in screens)
    print(f"kept {after} of {before} elements")
    return EXIT_OK


def _cmd_match(args) -> int:
    cfg = benchio.load_eval_config(args.config, _overrides(args))
    ds = benchio.load_dataset(args.dataset)
    preds = benchio.load_predictions(args.predictions, ds)
    screens = ds.by_id()
    if args.screen not in screens:
        raise FormatError(f"screen {args.screen!r} is not in the dataset", args.dataset)
    gt = screens[args.screen].elements
    pred = preds.predictions.get(args.screen, ())
    result = match_elements(gt, pred, cfg)
    cost = build_cost_matrix(gt, pred, cfg) if gt and pred else None
    dump = {
        "screen": args.screen,
        "cutoff": cost_cutoff(cfg),
        "pairs": [{"gt": i, "pred": j, "cost": c, "gt_semantics": gt[i].semantics,
                   "pred_semantics": pred[j].semantics} for i, j, c in result.pairs],
        "unmatched_gt": sorted(result.unmatched_gt),
        "unmatched_pred": sorted(result.unmatched_pred),
        "cost_matrix": cost.tolist() if cost is not None else [],
    }
    sys.stdout.write(benchio.report_to_json(dump))
    return EXIT_OK


def _cmd_synth_gen(args) -> int:
    if args.n < 0 or args.per_screen < 0:
        raise FormatError("--n and --per-screen must be >= 0")
    sc = SynthConfig(seed=args.seed)
    screens = [s.screen for s in gen_corpus(sc, args.n, start=args.start)]
    mode = CoordinateMode.PIXELS if args.pixels else CoordinateMode.NORMALIZED
    ds = benchio.DatasetFile(benchio.FORMAT_VERSION, mode, tuple(screens))
    benchio.save_dataset(args.out, ds)
    msg = f"wrote {len(screens)} screens"
    if args.cases:
        cases = gen_grounding_cases(sc, screens, per_screen=args.per_screen)
        benchio.write_text(args.cases, benchio.cases_to_json(cases, ds, mode))
        msg += f" and {len(cases)} grounding cases"
    print(msg)
    return EXIT_OK


def _experiment_config(args):
    from .routedecode.experiment import ExperimentConfig

    fields = {f.name for f in dataclasses.fields(ExperimentConfig)}
    values = {}
    if args.config:
        raw = benchio.read_json(args.config)
        if not isinstance(raw, dict):
            raise FormatError("config must be a JSON object", args.config, "$")
        unknown = sorted(set(raw) - fields)
        if unknown:
            raise FormatError(f"unknown config field(s) {', '.join(unknown)}", args.config)
        values.update(raw)
    for name in fields:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    try:
        cfg = ExperimentConfig(**values)
        cfg.model_config("continuous")
        cfg.model_config("discrete")
        cfg.train_config()
    except (ValueError, TypeError) as exc:
        raise FormatError(f"invalid experiment settings: {exc}", args.config) from exc
    return cfg


def _cmd_train_toy(args) -> int:
    from .routedecode.experiment import train_decoder
    from .routedecode.model import save_model

    cfg = _experiment_config(args)
    res = train_decoder(cfg, args.decoder)
    try:
        save_model(args.out, res.model)
    except OSError as exc:
        raise benchio.ReadError(f"cannot write checkpoint: {exc}", args.out) from exc
    if args.history:
        benchio.write_text(args.history, benchio.report_to_json({"loss": res.history}))
    print(f"trained {args.decoder} decoder for {len(res.history)} steps; "
          f"final loss {res.history[-1]:.4f}" if res.history else "no steps run")
    return EXIT_OK


def _load(path: Optional[str]):
    from .routedecode.model import load_model

    if path is None:
        return None
    try:
        return load_model(path)
    except OSError as exc:
        raise benchio.ReadError(f"cannot read checkpoint: {exc}", path) from exc
    except ValueError as exc:
        raise FormatError(str(exc), path) from exc


def _cmd_compare(args) -> int:
    from .routedecode.experiment import compare_decoders, format_table, without_timing

    if not args.train and not (args.continuous and args.discrete):
        raise FormatError("give --train, or both --continuous and --discrete checkpoints")
    cfg = _experiment_config(args)
    cont, disc = _load(args.continuous), _load(args.discrete)
    try:
        report = compare_decoders(cfg, cont, disc)
    except ValueError as exc:
        raise FormatError(str(exc)) from exc
    if args.no_timing:
        report = without_timing(report)
    table = format_table(report) + "\n"
    if args.out:
        benchio.write_text(args.out, benchio.report_to_json(report))
    if args.table:
        benchio.write_text(args.table, table)
    sys.stdout.write(table)
    return EXIT_OK


_COMMANDS = {
    "eval-parse": _cmd_eval_parse,
    "eval-ground": _cmd_eval_ground,
    "validate": _cmd_validate,
    "nms": _cmd_nms,
    "match": _cmd_match,
    "synth-gen": _cmd_synth_gen,
    "train-toy": _cmd_train_toy,
    "compare-decoders": _cmd_compare,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.verb](args)
    except BenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
