"""Dataset, prediction, grounding-case and answer files; evaluation runs; reports.

All files are UTF-8 JSON carrying ``version`` and ``coordinate_mode``
(``normalized`` or ``pixels``). Schemas are described in docs/formats.md.
In memory everything is normalized. Writers emit a canonical layout with
coordinates at six decimals, so load -> save -> load is stable.

Errors carry the file, a location (``line N col M`` for malformed JSON, a
JSON path such as ``screens[3].elements[0].box`` otherwise) and the id of
the screen or case involved.
"""

from __future__ import annotations

import dataclasses
import enum
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Optional, Sequence, Union

from .core import (
    BBox,
    Element,
    EvalConfig,
    GroundingCase,
    Kind,
    Language,
    Platform,
    Point,
    Screen,
    ValidationError,
    validate_screen,
)
from .metrics import (
    REJECT,
    GroundingAnswer,
    GroundingReport,
    ParseReport,
    Reject,
    SplitSummary,
    aggregate,
    grounding_accuracy,
    parse_metrics,
)

FORMAT_VERSION = "1.0"
SUPPORTED_VERSIONS = ("1.0",)
WORKERS_ENV = "GUIPARSE_WORKERS"

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_IO = 2


class CoordinateMode(str, enum.Enum):
    NORMALIZED = "normalized"
    PIXELS = "pixels"


class BenchError(Exception):
    """A file could not be used. ``exit_code`` is what the CLI returns."""

    exit_code = EXIT_INVALID

    def __init__(self, message: str, path: Optional[str] = None, location: str = "", subject: str = ""):
        self.message = message
        self.path = path
        self.location = location
        self.subject = subject
        super().__init__(str(self))

    def __str__(self) -> str:
        where = ":".join(p for p in (str(self.path) if self.path else "", self.location) if p)
        who = f" [{self.subject}]" if self.subject else ""
        return f"{where}{who}: {self.message}" if where else f"{self.message}{who}"


class FormatError(BenchError):
    exit_code = EXIT_INVALID


class ReadError(BenchError):
    exit_code = EXIT_IO


# -- JSON plumbing ------------------------------------------------------------------

def _reject_constant(name: str):
    raise ValueError(f"non-finite number {name} is not allowed")


def read_json(path) -> Any:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ReadError(f"cannot read file: {exc}", str(path)) from exc
    try:
        return json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise FormatError(f"malformed JSON: {exc.msg}", str(path), f"line {exc.lineno} col {exc.colno}") from exc
    except ValueError as exc:
        raise FormatError(str(exc), str(path)) from exc


def write_text(path, text: str) -> None:
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise ReadError(f"cannot write file: {exc}", str(path)) from exc


class _Ctx:
    """Error factory bound to one file and one subject id."""

    def __init__(self, path: Optional[str], subject: str = ""):
        self.path = path
        self.subject = subject

    def about(self, subject: str) -> "_Ctx":
        return _Ctx(self.path, subject)

    def fail(self, loc: str, message: str) -> FormatError:
        return FormatError(message, self.path, loc, self.subject)

    def obj(self, value, loc: str, required: Sequence[str], optional: Sequence[str] = ()) -> dict:
        if not isinstance(value, dict):
            raise self.fail(loc, "expected an object")
        missing = [k for k in required if k not in value]
        if missing:
            raise self.fail(loc, f"missing field(s) {', '.join(missing)}")
        unknown = sorted(set(value) - set(required) - set(optional))
        if unknown:
            raise self.fail(loc, f"unknown field(s) {', '.join(unknown)}")
        return value

    def string(self, value, loc: str) -> str:
        if not isinstance(value, str) or not value:
            raise self.fail(loc, "expected a non-empty string")
        return value

    def number(self, value, loc: str) -> float:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise self.fail(loc, "expected a finite number")
        return float(value)

    def integer(self, value, loc: str) -> int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise self.fail(loc, "expected an integer")
        return value

    def array(self, value, loc: str, length: Optional[int] = None) -> list:
        if not isinstance(value, list):
            raise self.fail(loc, "expected an array")
        if length is not None and len(value) != length:
            raise self.fail(loc, f"expected {length} entries, got {len(value)}")
        return value

    def enum(self, cls, value, loc: str):
        try:
            return cls(value)
        except ValueError:
            raise self.fail(loc, f"expected one of {[m.value for m in cls]}, got {value!r}") from None


def _header(doc, ctx: _Ctx, body: str, optional: Sequence[str] = ()) -> CoordinateMode:
    ctx.obj(doc, "$", ["version", "coordinate_mode", body], optional)
    if doc["version"] not in SUPPORTED_VERSIONS:
        raise ctx.fail("version", f"unsupported version {doc['version']!r} (known: {', '.join(SUPPORTED_VERSIONS)})")
    return ctx.enum(CoordinateMode, doc["coordinate_mode"], "coordinate_mode")


def _fmt(v: float) -> str:
    s = f"{v:.6f}"
    return "0.000000" if s == "-0.000000" else s


def _box_out(box: BBox, mode: CoordinateMode, width: int, height: int) -> str:
    x1, y1, x2, y2 = box.as_tuple()
    if mode == CoordinateMode.PIXELS:
        x1, x2, y1, y2 = x1 * width, x2 * width, y1 * height, y2 * height
    return "[" + ", ".join(_fmt(v) for v in (x1, y1, x2, y2)) + "]"


def _box_in(raw, ctx: _Ctx, loc: str, mode: CoordinateMode, width: int, height: int) -> BBox:
    vals = [ctx.number(v, f"{loc}[{i}]") for i, v in enumerate(ctx.array(raw, loc, 4))]
    if mode == CoordinateMode.PIXELS:
        return BBox.from_pixels(vals, width, height)
    return BBox(*vals)


def _s(v: str) -> str:
    return json.dumps(v, ensure_ascii=False)


# -- datasets -------------------------------------------------------------------------

@dataclass(frozen=True)
class DatasetFile:
    version: str
    coordinate_mode: CoordinateMode
    screens: tuple[Screen, ...]

    def by_id(self) -> dict[str, Screen]:
        return {s.id: s for s in self.screens}


_SCREEN_FIELDS = ("id", "width_px", "height_px", "platform", "language", "elements")


def _parse_element(raw, ctx: _Ctx, loc: str, mode: CoordinateMode, screen_w: int, screen_h: int, extra=()):
    ctx.obj(raw, loc, ["kind", "semantics", "box"], ["score", *extra])
    kind = ctx.enum(Kind, raw["kind"], f"{loc}.kind")
    sem = raw["semantics"]
    if not isinstance(sem, str):
        raise ctx.fail(f"{loc}.semantics", "expected a string")
    box = _box_in(raw["box"], ctx, f"{loc}.box", mode, screen_w, screen_h)
    score = ctx.number(raw["score"], f"{loc}.score") if raw.get("score") is not None else None
    el = Element(kind, sem, box, score)
    bad = el.violations()
    if bad:
        raise ctx.fail(loc, "; ".join(bad))
    return el


def parse_dataset(doc, path: Optional[str] = None) -> DatasetFile:
    ctx = _Ctx(path)
    mode = _header(doc, ctx, "screens")
    screens, seen = [], set()
    for i, raw in enumerate(ctx.array(doc["screens"], "screens")):
        loc = f"screens[{i}]"
        sid = raw.get("id") if isinstance(raw, dict) else None
        sc = ctx.about(f"screen {sid}" if isinstance(sid, str) else f"screen #{i}")
        sc.obj(raw, loc, _SCREEN_FIELDS)
        sid = sc.string(raw["id"], f"{loc}.id")
        if sid in seen:
            raise sc.fail(f"{loc}.id", f"duplicate screen id {sid!r}")
        seen.add(sid)
        w = sc.integer(raw["width_px"], f"{loc}.width_px")
        h = sc.integer(raw["height_px"], f"{loc}.height_px")
        if w <= 0 or h <= 0:
            raise sc.fail(loc, "width_px and height_px must be positive")
        platform = sc.enum(Platform, raw["platform"], f"{loc}.platform")
        language = sc.enum(Language, raw["language"], f"{loc}.language")
        elements = tuple(
            _parse_element(e, sc, f"{loc}.elements[{j}]", mode, w, h)
            for j, e in enumerate(sc.array(raw["elements"], f"{loc}.elements"))
        )
        screen = Screen(sid, w, h, platform, language, elements)
        problems = validate_screen(screen)
        if problems:
            raise sc.fail(f"{loc}.{problems[0].field}", "; ".join(f"{v.field}: {v.rule}" for v in problems))
        screens.append(screen)
    return DatasetFile(doc["version"], mode, tuple(screens))


def load_dataset(path) -> DatasetFile:
    return parse_dataset(read_json(path), str(path))


def _element_line(el: Element, mode: CoordinateMode, w: int, h: int, extra: str = "") -> str:
    parts = [f'"kind": {_s(el.kind.value)}', f'"semantics": {_s(el.semantics)}', f'"box": {_box_out(el.box, mode, w, h)}']
    if el.score is not None:
        parts.append(f'"score": {_fmt(el.score)}')
    if extra:
        parts.append(extra)
    return "{" + ", ".join(parts) + "}"


def _block(items: list[str], indent: str) -> str:
    if not items:
        return "[]"
    return "[\n" + ",\n".join(indent + "  " + it for it in items) + "\n" + indent + "]"


def _doc(mode: CoordinateMode, key: str, body: str) -> str:
    return (
        "{\n"
        f'  "version": {_s(FORMAT_VERSION)},\n'
        f'  "coordinate_mode": {_s(mode.value)},\n'
        f'  "{key}": {body}\n'
        "}\n"
    )


def dataset_to_json(ds: Union[DatasetFile, Sequence[Screen]], mode: Optional[CoordinateMode] = None) -> str:
    """Canonical text: fixed field order, one element per line, six decimals."""
    if isinstance(ds, DatasetFile):
        screens, mode = ds.screens, mode or ds.coordinate_mode
    else:
        screens, mode = tuple(ds), mode or CoordinateMode.NORMALIZED
    mode = CoordinateMode(mode)
    blocks = []
    for s in screens:
        els = [_element_line(e, mode, s.width_px, s.height_px) for e in s.elements]
        head = (
            f'"id": {_s(s.id)}, "width_px": {s.width_px}, "height_px": {s.height_px}, '
            f'"platform": {_s(s.platform.value)}, "language": {_s(s.language.value)}'
        )
        blocks.append("{" + head + ', "elements": ' + _block(els, "    ") + "}")
    return _doc(mode, "screens", _block(blocks, "  "))


def save_dataset(path, ds, mode: Optional[CoordinateMode] = None) -> None:
    write_text(path, dataset_to_json(ds, mode))


# -- parse predictions ----------------------------------------------------------------

@dataclass(frozen=True)
class PredictionFile:
    coordinate_mode: CoordinateMode
    predictions: dict[str, tuple[Element, ...]]
    # per-screen decode times aligned with the elements; None when not given
    times: dict[str, Optional[tuple[float, ...]]] = field(default_factory=dict)


def parse_predictions(doc, dataset: DatasetFile, path: Optional[str] = None) -> PredictionFile:
    """Every key must be a screen of ``dataset``; per element ``time`` is
    optional but must be given for all elements of a screen or none."""
    ctx = _Ctx(path)
    mode = _header(doc, ctx, "predictions")
    raw_preds = doc["predictions"]
    if not isinstance(raw_preds, dict):
        raise ctx.fail("predictions", "expected an object keyed by screen id")
    screens = dataset.by_id()
    unknown = sorted(k for k in raw_preds if k not in screens)
    if unknown:
        raise ctx.fail("predictions", f"screen id(s) not in the dataset: {', '.join(unknown)}")
    preds, times = {}, {}
    for sid in sorted(raw_preds):
        sc = ctx.about(f"screen {sid}")
        loc = f"predictions[{json.dumps(sid, ensure_ascii=False)}]"
        screen = screens[sid]
        els, ts = [], []
        for j, raw in enumerate(sc.array(raw_preds[sid], loc)):
            el = _parse_element(raw, sc, f"{loc}[{j}]", mode, screen.width_px, screen.height_px, extra=("time",))
            els.append(el)
            if raw.get("time") is not None:
                t = sc.number(raw["time"], f"{loc}[{j}].time")
                if t < 0:
                    raise sc.fail(f"{loc}[{j}].time", "must be >= 0")
                ts.append(t)
        if ts and len(ts) != len(els):
            raise sc.fail(loc, "decode times must be given for every element or for none")
        preds[sid] = tuple(els)
        times[sid] = tuple(ts) if ts else None
    return PredictionFile(mode, preds, times)


def load_predictions(path, dataset: DatasetFile) -> PredictionFile:
    return parse_predictions(read_json(path), dataset, str(path))


def predictions_to_json(
    predictions: Mapping[str, Sequence[Element]],
    dataset: DatasetFile,
    times: Optional[Mapping[str, Optional[Sequence[float]]]] = None,
    mode: CoordinateMode = CoordinateMode.NORMALIZED,
) -> str:
    screens = dataset.by_id()
    mode = CoordinateMode(mode)
    entries = []
    for sid in sorted(predictions):
        s = screens[sid]
        ts = (times or {}).get(sid)
        lines = [
            _element_line(e, mode, s.width_px, s.height_px, f'"time": {_fmt(ts[j])}' if ts else "")
            for j, e in enumerate(predictions[sid])
        ]
        entries.append(f"{_s(sid)}: " + _block(lines, "    "))
    body = "{}" if not entries else "{\n" + ",\n".join("    " + e for e in entries) + "\n  }"
    return _doc(mode, "predictions", body)


# -- grounding cases and answers ---------------------------------------------------------

def parse_cases(doc, dataset: DatasetFile, path: Optional[str] = None) -> list[GroundingCase]:
    """Cases need unique ids and must reference screens of ``dataset``.
    ``target`` is a box or null (the label does not exist on the screen)."""
    ctx = _Ctx(path)
    mode = _header(doc, ctx, "cases")
    screens = dataset.by_id()
    out, seen = [], set()
    for i, raw in enumerate(ctx.array(doc["cases"], "cases")):
        loc = f"cases[{i}]"
        cid = raw.get("id") if isinstance(raw, dict) else None
        cc = ctx.about(f"case {cid}" if isinstance(cid, str) else f"case #{i}")
        cc.obj(raw, loc, ["id", "screen_id", "query", "target"], ["kind"])
        cid = cc.string(raw["id"], f"{loc}.id")
        if cid in seen:
            raise cc.fail(f"{loc}.id", f"duplicate case id {cid!r}")
        seen.add(cid)
        sid = cc.string(raw["screen_id"], f"{loc}.screen_id")
        if sid not in screens:
            raise cc.fail(f"{loc}.screen_id", f"screen {sid!r} is not in the dataset")
        query = cc.string(raw["query"], f"{loc}.query")
        s = screens[sid]
        target = None
        if raw["target"] is not None:
            target = _box_in(raw["target"], cc, f"{loc}.target", mode, s.width_px, s.height_px)
            bad = target.violations()
            if bad:
                raise cc.fail(f"{loc}.target", "; ".join(bad))
        kind = cc.enum(Kind, raw["kind"], f"{loc}.kind") if raw.get("kind") is not None else None
        out.append(GroundingCase(sid, query, target, cid, kind))
    return out


def load_cases(path, dataset: DatasetFile) -> list[GroundingCase]:
    return parse_cases(read_json(path), dataset, str(path))


def cases_to_json(cases: Sequence[GroundingCase], dataset: DatasetFile, mode: CoordinateMode = CoordinateMode.NORMALIZED) -> str:
    screens = dataset.by_id()
    mode = CoordinateMode(mode)
    lines = []
    for c in cases:
        s = screens[c.screen_id]
        target = "null" if c.target is None else _box_out(c.target, mode, s.width_px, s.height_px)
        parts = [f'"id": {_s(c.id)}', f'"screen_id": {_s(c.screen_id)}', f'"query": {_s(c.query)}', f'"target": {target}']
        if c.kind is not None:
            parts.append(f'"kind": {_s(c.kind.value)}')
        lines.append("{" + ", ".join(parts) + "}")
    return _doc(mode, "cases", _block(lines, "  "))


@dataclass(frozen=True)
class AnswerFile:
    coordinate_mode: CoordinateMode
    answers: dict[str, GroundingAnswer]
    times: dict[str, float] = field(default_factory=dict)


def parse_answers(doc, cases: Sequence[GroundingCase], dataset: DatasetFile, path: Optional[str] = None) -> AnswerFile:
    """Answers are keyed by case id: ``{"box": [...]}``, ``{"point": [x, y]}``
    or ``{"reject": true}``, each optionally with ``"time"`` in seconds."""
    ctx = _Ctx(path)
    mode = _header(doc, ctx, "answers")
    raw_all = doc["answers"]
    if not isinstance(raw_all, dict):
        raise ctx.fail("answers", "expected an object keyed by case id")
    by_case = {c.id: c for c in cases}
    unknown = sorted(k for k in raw_all if k not in by_case)
    if unknown:
        raise ctx.fail("answers", f"case id(s) not in the case file: {', '.join(unknown)}")
    screens = dataset.by_id()
    answers, times = {}, {}
    for cid in sorted(raw_all):
        cc = ctx.about(f"case {cid}")
        loc = f"answers[{json.dumps(cid, ensure_ascii=False)}]"
        raw = cc.obj(raw_all[cid], loc, [], ["box", "point", "reject", "time"])
        forms = [k for k in ("box", "point", "reject") if k in raw]
        if len(forms) != 1:
            raise cc.fail(loc, "exactly one of box, point, reject is required")
        s = screens[by_case[cid].screen_id]
        if forms[0] == "reject":
            if raw["reject"] is not True:
                raise cc.fail(f"{loc}.reject", "must be true")
            ans: GroundingAnswer = REJECT
        elif forms[0] == "box":
            ans = _box_in(raw["box"], cc, f"{loc}.box", mode, s.width_px, s.height_px)
            bad = ans.violations()
            if bad:
                raise cc.fail(f"{loc}.box", "; ".join(bad))
        else:
            xy = [cc.number(v, f"{loc}.point[{i}]") for i, v in enumerate(cc.array(raw["point"], f"{loc}.point", 2))]
            if mode == CoordinateMode.PIXELS:
                xy = [xy[0] / s.width_px, xy[1] / s.height_px]
            ans = Point(*xy)
            bad = ans.violations()
            if bad:
                raise cc.fail(f"{loc}.point", "; ".join(bad))
        answers[cid] = ans
        if raw.get("time") is not None:
            t = cc.number(raw["time"], f"{loc}.time")
            if t < 0:
                raise cc.fail(f"{loc}.time", "must be >= 0")
            times[cid] = t
    return AnswerFile(mode, answers, times)


def load_answers(path, cases: Sequence[GroundingCase], dataset: DatasetFile) -> AnswerFile:
    return parse_answers(read_json(path), cases, dataset, str(path))


def answers_to_json(
    answers: Mapping[str, GroundingAnswer],
    cases: Sequence[GroundingCase],
    dataset: DatasetFile,
    times: Optional[Mapping[str, float]] = None,
    mode: CoordinateMode = CoordinateMode.NORMALIZED,
) -> str:
    screens = dataset.by_id()
    sid_of = {c.id: c.screen_id for c in cases}
    mode = CoordinateMode(mode)
    entries = []
    for cid in sorted(answers):
        a = answers[cid]
        s = screens[sid_of[cid]]
        if isinstance(a, Reject):
            body = '"reject": true'
        elif isinstance(a, Point):
            x, y = (a.x * s.width_px, a.y * s.height_px) if mode == CoordinateMode.PIXELS else (a.x, a.y)
            body = f'"point": [{_fmt(x)}, {_fmt(y)}]'
        else:
            body = f'"box": {_box_out(a, mode, s.width_px, s.height_px)}'
        if times and cid in times:
            body += f', "time": {_fmt(times[cid])}'
        entries.append(f"{_s(cid)}: {{{body}}}")
    inner = "{}" if not entries else "{\n" + ",\n".join("    " + e for e in entries) + "\n  }"
    return _doc(mode, "answers", inner)


# -- evaluation config ---------------------------------------------------------------------

_CONFIG_FIELDS = {f.name for f in dataclasses.fields(EvalConfig)}


def eval_config(raw: Optional[Mapping[str, Any]] = None, overrides: Optional[Mapping[str, Any]] = None,
                path: Optional[str] = None) -> EvalConfig:
    """Config from a file's object, then flag overrides (which win)."""
    merged = dict(raw or {})
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    unknown = sorted(set(merged) - _CONFIG_FIELDS)
    if unknown:
        raise FormatError(f"unknown config field(s) {', '.join(unknown)}", path)
    try:
        return EvalConfig(**merged)
    except (ValidationError, ValueError, TypeError) as exc:
        raise FormatError(f"invalid config: {exc}", path) from exc


def load_eval_config(path=None, overrides: Optional[Mapping[str, Any]] = None) -> EvalConfig:
    raw = None
    if path is not None:
        raw = read_json(path)
        if not isinstance(raw, dict):
            raise FormatError("config must be a JSON object", str(path), "$")
    return eval_config(raw, overrides, str(path) if path else None)


def config_dict(cfg: EvalConfig) -> dict:
    return {k: (v.value if isinstance(v, enum.Enum) else v) for k, v in dataclasses.asdict(cfg).items()}


def worker_count(env: Optional[Mapping[str, str]] = None) -> int:
    """Evaluation workers from ``GUIPARSE_WORKERS`` (unset = 1, 0 = one per CPU)."""
    raw = (os.environ if env is None else env).get(WORKERS_ENV)
    if raw is None or raw.strip() == "":
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise FormatError(f"{WORKERS_ENV} must be a non-negative integer, got {raw!r}") from None
    if n < 0:
        raise FormatError(f"{WORKERS_ENV} must be a non-negative integer, got {raw!r}")
    return n or (os.cpu_count() or 1)


def _map(fn: Callable, items: Sequence, workers: int) -> list:
    """Ordered map; results come back in input order whatever the workers do."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# -- reports -----------------------------------------------------------------------------------

def report_to_json(report: Mapping) -> str:
    return json.dumps(report, sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def load_report(path) -> dict:
    doc = read_json(path)
    if not isinstance(doc, dict):
        raise FormatError("report must be a JSON object", str(path), "$")
    return doc


def _summary_dict(s: SplitSummary, timing: bool) -> dict:
    def avg(a):
        return {
            "recall": a.recall,
            "precision": a.precision,
            "semantic_similarity": a.semantic_similarity,
            "time_per_element": a.time_per_element if timing else None,
        }

    return {
        "screens": s.screens,
        "gt_count": s.gt_count,
        "pred_count": s.pred_count,
        "matched_count": s.matched_count,
        "micro": avg(s.micro),
        "macro": avg(s.macro),
    }


def parse_report_dict(reports: Sequence[ParseReport], cfg: EvalConfig, missing: Sequence[str] = (),
                      timing: bool = True) -> dict:
    summary = aggregate(reports)
    return {
        "kind": "parse",
        "version": FORMAT_VERSION,
        "config": config_dict(cfg),
        "overall": _summary_dict(summary.overall, timing),
        "splits": {k: _summary_dict(v, timing) for k, v in summary.splits.items()},
        "screens": [
            {
                "id": r.screen_id,
                "recall": r.element_recall,
                "precision": r.element_precision,
                "semantic_similarity": r.mean_semantic_similarity,
                "gt_count": r.gt_count,
                "pred_count": r.pred_count,
                "matched_count": r.matched_count,
                "flags": list(r.flags),
                "time_per_element": r.mean_time_per_element if timing else None,
            }
            for r in reports
        ],
        "missing_screens": list(missing),
    }


def _t(v: Optional[float]) -> str:
    return "-" if v is None else f"{v:.4f}"


def parse_table(report: Mapping) -> str:
    """Aligned text table: one row per split, micro then macro averages."""
    rows = [("overall", report["overall"])] + list(report["splits"].items())
    width = max(len(name) for name, _ in rows) + 2
    lines = []
    for avg in ("micro", "macro"):
        lines.append(f"{avg} averages")
        lines.append(f"{'split':<{width}}{'screens':>8}{'Recall':>9}{'Precision':>11}{'SemanticSim':>13}{'Time(s)':>10}")
        for name, s in rows:
            a = s[avg]
            lines.append(
                f"{name:<{width}}{s['screens']:>8}{a['recall']:>9.4f}{a['precision']:>11.4f}"
                f"{a['semantic_similarity']:>13.4f}{_t(a['time_per_element']):>10}"
            )
        lines.append("")
    if report.get("missing_screens"):
        lines.append(f"screens without predictions (scored as empty): {', '.join(report['missing_screens'])}")
    return "\n".join(lines).rstrip("\n") + "\n"


def grounding_report_dict(rep: GroundingReport, cfg: EvalConfig, missing: Sequence[str] = (),
                          timing: bool = True) -> dict:
    return {
        "kind": "grounding",
        "version": FORMAT_VERSION,
        "config": config_dict(cfg),
        "accuracy": rep.accuracy,
        "correct": rep.correct,
        "total": rep.total,
        "rejection_accuracy": rep.rejection_accuracy,
        "correct_rejects": rep.correct_rejects,
        "absent_count": rep.absent_count,
        "false_positives": rep.false_positives,
        "splits": {k: {"correct": v.correct, "total": v.total, "accuracy": v.accuracy} for k, v in rep.splits.items()},
        "mean_time": rep.mean_time if timing else None,
        "missing_cases": list(missing),
    }


def grounding_table(report: Mapping) -> str:
    rows = [("overall", {"correct": report["correct"], "total": report["total"], "accuracy": report["accuracy"]})]
    rows += list(report["splits"].items())
    width = max(len(n) for n, _ in rows) + 2
    lines = [f"{'split':<{width}}{'correct':>9}{'total':>7}{'Accuracy':>10}"]
    for name, s in rows:
        lines.append(f"{name:<{width}}{s['correct']:>9}{s['total']:>7}{s['accuracy']:>10.4f}")
    rej = report["rejection_accuracy"]
    lines.append(f"rejection accuracy: {'-' if rej is None else f'{rej:.4f}'} "
                 f"({report['correct_rejects']}/{report['absent_count']})")
    lines.append(f"mean time (s): {_t(report['mean_time'])}")
    if report.get("missing_cases"):
        lines.append(f"cases without answers (scored as wrong): {', '.join(report['missing_cases'])}")
    return "\n".join(lines) + "\n"


# -- evaluation runs ---------------------------------------------------------------------------

@dataclass
class EvalOutcome:
    status: int
    report: Optional[dict] = None
    table: str = ""
    errors: list[str] = field(default_factory=list)


def _finish(report: dict, table: str, timing: bool, t0: float, out_json, out_table) -> EvalOutcome:
    if timing:
        report["timing"] = {"eval_seconds": time.perf_counter() - t0}
    if out_json is not None:
        write_text(out_json, report_to_json(report))
    if out_table is not None:
        write_text(out_table, table)
    return EvalOutcome(EXIT_OK, report, table)


def run_parse_eval(
    dataset_path,
    predictions_path,
    config_path=None,
    overrides: Optional[Mapping[str, Any]] = None,
    allow_partial: bool = False,
    timing: bool = True,
    out_json=None,
    out_table=None,
    workers: Optional[int] = None,
) -> EvalOutcome:
    """Parse evaluation from files. Screens missing from the prediction file
    fail the run unless ``allow_partial``, in which case they are scored as
    having no predictions and listed in the report."""
    t0 = time.perf_counter()
    try:
        cfg = load_eval_config(config_path, overrides)
        ds = load_dataset(dataset_path)
        preds = load_predictions(predictions_path, ds)
        missing = [s.id for s in ds.screens if s.id not in preds.predictions]
        if missing and not allow_partial:
            raise FormatError(f"no predictions for screen id(s): {', '.join(missing)}", str(predictions_path))
        n = workers if workers is not None else worker_count()

        def one(screen: Screen) -> ParseReport:
            try:
                return parse_metrics(screen, preds.predictions.get(screen.id, ()), cfg,
                                     preds.times.get(screen.id))
            except ValidationError as exc:
                raise FormatError(str(exc), str(predictions_path), subject=f"screen {screen.id}") from exc

        if not ds.screens:
            raise FormatError("dataset has no screens", str(dataset_path))
        reports = _map(one, list(ds.screens), n)
        report = parse_report_dict(reports, cfg, missing, timing)
        return _finish(report, parse_table(report), timing, t0, out_json, out_table)
    except BenchError as exc:
        return EvalOutcome(exc.exit_code, errors=[str(exc)])


def run_grounding_eval(
    dataset_path,
    cases_path,
    answers_path,
    config_path=None,
    overrides: Optional[Mapping[str, Any]] = None,
    allow_partial: bool = False,
    timing: bool = True,
    out_json=None,
    out_table=None,
) -> EvalOutcome:
    """Grounding evaluation from files. Unanswered cases fail the run unless
    ``allow_partial``, in which case each counts as a wrong answer."""
    t0 = time.perf_counter()
    try:
        cfg = load_eval_config(config_path, overrides)
        ds = load_dataset(dataset_path)
        cases = load_cases(cases_path, ds)
        ans = load_answers(answers_path, cases, ds)
        missing = [c.id for c in cases if c.id not in ans.answers]
        if missing and not allow_partial:
            raise FormatError(f"no answers for case id(s): {', '.join(missing)}", str(answers_path))
        answers = [ans.answers[c.id] if c.id in ans.answers else _wrong_answer(c) for c in cases]
        times = [ans.times[c.id] for c in cases if c.id in ans.times] if ans.times else None
        rep = grounding_accuracy(cases, answers, cfg, screens=ds.by_id(), times=times)
        report = grounding_report_dict(rep, cfg, missing, timing)
        return _finish(report, grounding_table(report), timing, t0, out_json, out_table)
    except BenchError as exc:
        return EvalOutcome(exc.exit_code, errors=[str(exc)])


# a stand-in answer that is incorrect for the case whatever its target
def _wrong_answer(case: GroundingCase) -> GroundingAnswer:
    return REJECT if case.target is not None else BBox(0.0, 0.0, 1.0, 1.0)


def validate_files(dataset_path, predictions_path=None, cases_path=None, answers_path=None) -> EvalOutcome:
    """Load and check every given file; the report lists what was read."""
    try:
        ds = load_dataset(dataset_path)
        info = {"screens": len(ds.screens), "elements": sum(len(s.elements) for s in ds.screens)}
        if predictions_path is not None:
            p = load_predictions(predictions_path, ds)
            info["predicted_screens"] = len(p.predictions)
        if cases_path is not None:
            cases = load_cases(cases_path, ds)
            info["cases"] = len(cases)
            if answers_path is not None:
                info["answers"] = len(load_answers(answers_path, cases, ds).answers)
        elif answers_path is not None:
            raise FormatError("answers can only be checked together with their case file", str(answers_path))
        return EvalOutcome(EXIT_OK, info, "".join(f"{k}: {v}\n" for k, v in info.items()))
    except BenchError as exc:
        return EvalOutcome(exc.exit_code, errors=[str(exc)])
