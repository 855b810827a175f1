from __future__ import annotations

import time
from dataclasses import dataclass

import pytest

from guiparse.routedecode.experiment import ExperimentConfig, Split, compare_decoders, make_split, train_decoder
from guiparse.routedecode.train import TrainResult

_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by the test")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture
def record(request):
    """``record(ok, detail)`` logs one PASS/FAIL line for the test's criterion.

    A test that ends without recording (it raised first) is logged as FAIL.
    """
    marker = request.node.get_closest_marker("criterion")
    number, title = marker.args
    lines = request.config.stash[_ACCEPTANCE]
    done = []

    def _record(ok: bool, detail: str = "") -> bool:
        line = f"{'PASS' if ok else 'FAIL'}  {number}. {title}" + (f": {detail}" if detail else "")
        print(line)
        lines.append((number, line))
        done.append(ok)
        return ok

    yield _record
    if not done:
        lines.append((number, f"FAIL  {number}. {title}: raised before completing"))


@dataclass
class DefaultRun:
    config: ExperimentConfig
    split: Split
    continuous: TrainResult
    discrete: TrainResult
    report: dict
    seconds: float


@pytest.fixture(scope="session")
def default_run() -> DefaultRun:
    """The default decoder comparison: both models trained for the full
    default schedule on the default corpus, then evaluated."""
    cfg = ExperimentConfig()
    t0 = time.perf_counter()
    split = make_split(cfg)
    cont = train_decoder(cfg, "continuous", split)
    disc = train_decoder(cfg, "discrete", split)
    report = compare_decoders(cfg, cont.model, disc.model, split)
    return DefaultRun(cfg, split, cont, disc, report, time.perf_counter() - t0)
