import time
from pathlib import Path

import pytest

from vok.project import load_project

ROOT = Path(__file__).resolve().parent.parent
CORPUS = ROOT / "corpus" / "train"
LISTINGS = Path(__file__).resolve().parent / "fixtures" / "listings"
SUITE_LIMIT = 300.0

CRITERIA: dict = {}  # criterion number -> (verdict, title, note)
TIMINGS: dict = {}  # machine -> seconds spent in its shared exploration
_START = time.perf_counter()


@pytest.fixture(scope="session")
def corpus_dir():
    return CORPUS


@pytest.fixture(scope="session")
def proj():
    """One project for the whole session so explorations are shared."""
    return load_project(CORPUS)


@pytest.fixture
def fresh_proj():
    return load_project(CORPUS)


@pytest.fixture(scope="session")
def routes_space(proj):
    start = time.perf_counter()
    ss = proj.explore("train_routes")
    TIMINGS["train_routes"] = time.perf_counter() - start
    return ss


@pytest.fixture(scope="session")
def concrete_space(proj):
    return proj.explore("train_1_routes")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    elapsed = time.perf_counter() - _START
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(CRITERIA):
            verdict, title, note = CRITERIA[n]
            terminalreporter.write_line(f"criterion {n}: {verdict}  {title} ({note})")
        terminalreporter.write_line(f"suite time: {elapsed:.1f}s (limit {SUITE_LIMIT:.0f}s)"
                                    + ("" if elapsed < SUITE_LIMIT else "  FAIL"))


def pytest_sessionfinish(session, exitstatus):
    if CRITERIA and time.perf_counter() - _START >= SUITE_LIMIT and exitstatus == 0:
        session.exitstatus = 1
