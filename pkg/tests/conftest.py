from __future__ import annotations

import numpy as np
import pytest

from mfstackelberg.cascade import run_cascade
from mfstackelberg.fv import PeriodicGrid1D, TimeSeries
from mfstackelberg.optimize import optimize
from mfstackelberg.problem import paper_spec


@pytest.fixture(scope="session")
def paper():
    return paper_spec()


@pytest.fixture(scope="session")
def coarse():
    """Paper setup on a coarse grid, cheap enough for per-test cascades."""
    return paper_spec(n_xi=100, n_t=40)


@pytest.fixture(scope="session")
def coarse_cascade(coarse):
    v = TimeSeries.sample(coarse.v0, coarse.times)
    return v, run_cascade(coarse, v)


@pytest.fixture(scope="session")
def paper_cascade(paper):
    v = TimeSeries.sample(paper.v0, paper.times)
    return v, run_cascade(paper, v)


@pytest.fixture(scope="session")
def paper_optimum(paper):
    return optimize(paper)


@pytest.fixture
def grid8():
    return PeriodicGrid1D(0.0, 2.0, 8)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# --------------------------------------------------------------------------
# acceptance reporting: one pass/fail line per criterion
# --------------------------------------------------------------------------

_CRITERIA: dict[str, list] = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    label = getattr(report, "criterion", None)
    if label is None:
        return
    entry = _CRITERIA.setdefault(label[0], [label[1], True])
    entry[1] = entry[1] and report.outcome == "passed"


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        outcome.get_result().criterion = marker.args


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_CRITERIA, key=lambda s: (len(s), s)):
        text, ok = _CRITERIA[label]
        terminalreporter.write_line(f"criterion {label:>3}: {'PASS' if ok else 'FAIL'}  {text}")
