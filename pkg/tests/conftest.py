import itertools
import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from jdtrack import kernels
from jdtrack.kernels import _numpy

settings.register_profile("default", deadline=None, max_examples=100,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")

try:
    from jdtrack.kernels import _numba
except ImportError:  # pragma: no cover - numba not installed
    _numba = None

BACKENDS = {"numpy": _numpy}
if _numba is not None:
    BACKENDS["numba"] = _numba

_EXPORTED = [n for n in kernels.__all__ if n not in ("BACKEND", "NUMBA_DISABLED", "warm_up")]


@pytest.fixture(params=sorted(BACKENDS))
def backend(request, monkeypatch):
    """Route every kernel call through one backend for the duration of a test."""
    impl = BACKENDS[request.param]
    for name in _EXPORTED:
        monkeypatch.setattr(kernels, name, getattr(impl, name))
    return request.param


def brute_force_assignment(cost):
    """Exhaustive minimum over all injective row->col maps (rows <= cols assumed
    after transposition). Returns (total, pairs) with the lexicographically
    smallest optimal pairing."""
    cost = np.asarray(cost, dtype=np.float64)
    rows, cols = cost.shape
    if rows == 0 or cols == 0:
        return 0.0, []
    if rows <= cols:
        perms = np.array(list(itertools.permutations(range(cols), rows)))
        totals = cost[np.arange(rows), perms].sum(axis=1)
        best = int(np.argmin(totals))
        return totals[best], [(i, int(perms[best, i])) for i in range(rows)]
    perms = np.array(list(itertools.permutations(range(rows), cols)))
    totals = cost[perms, np.arange(cols)].sum(axis=1)
    best_total = totals.min()
    # lexicographic on (row, col) pairs sorted by row
    candidates = [sorted((int(perms[k, j]), j) for j in range(cols))
                  for k in np.flatnonzero(totals == best_total)]
    return best_total, min(candidates)


def matched_total(cost, pairs):
    cost = np.asarray(cost, dtype=np.float64)
    if not pairs:
        return 0.0
    rows, cols = (np.array(x) for x in zip(*sorted(pairs)))
    if cost.shape[0] <= cost.shape[1]:
        return cost[rows, cols].sum()
    order = np.argsort(cols)
    return cost[rows[order], cols[order]].sum()


# -- acceptance report --------------------------------------------------------

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (report.when != "call" and report.passed):
        return
    number, title = marker.args
    status = "PASS" if report.passed else "SKIP" if report.skipped else "FAIL"
    prev = _CRITERIA.get(number, (title, "PASS", ""))[1]
    if prev != "PASS":
        status = prev
    note = getattr(item, "criterion_note", "")
    _CRITERIA[number] = (title, status, note)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, status, note = _CRITERIA[number]
        line = f"[{status}] {number:2d}. {title}"
        terminalreporter.write_line(line + (f"  ({note})" if note else ""))
