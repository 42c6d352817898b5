import datetime as dt
import re

import numpy as np
import pandas as pd
import pytest

from aqicast.table import DataTable

_CRITERION = re.compile(r"test_acceptance\.py::test_criterion_(\d+)")
_outcomes: dict[int, str] = {}


def make_table(rows, **kwargs) -> DataTable:
    """rows: iterable of dicts with at least Station and Date."""
    frame = pd.DataFrame(list(rows))
    if "State" not in frame:
        frame.insert(0, "State", "S")
    if "City" not in frame:
        frame.insert(1, "City", "C")
    return DataTable(frame, **kwargs)


def daily(station, start, values: dict, state="S", city="C"):
    """Rows for one station on consecutive days; values maps column -> list."""
    n = len(next(iter(values.values())))
    start = dt.date.fromisoformat(start) if isinstance(start, str) else start
    return [
        {"State": state, "City": city, "Station": station, "Date": start + dt.timedelta(days=i),
         **{c: v[i] for c, v in values.items()}}
        for i in range(n)
    ]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m:
        return
    k = int(m.group(1))
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        state = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        if _outcomes.get(k) != "FAIL":
            _outcomes[k] = state


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_outcomes):
        terminalreporter.write_line(f"criterion {k:2d}: {_outcomes[k]}")
