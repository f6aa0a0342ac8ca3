from __future__ import annotations

import hypothesis.strategies as st
import pytest
from hypothesis import settings

from outagekit.ingest import DeviceType, FailureRecord

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def rec(rid, occ, rest, customers=1, storm=False, device=DeviceType.OTHER) -> FailureRecord:
    return FailureRecord(str(rid), occ, rest, customers, device, major_storm=storm)


@st.composite
def record_lists(draw, min_size=1, max_size=30, max_time=500, storm=False):
    n = draw(st.integers(min_size, max_size))
    out = []
    for i in range(n):
        occ = draw(st.integers(0, max_time))
        dur = draw(st.integers(0, max_time))
        size = draw(st.integers(1, 5000))
        out.append(rec(f"r{i}", occ, occ + dur, size, storm))
    return out


@pytest.fixture
def small_event():
    return [
        rec("a", 0, 30, 500),
        rec("b", 5, 15, 20),
        rec("c", 10, 100, 3),
        rec("d", 40, 60, 150),
    ]


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
