"""Severity classes, pending-repair counts and the two-stage event split."""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import OutageError
from .ingest import FailureRecord

DEFAULT_STEP = 10
MODERATE_FLOOR = 100
EXTREME_FLOOR = 1373


class SeverityClass(str, enum.Enum):
    MODERATE = "Moderate"
    SEVERE = "Severe"
    EXTREME = "Extreme"
    SPORADIC = "Sporadic"


@dataclass(frozen=True)
class PendingSeries:
    """Number of failures waiting for repair, sampled on a uniform grid.

    ``peak_time``/``peak_value`` come from an exact sweep over interval
    endpoints, so they do not depend on the sampling step.
    """

    time_grid: np.ndarray
    counts: np.ndarray
    peak_time: int
    peak_value: int

    @property
    def step(self) -> int:
        return int(self.time_grid[1] - self.time_grid[0]) if len(self.time_grid) > 1 else 0


@dataclass(frozen=True)
class StagePartition:
    stage1_ids: frozenset[str]
    stage2_ids: frozenset[str]
    split_time: int


@dataclass(frozen=True)
class FailureEvent:
    event_id: str
    records: tuple[FailureRecord, ...]
    severity: SeverityClass
    partition: StagePartition
    pending: PendingSeries

    @property
    def major_storm(self) -> bool:
        return self.records[0].major_storm

    @property
    def stage1_records(self) -> list[FailureRecord]:
        ids = self.partition.stage1_ids
        return [r for r in self.records if r.record_id in ids]

    @property
    def stage2_records(self) -> list[FailureRecord]:
        ids = self.partition.stage2_ids
        return [r for r in self.records if r.record_id in ids]


def _records_of(obj) -> Sequence[FailureRecord]:
    return obj.records if isinstance(obj, FailureEvent) else obj


def exact_peak(records: Sequence[FailureRecord]) -> tuple[int, int]:
    """Earliest time of the maximum pending count, and that count.

    A failure is pending on ``[occurred_at, restored_at)``; all endpoints that
    share a timestamp are applied before the count is read.
    """
    if not records:
        raise OutageError("EMPTY_EVENT", "no records")
    delta: Counter[int] = Counter()
    for r in records:
        if r.restored_at > r.occurred_at:
            delta[r.occurred_at] += 1
            delta[r.restored_at] -= 1
    first = min(r.occurred_at for r in records)
    best_t, best_v, level = first, 0, 0
    for t in sorted(delta):
        level += delta[t]
        if level > best_v:
            best_t, best_v = t, level
    return best_t, best_v


def _counts_on_grid(records: Sequence[FailureRecord], grid: np.ndarray) -> np.ndarray:
    if not records:
        return np.zeros(len(grid), dtype=np.int64)
    occ = np.sort(np.fromiter((r.occurred_at for r in records), dtype=np.int64))
    rest = np.sort(np.fromiter((r.restored_at for r in records), dtype=np.int64))
    started = np.searchsorted(occ, grid, side="right")
    ended = np.searchsorted(rest, grid, side="right")
    return (started - ended).astype(np.int64)


def make_grid(records: Sequence[FailureRecord], step: int = DEFAULT_STEP) -> np.ndarray:
    """Uniform grid from the first occurrence to the first point at or past the
    last restoration."""
    if step < 1:
        raise ValueError("step must be >= 1")
    if not records:
        raise OutageError("EMPTY_EVENT", "no records")
    start = min(r.occurred_at for r in records)
    stop = max(r.restored_at for r in records)
    n = -(-(stop - start) // step) + 1
    return start + step * np.arange(n, dtype=np.int64)


def pending_series(
    records: Sequence[FailureRecord] | FailureEvent,
    step: int = DEFAULT_STEP,
    grid: np.ndarray | None = None,
) -> PendingSeries:
    records = _records_of(records)
    if not records:
        raise OutageError("EMPTY_EVENT", "no records")
    if grid is None:
        grid = make_grid(records, step)
    peak_t, peak_v = exact_peak(records)
    return PendingSeries(grid, _counts_on_grid(records, grid), peak_t, peak_v)


def split_stages(event: FailureEvent | Sequence[FailureRecord]) -> StagePartition:
    """Stage 1 holds failures occurring up to and including the pending peak."""
    if isinstance(event, FailureEvent):
        records, split = event.records, event.pending.peak_time
    else:
        records = event
        split = exact_peak(records)[0]
    s1 = frozenset(r.record_id for r in records if r.occurred_at <= split)
    s2 = frozenset(r.record_id for r in records) - s1
    return StagePartition(s1, s2, split)


def severity_for(
    major_storm: bool,
    n_failures: int,
    moderate_floor: int = MODERATE_FLOOR,
    extreme_floor: int = EXTREME_FLOOR,
) -> SeverityClass:
    if major_storm:
        return SeverityClass.EXTREME if n_failures >= extreme_floor else SeverityClass.SEVERE
    if n_failures >= moderate_floor:
        return SeverityClass.MODERATE
    return SeverityClass.SPORADIC


def classify_severity(
    event: FailureEvent | Sequence[FailureRecord],
    moderate_floor: int = MODERATE_FLOOR,
    extreme_floor: int = EXTREME_FLOOR,
) -> SeverityClass:
    records = _records_of(event)
    if not records:
        raise OutageError("EMPTY_EVENT", "no records")
    return severity_for(records[0].major_storm, len(records), moderate_floor, extreme_floor)


def build_event(
    event_id: str,
    records: Iterable[FailureRecord],
    step: int = DEFAULT_STEP,
    moderate_floor: int = MODERATE_FLOOR,
    extreme_floor: int = EXTREME_FLOOR,
) -> FailureEvent:
    records = tuple(records)
    if not records:
        raise OutageError("EMPTY_EVENT", f"event {event_id} has no records")
    if len({r.major_storm for r in records}) > 1:
        raise OutageError("MIXED_STORM_FLAG", f"event {event_id}")
    pending = pending_series(records, step)
    severity = classify_severity(records, moderate_floor, extreme_floor)
    partition = split_stages(records)
    return FailureEvent(event_id, records, severity, partition, pending)


def category_pending_series(
    event: FailureEvent | Sequence[FailureRecord],
    labels: Mapping[str, "enum.Enum"],
    step: int = DEFAULT_STEP,
) -> dict:
    """Pending counts per category on the event's own grid.

    Every category in the label enum gets a series (all zeros when it has no
    records), so the per-category series always add up to the total.
    """
    from .dependence import CategoryLabel

    records = _records_of(event)
    if not records:
        raise OutageError("EMPTY_EVENT", "no records")
    missing = [r.record_id for r in records if r.record_id not in labels]
    if missing:
        raise OutageError("MISSING_LABEL", f"{len(missing)} unlabeled, e.g. {missing[0]}")
    grid = make_grid(records, step)
    out = {}
    for cat in CategoryLabel:
        members = [r for r in records if labels[r.record_id] == cat]
        if members:
            out[cat] = pending_series(members, grid=grid)
        else:
            out[cat] = PendingSeries(grid, np.zeros(len(grid), dtype=np.int64), int(grid[0]), 0)
    return out
