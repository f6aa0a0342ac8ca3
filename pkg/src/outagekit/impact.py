"""Customer impact per recovery category: CMI, downtime growth, device mix."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .dependence import CategoryLabel, RankedSample
from .events import DEFAULT_STEP, FailureEvent, make_grid
from .ingest import DeviceType, FailureRecord


def cmi(records: Sequence[FailureRecord]) -> int:
    """Customer minutes of interruption."""
    return sum(r.customers * (r.restored_at - r.occurred_at) for r in records)


def cumulative_downtime(
    records: Sequence[FailureRecord], grid: np.ndarray, origin: int | None = None
) -> np.ndarray:
    """Customer-minutes accrued by ``records`` between ``origin`` and each grid time."""
    out = np.zeros(len(grid), dtype=np.int64)
    if not records:
        return out
    if origin is None:
        origin = int(grid[0])
    for r in records:
        lo = max(r.occurred_at, origin)
        out += r.customers * np.clip(np.minimum(grid, r.restored_at) - lo, 0, None)
    return out


def ols_slope(t: np.ndarray, y: np.ndarray) -> float:
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    tc = t - t.mean()
    denom = float((tc * tc).sum())
    return float((tc * (y - y.mean())).sum() / denom) if denom > 0 else 0.0


@dataclass
class GrowthResult:
    slopes: dict[CategoryLabel, float]  # customer-minutes per minute
    omitted: dict[CategoryLabel, str]
    grid: np.ndarray
    curves: dict[CategoryLabel, np.ndarray]

    def ratio(self, num: CategoryLabel, den: CategoryLabel) -> float | None:
        if num in self.slopes and den in self.slopes and self.slopes[den] != 0:
            return self.slopes[num] / self.slopes[den]
        return None


def _records(event) -> Sequence[FailureRecord]:
    return event.records if isinstance(event, FailureEvent) else event


def cumulative_downtime_growth(
    event: FailureEvent | Sequence[FailureRecord],
    labels: Mapping[str, CategoryLabel],
    step: int = DEFAULT_STEP,
    min_records: int = 2,
) -> GrowthResult:
    """Least-squares growth rate of cumulative customer downtime per category.

    Every category is fitted over the same window: event start to the last
    restoration among the labelled records. Categories with fewer than
    ``min_records`` failures get no slope and are listed in ``omitted``.
    """
    records = [r for r in _records(event) if r.record_id in labels]
    if not records:
        return GrowthResult({}, {c: "no records" for c in CategoryLabel}, np.zeros(0, np.int64), {})
    grid = make_grid(records, step)
    origin = int(grid[0])
    slopes: dict[CategoryLabel, float] = {}
    omitted: dict[CategoryLabel, str] = {}
    curves: dict[CategoryLabel, np.ndarray] = {}
    for cat in CategoryLabel:
        members = [r for r in records if labels[r.record_id] == cat]
        curves[cat] = cumulative_downtime(members, grid, origin)
        if len(members) < min_records:
            omitted[cat] = f"{len(members)} record(s), need {min_records}"
            continue
        slopes[cat] = ols_slope(grid - origin, curves[cat])
    return GrowthResult(slopes, omitted, grid, curves)


def device_breakdown(
    samples: Sequence[RankedSample], labels: Mapping[str, CategoryLabel]
) -> dict[CategoryLabel, dict[DeviceType, float]]:
    counts: dict[CategoryLabel, dict[DeviceType, int]] = {}
    for s in samples:
        row = counts.setdefault(labels[s.record_id], {d: 0 for d in DeviceType})
        row[s.device] += 1
    out = {}
    for cat in CategoryLabel:
        if cat in counts:
            total = sum(counts[cat].values())
            out[cat] = {d: c / total for d, c in counts[cat].items()}
    return out


@dataclass
class CategoryImpact:
    n_failures: int
    cmi: int
    mean_cmi_per_failure: float
    affected_customers: int
    growth_rate: float | None = None  # customer-minutes per hour
    device_mix: dict[DeviceType, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "n_failures": self.n_failures,
            "cmi_customer_minutes": self.cmi,
            "cmi_customer_hours": self.cmi / 60.0,
            "mean_cmi_per_failure": self.mean_cmi_per_failure,
            "affected_customers": self.affected_customers,
            "growth_rate_customer_minutes_per_hour": self.growth_rate,
            "device_mix": {d.value: v for d, v in self.device_mix.items()},
        }


@dataclass
class ImpactReport:
    categories: dict[CategoryLabel, CategoryImpact]
    total_cmi: int
    growth_notes: dict[CategoryLabel, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "total_cmi_customer_minutes": self.total_cmi,
            "categories": {c.value: v.to_dict() for c, v in self.categories.items()},
            "growth_notes": {c.value: v for c, v in self.growth_notes.items()},
        }


def impact_report(
    records: Sequence[FailureRecord],
    labels: Mapping[str, CategoryLabel],
    step: int = DEFAULT_STEP,
    min_records: int = 2,
) -> ImpactReport:
    """Impact of one event's labelled records, broken down by category."""
    records = [r for r in records if r.record_id in labels]
    growth = cumulative_downtime_growth(records, labels, step, min_records)
    samples = [
        RankedSample(r.record_id, r.customers, 0.0, r.duration, device=r.device) for r in records
    ]
    mix = device_breakdown(samples, labels)
    cats = {}
    for cat in CategoryLabel:
        members = [r for r in records if labels[r.record_id] == cat]
        c = cmi(members)
        slope = growth.slopes.get(cat)
        cats[cat] = CategoryImpact(
            n_failures=len(members),
            cmi=c,
            mean_cmi_per_failure=c / len(members) if members else 0.0,
            affected_customers=sum(r.customers for r in members),
            growth_rate=None if slope is None else slope * 60.0,
            device_mix=mix.get(cat, {}),
        )
    return ImpactReport(cats, cmi(records), growth.omitted)
