"""Recovery and failure scaling curves and the per-category share summary."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .dependence import CategoryLabel, RankedSample
from .errors import OutageError
from .events import FailureEvent
from .ingest import FailureRecord


@dataclass(frozen=True)
class ScalingPoint:
    d: float
    p_c: float
    p_r: float
    category: CategoryLabel | None


@dataclass
class ScalingCurve:
    points: list[ScalingPoint]

    def rows(self) -> list[tuple]:
        return [
            (p.d, p.p_c, p.p_r, p.category.value if p.category else "")
            for p in self.points
        ]


def _order_by_duration(samples: Sequence) -> list[int]:
    # stable: equal durations keep input order
    return sorted(range(len(samples)), key=lambda i: samples[i].duration)


def recovery_scaling(
    samples: Sequence[RankedSample],
    labels: Mapping[str, CategoryLabel] | None = None,
) -> ScalingCurve:
    """Cumulative customer share against cumulative downtime share, fastest first.

    The k-th point covers the k shortest outages: ``d = k/n`` is the share of
    failures, ``p_c`` their share of customers and ``p_r`` their share of the
    summed durations. Running totals are integers, so the last point is
    exactly (1, 1, 1).
    """
    if not samples:
        raise ValueError("recovery_scaling needs at least one sample")
    total_dur = sum(s.duration for s in samples)
    if total_dur == 0:
        raise OutageError("DEGENERATE_DURATIONS", "all durations are zero")
    total_cust = sum(s.size_x for s in samples)
    n = len(samples)
    points = []
    cust = dur = 0
    for k, i in enumerate(_order_by_duration(samples), start=1):
        s = samples[i]
        cust += s.size_x
        dur += s.duration
        points.append(
            ScalingPoint(k / n, cust / total_cust, dur / total_dur, labels.get(s.record_id) if labels else None)
        )
    return ScalingCurve(points)


@dataclass
class FailureScalingCurve:
    x: np.ndarray
    p_exceed: np.ndarray
    p_c: np.ndarray
    p_exceed_std: np.ndarray
    p_c_std: np.ndarray
    n_events: int

    def rows(self) -> list[tuple]:
        return [
            (int(x), float(pe), float(pc), float(pes), float(pcs))
            for x, pe, pc, pes, pcs in zip(self.x, self.p_exceed, self.p_c, self.p_exceed_std, self.p_c_std)
        ]


def size_grid(sizes: Sequence[int]) -> np.ndarray:
    """0, the powers of two up to the largest size, and every observed size."""
    top = max(sizes) if len(sizes) else 1
    pows = [2**k for k in range(int(math.ceil(math.log2(max(top, 1)))) + 1)]
    return np.array(sorted({0, *pows, *map(int, sizes)}), dtype=np.int64)


def exceedance(sizes: Sequence[int], grid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Share of failures with size > x and the share of customers they affect."""
    s = np.sort(np.asarray(sizes, dtype=np.int64))
    n = len(s)
    total = s.sum()
    tail_sum = np.concatenate([np.cumsum(s[::-1])[::-1], [0]])
    idx = np.searchsorted(s, grid, side="right")
    return (n - idx) / n, tail_sum[idx] / total


def _event_sizes(ev: FailureEvent | Sequence[FailureRecord], stage1_only: bool) -> list[int]:
    if isinstance(ev, FailureEvent):
        recs = ev.stage1_records if stage1_only else ev.records
    else:
        recs = ev
    return [r.customers for r in recs]


def failure_scaling(
    events: Sequence[FailureEvent | Sequence[FailureRecord]],
    stage1_only: bool = True,
) -> FailureScalingCurve:
    """Size exceedance curves per event, averaged on a shared size grid."""
    if not events:
        raise ValueError("failure_scaling needs at least one event")
    per_event = [_event_sizes(ev, stage1_only) for ev in events]
    per_event = [s for s in per_event if s]
    grid = size_grid([x for s in per_event for x in s])
    pe = np.stack([exceedance(s, grid)[0] for s in per_event])
    pc = np.stack([exceedance(s, grid)[1] for s in per_event])
    return FailureScalingCurve(grid, pe.mean(0), pc.mean(0), pe.std(0), pc.std(0), len(per_event))


def top_share(sizes: Sequence[int], fraction: float = 0.25) -> float:
    """Share of customers affected by the largest ``fraction`` of failures."""
    s = np.sort(np.asarray(sizes, dtype=np.int64))[::-1]
    k = max(1, int(math.ceil(fraction * len(s) - 1e-12)))
    return float(s[:k].sum() / s.sum())


@dataclass
class CategoryShares:
    customer_share: float
    downtime_share: float
    failure_share: float


@dataclass
class RuleSummary:
    shares: dict[CategoryLabel, CategoryShares]

    def to_dict(self) -> dict:
        return {c.value: vars(v) for c, v in self.shares.items()}

    def combined(self, *cats: CategoryLabel) -> CategoryShares:
        return CategoryShares(
            sum(self.shares[c].customer_share for c in cats),
            sum(self.shares[c].downtime_share for c in cats),
            sum(self.shares[c].failure_share for c in cats),
        )


def rule_summary(
    samples: Sequence[RankedSample], labels: Mapping[str, CategoryLabel]
) -> RuleSummary:
    """Per-category shares of customers, downtime and failure count."""
    if not samples:
        raise ValueError("rule_summary needs at least one sample")
    cust = {c: 0 for c in CategoryLabel}
    dur = {c: 0 for c in CategoryLabel}
    cnt = {c: 0 for c in CategoryLabel}
    for s in samples:
        c = labels[s.record_id]
        cust[c] += s.size_x
        dur[c] += s.duration
        cnt[c] += 1
    tc, td, tn = sum(cust.values()), sum(dur.values()), len(samples)
    return RuleSummary(
        {
            c: CategoryShares(cust[c] / tc, dur[c] / td if td else 0.0, cnt[c] / tn)
            for c in CategoryLabel
        }
    )
