"""All-large-first baseline and tipping-point detection."""

from __future__ import annotations

import statistics
from dataclasses import dataclass
from typing import Mapping, Sequence

from .dependence import LARGE_THRESHOLD, RankedSample
from .errors import OutageError

DEFAULT_EPSILON = 0.05


@dataclass
class BaselineCurve:
    k: list[int]
    a: list[float]
    b: list[float]
    n_large: int

    def rows(self) -> list[tuple[int, float, float]]:
        return list(zip(self.k, self.a, self.b))


@dataclass(frozen=True)
class TippingPoint:
    value: float
    deviation_index: int | None


def baseline_curve(
    samples: Sequence[RankedSample], large_threshold: int = LARGE_THRESHOLD
) -> BaselineCurve:
    """Share of large failures restored among the k fastest, actual vs ideal.

    ``a(k)`` follows the observed duration order (ties keep input order);
    ``b(k) = min(k, N_L) / N_L`` is what restoring every large failure first
    would have achieved.
    """
    order = sorted(range(len(samples)), key=lambda i: samples[i].duration)
    is_large = [samples[i].size_x > large_threshold for i in order]
    n_large = sum(is_large)
    if n_large == 0:
        raise OutageError("NO_LARGE_FAILURES", f"no failure above {large_threshold} customers")
    k, a, b = [], [], []
    seen = 0
    for idx, large in enumerate(is_large, start=1):
        seen += large
        k.append(idx)
        a.append(seen / n_large)
        b.append(min(idx, n_large) / n_large)
    return BaselineCurve(k, a, b, n_large)


def tipping_point(curve: BaselineCurve, epsilon: float = DEFAULT_EPSILON) -> TippingPoint:
    for k, a, b in curve.rows():
        if b - a > epsilon:
            return TippingPoint(a, k)
    return TippingPoint(1.0, None)


def aggregate_tipping(groups: Mapping[object, Sequence[float]]) -> dict:
    """Mean and population std of tipping values per group; empty groups omitted."""
    out = {}
    for key, values in groups.items():
        vals = [float(v.value if isinstance(v, TippingPoint) else v) for v in values]
        if vals:
            out[key] = (statistics.fmean(vals), statistics.pstdev(vals))
    return out
