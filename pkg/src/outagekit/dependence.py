"""Dependence between failure size and recovery speed.

Recovery speed is the normalized rank of a failure's downtime within its
ranking population (one event stage): ``speed = 1 - (rank - 0.5) / n`` with
tied durations sharing their average rank, so 1 is fastest and 0 slowest.

The joint distribution of (size, speed) is binned on a grid with log2 size
bins and uniform speed bins. For any rectangle of bins ``A x B`` the
dependence metric is ``P(A, B) - P(A) P(B)``; clusters are rectangles whose
average cell metric clears a fraction of the largest cell value and beats its
cross-validated error bar.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np
from scipy.stats import norm, rankdata

from .errors import OutageError
from .ingest import DeviceType, FailureRecord

DEFAULT_X_BINS = 14
DEFAULT_Y_BINS = 20
LARGE_THRESHOLD = 100
FAST_QUANTILE = 0.15
PROLONGED_QUANTILE = 0.50
THRESHOLD_FRAC = 0.05
FOLDS = 5
F_BOUND = 0.25
CONFIDENCE = 0.95


class CategoryLabel(str, enum.Enum):
    PRIORITIZED_LARGE = "PrioritizedLarge"
    NON_PRIORITIZED_LARGE = "NonPrioritizedLarge"
    PROLONGED_SMALL = "ProlongedSmall"
    REMAINING_SMALL = "RemainingSmall"


@dataclass(frozen=True)
class RankedSample:
    record_id: str
    size_x: int
    speed_y: float
    duration: int
    rank: float = 0.0
    device: DeviceType = DeviceType.OTHER


def rank_recovery_speed(records: Sequence[FailureRecord]) -> list[RankedSample]:
    """Rank durations shortest-first and convert ranks to speeds in (0, 1)."""
    if not records:
        return []
    n = len(records)
    ranks = rankdata([r.duration for r in records], method="average")
    return [
        RankedSample(
            record_id=r.record_id,
            size_x=r.customers,
            speed_y=1.0 - (float(rk) - 0.5) / n,
            duration=r.duration,
            rank=float(rk),
            device=r.device,
        )
        for r, rk in zip(records, ranks)
    ]


# -- grid ------------------------------------------------------------------


class Rect(NamedTuple):
    """Inclusive bin-index rectangle: x0..x1 by y0..y1."""

    x0: int
    x1: int
    y0: int
    y1: int

    @property
    def area(self) -> int:
        return (self.x1 - self.x0 + 1) * (self.y1 - self.y0 + 1)

    def cells(self) -> set[tuple[int, int]]:
        return {
            (i, j)
            for i in range(self.x0, self.x1 + 1)
            for j in range(self.y0, self.y1 + 1)
        }

    def overlaps(self, other: "Rect") -> bool:
        return not (
            self.x1 < other.x0
            or other.x1 < self.x0
            or self.y1 < other.y0
            or other.y1 < self.y0
        )

    def union(self, other: "Rect") -> "Rect":
        return Rect(
            min(self.x0, other.x0),
            max(self.x1, other.x1),
            min(self.y0, other.y0),
            max(self.y1, other.y1),
        )


@dataclass
class JointGrid:
    x_bin_edges: np.ndarray
    y_bin_edges: np.ndarray
    joint: np.ndarray
    x_marginal: np.ndarray
    y_marginal: np.ndarray
    f_values: np.ndarray
    err: np.ndarray
    n_samples: int = 0

    @property
    def shape(self) -> tuple[int, int]:
        return self.joint.shape  # type: ignore[return-value]

    def same_bins(self, other: "JointGrid") -> bool:
        return np.array_equal(self.x_bin_edges, other.x_bin_edges) and np.array_equal(
            self.y_bin_edges, other.y_bin_edges
        )

    def to_dict(self) -> dict:
        return {
            "x_bin_edges": [None if math.isinf(e) else float(e) for e in self.x_bin_edges],
            "y_bin_edges": [float(e) for e in self.y_bin_edges],
            "n_samples": int(self.n_samples),
            "joint": self.joint.tolist(),
            "x_marginal": self.x_marginal.tolist(),
            "y_marginal": self.y_marginal.tolist(),
            "f_values": self.f_values.tolist(),
            "err": self.err.tolist(),
        }


def x_edges(x_bins: int) -> np.ndarray:
    """Power-of-two size edges 1, 2, 4, ...; the last bin is open-ended."""
    return np.array([2.0**k for k in range(x_bins)] + [math.inf])


def y_edges(y_bins: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, y_bins + 1)


def x_bin_index(size: int, x_bins: int) -> int:
    return min(max(int(size), 1).bit_length() - 1, x_bins - 1)


def y_bin_index(speed: float, y_bins: int) -> int:
    # nudge so values sitting on an edge up to float noise land in the upper bin
    return min(max(int(math.floor(speed * y_bins + 1e-9)), 0), y_bins - 1)


def bin_counts(samples: Sequence[RankedSample], x_bins: int, y_bins: int) -> np.ndarray:
    counts = np.zeros((x_bins, y_bins), dtype=np.int64)
    for s in samples:
        counts[x_bin_index(s.size_x, x_bins), y_bin_index(s.speed_y, y_bins)] += 1
    return counts


def _f_from_counts(counts: np.ndarray) -> tuple[np.ndarray, ...]:
    n = counts.sum()
    joint = counts / n
    xm = counts.sum(axis=1) / n
    ym = counts.sum(axis=0) / n
    return joint, xm, ym, joint - np.outer(xm, ym)


def estimate_joint(
    samples: Sequence[RankedSample],
    x_bins: int = DEFAULT_X_BINS,
    y_bins: int = DEFAULT_Y_BINS,
    folds: int | None = None,
    seed: int = 0,
) -> JointGrid:
    """Empirical joint grid with per-cell dependence values.

    With ``folds`` set (and at least that many samples) the per-cell error is
    the cross-validated standard error; otherwise it is zero.
    """
    if not samples:
        raise OutageError("TOO_FEW_SAMPLES", "estimate_joint needs at least one sample")
    if x_bins < 2 or y_bins < 2:
        raise ValueError("x_bins and y_bins must be >= 2")
    counts = bin_counts(samples, x_bins, y_bins)
    joint, xm, ym, f = _f_from_counts(counts)
    err = np.zeros_like(f)
    if folds and len(samples) >= folds:
        reps = np.stack([_f_from_counts(c)[3] for c in _fold_counts(samples, x_bins, y_bins, folds, seed)])
        floor = np.sqrt(np.outer(xm * (1 - xm), ym * (1 - ym)) / len(samples))
        err = np.maximum(_cv_std_error(reps), floor)
    grid = JointGrid(x_edges(x_bins), y_edges(y_bins), joint, xm, ym, f, err, len(samples))
    check_bounds(grid)
    return grid


def check_bounds(grid: JointGrid, tol: float = 1e-12) -> None:
    if np.any(np.abs(grid.f_values) > F_BOUND + tol):
        raise AssertionError("dependence value outside [-0.25, 0.25]")


def _as_rect(region: Rect | Iterable[tuple[int, int]]) -> Rect:
    if isinstance(region, Rect):
        return region
    cells = set(map(tuple, region))
    if not cells:
        raise OutageError("NON_RECTANGULAR", "empty region")
    xs = [c[0] for c in cells]
    ys = [c[1] for c in cells]
    rect = Rect(min(xs), max(xs), min(ys), max(ys))
    if rect.cells() != cells:
        raise OutageError("NON_RECTANGULAR", "cells do not form an axis-aligned rectangle")
    return rect


def dependence_region_metric(grid: JointGrid, region: Rect | Iterable[tuple[int, int]]) -> float:
    r = _as_rect(region)
    nx, ny = grid.shape
    if r.x0 < 0 or r.y0 < 0 or r.x1 >= nx or r.y1 >= ny:
        raise OutageError("NON_RECTANGULAR", "region outside the grid")
    p = grid.joint[r.x0 : r.x1 + 1, r.y0 : r.y1 + 1].sum()
    q = grid.x_marginal[r.x0 : r.x1 + 1].sum()
    s = grid.y_marginal[r.y0 : r.y1 + 1].sum()
    return float(p - q * s)


# -- cross validation --------------------------------------------------------


def fold_assignment(n: int, folds: int, seed: int = 0) -> np.ndarray:
    """Fold id per sample from a seeded shuffle; fold sizes differ by at most one."""
    perm = np.random.default_rng(seed).permutation(n)
    out = np.empty(n, dtype=np.int64)
    out[perm] = np.arange(n) % folds
    return out


def _fold_counts(samples, x_bins, y_bins, folds, seed) -> list[np.ndarray]:
    """Training-set bin counts for each fold (all samples except that fold)."""
    assign = fold_assignment(len(samples), folds, seed)
    per_fold = np.zeros((folds, x_bins, y_bins), dtype=np.int64)
    for s, k in zip(samples, assign):
        per_fold[k, x_bin_index(s.size_x, x_bins), y_bin_index(s.speed_y, y_bins)] += 1
    total = per_fold.sum(axis=0)
    return [total - per_fold[k] for k in range(folds)]


def null_std_error(grid: JointGrid, rect: Rect, n: int) -> float:
    """Standard error of the region metric when size and speed are independent.

    Used as a floor: fold replicates cannot see sampling noise in cells that
    happen to be empty in every fold.
    """
    q = float(grid.x_marginal[rect.x0 : rect.x1 + 1].sum())
    r = float(grid.y_marginal[rect.y0 : rect.y1 + 1].sum())
    return math.sqrt(max(q * (1 - q) * r * (1 - r), 0.0) / max(n, 1))


def _cv_std_error(replicates: np.ndarray) -> np.ndarray:
    """Delete-a-group jackknife standard error from leave-one-fold-out replicates."""
    k = replicates.shape[0]
    dev = replicates - replicates.mean(axis=0)
    return np.sqrt((k - 1) / k * (dev**2).sum(axis=0))


# -- clusters ----------------------------------------------------------------


@dataclass
class ClusterRegion:
    rect: Rect
    mean_f: float
    mean_err: float
    label_hint: str = "other"
    region_f: float = 0.0

    @property
    def cells(self) -> set[tuple[int, int]]:
        return self.rect.cells()

    def to_dict(self) -> dict:
        return {
            "x_range": [self.rect.x0, self.rect.x1],
            "y_range": [self.rect.y0, self.rect.y1],
            "mean_f": self.mean_f,
            "mean_err": self.mean_err,
            "region_f": self.region_f,
            "label_hint": self.label_hint,
        }


def _rect_mean(prefix: np.ndarray, r: Rect) -> float:
    total = (
        prefix[r.x1 + 1, r.y1 + 1]
        - prefix[r.x0, r.y1 + 1]
        - prefix[r.x1 + 1, r.y0]
        + prefix[r.x0, r.y0]
    )
    return float(total) / r.area


def _prefix(values: np.ndarray) -> np.ndarray:
    p = np.zeros((values.shape[0] + 1, values.shape[1] + 1))
    p[1:, 1:] = values.cumsum(axis=0).cumsum(axis=1)
    return p


def grow_rectangle(f: np.ndarray, seed: tuple[int, int], tau: float) -> Rect:
    """Expand a seed cell one row or column at a time while the mean stays above tau.

    Among admissible expansions the one adding the most cells wins; ties go to
    the rectangle with the lower x index, then the lower y index.
    """
    prefix = _prefix(f)
    nx, ny = f.shape
    rect = Rect(seed[0], seed[0], seed[1], seed[1])
    while True:
        options = []
        for cand in (
            Rect(rect.x0 - 1, rect.x1, rect.y0, rect.y1),
            Rect(rect.x0, rect.x1 + 1, rect.y0, rect.y1),
            Rect(rect.x0, rect.x1, rect.y0 - 1, rect.y1),
            Rect(rect.x0, rect.x1, rect.y0, rect.y1 + 1),
        ):
            if cand.x0 < 0 or cand.y0 < 0 or cand.x1 >= nx or cand.y1 >= ny:
                continue
            if _rect_mean(prefix, cand) > tau:
                options.append((-(cand.area - rect.area), cand.x0, cand.y0, cand.x1, cand.y1, cand))
        if not options:
            return rect
        rect = min(options)[-1]


def candidate_regions(f: np.ndarray, threshold_frac: float = THRESHOLD_FRAC) -> tuple[float, list[Rect]]:
    """Threshold and greedy rectangles grown from every uncovered seed cell."""
    fmax = float(f.max()) if f.size else 0.0
    if fmax <= 0.0:
        return 0.0, []
    tau = threshold_frac * fmax
    seeds = sorted(
        ((float(f[i, j]), i, j) for i in range(f.shape[0]) for j in range(f.shape[1]) if f[i, j] > tau),
        key=lambda t: (-t[0], t[1], t[2]),
    )
    covered: set[tuple[int, int]] = set()
    rects: list[Rect] = []
    for _, i, j in seeds:
        if (i, j) in covered:
            continue
        rect = grow_rectangle(f, (i, j), tau)
        rects.append(rect)
        covered |= rect.cells()
    return tau, rects


def label_hint(
    rect: Rect,
    x_bins: int,
    y_bins: int,
    large_threshold: int = LARGE_THRESHOLD,
    fast_quantile: float = FAST_QUANTILE,
    prolonged_quantile: float = PROLONGED_QUANTILE,
) -> str:
    """'upper-left' for large and fast, 'lower-right' for small and slow."""
    xe = x_edges(x_bins)
    ye = y_edges(y_bins)
    has_large = xe[rect.x1 + 1] > large_threshold + 1
    has_small = xe[rect.x0] <= large_threshold
    y_lo, y_hi = ye[rect.y0], ye[rect.y1 + 1]
    if has_large and y_hi > 1.0 - fast_quantile and y_lo + y_hi > 1.0:
        return "upper-left"
    if has_small and y_lo < prolonged_quantile and y_lo + y_hi <= 1.0:
        return "lower-right"
    return "other"


def simultaneous_z(n_regions: int, confidence: float = CONFIDENCE) -> float:
    """Two-sided normal quantile giving family-wise ``confidence`` over n regions."""
    return float(norm.isf((1.0 - confidence) / (2 * max(n_regions, 1))))


def _select(
    f: np.ndarray,
    region_se,
    threshold_frac: float,
    confidence: float,
    hint_kwargs: dict,
) -> list[ClusterRegion]:
    tau, rects = candidate_regions(f, threshold_frac)
    if not rects:
        return []
    prefix = _prefix(f)
    nx, ny = f.shape
    z = simultaneous_z(len(rects), confidence)

    def region(rect: Rect) -> ClusterRegion:
        return ClusterRegion(
            rect=rect,
            mean_f=_rect_mean(prefix, rect),
            mean_err=z * region_se(rect),
            label_hint=label_hint(rect, nx, ny, **hint_kwargs),
        )

    accepted = [c for c in map(region, rects) if c.mean_f > tau and c.mean_f > c.mean_err]
    merged = True
    while merged:
        merged = False
        for a in range(len(accepted)):
            for b in range(a + 1, len(accepted)):
                ra, rb = accepted[a].rect, accepted[b].rect
                if ra.overlaps(rb):
                    joined = region(ra.union(rb))
                    if joined.mean_f > tau:
                        accepted[a] = joined
                        del accepted[b]
                        merged = True
                        break
            if merged:
                break
    accepted.sort(key=lambda c: (-c.mean_f, c.rect))
    return accepted


def extract_clusters(
    samples: Sequence[RankedSample],
    threshold_frac: float = THRESHOLD_FRAC,
    folds: int = FOLDS,
    x_bins: int = DEFAULT_X_BINS,
    y_bins: int = DEFAULT_Y_BINS,
    seed: int = 0,
    confidence: float = CONFIDENCE,
    large_threshold: int = LARGE_THRESHOLD,
    fast_quantile: float = FAST_QUANTILE,
    prolonged_quantile: float = PROLONGED_QUANTILE,
) -> list[ClusterRegion]:
    """Maximal-coverage dependence rectangles for one ranking population.

    Candidate rectangles are grown from the full-sample grid. Each one keeps
    its place only if its mean cell value beats its error bar: the larger of
    the leave-one-fold-out jackknife error and the independence floor, scaled
    to a simultaneous ``confidence`` interval over all candidates.
    """
    if len(samples) < folds:
        raise OutageError("TOO_FEW_SAMPLES", f"{len(samples)} samples < {folds} folds")
    grid = estimate_joint(samples, x_bins, y_bins)
    reps = [_f_from_counts(c)[3] for c in _fold_counts(samples, x_bins, y_bins, folds, seed)]
    prefixes = [_prefix(r) for r in reps]
    n = len(samples)

    def se(rect: Rect) -> float:
        vals = np.array([_rect_mean(p, rect) for p in prefixes])
        cv = float(_cv_std_error(vals[:, None])[0])
        return max(cv, null_std_error(grid, rect, n) / rect.area)

    hint = dict(
        large_threshold=large_threshold,
        fast_quantile=fast_quantile,
        prolonged_quantile=prolonged_quantile,
    )
    clusters = _select(grid.f_values, se, threshold_frac, confidence, hint)
    for c in clusters:
        c.region_f = dependence_region_metric(grid, c.rect)
    return clusters


def _std_error_across(values: np.ndarray) -> np.ndarray:
    m = values.shape[0]
    if m < 2:
        return np.zeros(values.shape[1:])
    return values.std(axis=0, ddof=1) / math.sqrt(m)


def average_dependence(grids: Sequence[JointGrid]) -> JointGrid:
    """Cell-wise mean of per-event grids, with the standard error across events."""
    if not grids:
        raise ValueError("average_dependence needs at least one grid")
    first = grids[0]
    for g in grids[1:]:
        if not first.same_bins(g):
            raise OutageError("BIN_MISMATCH", "grids use different bin edges")
    if len(grids) == 1:
        return JointGrid(**{k: (v.copy() if isinstance(v, np.ndarray) else v) for k, v in vars(first).items()})
    f = np.stack([g.f_values for g in grids])
    return JointGrid(
        x_bin_edges=first.x_bin_edges.copy(),
        y_bin_edges=first.y_bin_edges.copy(),
        joint=np.mean([g.joint for g in grids], axis=0),
        x_marginal=np.mean([g.x_marginal for g in grids], axis=0),
        y_marginal=np.mean([g.y_marginal for g in grids], axis=0),
        f_values=f.mean(axis=0),
        err=_std_error_across(f),
        n_samples=sum(g.n_samples for g in grids),
    )


def clusters_from_average(
    grids: Sequence[JointGrid],
    threshold_frac: float = THRESHOLD_FRAC,
    confidence: float = CONFIDENCE,
    large_threshold: int = LARGE_THRESHOLD,
    fast_quantile: float = FAST_QUANTILE,
    prolonged_quantile: float = PROLONGED_QUANTILE,
) -> list[ClusterRegion]:
    """Clusters on an event-averaged grid.

    Error bars come from the spread of the region's mean value across events,
    floored by the independence error at the pooled sample size.
    """
    avg = average_dependence(grids)
    prefixes = [_prefix(g.f_values) for g in grids]
    n = avg.n_samples

    def se(rect: Rect) -> float:
        vals = np.array([_rect_mean(p, rect) for p in prefixes])
        spread = float(_std_error_across(vals[:, None])[0])
        return max(spread, null_std_error(avg, rect, n) / rect.area)

    hint = dict(
        large_threshold=large_threshold,
        fast_quantile=fast_quantile,
        prolonged_quantile=prolonged_quantile,
    )
    clusters = _select(avg.f_values, se, threshold_frac, confidence, hint)
    for c in clusters:
        c.region_f = dependence_region_metric(avg, c.rect)
    return clusters


# -- categories --------------------------------------------------------------


def categorize(
    size: int,
    speed: float,
    large_threshold: int = LARGE_THRESHOLD,
    fast_quantile: float = FAST_QUANTILE,
    prolonged_quantile: float = PROLONGED_QUANTILE,
) -> CategoryLabel:
    if size > large_threshold:
        if speed >= 1.0 - fast_quantile:
            return CategoryLabel.PRIORITIZED_LARGE
        return CategoryLabel.NON_PRIORITIZED_LARGE
    if speed <= prolonged_quantile:
        return CategoryLabel.PROLONGED_SMALL
    return CategoryLabel.REMAINING_SMALL


def assign_categories(
    samples: Iterable[RankedSample],
    large_threshold: int = LARGE_THRESHOLD,
    fast_quantile: float = FAST_QUANTILE,
    prolonged_quantile: float = PROLONGED_QUANTILE,
) -> dict[str, CategoryLabel]:
    return {
        s.record_id: categorize(s.size_x, s.speed_y, large_threshold, fast_quantile, prolonged_quantile)
        for s in samples
    }


def category_counts(labels: Mapping[str, CategoryLabel]) -> dict[CategoryLabel, int]:
    out = {c: 0 for c in CategoryLabel}
    for lab in labels.values():
        out[lab] += 1
    return out
