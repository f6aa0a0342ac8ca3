from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given

from outagekit.dependence import CategoryLabel, RankedSample, assign_categories, rank_recovery_speed
from outagekit.errors import OutageError
from outagekit.scaling import exceedance, failure_scaling, recovery_scaling, rule_summary, size_grid, top_share

from conftest import rec, record_lists

PL, NPL, PS, RS = list(CategoryLabel)


def s(rid, size, duration):
    return RankedSample(rid, size, 0.0, duration)


def test_two_failure_arithmetic():
    curve = recovery_scaling([s("a", 100, 1), s("b", 1, 99)])
    first = curve.points[0]
    assert first.d == 0.5
    assert first.p_c == pytest.approx(100 / 101)
    assert first.p_r == pytest.approx(0.01)


def test_identical_failures_are_diagonal():
    curve = recovery_scaling([s(str(i), 4, 9) for i in range(8)])
    assert all(p.p_c == pytest.approx(p.d) and p.p_r == pytest.approx(p.d) for p in curve.points)


def test_prefixes_match_enumeration():
    rng = np.random.default_rng(7)
    samples = [s(str(i), int(rng.integers(1, 500)), int(rng.integers(1, 90))) for i in range(10)]
    curve = recovery_scaling(samples)
    order = sorted(samples, key=lambda x: x.duration)
    tc = sum(x.size_x for x in samples)
    td = sum(x.duration for x in samples)
    for k, p in enumerate(curve.points, start=1):
        assert p.p_c == pytest.approx(sum(x.size_x for x in order[:k]) / tc, abs=1e-12)
        assert p.p_r == pytest.approx(sum(x.duration for x in order[:k]) / td, abs=1e-12)


@given(record_lists(min_size=1, max_size=40))
def test_curve_is_monotone_and_closes(records):
    samples = rank_recovery_speed(records)
    if sum(x.duration for x in samples) == 0:
        with pytest.raises(OutageError):
            recovery_scaling(samples)
        return
    pts = recovery_scaling(samples, assign_categories(samples)).points
    assert (pts[-1].d, pts[-1].p_c, pts[-1].p_r) == (1.0, 1.0, 1.0)
    for a, b in zip(pts, pts[1:]):
        assert a.d <= b.d and a.p_c <= b.p_c and a.p_r <= b.p_r


def test_exceedance_hand_example():
    grid = size_grid([1, 1, 10])
    pe, pc = exceedance([1, 1, 10], grid)
    i = int(np.searchsorted(grid, 1))
    assert pe[i] == pytest.approx(1 / 3)
    assert pc[i] == pytest.approx(10 / 12)
    assert pe[0] == 1.0 and pc[0] == 1.0


def test_point_mass_steps_at_value():
    curve = failure_scaling([[rec(i, 0, 1, 5) for i in range(4)]])
    for x, pe, pc, *_ in curve.rows():
        assert pe == pc == (1.0 if x < 5 else 0.0)


@given(record_lists(min_size=1, max_size=40))
def test_exceedance_non_increasing(records):
    curve = failure_scaling([records], stage1_only=False)
    assert np.all(np.diff(curve.p_exceed) <= 0)
    assert np.all(np.diff(curve.p_c) <= 1e-15)


def test_failure_scaling_averages_events():
    a = [rec("a", 0, 1, 1), rec("b", 0, 1, 3)]
    b = [rec("c", 0, 1, 3), rec("d", 0, 1, 3)]
    curve = failure_scaling([a, b], stage1_only=False)
    i = int(np.searchsorted(curve.x, 1))
    assert curve.p_exceed[i] == pytest.approx((0.5 + 1.0) / 2)
    assert curve.n_events == 2


def test_top_share():
    assert top_share([1, 1, 1, 97]) == pytest.approx(0.97)
    assert top_share([5] * 8) == pytest.approx(0.25)


def test_rule_summary_single_category():
    samples = [s("a", 200, 3), s("b", 300, 4)]
    rs = rule_summary(samples, {"a": PL, "b": PL})
    assert vars(rs.shares[PL]) == {"customer_share": 1.0, "downtime_share": 1.0, "failure_share": 1.0}
    assert all(v == 0 for c in (NPL, PS, RS) for v in vars(rs.shares[c]).values())


def test_rule_summary_duration_split():
    rs = rule_summary([s("a", 10, 1), s("b", 10, 9)], {"a": RS, "b": PS})
    assert rs.shares[RS].downtime_share == pytest.approx(0.1)
    assert rs.shares[PS].downtime_share == pytest.approx(0.9)
    assert rs.combined(RS, PS).customer_share == pytest.approx(1.0)
