from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
import hypothesis.strategies as st

from outagekit.dependence import CategoryLabel, RankedSample, assign_categories, rank_recovery_speed
from outagekit.events import build_event
from outagekit.impact import cmi, cumulative_downtime, cumulative_downtime_growth, device_breakdown, impact_report
from outagekit.ingest import DeviceType
from outagekit.synth import SynthConfig, generate_event

from conftest import rec, record_lists

PL, NPL, PS, RS = list(CategoryLabel)


def test_cmi_basics():
    assert cmi([rec("a", 0, 60, 10)]) == 600
    assert cmi([]) == 0


def test_cmi_fixture():
    recs = [rec("a", 0, 60, 10), rec("b", 5, 8, 1), rec("c", 0, 0, 99), rec("d", 10, 110, 3), rec("e", 2, 3, 7)]
    assert cmi(recs) == 600 + 3 + 0 + 300 + 7


@given(record_lists(max_size=40), st.randoms(use_true_random=False))
def test_cmi_additive(records, rnd):
    mask = [rnd.random() < 0.5 for _ in records]
    a = [r for r, m in zip(records, mask) if m]
    b = [r for r, m in zip(records, mask) if not m]
    assert cmi(a) + cmi(b) == cmi(records)


def minute_sum_accrual(records, grid, origin):
    """Sum customers out of service over each whole minute since ``origin``."""
    def active(u):
        return sum(r.customers for r in records if r.occurred_at <= u < r.restored_at)

    return np.array([sum(active(u) for u in range(origin, int(t))) for t in grid])


@given(record_lists(max_size=8, max_time=60))
def test_cumulative_downtime_matches_integration(records):
    grid = np.arange(0, 140, 7)
    got = cumulative_downtime(records, grid, 0)
    assert got.tolist() == minute_sum_accrual(records, grid, 0).tolist()
    assert got[-1] == cmi(records)


def test_constant_accrual_slope():
    g = cumulative_downtime_growth([rec("a", 0, 100, 10)], {"a": PS}, step=10, min_records=1)
    assert g.slopes[PS] == pytest.approx(10.0)
    assert PL in g.omitted and NPL in g.omitted


def test_empty_category_omitted_by_default():
    g = cumulative_downtime_growth([rec("a", 0, 100, 10), rec("b", 0, 50, 2)], {"a": PS, "b": PS})
    assert set(g.slopes) == {PS}
    assert set(g.omitted) == {PL, NPL, RS}


def test_growth_ratio_against_numeric_oracle():
    cfg = SynthConfig(seed=2, n_failures=1600, arrival_rate=160, crews=100, storm_flag=True)
    ev = build_event("E", generate_event(cfg).records)
    recs = ev.stage1_records
    labels = assign_categories(rank_recovery_speed(recs))
    g = cumulative_downtime_growth(recs, labels)
    assert PS in g.slopes and NPL in g.slopes
    t = (g.grid - g.grid[0]).astype(float)
    for cat in (PS, NPL):
        members = [r for r in recs if labels[r.record_id] == cat]
        y = cumulative_downtime(members, g.grid, int(g.grid[0])).astype(float)
        slope = np.polyfit(t, y, 1)[0]
        assert g.slopes[cat] == pytest.approx(slope, rel=1e-9)
    assert g.ratio(PS, NPL) == pytest.approx(g.slopes[PS] / g.slopes[NPL])


def test_device_breakdown():
    samples = [RankedSample(str(i), 500, 0.9, 1, device=DeviceType.SUBSTATION_BREAKER) for i in range(9)]
    samples.append(RankedSample("r", 500, 0.9, 1, device=DeviceType.RECLOSER))
    mix = device_breakdown(samples, {x.record_id: PL for x in samples})
    assert mix[PL][DeviceType.SUBSTATION_BREAKER] == pytest.approx(0.9)
    assert mix[PL][DeviceType.RECLOSER] == pytest.approx(0.1)
    assert set(mix) == {PL}


def test_impact_report_totals():
    recs = [rec("a", 0, 60, 200), rec("b", 0, 10, 5), rec("c", 3, 90, 2)]
    labels = {"a": PL, "b": RS, "c": PS}
    rep = impact_report(recs, labels, min_records=1)
    assert rep.total_cmi == cmi(recs)
    assert sum(c.cmi for c in rep.categories.values()) == rep.total_cmi
    # one record active for the whole 90-minute window accrues 200 per minute until t=60
    assert rep.categories[PL].growth_rate is not None
    assert rep.categories[PL].n_failures == 1
    d = rep.to_dict()
    assert d["categories"]["PrioritizedLarge"]["cmi_customer_minutes"] == 12000
