from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given
import hypothesis.strategies as st

from outagekit import dependence as dep
from outagekit.dependence import CategoryLabel, RankedSample, Rect
from outagekit.errors import OutageError
from outagekit.synth import fifo_config, generate_event, priority_config

from conftest import rec, record_lists


def sample(size, speed, rid=None, duration=1):
    return RankedSample(rid or f"s{size}-{speed}", size, speed, duration)


def brute_f(samples, xs, ys, x_bins, y_bins):
    """P(X in xs, Y in ys) - P(X in xs) P(Y in ys) by enumeration."""
    n = len(samples)
    in_x = [dep.x_bin_index(s.size_x, x_bins) in xs for s in samples]
    in_y = [dep.y_bin_index(s.speed_y, y_bins) in ys for s in samples]
    both = sum(a and b for a, b in zip(in_x, in_y))
    return both / n - (sum(in_x) / n) * (sum(in_y) / n)


def test_speed_formula():
    s = dep.rank_recovery_speed([rec("a", 0, 10), rec("b", 0, 20), rec("c", 0, 30)])
    assert [round(x.speed_y, 4) for x in s] == [0.8333, 0.5, 0.1667]


def test_speed_ties_average():
    s = dep.rank_recovery_speed([rec("a", 0, 5), rec("b", 0, 5), rec("c", 0, 9)])
    assert [x.rank for x in s] == [1.5, 1.5, 3.0]
    assert [round(x.speed_y, 4) for x in s] == [0.6667, 0.6667, 0.1667]
    equal = dep.rank_recovery_speed([rec(i, 0, 7) for i in range(4)])
    assert all(x.speed_y == 0.5 for x in equal)


def test_x_bins_are_log2():
    assert [dep.x_bin_index(v, 14) for v in (1, 2, 3, 4, 7, 8, 100, 10**6)] == [0, 1, 1, 2, 2, 3, 6, 13]
    assert dep.x_edges(4).tolist() == [1, 2, 4, 8, np.inf]


def test_y_bin_edges_land_upward():
    assert dep.y_bin_index(0.0, 20) == 0
    assert dep.y_bin_index(0.05, 20) == 1
    assert dep.y_bin_index(1.0, 20) == 19


def test_single_cell_is_independent():
    g = dep.estimate_joint([sample(5, 0.3, f"r{i}") for i in range(4)], 3, 3)
    assert np.all(np.abs(g.f_values) < 1e-15)
    assert g.joint[dep.x_bin_index(5, 3), dep.y_bin_index(0.3, 3)] == 1.0


def test_product_distribution_has_zero_f():
    samples = [sample(s, y, f"{s}-{y}") for s in (1, 2) for y in (0.25, 0.75)]
    g = dep.estimate_joint(samples, 2, 2)
    assert np.allclose(g.f_values, 0, atol=1e-9)


def test_hand_placed_two_by_two():
    # x bin 0 = size 1, bin 1 = size >= 2; y bin 0 = speed < 0.5
    pts = [(1, 0.1), (1, 0.2), (1, 0.9), (5, 0.8), (5, 0.7), (5, 0.1)]
    samples = [sample(x, y, str(i)) for i, (x, y) in enumerate(pts)]
    g = dep.estimate_joint(samples, 2, 2)
    for i, j in itertools.product(range(2), range(2)):
        assert g.f_values[i, j] == pytest.approx(brute_f(samples, {i}, {j}, 2, 2), abs=1e-12)
    assert g.f_values[0, 0] == pytest.approx(2 / 6 - 0.5 * 0.5)


def test_region_metric_matches_oracle_on_three_by_three():
    rng = np.random.default_rng(4)
    samples = [sample(int(rng.integers(1, 9)), float(rng.random()), str(i)) for i in range(30)]
    g = dep.estimate_joint(samples, 3, 3)
    cells = {(0, 0), (0, 1), (1, 0), (1, 1)}
    assert dep.dependence_region_metric(g, cells) == pytest.approx(
        brute_f(samples, {0, 1}, {0, 1}, 3, 3), abs=1e-12
    )
    assert dep.dependence_region_metric(g, Rect(0, 2, 0, 2)) == pytest.approx(0, abs=1e-12)
    assert dep.dependence_region_metric(g, [(2, 1)]) == pytest.approx(g.f_values[2, 1], abs=1e-15)


def test_non_rectangular_region_rejected():
    g = dep.estimate_joint([sample(1, 0.1, "a"), sample(9, 0.9, "b")], 3, 3)
    with pytest.raises(OutageError) as exc:
        dep.dependence_region_metric(g, {(0, 0), (1, 1)})
    assert exc.value.code == "NON_RECTANGULAR"


samples_st = st.lists(
    st.tuples(st.integers(1, 3000), st.floats(0, 1, allow_nan=False)), min_size=1, max_size=40
).map(lambda pts: [sample(x, y, str(i)) for i, (x, y) in enumerate(pts)])


@given(samples_st, st.integers(2, 6), st.integers(2, 6), st.data())
def test_every_rectangle_matches_enumeration_and_bound(samples, nx, ny, data):
    g = dep.estimate_joint(samples, nx, ny)
    x0 = data.draw(st.integers(0, nx - 1))
    x1 = data.draw(st.integers(x0, nx - 1))
    y0 = data.draw(st.integers(0, ny - 1))
    y1 = data.draw(st.integers(y0, ny - 1))
    val = dep.dependence_region_metric(g, Rect(x0, x1, y0, y1))
    assert val == pytest.approx(brute_f(samples, set(range(x0, x1 + 1)), set(range(y0, y1 + 1)), nx, ny), abs=1e-12)
    assert abs(val) <= 0.25 + 1e-12
    assert np.all(np.abs(g.f_values) <= 0.25 + 1e-12)
    assert abs(dep.dependence_region_metric(g, Rect(0, nx - 1, y0, y1))) < 1e-12
    assert abs(dep.dependence_region_metric(g, Rect(x0, x1, 0, ny - 1))) < 1e-12


@given(record_lists(min_size=1, max_size=40))
def test_rank_invariance_under_monotone_map(records):
    bumped = [rec(r.record_id, r.occurred_at, r.occurred_at + r.duration**3 + 7, r.customers) for r in records]
    a = dep.rank_recovery_speed(records)
    b = dep.rank_recovery_speed(bumped)
    assert [s.speed_y for s in a] == [s.speed_y for s in b]
    assert np.array_equal(dep.estimate_joint(a).f_values, dep.estimate_joint(b).f_values)


def test_growth_stops_at_negative_background():
    f = np.full((4, 4), -0.25)
    f[1:3, 1:3] = 0.1
    tau, rects = dep.candidate_regions(f, 0.05)
    assert tau == pytest.approx(0.005)
    assert rects == [Rect(1, 2, 1, 2)]


def test_growth_spreads_while_mean_exceeds_threshold():
    f = np.zeros((4, 4))
    f[1:3, 1:3] = 0.1
    # mean over the full grid is 0.025 > tau, so growth absorbs the zero cells
    assert dep.candidate_regions(f, 0.05)[1] == [Rect(0, 3, 0, 3)]


def test_only_positive_cells_seed_regions():
    f = np.full((5, 5), -0.5)
    f[0, 0] = 0.2
    f[4, 3:5] = 0.15
    _, rects = dep.candidate_regions(f, 0.05)
    assert rects == [Rect(0, 0, 0, 0), Rect(4, 4, 3, 4)]
    assert dep.candidate_regions(-np.abs(f), 0.05) == (0.0, [])


def test_grow_tie_break_prefers_lower_index():
    f = np.full((3, 3), -1.0)
    f[1, 1] = 1.0
    f[0, 1] = f[2, 1] = 0.5
    # both x expansions add one cell; the lower x index wins first
    rect = dep.grow_rectangle(f, (1, 1), 0.05)
    assert rect == Rect(0, 2, 1, 1)
    f[2, 1] = -1.0
    assert dep.grow_rectangle(f, (1, 1), 0.3) == Rect(0, 1, 1, 1)


def test_too_few_samples():
    with pytest.raises(OutageError) as exc:
        dep.extract_clusters([sample(1, 0.1, str(i)) for i in range(3)], folds=5)
    assert exc.value.code == "TOO_FEW_SAMPLES"


def test_perfect_priority_ordering_gives_both_clusters():
    rng = np.random.default_rng(0)
    sizes = np.ceil(1 + rng.pareto(1.1, 1000)).astype(int)
    order = np.argsort(-sizes, kind="stable")
    durations = np.empty(1000, dtype=int)
    durations[order] = np.arange(1, 1001)
    records = [rec(str(i), 0, int(durations[i]), int(sizes[i])) for i in range(1000)]
    clusters = dep.extract_clusters(dep.rank_recovery_speed(records))
    hints = {c.label_hint for c in clusters}
    assert {"upper-left", "lower-right"} <= hints
    assert all(abs(c.mean_f) > c.mean_err for c in clusters)


def test_priority_synth_has_upper_left_cluster():
    tr = generate_event(priority_config(1))
    clusters = dep.extract_clusters(dep.rank_recovery_speed(tr.records))
    assert any(c.label_hint == "upper-left" for c in clusters)


def test_fifo_synth_is_mostly_clean():
    found = sum(
        bool(dep.extract_clusters(dep.rank_recovery_speed(generate_event(fifo_config(s)).records)))
        for s in range(10)
    )
    assert found <= 2


def test_error_bars_positive_with_folds():
    tr = generate_event(fifo_config(0, 300))
    g = dep.estimate_joint(dep.rank_recovery_speed(tr.records), folds=5)
    occupied_x = g.x_marginal > 0
    assert np.all(g.err[occupied_x] > 0)


def test_fold_assignment_balanced_and_seeded():
    a = dep.fold_assignment(103, 5, seed=1)
    assert np.array_equal(a, dep.fold_assignment(103, 5, seed=1))
    counts = np.bincount(a)
    assert counts.max() - counts.min() <= 1


@pytest.mark.parametrize(
    "size, speed, expected",
    [
        (1500, 0.95, CategoryLabel.PRIORITIZED_LARGE),
        (50, 0.10, CategoryLabel.PROLONGED_SMALL),
        (101, 0.50, CategoryLabel.NON_PRIORITIZED_LARGE),
        (100, 0.95, CategoryLabel.REMAINING_SMALL),
        (101, 0.85, CategoryLabel.PRIORITIZED_LARGE),
        (100, 0.50, CategoryLabel.PROLONGED_SMALL),
    ],
)
def test_categorize(size, speed, expected):
    assert dep.categorize(size, speed) is expected


def _grid(samples):
    return dep.estimate_joint(samples, 4, 4)


def test_average_single_and_symmetric():
    rng = np.random.default_rng(2)
    pts = [sample(int(rng.integers(1, 20)), float(rng.random()), str(i)) for i in range(25)]
    g = _grid(pts)
    avg = dep.average_dependence([g])
    assert np.array_equal(avg.f_values, g.f_values) and avg is not g
    neg = dep.JointGrid(**{**vars(g), "f_values": -g.f_values})
    assert np.allclose(dep.average_dependence([g, neg]).f_values, 0, atol=1e-15)


def test_average_is_cellwise_mean():
    rng = np.random.default_rng(3)
    grids = [
        _grid([sample(int(rng.integers(1, 20)), float(rng.random()), str(i)) for i in range(30)])
        for _ in range(3)
    ]
    avg = dep.average_dependence(grids)
    for i, j in itertools.product(range(4), range(4)):
        assert avg.f_values[i, j] == pytest.approx(sum(g.f_values[i, j] for g in grids) / 3, abs=1e-15)


def test_average_rejects_mismatched_bins():
    a = _grid([sample(1, 0.1, "a")])
    b = dep.estimate_joint([sample(1, 0.1, "a")], 5, 4)
    with pytest.raises(OutageError) as exc:
        dep.average_dependence([a, b])
    assert exc.value.code == "BIN_MISMATCH"


def test_grid_json_encodes_open_edge():
    d = _grid([sample(1, 0.1, "a")]).to_dict()
    assert d["x_bin_edges"][-1] is None
    assert len(d["y_bin_edges"]) == 5
