import itertools

import numpy as np
import pytest

from core.descent import DescentConfig
from core.ensemble import (
    EnsembleSpec,
    band_width_vs_dimension,
    compare_gd_sgd_spin,
    histogram,
    histogram_text,
    resolve_workers,
    run_ensemble,
)
from core.errors import BudgetExceededError, InvalidArgumentError
from core.landscape import THEORY

FAST = DescentConfig(step_size=0.05, grad_tol=1e-4, max_steps=20_000)


def small_spec(**overrides):
    params = dict(landscape_kind="coupled", n=8, trials=6, descent=FAST, master_seed=3)
    params.update(overrides)
    return EnsembleSpec(**params)


# ========== 直方图 ==========

def test_histogram_single_bin():
    edges, counts = histogram([1.0, 1.0, 1.0], 0.5)
    assert counts.tolist() == [3]
    assert edges.tolist() == [1.0, 1.5]


def test_histogram_left_closed_bins():
    edges, counts = histogram([0.0, 0.4, 1.0], 0.5)
    assert edges.tolist() == pytest.approx([0.0, 0.5, 1.0, 1.5])
    assert counts.tolist() == [2, 0, 1]


@pytest.mark.parametrize("values,width", [([], 0.1), ([1.0], 0.0), ([np.nan], 0.1)])
def test_histogram_rejects_bad_input(values, width):
    with pytest.raises(InvalidArgumentError):
        histogram(values, width)


def test_histogram_text_has_one_line_per_bin():
    text = histogram_text([0.0, 0.5, 1.0, 1.5], [2, 0, 1], width=10)
    lines = text.strip("\n").split("\n")
    assert len(lines) == 3
    assert lines[0].endswith("#" * 10)
    assert lines[1].rstrip().endswith("0")


# ========== 线程数 ==========

def test_resolve_workers(monkeypatch):
    monkeypatch.setenv("FLOORLAB_WORKERS", "3")
    assert resolve_workers() == 3
    assert resolve_workers(jobs=2) == 2
    assert resolve_workers(5, jobs=10) == 5
    monkeypatch.delenv("FLOORLAB_WORKERS")
    assert resolve_workers() >= 1


# ========== run_ensemble ==========

def test_report_statistics_are_consistent():
    report = run_ensemble(small_spec(), workers=2)
    assert len(report.normalized_energies) == 6
    assert sum(report.histogram[1]) == 6
    assert report.mean == pytest.approx(np.mean(report.normalized_energies))
    assert report.std >= 0
    assert report.min <= report.mean <= report.max
    assert report.floor_gap == pytest.approx(report.mean - THEORY.floor)
    assert sum(report.stop_reason_counts.values()) == 6
    assert [o.trial for o in report.outcomes] == list(range(6))


def test_results_do_not_depend_on_worker_count():
    a = run_ensemble(small_spec(), workers=1)
    b = run_ensemble(small_spec(), workers=4)
    assert a.normalized_energies == b.normalized_energies


def test_single_trial_statistics_degenerate():
    report = run_ensemble(small_spec(trials=1), workers=1)
    assert report.std == 0.0
    assert report.min == report.max == report.mean


def test_fixed_landscape_mode():
    fresh = run_ensemble(small_spec(), workers=2)
    fixed = run_ensemble(small_spec(fresh_couplings_per_trial=False), workers=2)
    assert fixed.couplings_mode == "fixed-landscape"
    assert fresh.couplings_mode == "fresh-per-trial"
    # 第 0 次试验在两种模式下使用同一个耦合流
    assert fixed.normalized_energies[0] == fresh.normalized_energies[0]


def test_memory_budget_is_enforced():
    spec = small_spec(n=100, trials=2)
    with pytest.raises(BudgetExceededError):
        run_ensemble(spec, workers=2, memory_budget_bytes=1000)


def test_tripartite_and_decomposed_kinds_run():
    tri = run_ensemble(small_spec(landscape_kind="tripartite", trials=3), workers=2)
    dec = run_ensemble(small_spec(landscape_kind="decomposed", p_count=3, trials=3, refine_with_gd=True), workers=2)
    assert tri.landscape == "tripartite"
    assert dec.landscape == "decomposed(P=3)"
    assert dec.refined_mean is not None
    assert all(o.refined_normalized_energy is not None for o in dec.outcomes)


def test_report_serializes():
    data = run_ensemble(small_spec(trials=2), workers=1).to_dict()
    assert data['theory'] == {'e_zero': 1.657, 'e_infinity': 1.633}
    assert set(data['histogram']) == {'edges', 'counts'}


# ========== 维度扫描与 SGD 对比 ==========

def test_band_width_rows_are_sorted_and_unique():
    rows = band_width_vs_dimension("coupled", [6, 4, 6], trials=3, seed=1, descent=FAST, workers=2)
    assert [r.n for r in rows] == [4, 6]


def test_single_dimension_row_matches_run_ensemble():
    [row] = band_width_vs_dimension("coupled", [6], trials=4, seed=2, descent=FAST, workers=2)
    report = run_ensemble(EnsembleSpec(n=6, trials=4, descent=FAST, master_seed=2), workers=2)
    assert (row.mean, row.std, row.interquartile_range) == (report.mean, report.std, report.interquartile_range)


def test_sgd_comparison_requires_gd_baseline():
    with pytest.raises(InvalidArgumentError):
        compare_gd_sgd_spin(6, [2, 3], budget=1.0, trials=2, seed=0)


def test_single_subfield_row_equals_gradient_descent_ensemble():
    rows = compare_gd_sgd_spin(6, [1, 3], budget=5.0, trials=3, seed=4, step_size=0.05, grad_tol=1e-4, workers=2)
    gd = run_ensemble(EnsembleSpec(
        n=6, trials=3, master_seed=4,
        descent=DescentConfig(step_size=0.05, grad_tol=1e-4, max_steps=100),
    ), workers=2)
    assert rows[0].p == 1
    assert rows[0].report.normalized_energies == gd.normalized_energies
    for row in rows:
        assert row.refined_mean <= row.mean + 1e-9


# ========== 验收（耗时） ==========

@pytest.mark.slow
def test_high_dimension_floor_band():
    report = run_ensemble(EnsembleSpec(n=100, trials=200, master_seed=0))
    assert all(-1.667 <= e <= -1.50 for e in report.normalized_energies)
    assert abs(report.mean - THEORY.floor) < 0.05
    assert report.respects_ground_state_bound()
    edges, counts = report.histogram
    modal = edges[int(np.argmax(counts))]
    assert abs(modal - THEORY.floor) < 0.05


@pytest.mark.slow
def test_small_dimension_band_is_wider():
    rows = band_width_vs_dimension("coupled", [10, 100], trials=200, seed=0)
    assert rows[0].std > rows[1].std


@pytest.mark.slow
def test_tripartite_floor_is_lower():
    tri = run_ensemble(EnsembleSpec(landscape_kind="tripartite", n=50, trials=200, master_seed=0))
    coupled = run_ensemble(EnsembleSpec(landscape_kind="coupled", n=50, trials=200, master_seed=0))
    assert tri.interquartile_range < 0.1
    assert tri.mean < coupled.mean


@pytest.mark.slow
def test_subfield_counts_reach_the_same_floor():
    rows = compare_gd_sgd_spin(50, [1, 5, 10], budget=200.0, trials=50, seed=0)
    for a, b in itertools.combinations(rows, 2):
        assert abs(a.refined_mean - b.refined_mean) < 0.05
