import math

import numpy as np
import pytest
from pydantic import ValidationError

from core.descent import (
    DescentConfig,
    StopReason,
    _Monitor,
    gradient_descent,
    random_product_point,
    random_sphere_point,
    refine_with_gd,
    sgd_spin_glass,
    tripartite_descent,
)
from core.errors import DimensionMismatchError, InvalidArgumentError
from core.landscape import (
    CouplingTensor,
    ProductSpherePoint,
    decompose_field,
    hamiltonian,
    sample_couplings,
    tangential_gradient,
    tripartite_hamiltonian,
)
from core.rng_streams import derive_stream

FAST = DescentConfig(step_size=0.05, grad_tol=1e-4, max_steps=20_000, record_every=10)


def setup(n, seed=0):
    x = sample_couplings(n, 1.0, derive_stream(seed, "couplings"))
    w0 = random_sphere_point(n, derive_stream(seed, "init"))
    return x, w0


# ========== 配置 ==========

@pytest.mark.parametrize("kwargs", [{"step_size": 0}, {"grad_tol": 0}, {"max_steps": 0}, {"unknown": 1}])
def test_config_rejects_invalid_values(kwargs):
    with pytest.raises(ValidationError):
        DescentConfig(**kwargs)


def test_config_defaults():
    cfg = DescentConfig()
    assert (cfg.step_size, cfg.grad_tol, cfg.max_steps) == (0.01, 1e-5, 1_000_000)


# ========== 起点 ==========

def test_random_point_in_one_dimension():
    for i in range(10):
        w = random_sphere_point(1, derive_stream(0, "init", i))
        assert w.coords[0] in (1.0, -1.0)


def test_random_point_norm_and_determinism():
    s = derive_stream(9, "init", 4)
    a, b = random_sphere_point(50, s), random_sphere_point(50, s)
    assert np.array_equal(a.coords, b.coords)
    assert np.linalg.norm(a.coords) == pytest.approx(math.sqrt(50), rel=1e-12)


def test_random_point_coordinates_are_centered():
    draws = np.array([random_sphere_point(3, derive_stream(2, "init", i)).coords for i in range(10_000)])
    # 每个坐标的方差为 1
    assert np.all(np.abs(draws.mean(axis=0)) < 3 / math.sqrt(10_000))


def test_random_product_point_factors_differ():
    p = random_product_point(5, derive_stream(0, "init"))
    assert not np.array_equal(p.w1.coords, p.w2.coords)
    assert not np.array_equal(p.w2.coords, p.w3.coords)


# ========== 梯度下降 ==========

def test_zero_field_stops_immediately():
    x = CouplingTensor(n=4, entries=np.zeros(64))
    record = gradient_descent(x, random_sphere_point(4, derive_stream(0, "init")))
    assert record.stop_reason is StopReason.GRADIENT
    assert record.steps_taken == 0
    assert record.terminal_energy == 0.0


def test_one_dimension_stops_at_start():
    x = CouplingTensor.from_values([1.7])
    w0 = random_sphere_point(1, derive_stream(3, "init"))
    record = gradient_descent(x, w0)
    assert record.steps_taken == 0
    assert np.array_equal(record.terminal_point.coords, w0.coords)
    assert record.terminal_energy == pytest.approx(1.7 * w0.coords[0])


def test_descent_lowers_energy_and_reaches_tolerance():
    x, w0 = setup(10)
    record = gradient_descent(x, w0, FAST)
    assert record.stop_reason is StopReason.GRADIENT
    assert record.terminal_energy < hamiltonian(x, w0)
    assert np.linalg.norm(tangential_gradient(x, record.terminal_point)) < FAST.grad_tol
    assert record.terminal_energy == pytest.approx(hamiltonian(x, record.terminal_point), rel=1e-10)
    assert record.normalized_energy == pytest.approx(record.terminal_energy / 10)


def test_trace_is_recorded_at_stride():
    x, w0 = setup(8)
    cfg = DescentConfig(step_size=0.05, grad_tol=1e-4, max_steps=95, record_every=10)
    record = gradient_descent(x, w0, cfg)
    budgets = [b for b, _ in record.trace]
    if record.stop_reason is StopReason.MAX_STEPS:
        assert record.steps_taken == 95
    expected = [0.05 * s for s in range(0, record.steps_taken + 1, 10)]
    assert budgets[:len(expected)] == pytest.approx(expected)
    assert budgets[-1] == pytest.approx(record.budget_consumed)
    assert record.trace[0][1] == pytest.approx(hamiltonian(x, w0))


def test_max_steps_stop():
    x, w0 = setup(10)
    record = gradient_descent(x, w0, DescentConfig(step_size=0.001, max_steps=3))
    assert record.stop_reason is StopReason.MAX_STEPS
    assert record.steps_taken == 3
    assert record.budget_consumed == pytest.approx(0.003)


def test_dimension_mismatch():
    x, _ = setup(4)
    with pytest.raises(DimensionMismatchError):
        gradient_descent(x, random_sphere_point(5, derive_stream(0, "init")))


def test_monitor_flags_sustained_rise():
    monitor = _Monitor(DescentConfig(divergence_patience=3, record_every=1))
    assert not monitor.observe(0, 0.0, 1.0)
    assert not monitor.observe(1, 0.1, 2.0)
    assert not monitor.observe(2, 0.2, 3.0)
    assert monitor.observe(3, 0.3, 4.0)


def test_monitor_resets_on_decrease():
    monitor = _Monitor(DescentConfig(divergence_patience=2, record_every=1))
    for i, e in enumerate([1.0, 2.0, 1.5, 2.5, 1.0]):
        assert not monitor.observe(i, float(i), e)


# ========== SGD ==========

def test_single_subfield_sgd_matches_gradient_descent():
    stream = derive_stream(21, "couplings")
    w0 = random_sphere_point(12, derive_stream(21, "init"))
    gd = gradient_descent(sample_couplings(12, 1.0, stream), w0, FAST)
    sgd = sgd_spin_glass(decompose_field(12, 1, stream), w0, FAST)
    assert np.array_equal(gd.terminal_point.coords, sgd.terminal_point.coords)
    assert gd.trace == sgd.trace
    assert (gd.steps_taken, gd.stop_reason, gd.budget_consumed) == (sgd.steps_taken, sgd.stop_reason, sgd.budget_consumed)


def test_epoch_of_subfield_gradients_equals_full_gradient():
    field = decompose_field(6, 4, derive_stream(2, "couplings"))
    w = random_sphere_point(6, derive_stream(2, "init"))
    summed = sum(tangential_gradient(sub, w) for sub in field.subfields)
    assert np.allclose(summed, tangential_gradient(field.summed(), w), atol=1e-12)
    mean = summed / field.p_count
    assert np.allclose(mean, tangential_gradient(field.summed(), w) / field.p_count, atol=1e-12)


def test_sgd_budget_counts_fraction_per_substep():
    field = decompose_field(6, 5, derive_stream(4, "couplings"))
    w0 = random_sphere_point(6, derive_stream(4, "init"))
    record = sgd_spin_glass(field, w0, DescentConfig(step_size=0.01, grad_tol=1e-12, max_steps=50))
    assert record.steps_taken == 50
    assert record.budget_consumed == pytest.approx(0.1)
    assert record.terminal_energy == pytest.approx(hamiltonian(field.summed(), record.terminal_point), rel=1e-10)


def test_uniform_order_needs_stream_and_is_reproducible():
    field = decompose_field(6, 3, derive_stream(4, "couplings"))
    w0 = random_sphere_point(6, derive_stream(4, "init"))
    with pytest.raises(InvalidArgumentError):
        sgd_spin_glass(field, w0, FAST, order="uniform")
    order = derive_stream(4, "order")
    a = sgd_spin_glass(field, w0, FAST, order="uniform", order_stream=order)
    b = sgd_spin_glass(field, w0, FAST, order="uniform", order_stream=order)
    assert np.array_equal(a.terminal_point.coords, b.terminal_point.coords)


def test_sgd_reaches_low_energy():
    field = decompose_field(10, 5, derive_stream(6, "couplings"))
    w0 = random_sphere_point(10, derive_stream(6, "init"))
    record = sgd_spin_glass(field, w0, FAST)
    assert record.stop_reason is not StopReason.DIVERGENCE
    assert record.terminal_energy < hamiltonian(field.summed(), w0)


# ========== 精修 ==========

def test_refine_from_stationary_point_is_stable():
    x, w0 = setup(10)
    gd = gradient_descent(x, w0, FAST)
    refined = refine_with_gd(x, gd.terminal_point, FAST)
    assert refined.steps_taken <= 5
    assert refined.terminal_energy == pytest.approx(gd.terminal_energy, abs=1e-6)


def test_refine_does_not_raise_energy():
    field = decompose_field(10, 5, derive_stream(8, "couplings"))
    w0 = random_sphere_point(10, derive_stream(8, "init"))
    sgd = sgd_spin_glass(field, w0, DescentConfig(step_size=0.05, max_steps=200))
    refined = refine_with_gd(field, sgd.terminal_point, DescentConfig(step_size=0.01, grad_tol=1e-4, max_steps=50_000))
    assert refined.terminal_energy <= sgd.terminal_energy + 1e-9


# ========== 三分模型 ==========

def test_tripartite_zero_field_stops_immediately():
    x = CouplingTensor(n=3, entries=np.zeros(27))
    record = tripartite_descent(x, random_product_point(3, derive_stream(0, "init")))
    assert record.steps_taken == 0
    assert record.stop_reason is StopReason.GRADIENT
    assert record.terminal_energy == 0.0


def test_tripartite_descent_lowers_energy():
    x = sample_couplings(10, 1.0, derive_stream(1, "couplings"))
    p0 = random_product_point(10, derive_stream(1, "init"))
    record = tripartite_descent(x, p0, FAST)
    assert isinstance(record.terminal_point, ProductSpherePoint)
    assert record.terminal_energy < tripartite_hamiltonian(x, p0)
    assert record.terminal_energy == pytest.approx(tripartite_hamiltonian(x, record.terminal_point), rel=1e-10)
    for factor in record.terminal_point.factors:
        assert np.linalg.norm(factor.coords) == pytest.approx(math.sqrt(10), rel=1e-12)


@pytest.mark.slow
def test_high_dimension_descent_reaches_floor_band():
    x, w0 = setup(100, seed=17)
    record = gradient_descent(x, w0, DescentConfig())
    assert record.stop_reason is StopReason.GRADIENT
    assert -1.657 <= record.normalized_energy <= -1.50


# ========== 迭代不变量 ==========

@pytest.mark.parametrize("seed", range(5))
def test_recorded_energy_never_rises_at_default_step(seed):
    n = 30
    x, w0 = setup(n, seed)
    record = gradient_descent(x, w0, DescentConfig(record_every=1, max_steps=3000))
    energies = np.array([e for _, e in record.trace])
    assert len(energies) > 1
    assert np.diff(energies).max() <= 1e-9 * n


def assert_on_sphere(coords, n):
    assert np.linalg.norm(coords) == pytest.approx(math.sqrt(n), rel=1e-10)


@pytest.mark.parametrize("k", range(1, 8))
def test_every_iterate_stays_on_its_sphere(k):
    n = 6
    x, w0 = setup(n, seed=k)
    cfg = DescentConfig(step_size=0.3, grad_tol=1e-12, max_steps=k)

    gd = gradient_descent(x, w0, cfg)
    assert gd.steps_taken == k
    assert_on_sphere(gd.terminal_point.coords, n)

    field = decompose_field(n, 3, derive_stream(k, "decompose"))
    sgd = sgd_spin_glass(field, w0, cfg)
    assert sgd.steps_taken == k
    assert_on_sphere(sgd.terminal_point.coords, n)

    tri = tripartite_descent(x, random_product_point(n, derive_stream(k, "init")), cfg)
    assert tri.steps_taken == k
    for factor in tri.terminal_point.factors:
        assert_on_sphere(factor.coords, n)
