import math

import numpy as np
import pytest

from core.errors import DegenerateInputError, DimensionMismatchError, InvalidArgumentError
from core.landscape import (
    THEORY,
    CouplingTensor,
    ProductSpherePoint,
    SpherePoint,
    TheoryConstants,
    decompose_field,
    energy_and_gradient,
    euclidean_gradient,
    hamiltonian,
    retract_to_sphere,
    sample_couplings,
    tangential_gradient,
    tripartite_energy_and_gradients,
    tripartite_gradient,
    tripartite_hamiltonian,
)
from core.rng_streams import derive_stream


def brute_force_energy(x, w1, w2, w3):
    n = len(w1)
    total = 0.0
    for i in range(n):
        for j in range(n):
            for k in range(n):
                total += x[i * n * n + j * n + k] * w1[i] * w2[j] * w3[k]
    return total / n


def central_difference(f, w, h=1e-5):
    grad = np.zeros_like(w)
    for i in range(len(w)):
        e = np.zeros_like(w)
        e[i] = h
        grad[i] = (f(w + e) - f(w - e)) / (2 * h)
    return grad


def random_point(n, seed=0):
    return retract_to_sphere(derive_stream(seed, "point").generator().standard_normal(n))


# ========== 类型 ==========

def test_theory_constants():
    assert THEORY.floor == pytest.approx(-1.633)
    assert THEORY.ground_state == pytest.approx(-1.657)
    with pytest.raises(InvalidArgumentError):
        TheoryConstants(e_zero=1.0, e_infinity=2.0)


def test_coupling_tensor_rejects_wrong_length():
    with pytest.raises(InvalidArgumentError):
        CouplingTensor(n=2, entries=np.zeros(7))
    with pytest.raises(InvalidArgumentError):
        CouplingTensor.from_values([1.0] * 9)


def test_coupling_entries_are_read_only():
    x = CouplingTensor.from_values(np.arange(8.0))
    with pytest.raises(ValueError):
        x.entries[0] = 5.0


def test_sphere_point_norm_invariant():
    with pytest.raises(InvalidArgumentError):
        SpherePoint(2, np.array([1.0, 0.0]))
    with pytest.raises(DimensionMismatchError):
        SpherePoint(3, np.array([math.sqrt(2.0), 0.0]))


# ========== 采样 ==========

def test_sample_couplings_is_reproducible(stream):
    a = sample_couplings(2, 1.0, stream)
    b = sample_couplings(2, 1.0, stream)
    assert a.entries.size == 8
    assert np.array_equal(a.entries, b.entries)


@pytest.mark.parametrize("sigma", [1.0, 0.5])
def test_sample_couplings_variance(sigma):
    x = sample_couplings(30, sigma, derive_stream(3, "couplings"))
    count = x.entries.size
    var = float(np.var(x.entries))
    stderr = sigma ** 2 * math.sqrt(2.0 / (count - 1))
    assert abs(var - sigma ** 2) < 3 * stderr
    assert abs(float(np.mean(x.entries))) < 3 * sigma / math.sqrt(count)


def test_sample_couplings_rejects_bad_arguments(stream):
    with pytest.raises(InvalidArgumentError):
        sample_couplings(0, 1.0, stream)
    with pytest.raises(InvalidArgumentError):
        sample_couplings(2, 0.0, stream)


def test_field_variance_equals_dimension():
    n, draws = 20, 2000
    w = random_point(n)
    values = np.array([
        hamiltonian(sample_couplings(n, 1.0, derive_stream(11, "couplings", t)), w) for t in range(draws)
    ])
    stderr = n * math.sqrt(2.0 / (draws - 1))
    assert abs(np.var(values, ddof=1) - n) < 3 * stderr


@pytest.mark.slow
def test_field_variance_equals_dimension_n50():
    n, draws = 50, 2000
    w = random_point(n)
    values = np.array([
        hamiltonian(sample_couplings(n, 1.0, derive_stream(12, "couplings", t)), w) for t in range(draws)
    ])
    stderr = n * math.sqrt(2.0 / (draws - 1))
    assert abs(np.var(values, ddof=1) - n) < 3 * stderr


# ========== 哈密顿量与梯度 ==========

def test_zero_field_has_zero_energy_and_gradient():
    x = CouplingTensor(n=3, entries=np.zeros(27))
    w = random_point(3)
    assert hamiltonian(x, w) == 0.0
    assert np.array_equal(euclidean_gradient(x, w), np.zeros(3))


@pytest.mark.parametrize("sign", [1.0, -1.0])
def test_one_dimensional_energy(sign):
    x = CouplingTensor.from_values([2.5])
    w = SpherePoint(1, np.array([sign]))
    assert hamiltonian(x, w) == pytest.approx(2.5 * sign)
    assert euclidean_gradient(x, w) == pytest.approx([7.5])
    assert tangential_gradient(x, w) == pytest.approx([0.0])


def test_hamiltonian_matches_triple_loop(integer_tensor, axis_point):
    w = axis_point.coords
    expected = brute_force_energy(integer_tensor.entries, w, w, w)
    assert hamiltonian(integer_tensor, axis_point) == pytest.approx(expected, rel=1e-12)
    general = random_point(2, seed=5)
    g = general.coords
    assert hamiltonian(integer_tensor, general) == pytest.approx(
        brute_force_energy(integer_tensor.entries, g, g, g), rel=1e-12
    )


def test_hamiltonian_dimension_mismatch(integer_tensor):
    with pytest.raises(DimensionMismatchError):
        hamiltonian(integer_tensor, random_point(3))


@pytest.mark.parametrize("n", [2, 5, 20])
def test_euclidean_gradient_matches_finite_differences(n):
    x = sample_couplings(n, 1.0, derive_stream(n, "couplings"))
    w = random_point(n, seed=n)
    numeric = central_difference(lambda v: energy_and_gradient(x.cube, v)[0], w.coords.copy())
    assert np.allclose(euclidean_gradient(x, w), numeric, rtol=1e-5, atol=1e-8)


@pytest.mark.parametrize("n", [2, 5, 20])
def test_tangential_gradient_is_orthogonal_to_point(n):
    x = sample_couplings(n, 1.0, derive_stream(n, "couplings"))
    w = random_point(n, seed=n + 1)
    assert abs(float(tangential_gradient(x, w) @ w.coords)) < 1e-10 * n


def test_projection_hand_case(axis_point):
    # 只有 x_111 非零时，w=(√2,0) 处的欧氏梯度沿 w 方向，切向分量为零
    x = CouplingTensor.from_values([1, 0, 0, 0, 0, 0, 0, 0])
    assert np.allclose(tangential_gradient(x, axis_point), [0.0, 0.0], atol=1e-12)


# ========== 回缩 ==========

def test_retract_scales_to_sphere():
    p = retract_to_sphere([3.0, 4.0])
    assert np.allclose(p.coords, math.sqrt(2.0) * np.array([0.6, 0.8]), rtol=1e-14)
    assert np.linalg.norm(p.coords) == pytest.approx(math.sqrt(2.0), rel=1e-12)


def test_retract_is_idempotent():
    p = random_point(7)
    assert np.allclose(retract_to_sphere(p.coords).coords, p.coords, rtol=0, atol=1e-14)


@pytest.mark.parametrize("v", [[0.0, 0.0], [np.nan, 1.0], []])
def test_retract_rejects_degenerate_vectors(v):
    with pytest.raises(DegenerateInputError):
        retract_to_sphere(v)


# ========== 三分模型 ==========

def test_tripartite_diagonal_reduces_to_coupled(integer_tensor):
    w = random_point(2, seed=9)
    assert tripartite_hamiltonian(integer_tensor, ProductSpherePoint.diagonal(w)) == pytest.approx(
        hamiltonian(integer_tensor, w), rel=1e-12
    )


def test_tripartite_matches_triple_loop(integer_tensor):
    p = ProductSpherePoint(2, random_point(2, 1), random_point(2, 2), random_point(2, 3))
    expected = brute_force_energy(integer_tensor.entries, p.w1.coords, p.w2.coords, p.w3.coords)
    assert tripartite_hamiltonian(integer_tensor, p) == pytest.approx(expected, rel=1e-12)


def test_tripartite_one_dimensional_product_rule():
    x = CouplingTensor.from_values([3.0])
    a, b, c = (SpherePoint(1, np.array([s])) for s in (1.0, -1.0, -1.0))
    p = ProductSpherePoint(1, a, b, c)
    assert tripartite_hamiltonian(x, p) == pytest.approx(3.0)
    g1, g2, g3 = tripartite_gradient(x, p)
    assert g1 == pytest.approx([3.0])
    assert g2 == pytest.approx([-3.0])
    assert g3 == pytest.approx([-3.0])


def test_tripartite_zero_field():
    x = CouplingTensor(n=2, entries=np.zeros(8))
    p = ProductSpherePoint(2, random_point(2, 1), random_point(2, 2), random_point(2, 3))
    assert tripartite_hamiltonian(x, p) == 0.0
    assert all(np.array_equal(g, np.zeros(2)) for g in tripartite_gradient(x, p))


@pytest.mark.parametrize("n", [2, 5, 20])
def test_tripartite_gradient_matches_finite_differences(n):
    x = sample_couplings(n, 1.0, derive_stream(n, "couplings"))
    ws = [random_point(n, seed=s).coords.copy() for s in (1, 2, 3)]
    grads = tripartite_gradient(x, ProductSpherePoint(n, *(SpherePoint(n, w) for w in ws)))
    for slot in range(3):
        def energy(v, slot=slot):
            args = list(ws)
            args[slot] = v
            return tripartite_energy_and_gradients(x.cube, *args)[0]
        numeric = central_difference(energy, ws[slot].copy())
        assert np.allclose(grads[slot], numeric, rtol=1e-5, atol=1e-8)


# ========== 分解场 ==========

def test_single_subfield_matches_standard_field(stream):
    field = decompose_field(4, 1, stream)
    assert field.subfields[0].sigma == 1.0
    assert np.array_equal(field.summed().entries, sample_couplings(4, 1.0, stream).entries)


def test_summed_field_has_unit_variance():
    field = decompose_field(30, 4, derive_stream(5, "couplings"))
    assert all(sub.sigma == pytest.approx(0.5) for sub in field.subfields)
    summed = field.summed().entries
    stderr = math.sqrt(2.0 / (summed.size - 1))
    assert abs(float(np.var(summed)) - 1.0) < 3 * stderr


@pytest.mark.parametrize("p_count", [1, 3, 5])
def test_field_energy_is_linear_in_subfields(p_count):
    field = decompose_field(6, p_count, derive_stream(8, "couplings"))
    w = random_point(6, seed=4)
    total = sum(hamiltonian(sub, w) for sub in field.subfields)
    assert hamiltonian(field.summed(), w) == pytest.approx(total, rel=1e-10, abs=1e-12)


def test_decompose_rejects_bad_p(stream):
    with pytest.raises(InvalidArgumentError):
        decompose_field(3, 0, stream)
