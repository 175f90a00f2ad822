"""
球面 3-自旋玻璃能量景观

定义耦合张量与球面点，计算哈密顿量及其欧氏/切向梯度：
1. 耦合模型 H(w) = (1/N) Σ x_ijk w_i w_j w_k
2. 三分模型 H~(w¹,w²,w³) = (1/N) Σ x_ijk w¹_i w²_j w³_k
3. 分解场：P 个方差 1/P 的子张量之和

求和遍历全部 N³ 个有序三元组（含重复下标），耦合不做对称化，
梯度保留三个槽位各自的贡献。张量按 i·N² + j·N + k 平铺存储。
"""
from dataclasses import dataclass, field
from typing import Tuple, Sequence
import math

import numpy as np

from .errors import InvalidArgumentError, DimensionMismatchError, DegenerateInputError
from .rng_streams import RngStream

SPHERE_NORM_RTOL = 1e-12


def _readonly(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TheoryConstants:
    """
    理论常数（每个自旋的能量量级）

    e_zero: 基态下界 -N·E₀ 中的 E₀
    e_infinity: 地板 -N·E∞ 中的 E∞
    """
    e_zero: float = 1.657
    e_infinity: float = 1.633

    def __post_init__(self):
        if not self.e_infinity < self.e_zero:
            raise InvalidArgumentError("e_infinity 必须小于 e_zero")

    @property
    def floor(self) -> float:
        """归一化地板能量 -E∞"""
        return -self.e_infinity

    @property
    def ground_state(self) -> float:
        """归一化基态下界 -E₀"""
        return -self.e_zero


THEORY = TheoryConstants()


@dataclass(frozen=True)
class CouplingTensor:
    """一次景观实现的 i.i.d. 高斯耦合张量（只读）"""
    n: int
    entries: np.ndarray
    sigma: float = 1.0
    seed_tag: str = ""

    def __post_init__(self):
        object.__setattr__(self, "entries", _readonly(self.entries))
        if self.n < 1:
            raise InvalidArgumentError(f"维度必须 ≥ 1: {self.n}")
        if self.entries.size != self.n ** 3:
            raise InvalidArgumentError(
                f"耦合张量长度应为 n³={self.n ** 3}，实际为 {self.entries.size}"
            )

    @classmethod
    def from_values(cls, values: Sequence[float], sigma: float = 1.0, seed_tag: str = "manual") -> "CouplingTensor":
        """由显式数值构造（长度必须是立方数）"""
        arr = np.asarray(values, dtype=np.float64).reshape(-1)
        n = round(arr.size ** (1.0 / 3.0))
        if n ** 3 != arr.size:
            raise InvalidArgumentError(f"长度 {arr.size} 不是立方数")
        return cls(n=n, entries=arr, sigma=sigma, seed_tag=seed_tag)

    @property
    def cube(self) -> np.ndarray:
        """(n, n, n) 视图"""
        return self.entries.reshape(self.n, self.n, self.n)

    @property
    def nbytes(self) -> int:
        return self.entries.nbytes


@dataclass(frozen=True)
class SpherePoint:
    """S^{N-1}(√N) 上的一个构型"""
    n: int
    coords: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coords", _readonly(self.coords))
        if self.coords.size != self.n:
            raise DimensionMismatchError(f"坐标个数 {self.coords.size} 与维度 {self.n} 不符")
        radius = math.sqrt(self.n)
        norm = float(np.linalg.norm(self.coords))
        if not abs(norm - radius) <= SPHERE_NORM_RTOL * radius:
            raise InvalidArgumentError(f"点不在半径 √{self.n} 的球面上 (‖w‖={norm!r})")

    def __neg__(self) -> "SpherePoint":
        return SpherePoint(self.n, -self.coords)


@dataclass(frozen=True)
class ProductSpherePoint:
    """三个球面乘积上的点 (w¹, w², w³)"""
    n: int
    w1: SpherePoint
    w2: SpherePoint
    w3: SpherePoint

    def __post_init__(self):
        for factor in self.factors:
            if factor.n != self.n:
                raise DimensionMismatchError(f"因子维度 {factor.n} 与 {self.n} 不符")

    @property
    def factors(self) -> Tuple[SpherePoint, SpherePoint, SpherePoint]:
        return (self.w1, self.w2, self.w3)

    @classmethod
    def diagonal(cls, w: SpherePoint) -> "ProductSpherePoint":
        """三个因子取同一点"""
        return cls(w.n, w, w, w)


@dataclass(frozen=True)
class DecomposedField:
    """P 个子场之和，每个子张量 sigma = 1/√P"""
    p_count: int
    subfields: Tuple[CouplingTensor, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "subfields", tuple(self.subfields))
        if self.p_count < 1 or len(self.subfields) != self.p_count:
            raise InvalidArgumentError(f"子场个数 {len(self.subfields)} 与 P={self.p_count} 不符")
        dims = {sub.n for sub in self.subfields}
        if len(dims) != 1:
            raise DimensionMismatchError(f"子场维度不一致: {sorted(dims)}")

    @property
    def n(self) -> int:
        return self.subfields[0].n

    def summed(self) -> CouplingTensor:
        """逐元素求和得到完整场；P=1 时与唯一子张量逐位相同"""
        total = self.subfields[0].entries.copy()
        for sub in self.subfields[1:]:
            total += sub.entries
        return CouplingTensor(
            n=self.n,
            entries=total,
            sigma=1.0,
            seed_tag="sum(" + ",".join(sub.seed_tag for sub in self.subfields) + ")",
        )


# ========== 采样 ==========

def sample_couplings(n: int, sigma: float, stream: RngStream) -> CouplingTensor:
    """
    采样 n³ 个独立的 Gaussian(0, sigma²) 耦合

    同一个流总是得到同样的张量。
    """
    if int(n) != n or n < 1:
        raise InvalidArgumentError(f"维度必须是正整数: {n}")
    if not sigma > 0 or not math.isfinite(sigma):
        raise InvalidArgumentError(f"sigma 必须为正: {sigma}")
    n = int(n)
    entries = stream.generator().standard_normal(n ** 3) * float(sigma)
    return CouplingTensor(n=n, entries=entries, sigma=float(sigma), seed_tag=stream.tag)


def decompose_field(n: int, p_count: int, stream: RngStream) -> DecomposedField:
    """
    生成 P 个子场，x^p ~ Gaussian(0, 1/P)

    P=1 时直接使用给定流本身，得到的场与 sample_couplings(n, 1, stream) 逐位相同；
    P>1 时第 p 个子场使用子流 stream.child(p)。
    """
    if int(p_count) != p_count or p_count < 1:
        raise InvalidArgumentError(f"P 必须是正整数: {p_count}")
    p_count = int(p_count)
    sigma = 1.0 / math.sqrt(p_count)
    if p_count == 1:
        return DecomposedField(1, (sample_couplings(n, sigma, stream),))
    subfields = tuple(sample_couplings(n, sigma, stream.child(p)) for p in range(p_count))
    return DecomposedField(p_count, subfields)


# ========== 数组层的缩并（下降循环直接调用） ==========

def contract_last(cube: np.ndarray, w: np.ndarray) -> np.ndarray:
    """M[i, j] = Σ_k x_ijk w_k"""
    n = w.shape[0]
    return (cube.reshape(n * n, n) @ w).reshape(n, n)


def energy_and_gradient(cube: np.ndarray, w: np.ndarray) -> Tuple[float, np.ndarray]:
    """一次缩并同时得到 H(w) 与欧氏梯度"""
    n = w.shape[0]
    m = contract_last(cube, w)
    slot1 = m @ w
    slot2 = w @ m
    slot3 = w @ (w @ cube.reshape(n, n * n)).reshape(n, n)
    energy = float(w @ slot1) / n
    return energy, (slot1 + slot2 + slot3) / n


def project_tangent(g: np.ndarray, w: np.ndarray) -> np.ndarray:
    """去掉径向分量: g - (⟨g, w⟩ / N) w"""
    return g - (float(g @ w) / w.shape[0]) * w


def tripartite_energy_and_gradients(cube: np.ndarray, w1: np.ndarray, w2: np.ndarray, w3: np.ndarray):
    """三分模型的能量与三个因子的欧氏梯度"""
    n = w1.shape[0]
    m = contract_last(cube, w3)              # m[i, j] = Σ_k x_ijk w³_k
    g1 = (m @ w2) / n
    g2 = (w1 @ m) / n
    g3 = (w2 @ (w1 @ cube.reshape(n, n * n)).reshape(n, n)) / n
    energy = float(w1 @ (m @ w2)) / n
    return energy, (g1, g2, g3)


# ========== 公开运算 ==========

def _check_dims(x: CouplingTensor, n: int) -> None:
    if x.n != n:
        raise DimensionMismatchError(f"耦合维度 {x.n} 与点维度 {n} 不符")


def hamiltonian(x: CouplingTensor, w: SpherePoint) -> float:
    """H(w) = (1/N) Σ_{i,j,k} x_ijk w_i w_j w_k"""
    _check_dims(x, w.n)
    m = contract_last(x.cube, w.coords)
    return float(w.coords @ (m @ w.coords)) / w.n


def euclidean_gradient(x: CouplingTensor, w: SpherePoint) -> np.ndarray:
    """∇_w H，包含三个槽位的贡献"""
    _check_dims(x, w.n)
    return energy_and_gradient(x.cube, w.coords)[1]


def tangential_gradient(x: CouplingTensor, w: SpherePoint) -> np.ndarray:
    """球面上的黎曼梯度"""
    _check_dims(x, w.n)
    return project_tangent(energy_and_gradient(x.cube, w.coords)[1], w.coords)


def retract_array(arr: np.ndarray) -> np.ndarray:
    """retract_to_sphere 的数组版本，不构造 SpherePoint"""
    norm = float(np.linalg.norm(arr))
    if arr.size == 0 or norm == 0.0 or not math.isfinite(norm):
        raise DegenerateInputError(f"无法投影到球面: ‖v‖={norm}")
    return (math.sqrt(arr.size) / norm) * arr


def retract_to_sphere(v) -> SpherePoint:
    """
    把环境空间中的向量缩放回球面: √n · v / ‖v‖

    Raises:
        DegenerateInputError: 零向量或含非有限值
    """
    arr = np.asarray(v, dtype=np.float64).reshape(-1)
    return SpherePoint(arr.size, retract_array(arr))


def tripartite_hamiltonian(x: CouplingTensor, p: ProductSpherePoint) -> float:
    """H~ = (1/N) Σ x_ijk w¹_i w²_j w³_k"""
    _check_dims(x, p.n)
    return tripartite_energy_and_gradients(x.cube, p.w1.coords, p.w2.coords, p.w3.coords)[0]


def tripartite_gradient(x: CouplingTensor, p: ProductSpherePoint) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """三个因子各自的欧氏梯度块"""
    _check_dims(x, p.n)
    return tripartite_energy_and_gradients(x.cube, p.w1.coords, p.w2.coords, p.w3.coords)[1]
