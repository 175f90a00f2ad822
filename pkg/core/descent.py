"""
球面上的下降动力学

- gradient_descent: 投影梯度下降 w ← √N (w - γ∇_T H) / ‖·‖
- sgd_spin_glass: 小批量为 1 的随机梯度下降，每步只用一个子场
- refine_with_gd: 在 SGD 终点上用完整场继续做梯度下降
- tripartite_descent: 三个球面乘积上的同时下降

停止条件使用切向梯度范数；能量连续上升 divergence_patience 次
或出现非有限值时以 divergence 结束。
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple, Union, Dict, Any
import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .errors import DimensionMismatchError, DegenerateInputError, InvalidArgumentError
from .landscape import (
    CouplingTensor,
    DecomposedField,
    ProductSpherePoint,
    SpherePoint,
    energy_and_gradient,
    project_tangent,
    retract_array,
    retract_to_sphere,
    tripartite_energy_and_gradients,
)
from .rng_streams import RngStream


class StepConfig(BaseModel):
    """恒定步长迭代的公共参数"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    step_size: float = Field(default=0.01, gt=0, description="步长 γ")
    grad_tol: float = Field(default=1e-5, gt=0, description="切向梯度范数的停止阈值")
    max_steps: int = Field(default=1_000_000, ge=1, description="迭代上限")
    record_every: int = Field(default=100, ge=1, description="轨迹采样间隔（以完整梯度步计）")


class DescentConfig(StepConfig):
    """球面下降参数"""
    divergence_patience: int = Field(default=100, ge=1, description="能量连续上升多少次判定发散")


class StopReason(str, Enum):
    GRADIENT = "gradient-below-tol"
    MAX_STEPS = "max-steps"
    DIVERGENCE = "divergence"


class SgdOrder(str, Enum):
    CYCLIC = "cyclic"
    UNIFORM = "uniform"


@dataclass
class DescentRecord:
    """
    一次下降的结果摘要

    trace 中每一项为 (累计 步长·步数, 能量)；SGD 的一个子步计 γ/P。
    """
    terminal_point: Union[SpherePoint, ProductSpherePoint]
    terminal_energy: float
    normalized_energy: float
    steps_taken: int
    stop_reason: StopReason
    budget_consumed: float
    trace: List[Tuple[float, float]] = field(default_factory=list)

    def to_dict(self, include_trace: bool = False) -> Dict[str, Any]:
        data = {
            'terminal_energy': self.terminal_energy,
            'normalized_energy': self.normalized_energy,
            'steps_taken': self.steps_taken,
            'stop_reason': self.stop_reason.value,
            'budget_consumed': self.budget_consumed,
        }
        if include_trace:
            data['trace'] = [list(point) for point in self.trace]
        return data


# ========== 起点 ==========

def random_sphere_point(n: int, stream: RngStream) -> SpherePoint:
    """球面上的均匀随机点：n 个标准正态再投影"""
    if int(n) != n or n < 1:
        raise InvalidArgumentError(f"维度必须是正整数: {n}")
    return retract_to_sphere(stream.generator().standard_normal(int(n)))


def random_product_point(n: int, stream: RngStream) -> ProductSpherePoint:
    """三个因子分别取子流 0、1、2"""
    w1, w2, w3 = (random_sphere_point(n, stream.child(i)) for i in range(3))
    return ProductSpherePoint(int(n), w1, w2, w3)


# ========== 公共循环 ==========

class _Monitor:
    """记录轨迹并监测能量持续上升"""

    def __init__(self, cfg: DescentConfig):
        self.cfg = cfg
        self.trace: List[Tuple[float, float]] = []
        self._previous: Optional[float] = None
        self._rising = 0

    def observe(self, check_index: int, budget: float, energy: float) -> bool:
        """返回 True 表示应判定发散"""
        if check_index % self.cfg.record_every == 0:
            self.trace.append((budget, energy))
        if self._previous is not None and energy > self._previous:
            self._rising += 1
        else:
            self._rising = 0
        self._previous = energy
        return self._rising >= self.cfg.divergence_patience

    def close(self, budget: float, energy: float) -> List[Tuple[float, float]]:
        if math.isfinite(energy) and (not self.trace or self.trace[-1][0] != budget):
            self.trace.append((budget, energy))
        return self.trace


def _descend(
    full_cube: np.ndarray,
    sub_cubes: Sequence[np.ndarray],
    w0: SpherePoint,
    cfg: DescentConfig,
    pick=None,
) -> DescentRecord:
    """
    GD 与 SGD 共用的迭代

    每个 epoch 起点（steps % P == 0）在完整场上计算能量与切向梯度，
    用于记录、发散监测与停止判断。P=1 时直接复用该梯度，
    因此 P=1 的 SGD 与 GD 逐位一致。
    """
    p_count = len(sub_cubes)
    gamma = cfg.step_size
    w = w0.coords.copy()
    monitor = _Monitor(cfg)
    steps = 0
    energy = float("nan")
    energy_is_current = False
    reason = StopReason.MAX_STEPS

    while True:
        if steps % p_count == 0:
            energy, g = energy_and_gradient(full_cube, w)
            tangent = project_tangent(g, w)
            energy_is_current = True
            grad_norm = float(np.linalg.norm(tangent))
            if not (math.isfinite(energy) and math.isfinite(grad_norm)):
                reason = StopReason.DIVERGENCE
                break
            if monitor.observe(steps // p_count, gamma * steps / p_count, energy):
                reason = StopReason.DIVERGENCE
                break
            if grad_norm < cfg.grad_tol:
                reason = StopReason.GRADIENT
                break
        if steps >= cfg.max_steps:
            reason = StopReason.MAX_STEPS
            break

        if p_count == 1:
            direction = tangent
        else:
            p = pick(steps) if pick is not None else steps % p_count
            direction = project_tangent(energy_and_gradient(sub_cubes[p], w)[1], w)
        try:
            w = retract_array(w - gamma * direction)
        except DegenerateInputError:
            reason = StopReason.DIVERGENCE
            break
        steps += 1
        energy_is_current = False

    if not energy_is_current:
        energy, _ = energy_and_gradient(full_cube, w)
    budget = gamma * steps / p_count
    n = w.shape[0]
    return DescentRecord(
        terminal_point=SpherePoint(n, w),
        terminal_energy=energy,
        normalized_energy=energy / n,
        steps_taken=steps,
        stop_reason=reason,
        budget_consumed=budget,
        trace=monitor.close(budget, energy),
    )


# ========== 公开运算 ==========

def gradient_descent(x: CouplingTensor, w0: SpherePoint, cfg: Optional[DescentConfig] = None) -> DescentRecord:
    """
    投影梯度下降

    Args:
        x: 耦合张量
        w0: 起点
        cfg: 下降参数，默认 DescentConfig()

    Returns:
        DescentRecord
    """
    if x.n != w0.n:
        raise DimensionMismatchError(f"耦合维度 {x.n} 与起点维度 {w0.n} 不符")
    cfg = cfg or DescentConfig()
    return _descend(x.cube, (x.cube,), w0, cfg)


def sgd_spin_glass(
    field: DecomposedField,
    w0: SpherePoint,
    cfg: Optional[DescentConfig] = None,
    order: Union[SgdOrder, str] = SgdOrder.CYCLIC,
    order_stream: Optional[RngStream] = None,
) -> DescentRecord:
    """
    小批量为 1 的 SGD

    第 t 步使用一个子场的切向梯度：cyclic 策略按 p = t mod P 轮换，
    uniform 策略从 order_stream 有放回地均匀抽取。
    终点能量在完整（求和）场上计算。
    """
    if field.n != w0.n:
        raise DimensionMismatchError(f"场维度 {field.n} 与起点维度 {w0.n} 不符")
    cfg = cfg or DescentConfig()
    order = SgdOrder(order)
    pick = None
    if order is SgdOrder.UNIFORM:
        if order_stream is None:
            raise InvalidArgumentError("uniform 顺序需要 order_stream")
        gen = order_stream.generator()
        pick = lambda _step: int(gen.integers(0, field.p_count))
    full = field.summed()
    return _descend(full.cube, tuple(sub.cube for sub in field.subfields), w0, cfg, pick)


def refine_with_gd(
    field: Union[DecomposedField, CouplingTensor],
    start: SpherePoint,
    cfg: Optional[DescentConfig] = None,
) -> DescentRecord:
    """从给定点（通常是 SGD 终点）在完整场上继续梯度下降"""
    full = field.summed() if isinstance(field, DecomposedField) else field
    return gradient_descent(full, start, cfg)


def tripartite_descent(
    x: CouplingTensor,
    p0: ProductSpherePoint,
    cfg: Optional[DescentConfig] = None,
) -> DescentRecord:
    """
    乘积球面上的梯度下降

    一步同时更新三个因子，再把每个因子各自投影回自己的球面；
    停止条件作用在三个切向梯度拼接后的范数上。
    """
    if x.n != p0.n:
        raise DimensionMismatchError(f"耦合维度 {x.n} 与起点维度 {p0.n} 不符")
    cfg = cfg or DescentConfig()
    gamma = cfg.step_size
    cube = x.cube
    ws = [factor.coords.copy() for factor in p0.factors]
    monitor = _Monitor(cfg)
    steps = 0
    energy = float("nan")
    energy_is_current = False
    reason = StopReason.MAX_STEPS

    while True:
        energy, grads = tripartite_energy_and_gradients(cube, *ws)
        tangents = [project_tangent(g, w) for g, w in zip(grads, ws)]
        energy_is_current = True
        grad_norm = math.sqrt(sum(float(t @ t) for t in tangents))
        if not (math.isfinite(energy) and math.isfinite(grad_norm)):
            reason = StopReason.DIVERGENCE
            break
        if monitor.observe(steps, gamma * steps, energy):
            reason = StopReason.DIVERGENCE
            break
        if grad_norm < cfg.grad_tol:
            reason = StopReason.GRADIENT
            break
        if steps >= cfg.max_steps:
            reason = StopReason.MAX_STEPS
            break
        try:
            ws = [retract_array(w - gamma * t) for w, t in zip(ws, tangents)]
        except DegenerateInputError:
            reason = StopReason.DIVERGENCE
            break
        steps += 1
        energy_is_current = False

    if not energy_is_current:
        energy = tripartite_energy_and_gradients(cube, *ws)[0]
    n = x.n
    point = ProductSpherePoint(n, *(SpherePoint(n, w) for w in ws))
    budget = gamma * steps
    return DescentRecord(
        terminal_point=point,
        terminal_energy=energy,
        normalized_energy=energy / n,
        steps_taken=steps,
        stop_reason=reason,
        budget_consumed=budget,
        trace=monitor.close(budget, energy),
    )
