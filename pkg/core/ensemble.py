"""
多次试验的地板实验

实验流程：
1. 每次试验从 (主种子, 试验序号) 派生耦合流与起点流
2. 线程池并发执行下降，结果按试验序号合并，与调度无关
3. 统计归一化终点能量 H/N 的分布，并与理论地板 -E∞、基态下界 -E₀ 比较
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Any, List, Optional, Sequence, Tuple, Literal
import math
import os

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .console import in_current_context, log
from .descent import (
    DescentConfig,
    DescentRecord,
    SgdOrder,
    StopReason,
    gradient_descent,
    random_product_point,
    random_sphere_point,
    refine_with_gd,
    sgd_spin_glass,
    tripartite_descent,
)
from .errors import BudgetExceededError, InvalidArgumentError, NumericFailureError
from .landscape import THEORY, decompose_field, sample_couplings
from .rng_streams import derive_stream

DEFAULT_BIN_WIDTH = 0.01
DEFAULT_MEMORY_BUDGET_BYTES = 2048 * 1024 * 1024
GROUND_STATE_SLACK = 0.01

LandscapeKind = Literal["coupled", "tripartite", "decomposed"]


def resolve_workers(workers: Optional[int] = None, jobs: Optional[int] = None) -> int:
    """
    工作线程数：显式参数 > 环境变量 FLOORLAB_WORKERS > CPU 数（最多 8）
    """
    if workers is None:
        env = os.environ.get("FLOORLAB_WORKERS", "").strip()
        workers = int(env) if env else min(8, os.cpu_count() or 1)
    workers = max(1, int(workers))
    if jobs is not None:
        workers = min(workers, max(1, jobs))
    return workers


class EnsembleSpec(BaseModel):
    """一组试验的定义"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    landscape_kind: LandscapeKind = Field(default="coupled", description="景观类型")
    n: int = Field(ge=1, description="维度 N")
    trials: int = Field(default=200, ge=1, description="试验次数")
    p_count: int = Field(default=1, ge=1, description="decomposed 景观的子场个数 P")
    fresh_couplings_per_trial: bool = Field(default=True, description="每次试验重新采样耦合")
    descent: DescentConfig = Field(default_factory=DescentConfig)
    master_seed: int = Field(default=0, ge=0)
    sgd_order: SgdOrder = Field(default=SgdOrder.CYCLIC)
    refine_with_gd: bool = Field(default=False, description="decomposed 试验结束后用完整场 GD 精修")
    refine_descent: Optional[DescentConfig] = Field(default=None, description="精修参数，默认与 descent 同步长")

    @property
    def label(self) -> str:
        if self.landscape_kind == "decomposed":
            return f"decomposed(P={self.p_count})"
        return self.landscape_kind

    def landscape_bytes(self) -> int:
        p = self.p_count if self.landscape_kind == "decomposed" else 1
        return p * self.n ** 3 * 8


@dataclass
class TrialOutcome:
    """单次试验的结果行"""
    trial: int
    terminal_energy: float
    normalized_energy: float
    steps_taken: int
    stop_reason: StopReason
    refined_normalized_energy: Optional[float] = None
    refined_stop_reason: Optional[StopReason] = None
    trace: List[Tuple[float, float]] = field(default_factory=list)

    @property
    def completed(self) -> bool:
        return self.stop_reason is not StopReason.DIVERGENCE and math.isfinite(self.normalized_energy)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'trial': self.trial,
            'terminal_energy': self.terminal_energy,
            'normalized_energy': self.normalized_energy,
            'steps_taken': self.steps_taken,
            'stop_reason': self.stop_reason.value,
            'refined_normalized_energy': self.refined_normalized_energy,
        }


@dataclass
class EnsembleReport:
    """
    终点能量分布的统计

    normalized_energies 只包含完成的试验（发散试验只计入 stop_reason_counts），
    顺序与试验序号一致。
    """
    landscape: str
    n: int
    fresh_couplings_per_trial: bool
    normalized_energies: List[float]
    mean: float
    std: float
    min: float
    max: float
    interquartile_range: float
    histogram: Tuple[List[float], List[int]]
    floor_gap: float
    stop_reason_counts: Dict[str, int]
    outcomes: List[TrialOutcome] = field(default_factory=list)
    refined_mean: Optional[float] = None
    refined_std: Optional[float] = None

    @property
    def couplings_mode(self) -> str:
        return "fresh-per-trial" if self.fresh_couplings_per_trial else "fixed-landscape"

    def respects_ground_state_bound(self, slack: float = GROUND_STATE_SLACK) -> bool:
        """没有任何试验低于 -E₀ - slack"""
        return all(e >= THEORY.ground_state - slack for e in self.normalized_energies)

    def summary_row(self) -> Dict[str, Any]:
        return {
            'n': self.n,
            'mean': self.mean,
            'std': self.std,
            'interquartile_range': self.interquartile_range,
        }

    def to_dict(self) -> Dict[str, Any]:
        edges, counts = self.histogram
        data = {
            'landscape': self.landscape,
            'n': self.n,
            'couplings_mode': self.couplings_mode,
            'completed_trials': len(self.normalized_energies),
            'normalized_energies': list(self.normalized_energies),
            'mean': self.mean,
            'std': self.std,
            'min': self.min,
            'max': self.max,
            'interquartile_range': self.interquartile_range,
            'histogram': {'edges': list(edges), 'counts': list(counts)},
            'floor_gap': self.floor_gap,
            'stop_reason_counts': dict(self.stop_reason_counts),
            'theory': {'e_zero': THEORY.e_zero, 'e_infinity': THEORY.e_infinity},
        }
        if self.refined_mean is not None:
            data['refined_mean'] = self.refined_mean
            data['refined_std'] = self.refined_std
        return data


# ========== 直方图 ==========

def histogram(values: Sequence[float], bin_width: float = DEFAULT_BIN_WIDTH) -> Tuple[np.ndarray, np.ndarray]:
    """
    左闭右开的等宽直方图，第一个箱从 min(values) 开始并覆盖到 max(values)

    Returns:
        (edges, counts): len(edges) == len(counts) + 1，counts 之和等于输入个数
    """
    if not bin_width > 0:
        raise InvalidArgumentError(f"bin_width 必须为正: {bin_width}")
    arr = np.asarray(values, dtype=np.float64).reshape(-1)
    if arr.size == 0:
        raise InvalidArgumentError("histogram 需要非空输入")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError("histogram 输入含非有限值")
    lo, hi = float(arr.min()), float(arr.max())
    bins = int(math.floor((hi - lo) / bin_width)) + 1
    edges = lo + bin_width * np.arange(bins + 1, dtype=np.float64)
    index = np.floor((arr - lo) / bin_width).astype(np.int64)
    index = np.clip(index, 0, bins - 1)
    counts = np.bincount(index, minlength=bins)
    return edges, counts


def histogram_text(edges: Sequence[float], counts: Sequence[int], width: int = 50) -> str:
    """ASCII 直方图：每行 "箱左端  计数  条形" """
    peak = max(counts) if len(counts) else 0
    lines = []
    for left, count in zip(edges, counts):
        bar = "#" * (int(round(width * count / peak)) if peak else 0)
        lines.append(f"{left:+.4f}  {count:6d}  {bar}")
    return "\n".join(lines) + "\n"


def _summarize(values: Sequence[float]) -> Tuple[float, float, float, float, float]:
    arr = np.asarray(values, dtype=np.float64)
    q75, q25 = np.percentile(arr, [75, 25])
    return float(arr.mean()), float(arr.std()), float(arr.min()), float(arr.max()), float(q75 - q25)


# ========== 单次试验 ==========

def _run_trial(spec: EnsembleSpec, trial: int, fixed=None) -> TrialOutcome:
    couplings_stream = derive_stream(spec.master_seed, "couplings", trial if spec.fresh_couplings_per_trial else 0)
    init_stream = derive_stream(spec.master_seed, "init", trial)
    refined: Optional[DescentRecord] = None

    if spec.landscape_kind == "tripartite":
        x = fixed if fixed is not None else sample_couplings(spec.n, 1.0, couplings_stream)
        record = tripartite_descent(x, random_product_point(spec.n, init_stream), spec.descent)
    elif spec.landscape_kind == "decomposed":
        fld = fixed if fixed is not None else decompose_field(spec.n, spec.p_count, couplings_stream)
        record = sgd_spin_glass(
            fld,
            random_sphere_point(spec.n, init_stream),
            spec.descent,
            order=spec.sgd_order,
            order_stream=derive_stream(spec.master_seed, "order", trial),
        )
        if spec.refine_with_gd and record.stop_reason is not StopReason.DIVERGENCE:
            refine_cfg = spec.refine_descent or DescentConfig(
                step_size=spec.descent.step_size,
                grad_tol=spec.descent.grad_tol,
                record_every=spec.descent.record_every,
            )
            refined = refine_with_gd(fld, record.terminal_point, refine_cfg)
    else:
        x = fixed if fixed is not None else sample_couplings(spec.n, 1.0, couplings_stream)
        record = gradient_descent(x, random_sphere_point(spec.n, init_stream), spec.descent)

    return TrialOutcome(
        trial=trial,
        terminal_energy=record.terminal_energy,
        normalized_energy=record.normalized_energy,
        steps_taken=record.steps_taken,
        stop_reason=record.stop_reason,
        refined_normalized_energy=refined.normalized_energy if refined is not None else None,
        refined_stop_reason=refined.stop_reason if refined is not None else None,
        trace=record.trace,
    )


def _fixed_landscape(spec: EnsembleSpec):
    stream = derive_stream(spec.master_seed, "couplings", 0)
    if spec.landscape_kind == "decomposed":
        return decompose_field(spec.n, spec.p_count, stream)
    return sample_couplings(spec.n, 1.0, stream)


# ========== 公开运算 ==========

def run_ensemble(
    spec: EnsembleSpec,
    workers: Optional[int] = None,
    memory_budget_bytes: int = DEFAULT_MEMORY_BUDGET_BYTES,
    bin_width: float = DEFAULT_BIN_WIDTH,
) -> EnsembleReport:
    """
    执行 spec.trials 次独立下降并汇总

    Args:
        spec: 试验定义
        workers: 工作线程数（None 时见 resolve_workers）
        memory_budget_bytes: 同时驻留的耦合张量字节上限
        bin_width: 直方图箱宽（归一化能量）

    Raises:
        BudgetExceededError: 景观超出内存预算
        NumericFailureError: 所有试验都发散
    """
    workers = resolve_workers(workers, spec.trials)
    resident = workers if spec.fresh_couplings_per_trial else 1
    needed = spec.landscape_bytes() * resident
    if needed > memory_budget_bytes:
        raise BudgetExceededError(
            f"景观 {spec.label} n={spec.n} 需要 {needed} 字节"
            f"（{resident} 个同时驻留），超出预算 {memory_budget_bytes} 字节；"
            f"请减小 n / P 或工作线程数"
        )

    fixed = None if spec.fresh_couplings_per_trial else _fixed_landscape(spec)
    log("EnsembleLab", f"{spec.label} n={spec.n} 开始 {spec.trials} 次试验（{workers} 个线程）", "🚀")

    with ThreadPoolExecutor(max_workers=workers) as pool:
        outcomes = list(pool.map(in_current_context(lambda t: _run_trial(spec, t, fixed)), range(spec.trials)))

    counts: Dict[str, int] = {reason.value: 0 for reason in StopReason}
    for outcome in outcomes:
        counts[outcome.stop_reason.value] += 1
    if counts[StopReason.MAX_STEPS.value]:
        log("EnsembleLab", f"{counts[StopReason.MAX_STEPS.value]} 次试验达到 max_steps 上限", "⚠️")

    completed = [o for o in outcomes if o.completed]
    if not completed:
        raise NumericFailureError(f"{spec.label} n={spec.n} 的全部 {spec.trials} 次试验都发散")
    energies = [o.normalized_energy for o in completed]
    mean, std, lo, hi, iqr = _summarize(energies)
    edges, bin_counts = histogram(energies, bin_width)

    refined_mean = refined_std = None
    refined = [o.refined_normalized_energy for o in completed if o.refined_normalized_energy is not None]
    if refined:
        refined_mean, refined_std, *_ = _summarize(refined)

    log("EnsembleLab", f"{spec.label} n={spec.n} 均值 {mean:+.4f} 标准差 {std:.4f}", "📊")
    return EnsembleReport(
        landscape=spec.label,
        n=spec.n,
        fresh_couplings_per_trial=spec.fresh_couplings_per_trial,
        normalized_energies=energies,
        mean=mean,
        std=std,
        min=lo,
        max=hi,
        interquartile_range=iqr,
        histogram=(edges.tolist(), bin_counts.tolist()),
        floor_gap=mean - THEORY.floor,
        stop_reason_counts=counts,
        outcomes=outcomes,
        refined_mean=refined_mean,
        refined_std=refined_std,
    )


@dataclass
class BandRow:
    """一个维度上的带宽统计"""
    n: int
    mean: float
    std: float
    interquartile_range: float
    report: Optional[EnsembleReport] = None

    def to_dict(self) -> Dict[str, Any]:
        return {'n': self.n, 'mean': self.mean, 'std': self.std, 'interquartile_range': self.interquartile_range}


def band_width_vs_dimension(
    kind: LandscapeKind,
    dims: Sequence[int],
    trials: int,
    seed: int,
    descent: Optional[DescentConfig] = None,
    p_count: int = 1,
    fresh_couplings_per_trial: bool = True,
    workers: Optional[int] = None,
    memory_budget_bytes: int = DEFAULT_MEMORY_BUDGET_BYTES,
    bin_width: float = DEFAULT_BIN_WIDTH,
) -> List[BandRow]:
    """对每个维度执行同一协议，按 n 升序返回 (n, mean, std, IQR)"""
    if not dims:
        raise InvalidArgumentError("dims 不能为空")
    rows = []
    for n in sorted(set(int(d) for d in dims)):
        spec = EnsembleSpec(
            landscape_kind=kind,
            n=n,
            trials=trials,
            p_count=p_count,
            fresh_couplings_per_trial=fresh_couplings_per_trial,
            descent=descent or DescentConfig(),
            master_seed=seed,
        )
        report = run_ensemble(spec, workers=workers, memory_budget_bytes=memory_budget_bytes, bin_width=bin_width)
        rows.append(BandRow(n, report.mean, report.std, report.interquartile_range, report))
    return rows


@dataclass
class SgdComparisonRow:
    """GD/SGD 对比表的一行"""
    p: int
    mean: float
    std: float
    refined_mean: Optional[float]
    refined_std: Optional[float]
    report: Optional[EnsembleReport] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            'P': self.p,
            'mean': self.mean,
            'std': self.std,
            'refined_mean': self.refined_mean,
            'refined_std': self.refined_std,
        }


def compare_gd_sgd_spin(
    n: int,
    p_values: Sequence[int],
    budget: float,
    trials: int,
    seed: int,
    step_size: float = 0.01,
    grad_tol: float = 1e-5,
    refine_descent: Optional[DescentConfig] = None,
    order: SgdOrder = SgdOrder.CYCLIC,
    fresh_couplings_per_trial: bool = True,
    workers: Optional[int] = None,
    memory_budget_bytes: int = DEFAULT_MEMORY_BUDGET_BYTES,
    bin_width: float = DEFAULT_BIN_WIDTH,
) -> List[SgdComparisonRow]:
    """
    不同 P 在相同 步长·步数 预算下的终点能量对比

    每个 P 的 SGD 子步上限为 round(budget/γ)·P，因此各组消耗同样的预算；
    P=1 即梯度下降基线。每行附带 GD 精修后的均值。
    """
    if not p_values:
        raise InvalidArgumentError("p_values 不能为空")
    if 1 not in p_values:
        raise InvalidArgumentError("p_values 必须包含 P=1 作为 GD 基线")
    if not budget > 0:
        raise InvalidArgumentError(f"budget 必须为正: {budget}")
    full_steps = max(1, int(round(budget / step_size)))
    rows = []
    for p in p_values:
        spec = EnsembleSpec(
            landscape_kind="decomposed",
            n=n,
            trials=trials,
            p_count=p,
            fresh_couplings_per_trial=fresh_couplings_per_trial,
            descent=DescentConfig(step_size=step_size, grad_tol=grad_tol, max_steps=full_steps * p),
            master_seed=seed,
            sgd_order=order,
            refine_with_gd=True,
            refine_descent=refine_descent,
        )
        report = run_ensemble(spec, workers=workers, memory_budget_bytes=memory_budget_bytes, bin_width=bin_width)
        rows.append(SgdComparisonRow(p, report.mean, report.std, report.refined_mean, report.refined_std, report))
    return rows
