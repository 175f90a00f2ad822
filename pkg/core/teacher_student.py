"""
MNIST 上的教师/学生实验与 GD/SGD 对比

实验流程：
1. 训练集按种子置换对半划分
2. 教师网络（默认 784-500-300-10）用 SGD 在前一半的硬标签上训练
3. 教师对后一半的输出概率作为软标签
4. 不同宽度的学生网络用 SGD 拟合软标签，在测试集硬标签上评估
5. 同一初始化下比较全批量 GD 与小批量 SGD 的训练代价轨迹

所有 (结构, 种子) 单元在线程池中并发执行，结果按 (结构, 种子) 顺序合并。
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Any, List, Optional, Sequence, Tuple
import math

import numpy as np

from .console import in_current_context, log
from .ensemble import resolve_workers
from .errors import InvalidArgumentError
from .mnist import CLASSES, MnistDataset, SoftLabelDataset
from .neural_net import (
    NetworkArchitecture,
    NetworkParams,
    TrainConfig,
    TrainReport,
    checkpoint_id,
    forward,
    init_params,
    train_gd,
    train_sgd,
)
from .rng_streams import derive_stream

TEACHER_ARCHITECTURE = NetworkArchitecture((784, 500, 300, 10))
DEFAULT_BATCH_SIZE = 64

BOTH_RIGHT = "both-right"
BOTH_WRONG = "both-wrong"
TEACHER_ONLY_RIGHT = "teacher-only-right"
STUDENT_ONLY_RIGHT = "student-only-right"
CATEGORIES = (BOTH_RIGHT, BOTH_WRONG, TEACHER_ONLY_RIGHT, STUDENT_ONLY_RIGHT)


def _check_output_width(arch: NetworkArchitecture) -> None:
    if arch.layer_sizes[-1] != CLASSES:
        raise InvalidArgumentError(f"输出层宽度必须为 {CLASSES}: {arch.label}")


def _mean_std(values: Sequence[float]) -> Tuple[float, float]:
    """均值与样本标准差（ddof=1，单个值时为 0）"""
    arr = np.asarray(values, dtype=np.float64)
    std = float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0
    return float(np.mean(arr)), std


# ========== 教师 ==========

def train_teacher(
    first_half: MnistDataset,
    arch: NetworkArchitecture = TEACHER_ARCHITECTURE,
    cfg: Optional[TrainConfig] = None,
    seed: int = 0,
    batch_size: int = DEFAULT_BATCH_SIZE,
    test: Optional[MnistDataset] = None,
) -> Tuple[NetworkParams, TrainReport]:
    """
    在前一半训练集的硬标签上用 SGD 训练教师

    Returns:
        (教师参数, 训练报告)；给出 test 时报告包含测试代价与错分数
    """
    _check_output_width(arch)
    cfg = cfg or TrainConfig()
    log("TeacherStudent", f"训练教师 {arch.label}（{len(first_half)} 个样本，种子 {seed}）", "🎓")
    report = train_sgd(
        init_params(arch, derive_stream(seed, "teacher-init")),
        first_half.as_batch(),
        cfg,
        batch_size,
        derive_stream(seed, "teacher-shuffle"),
        test.as_test_set() if test is not None else None,
    )
    if report.test_error_count is not None:
        log("TeacherStudent", f"教师测试错分 {report.test_error_count}/{report.test_size}", "✅")
    return report.final_params, report


def generate_soft_labels(teacher_params: NetworkParams, second_half: MnistDataset) -> SoftLabelDataset:
    """教师输出概率作为后一半的目标；原硬标签只作为分析字段保留"""
    probs = forward(teacher_params, second_half.images)
    return SoftLabelDataset(
        images=second_half.images,
        soft_targets=probs,
        teacher_checkpoint_id=checkpoint_id(teacher_params),
        analysis_labels=second_half.labels,
    )


# ========== 学生 ==========

@dataclass
class StudentCell:
    """一个 (结构, 种子) 单元的结果"""
    architecture: str
    seed: int
    training_cost: float
    test_cost: float
    test_error: int
    report: TrainReport

    @property
    def params(self) -> NetworkParams:
        return self.report.final_params

    def to_dict(self) -> Dict[str, Any]:
        return {
            'architecture': self.architecture,
            'seed': self.seed,
            'training_cost': self.training_cost,
            'test_cost': self.test_cost,
            'test_error': self.test_error,
        }


@dataclass
class StudentStudyRow:
    architecture: str
    training_cost: float
    test_cost: float
    test_error_mean: float
    test_error_std: float

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.__dict__)


@dataclass
class StudentStudyReport:
    """每个学生结构一行，按宽度（参数个数）升序"""
    rows: List[StudentStudyRow]
    cells: List[StudentCell]
    teacher_checkpoint_id: str
    test_size: int

    def all_training_costs_positive(self) -> bool:
        return all(cell.training_cost > 0 for cell in self.cells)

    def width_trend_holds(self, allowed_inversions: int = 1) -> bool:
        """
        平均测试错分随宽度不增

        允许 allowed_inversions 个相邻逆序，且每个逆序幅度不超过两行的合并标准差。
        """
        inversions = 0
        for a, b in zip(self.rows, self.rows[1:]):
            if b.test_error_mean <= a.test_error_mean:
                continue
            pooled = math.sqrt((a.test_error_std ** 2 + b.test_error_std ** 2) / 2.0)
            if b.test_error_mean - a.test_error_mean > pooled:
                return False
            inversions += 1
        return inversions <= allowed_inversions

    def cell(self, architecture: str, seed: int) -> StudentCell:
        for c in self.cells:
            if c.architecture == architecture and c.seed == seed:
                return c
        raise KeyError(f"{architecture}/{seed}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            'teacher_checkpoint_id': self.teacher_checkpoint_id,
            'test_size': self.test_size,
            'rows': [row.to_dict() for row in self.rows],
            'all_training_costs_positive': self.all_training_costs_positive(),
            'width_trend_holds': self.width_trend_holds(),
        }


def run_student_study(
    soft_data: SoftLabelDataset,
    architectures: Sequence[NetworkArchitecture],
    seeds: Sequence[int],
    cfg: TrainConfig,
    test: MnistDataset,
    batch_size: int = DEFAULT_BATCH_SIZE,
    master_seed: int = 0,
    workers: Optional[int] = None,
) -> StudentStudyReport:
    """
    每个 (结构, 种子) 用 SGD 在软标签上训练学生，测试集用硬标签评估

    Args:
        soft_data: generate_soft_labels 的输出
        architectures: 至少两个学生结构
        seeds: 至少两个种子
        cfg: 学生 SGD 参数
        test: 测试集
    """
    if len(architectures) < 2 or len(seeds) < 2:
        raise InvalidArgumentError("学生实验至少需要 2 个结构和 2 个种子")
    for arch in architectures:
        _check_output_width(arch)
    ordered = sorted(architectures, key=lambda a: (a.parameter_count, a.layer_sizes))
    jobs = [(arch, int(seed)) for arch in ordered for seed in sorted(seeds)]
    batch = soft_data.as_batch()
    test_set = test.as_test_set()

    def run_cell(job) -> StudentCell:
        arch, seed = job
        report = train_sgd(
            init_params(arch, derive_stream(master_seed, f"student-init:{arch.label}", seed)),
            batch,
            cfg,
            batch_size,
            derive_stream(master_seed, f"student-shuffle:{arch.label}", seed),
            test_set,
        )
        log("TeacherStudent", f"学生 {arch.label} 种子 {seed}: 训练代价 {report.final_training_cost:.4g}，"
                              f"测试错分 {report.test_error_count}", "📊")
        return StudentCell(arch.label, seed, report.final_training_cost, report.test_cost,
                           report.test_error_count, report)

    workers = resolve_workers(workers, len(jobs))
    log("TeacherStudent", f"开始学生实验: {len(ordered)} 个结构 × {len(seeds)} 个种子（{workers} 个线程）", "🚀")
    with ThreadPoolExecutor(max_workers=workers) as pool:
        cells = list(pool.map(in_current_context(run_cell), jobs))

    rows = []
    for arch in ordered:
        group = [c for c in cells if c.architecture == arch.label]
        err_mean, err_std = _mean_std([c.test_error for c in group])
        rows.append(StudentStudyRow(
            architecture=arch.label,
            training_cost=float(np.mean([c.training_cost for c in group])),
            test_cost=float(np.mean([c.test_cost for c in group])),
            test_error_mean=err_mean,
            test_error_std=err_std,
        ))
    return StudentStudyReport(rows, cells, soft_data.teacher_checkpoint_id, len(test))


# ========== 预测比较 ==========

@dataclass
class Disagreement:
    index: int
    category: str
    label: int
    teacher_prediction: int
    student_prediction: int
    teacher_probs: np.ndarray
    student_probs: np.ndarray

    @property
    def teacher_confidence(self) -> float:
        return float(self.teacher_probs[self.teacher_prediction])

    @property
    def student_confidence(self) -> float:
        return float(self.student_probs[self.student_prediction])

    def to_row(self) -> Dict[str, Any]:
        return {
            'index': self.index,
            'category': self.category,
            'label': self.label,
            'teacher_prediction': self.teacher_prediction,
            'student_prediction': self.student_prediction,
            'teacher_confidence': self.teacher_confidence,
            'student_confidence': self.student_confidence,
        }


@dataclass
class DisagreementTable:
    entries: List[Disagreement] = field(default_factory=list)

    def category(self, name: str) -> List[Disagreement]:
        return [e for e in self.entries if e.category == name]

    def counts(self) -> Dict[str, int]:
        counts = {name: 0 for name in CATEGORIES}
        for entry in self.entries:
            counts[entry.category] += 1
        return counts


def compare_teacher_student_predictions(
    teacher_params: NetworkParams,
    student_params: NetworkParams,
    dataset: MnistDataset,
) -> DisagreementTable:
    """按教师/学生是否判对把样本分为四类，附带两者的概率向量"""
    teacher_probs = forward(teacher_params, dataset.images)
    student_probs = forward(student_params, dataset.images)
    teacher_pred = np.argmax(teacher_probs, axis=1)
    student_pred = np.argmax(student_probs, axis=1)
    table = DisagreementTable()
    for i, label in enumerate(dataset.labels):
        t_ok = teacher_pred[i] == label
        s_ok = student_pred[i] == label
        if t_ok and s_ok:
            category = BOTH_RIGHT
        elif t_ok:
            category = TEACHER_ONLY_RIGHT
        elif s_ok:
            category = STUDENT_ONLY_RIGHT
        else:
            category = BOTH_WRONG
        table.entries.append(Disagreement(
            index=i,
            category=category,
            label=int(label),
            teacher_prediction=int(teacher_pred[i]),
            student_prediction=int(student_pred[i]),
            teacher_probs=teacher_probs[i],
            student_probs=student_probs[i],
        ))
    return table


# ========== GD vs SGD ==========

@dataclass
class TraceBand:
    """共享预算网格上的训练代价均值 ± 标准差"""
    arm: str
    budgets: List[float]
    mean: List[float]
    std: List[float]

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.__dict__)


@dataclass
class ArmSummary:
    arm: str
    training_cost: float
    training_cost_std: float
    test_cost: float
    test_error: float
    test_error_std: float

    def to_row(self) -> Dict[str, Any]:
        return {
            'arm': self.arm,
            'training_cost': self.training_cost,
            'test_cost': self.test_cost,
            'test_error': self.test_error,
            'test_error_std': self.test_error_std,
        }


@dataclass
class GdSgdComparison:
    architecture: str
    seeds: List[int]
    gd_reports: List[TrainReport]
    sgd_reports: List[TrainReport]
    bands: Dict[str, TraceBand]
    table: List[ArmSummary]

    def summary(self, arm: str) -> ArmSummary:
        return next(row for row in self.table if row.arm == arm)

    def bands_overlap(self) -> bool:
        """两臂的最终训练代价均值各自落在对方 ±1 标准差之内"""
        gd, sgd = self.summary("gd"), self.summary("sgd")
        gap = abs(gd.training_cost - sgd.training_cost)
        return gap <= gd.training_cost_std and gap <= sgd.training_cost_std

    def to_dict(self) -> Dict[str, Any]:
        return {
            'architecture': self.architecture,
            'seeds': list(self.seeds),
            'table': [row.to_row() for row in self.table],
            'bands_overlap': self.bands_overlap(),
            'bands': {arm: band.to_dict() for arm, band in self.bands.items()},
        }


def budget_grid(step_sizes: Sequence[float], total_budget: float, points: int = 50) -> np.ndarray:
    """0 加上从最小步长到总预算的几何网格，适合对数坐标作图"""
    positive = [s for s in step_sizes if s > 0]
    if not positive or total_budget <= 0:
        return np.array([0.0])
    start = min(positive)
    if total_budget <= start:
        return np.array([0.0, float(total_budget)])
    return np.concatenate([[0.0], np.geomspace(start, total_budget, points)])


def _band(arm: str, reports: Sequence[TrainReport], grid: np.ndarray) -> TraceBand:
    curves = []
    for report in reports:
        budgets = [b for b, _ in report.training_cost_trace]
        costs = [c for _, c in report.training_cost_trace]
        # 提前停止的轨迹在网格上保持最终值
        curves.append(np.interp(grid, budgets, costs))
    stacked = np.vstack(curves)
    std = np.std(stacked, axis=0, ddof=1) if len(curves) > 1 else np.zeros(len(grid))
    return TraceBand(arm, grid.tolist(), stacked.mean(axis=0).tolist(), std.tolist())


def _arm_summary(arm: str, reports: Sequence[TrainReport]) -> ArmSummary:
    cost_mean, cost_std = _mean_std([r.final_training_cost for r in reports])
    err_mean, err_std = _mean_std([r.test_error_count for r in reports])
    return ArmSummary(
        arm=arm,
        training_cost=cost_mean,
        training_cost_std=cost_std,
        test_cost=float(np.mean([r.test_cost for r in reports])),
        test_error=err_mean,
        test_error_std=err_std,
    )


def run_gd_vs_sgd_mnist(
    arch: NetworkArchitecture,
    data: MnistDataset,
    test: MnistDataset,
    cfg_gd: TrainConfig,
    cfg_sgd: TrainConfig,
    seeds: Sequence[int],
    batch_size: int = DEFAULT_BATCH_SIZE,
    master_seed: int = 0,
    workers: Optional[int] = None,
    grid_points: int = 50,
) -> GdSgdComparison:
    """
    同一初始化下成对运行全批量 GD 与小批量 SGD

    两臂的 步长·步数 预算必须相等；batch_size 不小于样本数时两臂逐位一致。

    Raises:
        InvalidArgumentError: 预算不匹配或种子为空
    """
    _check_output_width(arch)
    if not seeds:
        raise InvalidArgumentError("至少需要一个种子")
    gd_budget = cfg_gd.step_size * cfg_gd.max_steps
    sgd_budget = cfg_sgd.step_size * cfg_sgd.max_steps
    if not math.isclose(gd_budget, sgd_budget, rel_tol=1e-12):
        raise InvalidArgumentError(f"预算不匹配: GD {gd_budget} ≠ SGD {sgd_budget}")

    batch = data.as_batch()
    test_set = test.as_test_set()
    seeds = [int(s) for s in seeds]

    def run_pair(seed: int) -> Tuple[TrainReport, TrainReport]:
        start = init_params(arch, derive_stream(master_seed, "init", seed))
        gd = train_gd(start, batch, cfg_gd, test_set)
        sgd = train_sgd(start, batch, cfg_sgd, batch_size, derive_stream(master_seed, "shuffle", seed), test_set)
        log("GdVsSgd", f"{arch.label} 种子 {seed}: GD {gd.final_training_cost:.4g} / SGD {sgd.final_training_cost:.4g}", "📊")
        return gd, sgd

    workers = resolve_workers(workers, len(seeds))
    log("GdVsSgd", f"{arch.label}: 预算 {gd_budget:g}，{len(seeds)} 个种子（{workers} 个线程）", "🚀")
    with ThreadPoolExecutor(max_workers=workers) as pool:
        pairs = list(pool.map(in_current_context(run_pair), seeds))
    gd_reports = [gd for gd, _ in pairs]
    sgd_reports = [sgd for _, sgd in pairs]

    grid = budget_grid((cfg_gd.step_size, cfg_sgd.step_size), gd_budget, grid_points)
    return GdSgdComparison(
        architecture=arch.label,
        seeds=seeds,
        gd_reports=gd_reports,
        sgd_reports=sgd_reports,
        bands={'gd': _band("gd", gd_reports, grid), 'sgd': _band("sgd", sgd_reports, grid)},
        table=[_arm_summary("gd", gd_reports), _arm_summary("sgd", sgd_reports)],
    )
