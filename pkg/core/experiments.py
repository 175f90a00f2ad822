"""
实验注册表与运行器

run(config) 的流程：
1. 从注册表取出实验，执行对应的模块运算
2. 把结果渲染为 CSV / JSON / 直方图文本，由协调者写入运行目录
3. 写入清单（配置快照、派生种子、时间戳、数据文件校验和）
失败时仍写入 status="failed" 的部分清单，然后重新抛出异常。
"""
from dataclasses import dataclass, field
from typing import Callable, Dict, Any, List, Optional, Sequence
import csv
import io
import json
import math
import time

from . import __version__
from .console import log, verbosity
from .ensemble import (
    EnsembleReport,
    band_width_vs_dimension,
    compare_gd_sgd_spin,
    histogram_text,
)
from .errors import FloorLabError
from .landscape import THEORY
from .experiment_config import ExperimentConfig, config_snapshot
from .mnist import FULL_TRAIN_COUNT, MnistDataset, MnistPaths, load_mnist, make_splits
from .neural_net import NetworkArchitecture, TrainConfig, params_to_bytes
from .rng_streams import derive_stream
from .run_storage import RunManifest, RunStorage
from .teacher_student import (
    compare_teacher_student_predictions,
    generate_soft_labels,
    run_gd_vs_sgd_mnist,
    run_student_study,
    train_teacher,
)

TRIALS_HEADER = ["landscape", "n", "trial", "terminal_energy", "normalized_energy", "steps_taken", "stop_reason"]
SGD_TRIALS_HEADER = ["p", "trial", "normalized_energy", "refined_normalized_energy", "steps_taken", "stop_reason"]
STUDY_HEADER = ["architecture", "seed", "training_cost", "test_cost", "test_error"]
DISAGREEMENT_HEADER = [
    "index", "category", "label", "teacher_prediction", "student_prediction",
    "teacher_confidence", "student_confidence",
]
TRACES_HEADER = ["arm", "seed", "budget_consumed", "training_cost"]
TABLE_HEADER = ["arm", "training_cost", "test_cost", "test_error", "test_error_std"]


@dataclass
class ExperimentOutput:
    """实验产出：文本数据文件、二进制文件与派生种子"""
    files: Dict[str, str] = field(default_factory=dict)
    binaries: Dict[str, bytes] = field(default_factory=dict)
    derived_seeds: Dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class Experiment:
    name: str
    description: str
    runner: Callable[[ExperimentConfig], ExperimentOutput]


# ========== 渲染 ==========

def render_csv(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    """UTF-8、逗号分隔、带表头；浮点数用最短往返表示"""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(["" if v is None else v for v in row])
    return buffer.getvalue()


def render_json(data: Dict[str, Any]) -> str:
    return json.dumps(data, ensure_ascii=False, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(value):
    if hasattr(value, "item"):
        return value.item()
    raise TypeError(f"无法序列化 {type(value).__name__}")


def _report_histogram(title: str, report: EnsembleReport) -> str:
    edges, counts = report.histogram
    header = f"# {title}: mean {report.mean:+.4f} std {report.std:.4f} (floor {THEORY.floor:+.3f})\n"
    return header + histogram_text(edges, counts) + "\n"


def _seed_entries(master_seed: int, purposes: Sequence[str]) -> Dict[str, Any]:
    """记录每个用途的第 0 号流，便于复查"""
    entries: Dict[str, Any] = {'master_seed': master_seed}
    for purpose in purposes:
        stream = derive_stream(master_seed, purpose, 0)
        entries[purpose] = {'tag': stream.tag, 'seed_value': stream.seed_value()}
    return entries


# ========== 自旋玻璃实验 ==========

def _trial_rows(report: EnsembleReport) -> List[List[Any]]:
    return [
        [report.landscape, report.n, o.trial, o.terminal_energy, o.normalized_energy, o.steps_taken, o.stop_reason.value]
        for o in report.outcomes
    ]


def _ensemble_summary(report: EnsembleReport) -> Dict[str, Any]:
    data = report.to_dict()
    data.pop('normalized_energies')
    data['respects_ground_state_bound'] = report.respects_ground_state_bound()
    return data


def _floor(config: ExperimentConfig, kinds: Sequence[str]) -> ExperimentOutput:
    rows: List[List[Any]] = []
    histograms: List[str] = []
    summary: Dict[str, Any] = {'experiment': config.experiment, 'landscapes': {}}
    for kind in kinds:
        bands = band_width_vs_dimension(
            kind,
            config.spin_dims(),
            config.trials,
            config.master_seed,
            descent=config.spin_descent(),
            fresh_couplings_per_trial=config.fresh_couplings,
            workers=config.workers,
            memory_budget_bytes=config.memory_budget_bytes,
            bin_width=config.bin_width,
        )
        for band in bands:
            rows.extend(_trial_rows(band.report))
            histograms.append(_report_histogram(f"{kind} n={band.n}", band.report))
        summary['landscapes'][kind] = {
            'bands': [band.to_dict() for band in bands],
            'reports': [_ensemble_summary(band.report) for band in bands],
            # 小 N 的带宽应大于大 N
            'dimension_contrast': bands[0].std > bands[-1].std if len(bands) > 1 else None,
        }
    if "tripartite" in kinds and "coupled" in kinds:
        coupled = {b['n']: b['mean'] for b in summary['landscapes']['coupled']['bands']}
        summary['tripartite_below_coupled'] = {
            str(b['n']): b['mean'] < coupled[b['n']] for b in summary['landscapes']['tripartite']['bands']
        }
    return ExperimentOutput(
        files={
            'trials.csv': render_csv(TRIALS_HEADER, rows),
            'summary.json': render_json(summary),
            'histogram.txt': "\n".join(histograms),
        },
        derived_seeds=_seed_entries(config.master_seed, ["couplings", "init"]),
    )


def _floor_spin(config: ExperimentConfig) -> ExperimentOutput:
    return _floor(config, ["coupled"])


def _floor_tripartite(config: ExperimentConfig) -> ExperimentOutput:
    # 同时运行耦合模型作为对照
    return _floor(config, ["tripartite", "coupled"])


def _sgd_spin(config: ExperimentConfig) -> ExperimentOutput:
    descent = config.spin_descent()
    comparison = compare_gd_sgd_spin(
        config.n,
        config.p_values,
        config.spin_budget(),
        config.trials,
        config.master_seed,
        step_size=config.step_size,
        grad_tol=config.grad_tol,
        refine_descent=descent,
        order=config.sgd_order,
        fresh_couplings_per_trial=config.fresh_couplings,
        workers=config.workers,
        memory_budget_bytes=config.memory_budget_bytes,
        bin_width=config.bin_width,
    )
    rows, histograms = [], []
    for row in comparison:
        for o in row.report.outcomes:
            rows.append([row.p, o.trial, o.normalized_energy, o.refined_normalized_energy, o.steps_taken, o.stop_reason.value])
        histograms.append(_report_histogram(f"P={row.p} n={config.n}", row.report))
    refined = [row.refined_mean for row in comparison if row.refined_mean is not None]
    summary = {
        'experiment': config.experiment,
        'n': config.n,
        'budget': config.spin_budget(),
        'sgd_order': config.sgd_order.value,
        'rows': [row.to_dict() for row in comparison],
        'reports': [_ensemble_summary(row.report) for row in comparison],
        'max_refined_mean_gap': (max(refined) - min(refined)) if refined else None,
    }
    return ExperimentOutput(
        files={
            'trials.csv': render_csv(SGD_TRIALS_HEADER, rows),
            'summary.json': render_json(summary),
            'histogram.txt': "\n".join(histograms),
        },
        derived_seeds=_seed_entries(config.master_seed, ["couplings", "init", "order"]),
    )


# ========== MNIST 实验 ==========

def _load_data(config: ExperimentConfig):
    """返回 (训练集, 测试集, make_splits 期望的样本数)"""
    train, test = load_mnist(MnistPaths.from_directory(config.data_dir))
    if config.desk_scale:
        train = train.subsample(config.train_subsample, derive_stream(config.master_seed, "subsample-train"))
        test = test.subsample(config.test_subsample, derive_stream(config.master_seed, "subsample-test"))
        return train, test, None
    return train, test, FULL_TRAIN_COUNT if config.strict_mnist_sizes else None


def _epoch_config(config: ExperimentConfig, data: MnistDataset) -> TrainConfig:
    steps_per_epoch = math.ceil(len(data) / config.batch_size)
    return TrainConfig(
        step_size=config.sgd_step_size,
        grad_tol=config.grad_tol,
        max_steps=config.epochs * steps_per_epoch,
        record_every=max(1, steps_per_epoch),
    )


def _teacher_student(config: ExperimentConfig) -> ExperimentOutput:
    train, test, expected = _load_data(config)
    first, second = make_splits(train, config.master_seed, expected_count=expected)
    log("TeacherStudent", f"划分: 前一半 {len(first)}，后一半 {len(second)}，测试 {len(test)}", "📦")

    teacher_arch = NetworkArchitecture.parse(config.teacher_architecture)
    teacher, teacher_report = train_teacher(
        first, teacher_arch, _epoch_config(config, first), config.master_seed, config.batch_size, test,
    )
    soft = generate_soft_labels(teacher, second)
    students = [NetworkArchitecture.parse(a) for a in config.architectures]
    study = run_student_study(
        soft, students, config.seed_list(), _epoch_config(config, second), test,
        config.batch_size, config.master_seed, config.workers,
    )

    # 中等宽度学生的第一个种子与教师逐样本比较
    middle = study.rows[len(study.rows) // 2].architecture
    table = compare_teacher_student_predictions(teacher, study.cell(middle, config.seed_list()[0]).params, test)

    summary = {
        'experiment': config.experiment,
        'teacher': {
            'architecture': teacher_arch.label,
            'checkpoint_id': soft.teacher_checkpoint_id,
            'training_cost': teacher_report.final_training_cost,
            'test_cost': teacher_report.test_cost,
            'test_error': teacher_report.test_error_count,
        },
        'study': study.to_dict(),
        'comparison_student': middle,
        'disagreement_counts': table.counts(),
        'split_sizes': {'first_half': len(first), 'second_half': len(second), 'test': len(test)},
    }
    return ExperimentOutput(
        files={
            'study.csv': render_csv(STUDY_HEADER, [
                [c.architecture, c.seed, c.training_cost, c.test_cost, c.test_error] for c in study.cells
            ]),
            'disagreements.csv': render_csv(DISAGREEMENT_HEADER, [
                [e.to_row()[key] for key in DISAGREEMENT_HEADER] for e in table.entries
            ]),
            'summary.json': render_json(summary),
        },
        binaries={'teacher.ckpt': params_to_bytes(teacher)},
        derived_seeds=_seed_entries(config.master_seed, ["split", "teacher-init", "teacher-shuffle"]),
    )


def _matched_configs(config: ExperimentConfig):
    gd_steps = max(1, round(config.train_budget / config.gd_step_size))
    sgd_steps = max(1, round(config.train_budget / config.sgd_step_size))
    record = max(1, sgd_steps // config.grid_points)
    cfg_gd = TrainConfig(step_size=config.gd_step_size, grad_tol=config.grad_tol, max_steps=gd_steps,
                         record_every=max(1, gd_steps // config.grid_points))
    cfg_sgd = TrainConfig(step_size=config.sgd_step_size, grad_tol=config.grad_tol, max_steps=sgd_steps,
                          record_every=record)
    return cfg_gd, cfg_sgd


def _gd_vs_sgd_mnist(config: ExperimentConfig) -> ExperimentOutput:
    train, test, _ = _load_data(config)
    arch = NetworkArchitecture.parse(config.architecture)
    cfg_gd, cfg_sgd = _matched_configs(config)
    comparison = run_gd_vs_sgd_mnist(
        arch, train, test, cfg_gd, cfg_sgd, config.seed_list(),
        config.batch_size, config.master_seed, config.workers, config.grid_points,
    )
    traces = []
    for arm, reports in (("gd", comparison.gd_reports), ("sgd", comparison.sgd_reports)):
        for seed, report in zip(comparison.seeds, reports):
            traces.extend([arm, seed, budget, cost] for budget, cost in report.training_cost_trace)
    summary = dict(comparison.to_dict(), experiment=config.experiment, train_size=len(train), test_size=len(test))
    return ExperimentOutput(
        files={
            'traces.csv': render_csv(TRACES_HEADER, traces),
            'table.csv': render_csv(TABLE_HEADER, [
                [row.to_row()[key] for key in TABLE_HEADER] for row in comparison.table
            ]),
            'summary.json': render_json(summary),
        },
        derived_seeds=_seed_entries(config.master_seed, ["init", "shuffle"]),
    )


REGISTRY: Dict[str, Experiment] = {
    exp.name: exp for exp in (
        Experiment("floor-spin", "耦合 3-自旋球面模型的终点能量分布", _floor_spin),
        Experiment("floor-tripartite", "三分模型与耦合模型的终点能量对比", _floor_tripartite),
        Experiment("sgd-spin", "不同子场个数 P 的 SGD 终点能量（含 GD 精修）", _sgd_spin),
        Experiment("teacher-student", "MNIST 教师/学生软标签实验", _teacher_student),
        Experiment("gd-vs-sgd-mnist", "MNIST 上相同预算的 GD 与 SGD 对比", _gd_vs_sgd_mnist),
    )
}


def list_experiments() -> Dict[str, str]:
    """列出所有实验（名称 -> 描述）"""
    return {name: exp.description for name, exp in REGISTRY.items()}


def run(config: ExperimentConfig, storage: Optional[RunStorage] = None) -> RunManifest:
    """
    执行一次实验并写出全部产物

    Args:
        config: 已校验的配置
        storage: 运行存储，默认 RunStorage(config.output_dir)

    Returns:
        RunManifest: 已写入磁盘的清单

    Raises:
        FloorLabError: 实验失败（部分清单已写入）
    """
    with verbosity(config.verbose):
        return _run(config, storage or RunStorage(config.output_dir))


def _run(config: ExperimentConfig, storage: RunStorage) -> RunManifest:
    experiment = REGISTRY[config.experiment]
    manifest = RunManifest(
        run_id=storage.new_run_id(config.experiment),
        experiment=config.experiment,
        config=config_snapshot(config),
        version=__version__,
    )
    storage.save_manifest(manifest)
    log("Runner", f"开始 {config.experiment}（运行 {manifest.run_id}）", "🚀")

    try:
        output = experiment.runner(config)
        manifest.derived_seeds = output.derived_seeds
        for name in sorted(output.files):
            manifest.checksums[name] = storage.write_file(manifest.run_id, name, output.files[name])
        for name in sorted(output.binaries):
            manifest.checksums[name] = storage.write_binary(manifest.run_id, name, output.binaries[name])
    except Exception as e:
        manifest.status = "failed"
        manifest.error = f"{type(e).__name__}: {e}"
        manifest.exit_code = e.exit_code if isinstance(e, FloorLabError) else 3
        manifest.finished_at = time.time()
        storage.save_manifest(manifest)
        log("Runner", f"{config.experiment} 失败: {manifest.error}", "❌")
        raise

    manifest.status = "completed"
    manifest.finished_at = time.time()
    storage.save_manifest(manifest)
    log("Runner", f"{config.experiment} 完成，结果在 {storage.file_path(manifest.run_id, '')}", "✅")
    return manifest
