"""
实验配置

配置是一个扁平的 JSON 对象，字段由 ExperimentConfig 声明；
未知键、类型错误、缺少必填键都会抛出带键名和行号的 ConfigError。
"""
from typing import Annotated, Dict, Any, List, Literal, Optional, Tuple, get_args
import json
import re

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .descent import DescentConfig, SgdOrder
from .errors import ConfigError
from .neural_net import NetworkArchitecture

ExperimentName = Literal["floor-spin", "floor-tripartite", "sgd-spin", "teacher-student", "gd-vs-sgd-mnist"]
EXPERIMENT_NAMES: Tuple[str, ...] = get_args(ExperimentName)

# 每个实验除 experiment 之外必须显式给出的键
REQUIRED_KEYS: Dict[str, Tuple[str, ...]] = {
    "floor-spin": (),
    "floor-tripartite": (),
    "sgd-spin": ("n",),
    "teacher-student": ("data_dir",),
    "gd-vs-sgd-mnist": ("data_dir",),
}

DEFAULT_DIMS = [10, 100]

PositiveInt = Annotated[int, Field(ge=1)]


class ExperimentConfig(BaseModel):
    """一次实验运行的全部参数"""
    # 严格模式：JSON 类型不符直接报错，不做转换
    model_config = ConfigDict(extra="forbid", frozen=True, strict=True)

    experiment: ExperimentName = Field(description="注册表中的实验名")
    master_seed: int = Field(default=0, ge=0, description="主种子")
    output_dir: str = Field(default="runs", description="运行结果目录")
    verbose: bool = Field(default=True, description="是否打印进度")
    workers: Optional[int] = Field(default=None, ge=1, description="工作线程数（默认见 FLOORLAB_WORKERS）")
    memory_budget_mb: int = Field(default=2048, ge=1, description="耦合张量的内存预算")

    # 自旋玻璃
    n: Optional[int] = Field(default=None, ge=1, description="维度 N")
    dims: Optional[List[PositiveInt]] = Field(default=None, description="多个维度（未给 n 时使用）")
    trials: int = Field(default=200, ge=1, description="每个维度的试验次数")
    step_size: float = Field(default=0.01, gt=0, description="步长 γ")
    grad_tol: float = Field(default=1e-5, gt=0, description="切向梯度停止阈值")
    max_steps: int = Field(default=1_000_000, ge=1, description="每次下降的步数上限")
    record_every: int = Field(default=100, ge=1, description="轨迹采样间隔")
    bin_width: float = Field(default=0.01, gt=0, description="直方图箱宽")
    fresh_couplings: bool = Field(default=True, description="每次试验重新采样耦合")
    p_values: List[PositiveInt] = Field(default_factory=lambda: [1, 5, 10], description="sgd-spin 的子场个数 P")
    budget: Optional[float] = Field(default=None, gt=0, description="sgd-spin 的 步长·步数 预算（默认 step_size·max_steps）")
    sgd_order: SgdOrder = Field(default=SgdOrder.CYCLIC, strict=False, description="子场顺序 cyclic / uniform")

    # MNIST
    data_dir: Optional[str] = Field(default=None, description="四个 MNIST IDX 文件所在目录")
    desk_scale: bool = Field(default=False, description="子采样的桌面规模运行")
    train_subsample: int = Field(default=6000, ge=2, description="桌面规模的训练样本数")
    test_subsample: int = Field(default=1000, ge=1, description="桌面规模的测试样本数")
    strict_mnist_sizes: bool = Field(default=True, description="非桌面规模时要求训练集 60000 个样本")
    teacher_architecture: str = Field(default="784-500-300-10", description="教师网络结构")
    architectures: List[str] = Field(
        default_factory=lambda: ["784-50-50-10", "784-500-300-10", "784-1200-1200-10"],
        description="学生网络结构",
    )
    architecture: str = Field(default="784-500-300-10", description="gd-vs-sgd-mnist 的网络结构")
    seeds: int = Field(default=5, ge=1, description="每个结构的种子个数")
    sgd_step_size: float = Field(default=0.1, gt=0, description="SGD 学习率")
    gd_step_size: float = Field(default=0.5, gt=0, description="全批量 GD 学习率")
    batch_size: int = Field(default=64, ge=1, description="SGD 小批量大小")
    epochs: int = Field(default=5, ge=1, description="教师/学生的训练轮数")
    train_budget: float = Field(default=50.0, gt=0, description="gd-vs-sgd-mnist 两臂共同的 步长·步数 预算")
    grid_points: int = Field(default=50, ge=2, description="轨迹网格点数")

    def spin_dims(self) -> List[int]:
        if self.n is not None:
            return [self.n]
        return sorted(set(self.dims or DEFAULT_DIMS))

    def spin_descent(self) -> DescentConfig:
        return DescentConfig(
            step_size=self.step_size,
            grad_tol=self.grad_tol,
            max_steps=self.max_steps,
            record_every=self.record_every,
        )

    def spin_budget(self) -> float:
        return self.budget if self.budget is not None else self.step_size * self.max_steps

    def seed_list(self) -> List[int]:
        return list(range(self.seeds))

    @property
    def memory_budget_bytes(self) -> int:
        return self.memory_budget_mb * 1024 * 1024


def _line_of_key(text: str, key: str) -> Optional[int]:
    """键在文本中首次出现的行号（1 起）"""
    match = re.search(r'"' + re.escape(key) + r'"\s*:', text)
    if match is None:
        return None
    return text.count("\n", 0, match.start()) + 1


def _check_architectures(config: ExperimentConfig, text: str) -> None:
    for key in ("teacher_architecture", "architecture"):
        _parse_architecture(getattr(config, key), key, text)
    for value in config.architectures:
        _parse_architecture(value, "architectures", text)


def _parse_architecture(value: str, key: str, text: str) -> NetworkArchitecture:
    try:
        arch = NetworkArchitecture.parse(value)
    except ValueError as e:
        raise ConfigError(f"{key}: {e}", key=key, line=_line_of_key(text, key))
    if arch.layer_sizes[0] != 784 or arch.layer_sizes[-1] != 10:
        raise ConfigError(f"{key}: MNIST 网络必须是 784-...-10，实际 {value}", key=key, line=_line_of_key(text, key))
    return arch


def parse_config(text: str) -> ExperimentConfig:
    """
    解析并校验配置文本

    Raises:
        ConfigError: JSON 语法错误、未知键、类型不符或缺少必填键
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"JSON 语法错误: {e.msg}", line=e.lineno)
    if not isinstance(data, dict):
        raise ConfigError("配置必须是 JSON 对象", line=1)

    known = ExperimentConfig.model_fields
    for key in data:
        if key not in known:
            raise ConfigError(f"未知配置键 '{key}'", key=key, line=_line_of_key(text, key))
    if "experiment" not in data:
        raise ConfigError("缺少必填键 'experiment'", key="experiment", line=1)

    try:
        config = ExperimentConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        key = str(first["loc"][0]) if first["loc"] else None
        raise ConfigError(f"'{key}': {first['msg']}", key=key, line=_line_of_key(text, key) if key else None)

    for key in REQUIRED_KEYS[config.experiment]:
        if data.get(key) is None:
            raise ConfigError(f"实验 {config.experiment} 缺少必填键 '{key}'", key=key, line=_line_of_key(text, key) or 1)
    if config.experiment == "sgd-spin" and 1 not in config.p_values:
        raise ConfigError("p_values 必须包含 1（GD 基线）", key="p_values", line=_line_of_key(text, "p_values"))
    if config.experiment == "teacher-student" and (config.seeds < 2 or len(config.architectures) < 2):
        raise ConfigError("teacher-student 需要至少 2 个种子和 2 个学生结构", key="seeds", line=_line_of_key(text, "seeds"))
    if config.experiment in ("teacher-student", "gd-vs-sgd-mnist"):
        _check_architectures(config, text)
    return config


def serialize_config(config: ExperimentConfig) -> str:
    """写成 parse_config 可读回的 JSON 文本"""
    return json.dumps(config.model_dump(mode="json"), ensure_ascii=False, indent=2) + "\n"


def config_snapshot(config: ExperimentConfig) -> Dict[str, Any]:
    return config.model_dump(mode="json")


def default_config(experiment: str, **overrides: Any) -> ExperimentConfig:
    """某个实验的默认配置（show-config 使用）"""
    if experiment not in EXPERIMENT_NAMES:
        raise ConfigError(f"未知实验 '{experiment}'，可选: {', '.join(EXPERIMENT_NAMES)}", key="experiment")
    return ExperimentConfig(experiment=experiment, **overrides)


def with_overrides(
    config: ExperimentConfig,
    output_dir: Optional[str] = None,
    master_seed: Optional[int] = None,
    desk_scale: Optional[bool] = None,
) -> ExperimentConfig:
    """命令行参数覆盖配置文件中的值"""
    update: Dict[str, Any] = {}
    if output_dir is not None:
        update["output_dir"] = output_dir
    if master_seed is not None:
        if master_seed < 0:
            raise ConfigError(f"master_seed 必须非负: {master_seed}", key="master_seed")
        update["master_seed"] = int(master_seed)
    if desk_scale:
        update["desk_scale"] = True
    return config.model_copy(update=update) if update else config
