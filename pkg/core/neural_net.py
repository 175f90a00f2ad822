"""
全连接前馈网络

- 隐藏层 ReLU，输出层 softmax（log-sum-exp 稳定形式）
- 交叉熵损失，目标可以是 one-hot 硬标签或教师给出的概率向量
- 精确反向传播，全批量 GD 与小批量 SGD 训练器
- 检查点二进制格式（全部 64 位小端）：
    uint64 宽度个数 L, L 个 uint64 宽度,
    然后逐层: 行主序 (fan_in × fan_out) float64 权重块, fan_out 个 float64 偏置
"""
from dataclasses import dataclass, field
from typing import Dict, Any, List, Optional, Sequence, Tuple
import hashlib
import math
import struct

import numpy as np
from pydantic import Field

from .descent import StepConfig, StopReason
from .errors import DataFormatError, InvalidArgumentError
from .rng_streams import RngStream

PROB_CLAMP = 1e-12
TARGET_SUM_TOL = 1e-9


class TrainConfig(StepConfig):
    """网络训练参数；步长允许为 0（参数保持不变）"""
    step_size: float = Field(default=0.1, ge=0, description="学习率 γ")
    max_steps: int = Field(default=1000, ge=1, description="参数更新次数上限")
    record_every: int = Field(default=10, ge=1, description="轨迹采样间隔")


@dataclass(frozen=True)
class NetworkArchitecture:
    """各层宽度，例如 (784, 500, 300, 10)"""
    layer_sizes: Tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2:
            raise InvalidArgumentError(f"网络至少需要两层: {sizes}")
        if any(s < 1 for s in sizes):
            raise InvalidArgumentError(f"层宽必须为正: {sizes}")

    @classmethod
    def parse(cls, text: str) -> "NetworkArchitecture":
        """解析 "784-500-300-10" 形式"""
        try:
            return cls(tuple(int(part) for part in str(text).split("-")))
        except ValueError as e:
            raise InvalidArgumentError(f"无法解析网络结构 '{text}': {e}")

    @property
    def label(self) -> str:
        return "-".join(str(s) for s in self.layer_sizes)

    @property
    def hidden_label(self) -> str:
        """只含隐藏层，例如 "500-300" """
        return "-".join(str(s) for s in self.layer_sizes[1:-1])

    @property
    def parameter_count(self) -> int:
        sizes = self.layer_sizes
        return sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))


@dataclass
class NetworkParams:
    """逐层的权重 (fan_in, fan_out) 与偏置 (fan_out,)"""
    architecture: NetworkArchitecture
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    init_seed: str = ""

    def __post_init__(self):
        sizes = self.architecture.layer_sizes
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise InvalidArgumentError("参数层数与网络结构不符")
        for layer, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            if self.weights[layer].shape != (a, b) or self.biases[layer].shape != (b,):
                raise InvalidArgumentError(
                    f"第 {layer} 层形状 {self.weights[layer].shape}/{self.biases[layer].shape} 与 ({a}, {b}) 不符"
                )

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            self.architecture,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.init_seed,
        )

    def flat(self) -> np.ndarray:
        return np.concatenate([a.reshape(-1) for pair in zip(self.weights, self.biases) for a in pair])


@dataclass
class NetworkGradients:
    """与 NetworkParams 结构相同的梯度"""
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def norm(self) -> float:
        return math.sqrt(sum(float(np.sum(g * g)) for g in self.weights + self.biases))


@dataclass
class LabeledBatch:
    """
    训练样本

    inputs: (B, d) 取值 [0, 1]；targets: (B, C) 每行是概率向量
    """
    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if self.inputs.ndim != 2 or self.targets.ndim != 2 or len(self.inputs) != len(self.targets):
            raise InvalidArgumentError("inputs/targets 必须是行数相同的二维数组")
        if np.any(self.targets < 0) or not np.allclose(self.targets.sum(axis=1), 1.0, rtol=0, atol=TARGET_SUM_TOL):
            raise InvalidArgumentError("每个目标必须是和为 1 的非负概率向量")

    def __len__(self) -> int:
        return len(self.inputs)

    @classmethod
    def from_labels(cls, inputs: np.ndarray, labels: np.ndarray, classes: int = 10) -> "LabeledBatch":
        """硬标签 -> one-hot"""
        labels = np.asarray(labels, dtype=np.int64)
        return cls(inputs, one_hot(labels, classes))

    def subset(self, index: np.ndarray) -> "LabeledBatch":
        return LabeledBatch(self.inputs[index], self.targets[index])


@dataclass
class TrainReport:
    """
    一次训练的记录

    training_cost_trace: [(步长·步数, 全体训练集上的平均交叉熵), ...]
    """
    training_cost_trace: List[Tuple[float, float]]
    final_training_cost: float
    steps: int
    step_size: float
    stop_reason: StopReason
    seeds: Dict[str, str] = field(default_factory=dict)
    batch_size: Optional[int] = None
    test_cost: Optional[float] = None
    test_error_count: Optional[int] = None
    test_size: Optional[int] = None
    final_params: Optional[NetworkParams] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            'final_training_cost': self.final_training_cost,
            'test_cost': self.test_cost,
            'test_error_count': self.test_error_count,
            'test_size': self.test_size,
            'steps': self.steps,
            'step_size': self.step_size,
            'batch_size': self.batch_size,
            'stop_reason': self.stop_reason.value,
            'seeds': dict(self.seeds),
            'training_cost_trace': [list(p) for p in self.training_cost_trace],
        }


def one_hot(labels: np.ndarray, classes: int = 10) -> np.ndarray:
    out = np.zeros((len(labels), classes), dtype=np.float64)
    out[np.arange(len(labels)), labels] = 1.0
    return out


# ========== 初始化 ==========

def init_params(arch: NetworkArchitecture, stream: RngStream) -> NetworkParams:
    """
    权重 ~ Uniform[-a, a], a = √(6 / (fan_in + fan_out))，偏置为零
    """
    gen = stream.generator()
    weights, biases = [], []
    for fan_in, fan_out in zip(arch.layer_sizes[:-1], arch.layer_sizes[1:]):
        a = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(gen.uniform(-a, a, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out, dtype=np.float64))
    return NetworkParams(arch, weights, biases, init_seed=stream.tag)


# ========== 前向 / 损失 / 反向 ==========

def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def _forward_pass(params: NetworkParams, x: np.ndarray):
    """返回各层输入激活与输出 log 概率"""
    activations = [x]
    h = x
    last = len(params.weights) - 1
    for layer, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        if layer < last:
            h = np.maximum(z, 0.0)
            activations.append(h)
        else:
            return activations, log_softmax(z)


def forward(params: NetworkParams, inputs) -> np.ndarray:
    """
    输出类别概率

    Args:
        params: 网络参数
        inputs: 单个输入向量 (d,) 或一批 (B, d)

    Returns:
        与输入同秩的概率数组，每行和为 1
    """
    x = np.asarray(inputs, dtype=np.float64)
    single = x.ndim == 1
    x2 = x.reshape(1, -1) if single else x
    if x2.shape[1] != params.architecture.layer_sizes[0]:
        raise InvalidArgumentError(f"输入维度 {x2.shape[1]} 与网络输入宽度 {params.architecture.layer_sizes[0]} 不符")
    if not np.all(np.isfinite(x2)):
        raise InvalidArgumentError("输入含非有限值")
    probs = np.exp(_forward_pass(params, x2)[1])
    return probs[0] if single else probs


def cross_entropy(predicted, target):
    """
    -Σ_c t_c log(max(p_c, 1e-12))

    一维输入返回标量；二维输入返回逐行损失。
    """
    p = np.maximum(np.asarray(predicted, dtype=np.float64), PROB_CLAMP)
    t = np.asarray(target, dtype=np.float64)
    loss = -(t * np.log(p)).sum(axis=-1)
    return float(loss) if np.ndim(loss) == 0 else loss


def mean_cost(params: NetworkParams, batch: LabeledBatch) -> float:
    """整批的平均交叉熵"""
    return float(np.mean(cross_entropy(forward(params, batch.inputs), batch.targets)))


def backward(params: NetworkParams, batch: LabeledBatch) -> NetworkGradients:
    """整批平均交叉熵对全部参数的精确梯度"""
    if len(batch) == 0:
        raise InvalidArgumentError("batch 不能为空")
    grads, _ = _gradients_and_cost(params, batch)
    return grads


def _gradients_and_cost(params: NetworkParams, batch: LabeledBatch) -> Tuple[NetworkGradients, float]:
    activations, log_probs = _forward_pass(params, batch.inputs)
    probs = np.exp(log_probs)
    count = len(batch)
    cost = float(np.mean(cross_entropy(probs, batch.targets)))
    # softmax + 交叉熵: ∂L/∂z = p - t
    delta = (probs - batch.targets) / count
    w_grads: List[np.ndarray] = [None] * len(params.weights)
    b_grads: List[np.ndarray] = [None] * len(params.biases)
    for layer in range(len(params.weights) - 1, -1, -1):
        w_grads[layer] = activations[layer].T @ delta
        b_grads[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ params.weights[layer].T) * (activations[layer] > 0)
    return NetworkGradients(w_grads, b_grads), cost


def _apply(params: NetworkParams, grads: NetworkGradients, step_size: float) -> None:
    for layer in range(len(params.weights)):
        params.weights[layer] -= step_size * grads.weights[layer]
        params.biases[layer] -= step_size * grads.biases[layer]


# ========== 评估 ==========

def evaluate(params: NetworkParams, test_inputs, test_labels) -> Tuple[float, int]:
    """
    用硬标签评估

    Returns:
        (平均交叉熵, 错分个数)；argmax 并列时取最小类别号
    """
    labels = np.asarray(test_labels, dtype=np.int64)
    probs = forward(params, np.asarray(test_inputs, dtype=np.float64))
    cost = float(np.mean(cross_entropy(probs, one_hot(labels, probs.shape[1]))))
    errors = int(np.count_nonzero(np.argmax(probs, axis=1) != labels))
    return cost, errors


# ========== 训练 ==========

def _attach_test(report: TrainReport, params: NetworkParams, test_set) -> TrainReport:
    if test_set is not None:
        inputs, labels = test_set
        report.test_cost, report.test_error_count = evaluate(params, inputs, labels)
        report.test_size = len(labels)
    return report


def _train(params, data, cfg, batches, test_set, seeds, batch_size) -> TrainReport:
    """GD/SGD 共用的训练循环；batches(step) 返回该步的样本下标或 None（全批）"""
    if len(data) == 0:
        raise InvalidArgumentError("训练数据不能为空")
    cfg = cfg or TrainConfig()
    gamma = cfg.step_size
    work = params.copy()
    trace: List[Tuple[float, float]] = []
    reason = StopReason.MAX_STEPS
    steps = 0
    while steps < cfg.max_steps:
        index = batches(steps)
        grads, batch_cost = _gradients_and_cost(work, data if index is None else data.subset(index))
        if steps % cfg.record_every == 0:
            # 全批量时小批量代价就是训练代价
            trace.append((gamma * steps, batch_cost if index is None else mean_cost(work, data)))
        if not (math.isfinite(batch_cost) and math.isfinite(grads.norm())):
            reason = StopReason.DIVERGENCE
            break
        if grads.norm() < cfg.grad_tol:
            reason = StopReason.GRADIENT
            break
        _apply(work, grads, gamma)
        steps += 1
    cost = mean_cost(work, data)
    if not math.isfinite(cost):
        reason = StopReason.DIVERGENCE
    if not trace or trace[-1][0] != gamma * steps:
        trace.append((gamma * steps, cost))
    report = TrainReport(
        training_cost_trace=trace,
        final_training_cost=cost,
        steps=steps,
        step_size=gamma,
        stop_reason=reason,
        seeds=seeds,
        batch_size=batch_size,
        final_params=work,
    )
    return _attach_test(report, work, test_set)


def train_gd(
    params: NetworkParams,
    data: LabeledBatch,
    cfg: Optional[TrainConfig] = None,
    test_set: Optional[Tuple[np.ndarray, np.ndarray]] = None,
) -> TrainReport:
    """
    全批量梯度下降 params ← params - γ·∇

    不修改传入的 params，训练后的参数放在 report.final_params。
    """
    return _train(params, data, cfg, lambda _step: None, test_set, {'init': params.init_seed}, len(data))


def train_sgd(
    params: NetworkParams,
    data: LabeledBatch,
    cfg: Optional[TrainConfig],
    batch_size: int,
    shuffle_stream: RngStream,
    test_set: Optional[Tuple[np.ndarray, np.ndarray]] = None,
) -> TrainReport:
    """
    小批量 SGD

    每个 epoch 用 shuffle_stream 生成一次排列，按顺序切出小批量；
    小批量内部下标排序，因此 batch_size ≥ 样本数时与 train_gd 逐位一致。
    """
    if batch_size < 1:
        raise InvalidArgumentError(f"batch_size 必须 ≥ 1: {batch_size}")
    count = len(data)
    size = min(int(batch_size), count)
    per_epoch = math.ceil(count / size) if count else 1
    gen = shuffle_stream.generator()
    state = {'perm': None}

    def batches(step: int) -> np.ndarray:
        slot = step % per_epoch
        if slot == 0:
            state['perm'] = gen.permutation(count)
        return np.sort(state['perm'][slot * size:(slot + 1) * size])

    seeds = {'init': params.init_seed, 'shuffle': shuffle_stream.tag}
    return _train(params, data, cfg, batches, test_set, seeds, size)


# ========== 检查点 ==========

def params_to_bytes(params: NetworkParams) -> bytes:
    sizes = params.architecture.layer_sizes
    chunks = [struct.pack("<Q", len(sizes)), struct.pack(f"<{len(sizes)}Q", *sizes)]
    for w, b in zip(params.weights, params.biases):
        chunks.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        chunks.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    return b"".join(chunks)


def params_from_bytes(blob: bytes) -> NetworkParams:
    """解析 params_to_bytes 的输出"""
    if len(blob) < 8:
        raise DataFormatError("header", "检查点过短")
    (count,) = struct.unpack_from("<Q", blob, 0)
    offset = 8
    if count < 2 or len(blob) < offset + 8 * count:
        raise DataFormatError("layer_count", f"非法层数 {count}")
    sizes = struct.unpack_from(f"<{count}Q", blob, offset)
    offset += 8 * count
    arch = NetworkArchitecture(tuple(sizes))
    expected = offset + 8 * arch.parameter_count
    if len(blob) != expected:
        raise DataFormatError("payload", f"期望 {expected} 字节，实际 {len(blob)} 字节")
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        w = np.frombuffer(blob, dtype="<f8", count=fan_in * fan_out, offset=offset).reshape(fan_in, fan_out)
        offset += 8 * fan_in * fan_out
        b = np.frombuffer(blob, dtype="<f8", count=fan_out, offset=offset)
        offset += 8 * fan_out
        weights.append(w.astype(np.float64))
        biases.append(b.astype(np.float64))
    return NetworkParams(arch, weights, biases)


def checkpoint_id(params: NetworkParams) -> str:
    return hashlib.sha256(params_to_bytes(params)).hexdigest()[:12]


def save_params(params: NetworkParams, path: str) -> None:
    with open(path, 'wb') as f:
        f.write(params_to_bytes(params))


def load_params(path: str) -> NetworkParams:
    with open(path, 'rb') as f:
        return params_from_bytes(f.read())
