"""
可拆分随机数流

每个随机量（耦合张量、初始点、洗牌顺序……）都从
(主种子, 用途标签, 序号) 派生出独立的流，因此结果与执行顺序、
工作线程数无关。

映射规则（稳定，跨版本不变）：
    label_code = SHA-256(label) 的前 8 字节（大端无符号整数）
    SeedSequence(entropy=master_seed, spawn_key=(label_code, index, *path))
    Generator(Philox(seed_sequence))
"""
from dataclasses import dataclass, field
from typing import Tuple
import hashlib

import numpy as np

from .errors import InvalidArgumentError


def label_code(label: str) -> int:
    """用途标签 -> 64 位整数"""
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass(frozen=True)
class RngStream:
    """
    随机数流句柄

    只保存派生参数，不保存生成器状态；每次调用 generator()
    都得到一个从头开始的新生成器，所以同一个流总是产生同样的序列。
    """
    master_seed: int
    purpose: str
    index: int = 0
    path: Tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.master_seed < 0:
            raise InvalidArgumentError(f"master_seed 必须非负: {self.master_seed}")
        if self.index < 0:
            raise InvalidArgumentError(f"index 必须非负: {self.index}")

    @property
    def tag(self) -> str:
        """人类可读的流标识，写入张量的 seed_tag"""
        suffix = "".join(f"/{p}" for p in self.path)
        return f"{self.master_seed}:{self.purpose}:{self.index}{suffix}"

    def seed_sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence(
            entropy=self.master_seed,
            spawn_key=(label_code(self.purpose), self.index, *self.path),
        )

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(self.seed_sequence()))

    def child(self, i: int) -> "RngStream":
        """派生子流（子场、乘积球面的各个因子等）"""
        if i < 0:
            raise InvalidArgumentError(f"子流序号必须非负: {i}")
        return RngStream(self.master_seed, self.purpose, self.index, self.path + (i,))

    def seed_value(self) -> int:
        """写入清单用的 64 位整数摘要"""
        return int(self.seed_sequence().generate_state(1, dtype=np.uint64)[0])


def derive_stream(master_seed: int, purpose: str, index: int = 0) -> RngStream:
    """
    从 (主种子, 用途, 序号) 派生随机数流

    Args:
        master_seed: 实验主种子
        purpose: 用途标签，如 "couplings"、"init"、"shuffle"
        index: 试验序号或其它编号

    Returns:
        RngStream: 可重复使用的流句柄
    """
    return RngStream(int(master_seed), str(purpose), int(index))
