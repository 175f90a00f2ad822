"""
MNIST 数据读取

- IDX 容器格式（大端）：magic 00 00 08 0D（D 为维数），D 个 uint32 维度，随后 uint8 数据
- 四个标准文件，可以是 gzip 压缩（按 1f 8b 文件头识别）
- 教师/学生实验用的对半划分与软标签数据集
- 软标签二进制格式（64 位小端）：uint64 记录数，
  然后每条记录 784 个 float64 输入 + 10 个 float64 目标
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union
import gzip
import struct

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .errors import DataFormatError, InvalidArgumentError
from .neural_net import LabeledBatch, TARGET_SUM_TOL, one_hot
from .rng_streams import RngStream, derive_stream

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
IMAGE_SIDE = 28
PIXELS = IMAGE_SIDE * IMAGE_SIDE
CLASSES = 10
FULL_TRAIN_COUNT = 60000
FULL_TEST_COUNT = 10000

STANDARD_FILES = {
    'train_images': "train-images-idx3-ubyte",
    'train_labels': "train-labels-idx1-ubyte",
    'test_images': "t10k-images-idx3-ubyte",
    'test_labels': "t10k-labels-idx1-ubyte",
}

PathLike = Union[str, Path]


# ========== IDX ==========

@dataclass(frozen=True)
class IdxTensor:
    """IDX 文件内容：维度与 uint8 数据（已按维度 reshape）"""
    magic: int
    dims: Tuple[int, ...]
    payload: np.ndarray


def _read_maybe_gzip(path: PathLike) -> bytes:
    with open(path, 'rb') as f:
        blob = f.read()
    if blob[:2] == b"\x1f\x8b":
        try:
            return gzip.decompress(blob)
        except (OSError, EOFError) as e:
            raise DataFormatError("gzip", f"{path}: 解压失败 ({e})")
    return blob


def parse_idx(blob: bytes) -> IdxTensor:
    """解析 IDX 字节串"""
    if len(blob) < 4:
        raise DataFormatError("magic", "文件头不足 4 字节")
    (magic,) = struct.unpack_from(">I", blob, 0)
    if magic not in (IMAGE_MAGIC, LABEL_MAGIC):
        raise DataFormatError("magic", f"不支持的 magic 0x{magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(blob) < header:
        raise DataFormatError("dims", f"维度表被截断: 需要 {ndim} 个维度")
    dims = struct.unpack_from(f">{ndim}I", blob, 4)
    expected = int(np.prod(dims, dtype=np.int64))
    actual = len(blob) - header
    if actual < expected:
        raise DataFormatError("payload", f"数据被截断: 维度 {dims} 需要 {expected} 字节，实际 {actual} 字节")
    if actual > expected:
        raise DataFormatError("dims", f"维度 {dims} 与数据长度 {actual} 不符")
    payload = np.frombuffer(blob, dtype=np.uint8, count=expected, offset=header).reshape(dims)
    return IdxTensor(magic=magic, dims=tuple(int(d) for d in dims), payload=payload)


def load_idx(path: PathLike) -> IdxTensor:
    """
    读取 IDX 文件（可为 gzip）

    Raises:
        DataFormatError: magic / dims / payload 字段不合法
    """
    return parse_idx(_read_maybe_gzip(path))


def write_idx(path: PathLike, array: np.ndarray, compress: bool = False) -> None:
    """把 uint8 的一维（标签）或三维（图像）数组写成 IDX"""
    arr = np.asarray(array)
    if arr.dtype != np.uint8 or arr.ndim not in (1, 3):
        raise InvalidArgumentError(f"只支持 uint8 的一维或三维数组: {arr.dtype}, ndim={arr.ndim}")
    magic = LABEL_MAGIC if arr.ndim == 1 else IMAGE_MAGIC
    blob = struct.pack(">I", magic) + struct.pack(f">{arr.ndim}I", *arr.shape) + arr.tobytes(order="C")
    if compress:
        blob = gzip.compress(blob, mtime=0)
    with open(path, 'wb') as f:
        f.write(blob)


# ========== 数据集 ==========

class MnistPaths(BaseModel):
    """四个标准文件的路径"""
    model_config = ConfigDict(extra="forbid")

    train_images: str = Field(description="训练图像 IDX")
    train_labels: str = Field(description="训练标签 IDX")
    test_images: str = Field(description="测试图像 IDX")
    test_labels: str = Field(description="测试标签 IDX")

    @classmethod
    def from_directory(cls, directory: PathLike) -> "MnistPaths":
        """在目录中查找标准文件名（优先未压缩版本，其次 .gz）"""
        base = Path(directory)
        found = {}
        for key, name in STANDARD_FILES.items():
            for candidate in (base / name, base / f"{name}.gz"):
                if candidate.exists():
                    found[key] = str(candidate)
                    break
            else:
                raise DataFormatError(key, f"{base} 中找不到 {name}[.gz]")
        return cls(**found)


@dataclass(frozen=True)
class MnistDataset:
    """
    图像缩放到 [0, 1] 的 784 维向量与 0-9 标签

    split_tag: full-train / train-first-half / train-second-half / test（子采样时带后缀）
    """
    images: np.ndarray
    labels: np.ndarray
    split_tag: str

    def __post_init__(self):
        images = np.array(self.images, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.int64).reshape(-1)
        if images.ndim != 2 or images.shape[1] != PIXELS or len(images) != len(labels):
            raise InvalidArgumentError(f"图像应为 (count, {PIXELS})，标签个数相同: {images.shape}, {labels.shape}")
        if labels.size and (labels.min() < 0 or labels.max() >= CLASSES):
            raise InvalidArgumentError("标签必须在 0-9 之间")
        images.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, index: np.ndarray, split_tag: Optional[str] = None) -> "MnistDataset":
        return MnistDataset(self.images[index], self.labels[index], split_tag or self.split_tag)

    def subsample(self, count: Optional[int], stream: RngStream) -> "MnistDataset":
        """无放回随机取 count 个样本（保持原顺序）；count 为空或不小于总数时原样返回"""
        if count is None or count >= len(self):
            return self
        index = np.sort(stream.generator().choice(len(self), size=int(count), replace=False))
        return self.subset(index, f"{self.split_tag}[{count}]")

    def as_batch(self) -> LabeledBatch:
        """硬标签 one-hot 训练批"""
        return LabeledBatch(self.images, one_hot(self.labels, CLASSES))

    def as_test_set(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.images, self.labels


def _images_to_dataset(images: IdxTensor, labels: IdxTensor, split_tag: str) -> MnistDataset:
    if images.magic != IMAGE_MAGIC:
        raise DataFormatError("magic", f"{split_tag}: 图像文件 magic 应为 0x{IMAGE_MAGIC:08x}")
    if labels.magic != LABEL_MAGIC:
        raise DataFormatError("magic", f"{split_tag}: 标签文件 magic 应为 0x{LABEL_MAGIC:08x}")
    if images.dims[1:] != (IMAGE_SIDE, IMAGE_SIDE):
        raise DataFormatError("dims", f"{split_tag}: 图像尺寸应为 28x28，实际 {images.dims[1:]}")
    if images.dims[0] != labels.dims[0]:
        raise DataFormatError("dims", f"{split_tag}: 图像 {images.dims[0]} 张，标签 {labels.dims[0]} 个")
    pixels = images.payload.reshape(images.dims[0], PIXELS).astype(np.float64) / 255.0
    return MnistDataset(pixels, labels.payload.astype(np.int64), split_tag)


def load_mnist(paths: MnistPaths) -> Tuple[MnistDataset, MnistDataset]:
    """读取 (完整训练集, 测试集)"""
    train = _images_to_dataset(load_idx(paths.train_images), load_idx(paths.train_labels), "full-train")
    test = _images_to_dataset(load_idx(paths.test_images), load_idx(paths.test_labels), "test")
    return train, test


def make_splits(
    train: MnistDataset,
    seed: int,
    expected_count: Optional[int] = FULL_TRAIN_COUNT,
) -> Tuple[MnistDataset, MnistDataset]:
    """
    种子置换后对半划分

    前一半下标 perm[:count//2]，后一半 perm[count//2:]；两半各自按原下标排序。
    expected_count=None 时不检查样本数（小型夹具数据使用）。
    """
    count = len(train)
    if expected_count is not None and count != expected_count:
        raise DataFormatError("count", f"训练集应有 {expected_count} 个样本，实际 {count} 个")
    if count < 2:
        raise InvalidArgumentError("训练集至少需要 2 个样本")
    perm = derive_stream(seed, "split").generator().permutation(count)
    half = count // 2
    first = train.subset(np.sort(perm[:half]), "train-first-half")
    second = train.subset(np.sort(perm[half:]), "train-second-half")
    return first, second


# ========== 软标签 ==========

@dataclass(frozen=True)
class SoftLabelDataset:
    """
    后一半图像与教师输出的概率向量

    analysis_labels 是原始硬标签，只用于事后分析，训练从不读取。
    """
    images: np.ndarray
    soft_targets: np.ndarray
    teacher_checkpoint_id: str
    analysis_labels: Optional[np.ndarray] = None

    def __post_init__(self):
        images = np.array(self.images, dtype=np.float64)
        targets = np.array(self.soft_targets, dtype=np.float64)
        if images.ndim != 2 or targets.ndim != 2 or len(images) != len(targets):
            raise InvalidArgumentError("images 与 soft_targets 必须是行数相同的二维数组")
        if np.any(targets < 0) or not np.allclose(targets.sum(axis=1), 1.0, rtol=0, atol=TARGET_SUM_TOL):
            raise InvalidArgumentError("软标签必须是和为 1 的非负概率向量")
        if self.analysis_labels is not None and len(self.analysis_labels) != len(images):
            raise InvalidArgumentError("analysis_labels 个数与样本数不符")
        images.setflags(write=False)
        targets.setflags(write=False)
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "soft_targets", targets)

    def __len__(self) -> int:
        return len(self.images)

    def as_batch(self) -> LabeledBatch:
        return LabeledBatch(self.images, self.soft_targets)


def write_soft_labels(data: SoftLabelDataset, path: PathLike) -> None:
    if data.images.shape[1] != PIXELS or data.soft_targets.shape[1] != CLASSES:
        raise InvalidArgumentError(f"软标签记录必须是 {PIXELS}+{CLASSES} 个值")
    records = np.concatenate([data.images, data.soft_targets], axis=1).astype("<f8")
    with open(path, 'wb') as f:
        f.write(struct.pack("<Q", len(records)))
        f.write(records.tobytes(order="C"))


def read_soft_labels(path: PathLike, teacher_checkpoint_id: str = "") -> SoftLabelDataset:
    with open(path, 'rb') as f:
        blob = f.read()
    if len(blob) < 8:
        raise DataFormatError("count", "软标签文件过短")
    (count,) = struct.unpack_from("<Q", blob, 0)
    width = PIXELS + CLASSES
    if len(blob) != 8 + 8 * width * count:
        raise DataFormatError("payload", f"{count} 条记录需要 {8 + 8 * width * count} 字节，实际 {len(blob)} 字节")
    records = np.frombuffer(blob, dtype="<f8", count=count * width, offset=8).reshape(count, width)
    return SoftLabelDataset(records[:, :PIXELS], records[:, PIXELS:], teacher_checkpoint_id)


# ========== 合成夹具 ==========

def make_synthetic_mnist(
    directory: PathLike,
    train_count: int = 200,
    test_count: int = 50,
    seed: int = 0,
    compress: bool = False,
) -> MnistPaths:
    """
    生成可学习的小型 IDX 文件

    每个类别有一个随机原型图案，样本 = 原型 + 噪声，量化到 uint8。
    文件名与标准 MNIST 相同（compress=True 时带 .gz）。
    """
    if train_count < 1 or test_count < 1:
        raise InvalidArgumentError("样本数必须为正")
    base = Path(directory)
    base.mkdir(parents=True, exist_ok=True)
    gen = derive_stream(seed, "synthetic-mnist").generator()
    prototypes = (gen.random((CLASSES, PIXELS)) < 0.2).astype(np.float64)

    def draw(count: int):
        labels = gen.integers(0, CLASSES, size=count)
        noisy = prototypes[labels] * 0.8 + gen.random((count, PIXELS)) * 0.3
        pixels = np.clip(np.rint(noisy * 255.0), 0, 255).astype(np.uint8)
        return pixels.reshape(count, IMAGE_SIDE, IMAGE_SIDE), labels.astype(np.uint8)

    suffix = ".gz" if compress else ""
    paths = {key: str(base / f"{name}{suffix}") for key, name in STANDARD_FILES.items()}
    train_images, train_labels = draw(int(train_count))
    test_images, test_labels = draw(int(test_count))
    write_idx(paths['train_images'], train_images, compress)
    write_idx(paths['train_labels'], train_labels, compress)
    write_idx(paths['test_images'], test_images, compress)
    write_idx(paths['test_labels'], test_labels, compress)
    return MnistPaths(**paths)
