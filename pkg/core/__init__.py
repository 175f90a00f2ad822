"""
自旋玻璃能量地板实验室 - 核心模块

核心能力：
1. 球面 3-自旋玻璃景观上的 GD / SGD 下降与终点能量统计
2. MNIST 上的教师/学生软标签实验与 GD/SGD 对比
"""

__version__ = '1.0.0'

from .errors import (
    FloorLabError,
    InvalidArgumentError,
    DimensionMismatchError,
    DegenerateInputError,
    BudgetExceededError,
    NumericFailureError,
    DataFormatError,
    ConfigError,
)
from .rng_streams import RngStream, derive_stream
from .landscape import (
    THEORY,
    CouplingTensor,
    DecomposedField,
    ProductSpherePoint,
    SpherePoint,
    decompose_field,
    euclidean_gradient,
    hamiltonian,
    retract_to_sphere,
    sample_couplings,
    tangential_gradient,
    tripartite_gradient,
    tripartite_hamiltonian,
)
from .descent import (
    DescentConfig,
    StepConfig,
    DescentRecord,
    StopReason,
    gradient_descent,
    random_product_point,
    random_sphere_point,
    refine_with_gd,
    sgd_spin_glass,
    tripartite_descent,
)
from .ensemble import (
    EnsembleReport,
    EnsembleSpec,
    band_width_vs_dimension,
    compare_gd_sgd_spin,
    run_ensemble,
)
from .neural_net import (
    LabeledBatch,
    NetworkArchitecture,
    NetworkParams,
    TrainConfig,
    TrainReport,
    backward,
    cross_entropy,
    evaluate,
    forward,
    init_params,
    train_gd,
    train_sgd,
)
from .mnist import MnistDataset, MnistPaths, SoftLabelDataset, load_idx, load_mnist, make_splits
from .teacher_student import (
    compare_teacher_student_predictions,
    generate_soft_labels,
    run_gd_vs_sgd_mnist,
    run_student_study,
    train_teacher,
)
from .experiment_config import ExperimentConfig, parse_config, serialize_config
from .run_storage import RunManifest, RunStorage
from .experiments import REGISTRY, list_experiments, run

__all__ = [
    # 异常
    'FloorLabError',
    'InvalidArgumentError',
    'DimensionMismatchError',
    'DegenerateInputError',
    'BudgetExceededError',
    'NumericFailureError',
    'DataFormatError',
    'ConfigError',
    # 景观与下降
    'RngStream',
    'derive_stream',
    'THEORY',
    'CouplingTensor',
    'DecomposedField',
    'ProductSpherePoint',
    'SpherePoint',
    'decompose_field',
    'euclidean_gradient',
    'hamiltonian',
    'retract_to_sphere',
    'sample_couplings',
    'tangential_gradient',
    'tripartite_gradient',
    'tripartite_hamiltonian',
    'DescentConfig',
    'StepConfig',
    'DescentRecord',
    'StopReason',
    'gradient_descent',
    'random_product_point',
    'random_sphere_point',
    'refine_with_gd',
    'sgd_spin_glass',
    'tripartite_descent',
    'EnsembleReport',
    'EnsembleSpec',
    'band_width_vs_dimension',
    'compare_gd_sgd_spin',
    'run_ensemble',
    # 神经网络与 MNIST
    'LabeledBatch',
    'NetworkArchitecture',
    'NetworkParams',
    'TrainConfig',
    'TrainReport',
    'backward',
    'cross_entropy',
    'evaluate',
    'forward',
    'init_params',
    'train_gd',
    'train_sgd',
    'MnistDataset',
    'MnistPaths',
    'SoftLabelDataset',
    'load_idx',
    'load_mnist',
    'make_splits',
    'compare_teacher_student_predictions',
    'generate_soft_labels',
    'run_gd_vs_sgd_mnist',
    'run_student_study',
    'train_teacher',
    # 运行器
    'ExperimentConfig',
    'parse_config',
    'serialize_config',
    'RunManifest',
    'RunStorage',
    'REGISTRY',
    'list_experiments',
    'run',
]
