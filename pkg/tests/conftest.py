"""测试共用的夹具"""
import math

import numpy as np
import pytest

from core.console import set_verbose
from core.landscape import CouplingTensor, SpherePoint
from core.mnist import make_synthetic_mnist
from core.rng_streams import derive_stream


@pytest.fixture(autouse=True)
def quiet_console():
    set_verbose(False)
    yield
    set_verbose(False)


@pytest.fixture
def stream():
    return derive_stream(1234, "test")


@pytest.fixture
def integer_tensor():
    """n=2 的手选整数耦合"""
    return CouplingTensor.from_values([1, -2, 3, 0, 4, -1, 2, 5])


@pytest.fixture
def axis_point():
    return SpherePoint(2, np.array([math.sqrt(2.0), 0.0]))


@pytest.fixture(scope="session")
def synthetic_mnist_dir(tmp_path_factory):
    """小型可学习的合成 MNIST（400 训练 / 100 测试）"""
    directory = tmp_path_factory.mktemp("mnist")
    make_synthetic_mnist(directory, train_count=400, test_count=100, seed=7)
    return directory
