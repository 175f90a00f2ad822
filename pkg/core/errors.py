"""
异常定义模块

所有模块共用一套异常层级，CLI 根据 exit_code 决定进程退出码：
- 0 成功
- 1 配置错误
- 2 数据错误
- 3 数值失败
"""
from typing import Optional


class FloorLabError(Exception):
    """所有实验错误的基类"""
    exit_code: int = 3


class InvalidArgumentError(FloorLabError, ValueError):
    """参数不满足前置条件"""
    exit_code = 1


class DimensionMismatchError(InvalidArgumentError):
    """张量与球面点维度不一致"""


class DegenerateInputError(FloorLabError, ValueError):
    """退化输入（例如零向量无法投影到球面）"""
    exit_code = 3


class BudgetExceededError(FloorLabError):
    """内存预算不足以容纳耦合张量"""
    exit_code = 1


class NumericFailureError(FloorLabError):
    """数值发散或出现非有限值"""
    exit_code = 3


class DataFormatError(FloorLabError):
    """数据文件格式错误（IDX / 检查点 / 软标签文件）"""
    exit_code = 2

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class ConfigError(FloorLabError):
    """
    配置错误

    记录出错的键名和它在配置文本中的行号，便于定位
    """
    exit_code = 1

    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None):
        self.key = key
        self.line = line
        location = f" (第 {line} 行)" if line is not None else ""
        super().__init__(f"{message}{location}")
