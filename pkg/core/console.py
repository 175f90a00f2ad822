"""
控制台输出

沿用 "[标签] 图标 消息" 的输出格式，方便服务模式按标签解析进度。
一次运行的 verbose 设置只作用于该运行的上下文（含它派生的工作线程），
并发的服务请求互不影响。
"""
from contextlib import contextmanager
from contextvars import ContextVar, copy_context
from typing import Callable, Iterator, Optional, TypeVar
import os
import threading

T = TypeVar("T")

_lock = threading.Lock()
_verbose = os.environ.get("FLOORLAB_QUIET", "") == ""
_run_verbose: ContextVar[Optional[bool]] = ContextVar("floorlab_verbose", default=None)


def set_verbose(enabled: bool) -> None:
    """开启或关闭进程级的默认进度输出"""
    global _verbose
    _verbose = bool(enabled)


def is_verbose() -> bool:
    override = _run_verbose.get()
    return _verbose if override is None else override


@contextmanager
def verbosity(enabled: bool) -> Iterator[None]:
    """在当前上下文内临时覆盖 verbose，退出时恢复"""
    token = _run_verbose.set(bool(enabled))
    try:
        yield
    finally:
        _run_verbose.reset(token)


def in_current_context(fn: Callable[..., T]) -> Callable[..., T]:
    """
    包装交给线程池的函数，使其在提交者的上下文副本中运行

    线程池的工作线程不继承 ContextVar；每次调用使用独立副本，
    因为同一个 Context 不能被多个线程同时进入。
    """
    snapshot = copy_context()

    def wrapper(*args, **kwargs):
        return snapshot.copy().run(fn, *args, **kwargs)

    return wrapper


def log(tag: str, message: str, icon: str = "") -> None:
    """
    打印一行带标签的进度信息

    Args:
        tag: 来源标签，如 "EnsembleLab"
        message: 消息正文
        icon: 可选的状态图标（✅ ⚠️ ❌ 📊 ...）
    """
    if not is_verbose():
        return
    prefix = f"[{tag}] {icon} " if icon else f"[{tag}] "
    # 多个工作线程同时打印时避免行交错
    with _lock:
        print(f"{prefix}{message}", flush=True)
