"""
运行结果存储模块

每次实验运行一个独立文件夹：
    <base_dir>/<run_id>/
        manifest.json   运行清单（配置快照、派生种子、时间戳、数据文件校验和）
        *.csv / summary.json / histogram.txt
支持列出、读取和删除历史运行
"""
from typing import Dict, Any, Optional, List
from dataclasses import dataclass, field
import hashlib
import json
import os
import shutil
import threading
import time

from .errors import InvalidArgumentError

MANIFEST_FILE = "manifest.json"


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


@dataclass
class RunManifest:
    """
    一次运行的清单

    checksums 只覆盖数据文件；清单自身含时间戳，不参与校验。
    """
    run_id: str
    experiment: str
    config: Dict[str, Any]
    derived_seeds: Dict[str, Any] = field(default_factory=dict)
    version: str = ""
    status: str = "running"             # running / completed / failed
    started_at: float = field(default_factory=time.time)
    finished_at: Optional[float] = None
    checksums: Dict[str, str] = field(default_factory=dict)
    error: Optional[str] = None
    exit_code: int = 0

    def to_dict(self) -> Dict[str, Any]:
        """序列化为字典"""
        return {
            'run_id': self.run_id,
            'experiment': self.experiment,
            'status': self.status,
            'version': self.version,
            'started_at': self.started_at,
            'finished_at': self.finished_at,
            'config': self.config,
            'derived_seeds': self.derived_seeds,
            'checksums': self.checksums,
            'error': self.error,
            'exit_code': self.exit_code,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'RunManifest':
        """从字典反序列化"""
        return cls(
            run_id=data.get('run_id', ''),
            experiment=data.get('experiment', ''),
            config=data.get('config', {}),
            derived_seeds=data.get('derived_seeds', {}),
            version=data.get('version', ''),
            status=data.get('status', 'running'),
            started_at=data.get('started_at', 0.0),
            finished_at=data.get('finished_at'),
            checksums=data.get('checksums', {}),
            error=data.get('error'),
            exit_code=data.get('exit_code', 0),
        )


class RunStorage:
    """
    运行存储类

    基于文件系统，每个运行一个文件夹；数据文件只由协调者线程写入
    """

    def __init__(self, base_dir: str = "runs"):
        """
        初始化运行存储

        Args:
            base_dir: 基础存储目录
        """
        self.base_dir = base_dir
        self._lock = threading.Lock()
        os.makedirs(self.base_dir, exist_ok=True)

    def _run_dir(self, run_id: str) -> str:
        if not run_id or os.sep in run_id or run_id in (".", ".."):
            raise InvalidArgumentError(f"非法的运行 ID: {run_id!r}")
        return os.path.join(self.base_dir, run_id)

    def new_run_id(self, experiment: str) -> str:
        """<实验名>-<时间戳>，同一秒内重复时追加序号"""
        stem = f"{experiment}-{time.strftime('%Y%m%d-%H%M%S')}"
        with self._lock:
            run_id, suffix = stem, 1
            while os.path.exists(os.path.join(self.base_dir, run_id)):
                suffix += 1
                run_id = f"{stem}-{suffix}"
            os.makedirs(os.path.join(self.base_dir, run_id))
        return run_id

    def write_file(self, run_id: str, name: str, content: str) -> str:
        """
        写入一个数据文件

        Returns:
            str: 文件内容的 SHA-256
        """
        data = content.encode("utf-8")
        with open(os.path.join(self._run_dir(run_id), name), 'wb') as f:
            f.write(data)
        return sha256_hex(data)

    def write_binary(self, run_id: str, name: str, data: bytes) -> str:
        with open(os.path.join(self._run_dir(run_id), name), 'wb') as f:
            f.write(data)
        return sha256_hex(data)

    def file_path(self, run_id: str, name: str) -> str:
        return os.path.join(self._run_dir(run_id), name)

    def read_file(self, run_id: str, name: str) -> Optional[str]:
        path = self.file_path(run_id, name)
        if not os.path.exists(path):
            return None
        with open(path, 'r', encoding='utf-8') as f:
            return f.read()

    def save_manifest(self, manifest: RunManifest) -> None:
        path = os.path.join(self._run_dir(manifest.run_id), MANIFEST_FILE)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(manifest.to_dict(), f, ensure_ascii=False, indent=2)

    def get_manifest(self, run_id: str) -> Optional[RunManifest]:
        path = os.path.join(self._run_dir(run_id), MANIFEST_FILE)
        if not os.path.exists(path):
            return None
        try:
            with open(path, 'r', encoding='utf-8') as f:
                return RunManifest.from_dict(json.load(f))
        except (OSError, json.JSONDecodeError) as e:
            print(f"[RunStorage] ⚠️ 无法读取 {path}: {e}")
            return None

    def list_runs(self) -> List[RunManifest]:
        """所有带清单的运行，按开始时间倒序"""
        runs = []
        for entry in os.scandir(self.base_dir):
            if entry.is_dir():
                manifest = self.get_manifest(entry.name)
                if manifest is not None:
                    runs.append(manifest)
        runs.sort(key=lambda m: m.started_at, reverse=True)
        return runs

    def list_files(self, run_id: str) -> List[str]:
        run_dir = self._run_dir(run_id)
        if not os.path.isdir(run_dir):
            return []
        return sorted(name for name in os.listdir(run_dir) if os.path.isfile(os.path.join(run_dir, name)))

    def verify(self, run_id: str) -> Dict[str, bool]:
        """重新计算数据文件校验和，与清单对比"""
        manifest = self.get_manifest(run_id)
        if manifest is None:
            return {}
        result = {}
        for name, digest in manifest.checksums.items():
            path = self.file_path(run_id, name)
            if not os.path.exists(path):
                result[name] = False
                continue
            with open(path, 'rb') as f:
                result[name] = sha256_hex(f.read()) == digest
        return result

    def remove_run(self, run_id: str) -> bool:
        """删除运行及其目录"""
        run_dir = self._run_dir(run_id)
        if not os.path.isdir(run_dir):
            return False
        shutil.rmtree(run_dir)
        return True
