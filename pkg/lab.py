"""
自旋玻璃能量地板实验室

主程序：整合所有核心模块，提供简洁的 API

使用示例：
```python
lab = create_floor_lab(output_dir="runs")

# 运行实验（配置为 JSON 文本）
manifest = lab.run_text('{"experiment": "floor-spin", "n": 20, "trials": 50}')

# 查看历史运行
lab.list_runs()
```
"""
from typing import Dict, Any, List, Optional

from core import (
    ExperimentConfig,
    RunManifest,
    RunStorage,
    list_experiments,
    parse_config,
    run,
)
from core.experiment_config import default_config, serialize_config, with_overrides


class FloorLab:
    """
    实验室门面

    持有一个运行存储，负责解析配置、分发实验、查询历史运行
    """

    def __init__(self, output_dir: str = "runs"):
        """
        Args:
            output_dir: 运行结果的根目录
        """
        self.output_dir = output_dir
        self.storage = RunStorage(base_dir=output_dir)

    def run_config(self, config: ExperimentConfig) -> RunManifest:
        """执行已校验的配置；输出目录以实验室为准"""
        config = with_overrides(config, output_dir=self.output_dir)
        return run(config, storage=self.storage)

    def run_text(
        self,
        text: str,
        master_seed: Optional[int] = None,
        desk_scale: Optional[bool] = None,
    ) -> RunManifest:
        """解析配置文本并执行"""
        config = with_overrides(parse_config(text), master_seed=master_seed, desk_scale=desk_scale)
        return self.run_config(config)

    def list_experiments(self) -> Dict[str, str]:
        """列出注册表中的实验"""
        return list_experiments()

    def show_config(self, experiment: str) -> str:
        """某个实验的默认配置（JSON 文本）"""
        return serialize_config(default_config(experiment))

    def list_runs(self) -> List[Dict[str, Any]]:
        """历史运行的摘要，按开始时间倒序"""
        return [
            {
                'run_id': m.run_id,
                'experiment': m.experiment,
                'status': m.status,
                'started_at': m.started_at,
                'finished_at': m.finished_at,
            }
            for m in self.storage.list_runs()
        ]

    def get_run(self, run_id: str) -> Optional[Dict[str, Any]]:
        """单个运行的清单、文件列表与 summary.json 内容"""
        manifest = self.storage.get_manifest(run_id)
        if manifest is None:
            return None
        return {
            'manifest': manifest.to_dict(),
            'files': self.storage.list_files(run_id),
            'summary': self.storage.read_file(run_id, "summary.json"),
        }

    def remove_run(self, run_id: str) -> bool:
        return self.storage.remove_run(run_id)


def create_floor_lab(output_dir: str = "runs") -> FloorLab:
    """工厂函数：创建实验室实例"""
    return FloorLab(output_dir=output_dir)
