"""
命令行入口

    python cli.py run --config PATH [--out DIR] [--seed N] [--desk-scale]
    python cli.py list
    python cli.py show-config EXPERIMENT

退出码：0 成功，1 配置错误，2 数据错误，3 数值失败
"""
import argparse
import sys
from typing import List, Optional

from core import FloorLabError, list_experiments
from core.experiment_config import default_config, parse_config, serialize_config, with_overrides
from lab import create_floor_lab

EXIT_OK = 0
EXIT_CONFIG = 1


def _error(message: str) -> None:
    # 错误总是输出，不受 verbose 开关影响
    print(f"[CLI] ❌ {message}", file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="floorlab", description="自旋玻璃能量地板实验室")
    sub = parser.add_subparsers(dest="command", required=True)

    run_cmd = sub.add_parser("run", help="按配置文件运行一个实验")
    run_cmd.add_argument("--config", required=True, help="JSON 配置文件路径")
    run_cmd.add_argument("--out", default=None, help="输出目录（覆盖配置中的 output_dir）")
    run_cmd.add_argument("--seed", type=int, default=None, help="主种子（覆盖配置中的 master_seed）")
    run_cmd.add_argument("--desk-scale", action="store_true", help="MNIST 实验使用桌面规模子采样")

    sub.add_parser("list", help="列出实验注册表")

    show = sub.add_parser("show-config", help="打印某个实验的默认配置")
    show.add_argument("experiment")
    return parser


def _run(args) -> int:
    try:
        with open(args.config, 'r', encoding='utf-8') as f:
            text = f.read()
    except OSError as e:
        _error(f"无法读取配置文件 {args.config}: {e}")
        return EXIT_CONFIG

    config = with_overrides(parse_config(text), args.out, args.seed, args.desk_scale or None)
    lab = create_floor_lab(config.output_dir)
    manifest = lab.run_config(config)
    print(lab.storage.file_path(manifest.run_id, ""))
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    """主函数，返回进程退出码"""
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _run(args)
        if args.command == "list":
            for name, description in list_experiments().items():
                print(f"{name:<18} {description}")
            return EXIT_OK
        print(serialize_config(default_config(args.experiment)), end="")
        return EXIT_OK
    except FloorLabError as e:
        _error(f"{type(e).__name__}: {e}")
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
