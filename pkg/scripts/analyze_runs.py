#!/usr/bin/env python3
"""
实验数据分析工具
分析最新一次实验的 runs.csv，生成报告
"""

import glob
import os
import sys
from pathlib import Path

PROJECT_DIR = Path(__file__).parent.parent
sys.path.insert(0, str(PROJECT_DIR))

from dotenv import load_dotenv  # noqa: E402

from pfbwd.harness.report import report  # noqa: E402


def find_latest_runs(data_dir):
    """在输出目录（含子目录）中找最新的 runs.csv"""
    files = glob.glob(os.path.join(data_dir, "**", "runs.csv"), recursive=True)
    if not files:
        return None
    return max(files, key=os.path.getmtime)


def main():
    load_dotenv()
    data_dir = os.getenv("PFBWD_OUT_DIR", str(PROJECT_DIR / "data"))
    path = sys.argv[1] if len(sys.argv) > 1 else find_latest_runs(data_dir)
    if not path or not os.path.isfile(path):
        print("❌ 未找到 runs.csv")
        sys.exit(1)

    print(f"📁 加载: {path}")
    report(path, os.path.dirname(path))


if __name__ == "__main__":
    main()
