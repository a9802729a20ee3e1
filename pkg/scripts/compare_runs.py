#!/usr/bin/env python3
"""
实验基线管理工具
把某次实验的 runs.csv 保存为基线，之后与新的实验结果对比
"""

import json
import os
import shutil
import sys
from datetime import datetime
from pathlib import Path

PROJECT_DIR = Path(__file__).parent.parent
sys.path.insert(0, str(PROJECT_DIR))

from dotenv import load_dotenv  # noqa: E402

from pfbwd.harness.experiment import read_runs  # noqa: E402
from pfbwd.harness.report import print_compare, summarize  # noqa: E402

load_dotenv()
DATA_DIR = os.getenv("PFBWD_OUT_DIR", str(PROJECT_DIR / "data"))
BASELINE_DIR = PROJECT_DIR / "baselines"


def create_baseline(name, runs_csv, description=""):
    """创建基线：复制 runs.csv 并保存汇总"""
    if not os.path.isfile(runs_csv):
        print(f"❌ 文件不存在: {runs_csv}")
        return False
    df = read_runs(runs_csv)
    BASELINE_DIR.mkdir(exist_ok=True)
    baseline = {
        "name": name,
        "description": description,
        "created_at": datetime.now().isoformat(),
        "source_file": os.path.abspath(runs_csv),
        "realizations": len(df),
        "summary": summarize(df),
    }
    with open(BASELINE_DIR / f"{name}.json", "w") as f:
        json.dump(baseline, f, indent=2, ensure_ascii=False)
    shutil.copy(runs_csv, BASELINE_DIR / f"{name}_runs.csv")
    print(f"\n✅ 基线创建成功: {name} ({len(df)} 个实现)")
    return True


def list_baselines():
    files = sorted(BASELINE_DIR.glob("*.json")) if BASELINE_DIR.exists() else []
    if not files:
        print("📭 暂无基线")
        return []
    print(f"\n📊 基线列表 (共 {len(files)} 个)")
    print("=" * 80)
    print(f"{'名称':<20} {'创建时间':<20} {'描述':<30}")
    print("-" * 80)
    baselines = []
    for bf in files:
        with open(bf) as f:
            baseline = json.load(f)
        baselines.append(baseline)
        created = datetime.fromisoformat(baseline["created_at"])
        print(f"{baseline['name']:<20} {created.strftime('%Y-%m-%d %H:%M'):<20} {baseline.get('description', ''):<30}")
    print("=" * 80)
    return baselines


def compare_with_baseline(name, runs_csv):
    base_csv = BASELINE_DIR / f"{name}_runs.csv"
    if not base_csv.exists():
        print(f"❌ 基线不存在: {name}")
        return
    if not os.path.isfile(runs_csv):
        print(f"❌ 文件不存在: {runs_csv}")
        return
    print_compare(read_runs(base_csv), read_runs(runs_csv), name, runs_csv)


def delete_baseline(name):
    baseline_file = BASELINE_DIR / f"{name}.json"
    if not baseline_file.exists():
        print(f"❌ 基线不存在: {name}")
        return
    baseline_file.unlink()
    data_file = BASELINE_DIR / f"{name}_runs.csv"
    if data_file.exists():
        data_file.unlink()
    print(f"✅ 基线已删除: {name}")


def main():
    default_runs = os.path.join(DATA_DIR, "runs.csv")
    if len(sys.argv) < 2:
        print("\n用法:")
        print("   python compare_runs.py create <name> [runs.csv] [description]  # 创建基线")
        print("   python compare_runs.py list                                  # 列出所有基线")
        print("   python compare_runs.py compare <name> [runs.csv]             # 与基线对比")
        print("   python compare_runs.py delete <name>                         # 删除基线")
        return

    command = sys.argv[1]
    if command == "list":
        list_baselines()
        return
    if len(sys.argv) < 3:
        print("❌ 请指定基线名称")
        return
    name = sys.argv[2]
    runs_csv = sys.argv[3] if len(sys.argv) > 3 else default_runs

    if command == "create":
        create_baseline(name, runs_csv, sys.argv[4] if len(sys.argv) > 4 else "")
    elif command == "compare":
        compare_with_baseline(name, runs_csv)
    elif command == "delete":
        delete_baseline(name)
    else:
        print(f"❌ 未知命令: {command}")


if __name__ == "__main__":
    main()
