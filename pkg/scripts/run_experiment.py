#!/usr/bin/env python3
"""
运行 Monte Carlo 实验
等价于 python -m pfbwd run ...
"""

import sys
from pathlib import Path

PROJECT_DIR = Path(__file__).parent.parent
sys.path.insert(0, str(PROJECT_DIR))

from pfbwd.harness.cli import cli  # noqa: E402


def main():
    sys.exit(cli(["run", *sys.argv[1:]]))


if __name__ == "__main__":
    main()
