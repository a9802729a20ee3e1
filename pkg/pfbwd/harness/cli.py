"""
命令行入口
  run       Monte Carlo 实验，输出 runs.csv / cdf_se.csv / cdf_pf.csv
  estimate  复杂度与信令估计表
  trace     单个实现的收敛轨迹 trace.csv / outer.csv
  sweep     沿某一维扫描，输出 sweep_<axis>.csv
  report    分析 runs.csv（可选与另一份 runs.csv 对比）
退出码: 0 成功，1 配置/用法错误，2 求解失败
"""

import argparse
import logging
import os
import sys

from pfbwd.errors import ConfigError, SolverError
from pfbwd.harness import report as report_mod
from pfbwd.harness.accounting import comparison_table
from pfbwd.harness.config import PRESETS, build_config, load_settings
from pfbwd.harness.experiment import SWEEP_AXES, read_runs, run_experiment, sweep, trace_realization, write_outputs
from pfbwd.netgen import ArrayGeometry

logger = logging.getLogger("pfbwd")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 2


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def setup_logging(level="INFO", log_dir=None, quiet=False):
    logging.addLevelName(logging.WARNING, "WARN")
    for handler in [h for h in logger.handlers if getattr(h, "_pfbwd", False)]:
        logger.removeHandler(handler)
        handler.close()
    formatter = logging.Formatter("[%(levelname)s] %(message)s")
    console = logging.StreamHandler()
    console.setFormatter(formatter)
    console.setLevel(logging.WARNING if quiet else level)
    console._pfbwd = True
    logger.addHandler(console)
    if log_dir:
        os.makedirs(log_dir, exist_ok=True)
        file_handler = logging.FileHandler(os.path.join(log_dir, "pfbwd.log"))
        file_handler.setFormatter(logging.Formatter("%(asctime)s [%(levelname)s] %(name)s: %(message)s"))
        file_handler._pfbwd = True
        logger.addHandler(file_handler)
    logger.setLevel(level)
    logger.propagate = False


def _config_args(p):
    p.add_argument("--config", help="实验配置文件 (key = value)")
    p.add_argument("--preset", choices=sorted(PRESETS), default="desk", help="内置预设")
    p.add_argument("--seed", type=int, help="基础随机种子")
    p.add_argument("--ues", type=int, dest="num_ues", help="UE 数 U")
    p.add_argument("--mbs", type=int, dest="num_mbs", help="MBS 数 B")
    p.add_argument("--no-haps", action="store_true", help="不部署 HAPS（纯地面网络）")
    p.add_argument("--haps-array", help="HAPS 阵列，例如 4x4")
    p.add_argument("--delta", type=float, help="内层罚参数比例 δ")
    p.add_argument("--out", help="输出目录（默认 PFBWD_OUT_DIR）")
    p.add_argument("--quiet", action="store_true", help="关闭进度条与 INFO 日志")


def build_parser():
    parser = Parser(prog="pfbwd", description="两级分布式 PF 波束成形仿真")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=Parser)

    run = sub.add_parser("run", help="Monte Carlo 实验")
    _config_args(run)
    run.add_argument("--mode", choices=["distributed", "centralized", "both"], help="求解模式")
    run.add_argument("--realizations", type=int, help="实现次数")
    run.add_argument("--workers", type=int, help="实现级并行进程数（默认 PFBWD_WORKERS）")

    est = sub.add_parser("estimate", help="复杂度与信令估计")
    est.add_argument("--ues", type=int, default=16, help="UE 数 U")
    est.add_argument("--mbs", type=int, default=4, help="MBS 数 B")
    est.add_argument("--mbs-array", default="4x4", help="MBS 阵列")
    est.add_argument("--haps-array", default="8x8", help="HAPS 阵列")

    tr = sub.add_parser("trace", help="单个实现的收敛轨迹")
    _config_args(tr)
    tr.add_argument("--realization", type=int, default=0, help="实现编号（seed + 编号）")
    tr.add_argument("--dump-channels", action="store_true", help="导出信道矩阵 channels.csv")
    tr.add_argument("--snapshots", action="store_true", help="每次内层迭代追加一致性状态到 consensus.csv")
    tr.add_argument("--dump-programs", action="store_true", help="导出最终状态下的 Block 1 / Block 2 子问题到 programs/")

    sw = sub.add_parser("sweep", help="参数扫描")
    _config_args(sw)
    sw.add_argument("--axis", choices=SWEEP_AXES, required=True, help="扫描维度")
    sw.add_argument("--values", required=True, help="逗号分隔的取值，例如 2,4,6")
    sw.add_argument("--mode", choices=["distributed", "centralized", "both"], help="求解模式")
    sw.add_argument("--realizations", type=int, help="每个取值的实现次数")
    sw.add_argument("--workers", type=int, help="实现级并行进程数")

    rep = sub.add_parser("report", help="分析 runs.csv")
    rep.add_argument("runs_csv", help="runs.csv 路径")
    rep.add_argument("--compare", help="作为基线对比的另一份 runs.csv")
    rep.add_argument("--out", help="保存 JSON 报告的目录")
    return parser


def _overrides(args):
    keys = ("seed", "num_ues", "num_mbs", "haps_array", "delta", "mode", "realizations")
    values = {k: getattr(args, k, None) for k in keys}
    if getattr(args, "no_haps", False):
        values["haps"] = False
    return values


def cmd_run(args, settings):
    if args.realizations is not None and args.realizations <= 0:
        raise ConfigError("no work: --realizations 必须 >= 1")
    cfg = build_config(args.preset, args.config, _overrides(args))
    if cfg.realizations <= 0:
        raise ConfigError("no work: realizations = 0")
    workers = args.workers or settings["workers"]
    logger.info("开始实验: mode=%s, B=%d, U=%d, HAPS=%s, %d 个实现", cfg.mode, cfg.num_mbs, cfg.num_ues, cfg.haps,
                cfg.realizations)
    result = run_experiment(cfg, settings["backend"], workers, settings["bs_workers"], args.quiet)
    if not result.records:
        raise SolverError(f"所有实现都失败了（{result.excluded} 个）")
    paths = write_outputs(result, args.out or settings["out_dir"])
    logger.info("数据已保存: %s", paths["runs"])
    if result.excluded:
        logger.warning("%d 个实现被排除", result.excluded)
    return EXIT_OK


def cmd_estimate(args, settings):
    mbs = ArrayGeometry.parse(args.mbs_array).n_elements
    haps = ArrayGeometry.parse(args.haps_array).n_elements
    if args.ues < 0 or args.mbs < 0:
        raise ConfigError("--ues / --mbs 不能为负")
    table = comparison_table(args.ues, mbs, haps, args.mbs)
    print(f"U = {args.ues}, N = {[mbs] * args.mbs + [haps]}")
    print(f"[复杂度] 分布式: O({table['distributed_dim']}^3.5)   集中式: O({table['centralized_dim']}^3.5)")
    print(f"[信令]   分布式: {table['distributed_signaling']} / BS / 迭代   "
          f"集中式: MBS {table['centralized_signaling_mbs']}, HAPS {table['centralized_signaling_haps']}")
    return EXIT_OK


def cmd_trace(args, settings):
    cfg = build_config(args.preset, args.config, _overrides(args))
    out_dir = args.out or settings["out_dir"]
    result = trace_realization(cfg, args.realization, out_dir, settings["backend"], settings["bs_workers"],
                               dump_channels=args.dump_channels, snapshots=args.snapshots,
                               programs=args.dump_programs)
    logger.info("外层 %d 次，内层共 %d 次，收敛=%s；轨迹已保存到 %s", result.trace.iterations,
                result.trace.total_inner_iters, result.converged, out_dir)
    return EXIT_OK


def cmd_sweep(args, settings):
    cfg = build_config(args.preset, args.config, _overrides(args))
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigError("no work: --values 为空")
    out_dir = args.out or settings["out_dir"]
    table = sweep(cfg, args.axis, values, out_dir, settings["backend"], args.workers or settings["workers"],
                  settings["bs_workers"], args.quiet)
    print(table.to_string(index=False))
    return EXIT_OK


def cmd_report(args, settings):
    if not os.path.isfile(args.runs_csv):
        raise ConfigError(f"文件不存在: {args.runs_csv}")
    if args.compare:
        if not os.path.isfile(args.compare):
            raise ConfigError(f"文件不存在: {args.compare}")
        report_mod.print_compare(read_runs(args.compare), read_runs(args.runs_csv), args.compare, args.runs_csv)
    else:
        report_mod.report(args.runs_csv, args.out)
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "estimate": cmd_estimate,
    "trace": cmd_trace,
    "sweep": cmd_sweep,
    "report": cmd_report,
}


def cli(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as e:
        return int(e.code or 0)

    try:
        settings = load_settings()
        setup_logging(settings["log_level"], settings["log_dir"], getattr(args, "quiet", False))
        return COMMANDS[args.command](args, settings)
    except ConfigError as e:
        print(f"[ERROR] {e}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as e:
        print(f"[ERROR] 求解失败: {e}", file=sys.stderr)
        return EXIT_SOLVER


def main():
    sys.exit(cli())
