"""
Monte Carlo 实验：每个实现 place_network → 信道 → 求解器 → 精确指标
输出 runs.csv、cdf_se.csv、cdf_pf.csv、sweep_<axis>.csv
"""

import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from multiprocessing import Pool

import numpy as np
import pandas as pd
from tqdm import tqdm

from pfbwd.baseline import run_centralized
from pfbwd.csvio import fmt, write_rows
from pfbwd.errors import ChannelDomainError, ConfigError, SolverError
from pfbwd.harness.accounting import cone_dimensions, signaling_estimate
from pfbwd.harness.config import with_overrides
from pfbwd.inner import write_trace
from pfbwd.metrics import check_feasibility, per_ue_se, pf_objective
from pfbwd.netgen import generate_channels, place_network
from pfbwd.outer import run_outer, write_outer
from pfbwd.subproblems import dump_programs

logger = logging.getLogger(__name__)

RUN_FIELDS = ["seed", "mode", "haps", "B", "U", "pf_exact", "mean_se", "min_se", "per_ue_se", "outer_iters",
              "total_inner_iters", "scalars_exchanged", "cone_dim_per_bs", "converged", "feasible", "wall_time_ms"]
CDF_FIELDS = ["mode", "haps", "value", "cdf"]
SWEEP_FIELDS = ["value", "mode", "haps", "mean_se", "mean_pf", "mean_inner_iters", "realizations"]
SWEEP_AXES = ("num_ues", "num_mbs", "haps_array", "delta")


@dataclass
class RunRecord:
    seed: int
    mode: str
    haps: bool
    B: int
    U: int
    pf_exact: float
    mean_se: float
    min_se: float
    per_ue_se: list
    outer_iters: int
    total_inner_iters: int
    scalars_exchanged: int
    cone_dim_per_bs: int
    converged: bool
    feasible: bool
    wall_time_ms: float

    def to_row(self):
        row = asdict(self)
        row["per_ue_se"] = ";".join(str(fmt(v)) for v in self.per_ue_se)
        return row


@dataclass
class ExperimentResult:
    records: list
    excluded: int = 0
    errors: list = field(default_factory=list)

    def frame(self):
        return runs_frame([r.to_row() for r in self.records])

    @property
    def cdf_se(self):
        return cdf_table(self.frame(), "per_ue_se")

    @property
    def cdf_pf(self):
        return cdf_table(self.frame(), "pf_exact")


def modes_of(cfg):
    return ["distributed", "centralized"] if cfg.mode == "both" else [cfg.mode]


def realization_channels(cfg, r):
    seed = cfg.seed + r
    topo = place_network(seed, cfg.num_mbs, cfg.num_ues, cfg.area_side_m, cfg.haps_alt_m, haps=cfg.haps,
                         grid=cfg.grid_placement, mbs_height_m=cfg.mbs_height_m)
    return generate_channels(seed, topo, cfg.mbs_geometry, cfg.haps_geometry, cfg.channel_params)


def run_realization(cfg, r, mode, backend="clarabel", bs_workers=1):
    start = time.perf_counter()
    channels = realization_channels(cfg, r)
    params = cfg.subproblem_params(backend, bs_workers)
    dims = cone_dimensions(cfg.num_ues, channels.n_antennas)

    if mode == "distributed":
        result = run_outer(channels, cfg.outer_config(), params)
        solution = result.solution
        outer_iters = result.trace.iterations
        inner_iters = result.trace.total_inner_iters
        scalars = result.trace.total_scalars
        converged = result.converged
        cone_dim = max(dims)
    else:
        result = run_centralized(channels, params)
        solution = result.solution
        outer_iters = inner_iters = 0
        scalars = sum(signaling_estimate(cfg.num_ues, channels.n_antennas, "centralized"))
        converged = result.converged
        cone_dim = sum(dims)

    se = per_ue_se(channels, solution)
    feasible = check_feasibility(channels, solution, params.gamma_min).feasible
    record = RunRecord(
        seed=cfg.seed + r,
        mode=mode,
        haps=cfg.haps,
        B=cfg.num_mbs,
        U=cfg.num_ues,
        pf_exact=pf_objective(channels, solution),
        mean_se=float(se.mean()),
        min_se=float(se.min()),
        per_ue_se=se.tolist(),
        outer_iters=outer_iters,
        total_inner_iters=inner_iters,
        scalars_exchanged=scalars,
        cone_dim_per_bs=cone_dim,
        converged=converged,
        feasible=feasible,
        wall_time_ms=(time.perf_counter() - start) * 1e3,
    )
    logger.info("实现 seed=%d [%s]: PF=%.4f, 平均 SE=%.3f b/s/Hz, 外层 %d 次, 内层 %d 次", record.seed, mode,
                record.pf_exact, record.mean_se, outer_iters, inner_iters)
    return record


def _task(args):
    cfg, r, mode, backend, bs_workers = args
    try:
        return run_realization(cfg, r, mode, backend, bs_workers), None
    except (SolverError, ChannelDomainError) as e:
        return None, f"seed={cfg.seed + r} [{mode}]: {e}"


def run_experiment(cfg, backend="clarabel", workers=1, bs_workers=1, quiet=False):
    if cfg.realizations <= 0:
        raise ConfigError("no work: realizations = 0，没有可运行的实现")
    tasks = [(cfg, r, mode, backend, bs_workers) for r in range(cfg.realizations) for mode in modes_of(cfg)]
    disable = quiet or not sys.stderr.isatty()

    if workers > 1:
        with Pool(processes=workers) as pool:
            outputs = list(tqdm(pool.imap(_task, tasks), total=len(tasks), desc="realizations", disable=disable))
    else:
        outputs = [_task(t) for t in tqdm(tasks, desc="realizations", disable=disable)]

    result = ExperimentResult([rec for rec, _ in outputs if rec is not None])
    result.errors = [err for _, err in outputs if err is not None]
    result.excluded = len(result.errors)
    for err in result.errors:
        logger.warning("实现被排除: %s", err)
    if result.excluded:
        logger.warning("共排除 %d / %d 个实现", result.excluded, len(tasks))
    return result


def runs_frame(rows):
    df = pd.DataFrame(rows, columns=RUN_FIELDS)
    for col in ("haps", "converged", "feasible"):
        df[col] = df[col].astype(int).astype(bool)
    return df


def read_runs(csv_path):
    df = pd.read_csv(csv_path, dtype={"per_ue_se": str, "mode": str})
    missing = [c for c in RUN_FIELDS if c not in df.columns]
    if missing:
        raise ConfigError(f"{csv_path} 缺少列: {', '.join(missing)}")
    return runs_frame(df[RUN_FIELDS].to_dict("records"))


def _se_values(cell):
    if isinstance(cell, (list, tuple)):
        return [float(v) for v in cell]
    return [float(v) for v in str(cell).split(";") if v != ""]


def cdf_table(df, column):
    """按 (mode, haps) 分组的经验 CDF：排序后第 i 个值的 cdf = i/n"""
    rows = []
    for (mode, haps), group in df.groupby(["mode", "haps"], sort=True):
        if column == "per_ue_se":
            values = np.sort([v for cell in group[column] for v in _se_values(cell)])
        else:
            values = np.sort(group[column].to_numpy(dtype=float))
        n = len(values)
        rows.extend({"mode": mode, "haps": bool(haps), "value": float(v), "cdf": (i + 1) / n}
                    for i, v in enumerate(values))
    return pd.DataFrame(rows, columns=CDF_FIELDS)


def aggregate(df):
    """按 (mode, haps) 汇总的均值表"""
    return df.groupby(["mode", "haps"], sort=True).agg(
        mean_se=("mean_se", "mean"),
        mean_pf=("pf_exact", "mean"),
        mean_inner_iters=("total_inner_iters", "mean"),
        realizations=("seed", "count"),
    ).reset_index()


def write_outputs(result, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "runs": os.path.join(out_dir, "runs.csv"),
        "cdf_se": os.path.join(out_dir, "cdf_se.csv"),
        "cdf_pf": os.path.join(out_dir, "cdf_pf.csv"),
    }
    write_rows(paths["runs"], RUN_FIELDS, [r.to_row() for r in result.records])
    write_rows(paths["cdf_se"], CDF_FIELDS, result.cdf_se.to_dict("records"))
    write_rows(paths["cdf_pf"], CDF_FIELDS, result.cdf_pf.to_dict("records"))
    return paths


def sweep(cfg, axis, values, out_dir=None, backend="clarabel", workers=1, bs_workers=1, quiet=False):
    """
    沿某一维扫描：num_ues / num_mbs（同时跑有无 HAPS）/ haps_array / delta
    每个取值运行完整实验，返回聚合表并写 sweep_<axis>.csv
    """
    if axis not in SWEEP_AXES:
        raise ConfigError(f"不支持的扫描维度: {axis}（可选 {', '.join(SWEEP_AXES)}）")
    rows = []
    for value in values:
        variants = [True, False] if axis == "num_mbs" else [cfg.haps]
        for haps in variants:
            sub = with_overrides(cfg, **{axis: value, "haps": haps})
            result = run_experiment(sub, backend, workers, bs_workers, quiet)
            if not result.records:
                logger.warning("扫描 %s=%s (HAPS=%s) 没有可用实现", axis, value, haps)
                continue
            for agg in aggregate(result.frame()).to_dict("records"):
                rows.append({"value": value, **{k: agg[k] for k in SWEEP_FIELDS if k != "value"}})
    table = pd.DataFrame(rows, columns=SWEEP_FIELDS)
    if out_dir:
        write_rows(os.path.join(out_dir, f"sweep_{axis}.csv"), SWEEP_FIELDS, table.to_dict("records"))
    return table


def trace_realization(cfg, r=0, out_dir=None, backend="clarabel", bs_workers=1, dump_channels=False, snapshots=False,
                      programs=False):
    """
    单个实现的收敛轨迹：trace.csv（内层）与 outer.csv（外层）
    可选导出: channels.csv（信道矩阵）、consensus.csv（每次内层迭代的一致性状态）、programs/（最终状态下的子问题）
    """
    if (dump_channels or snapshots or programs) and not out_dir:
        raise ConfigError("导出信道/状态/子问题需要输出目录")
    channels = realization_channels(cfg, r)
    params = cfg.subproblem_params(backend, bs_workers)
    snapshot_path = None
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        if dump_channels:
            channels.to_csv(os.path.join(out_dir, "channels.csv"))
        if snapshots:
            snapshot_path = os.path.join(out_dir, "consensus.csv")
            # dump_snapshot 以追加方式写入
            if os.path.exists(snapshot_path):
                os.remove(snapshot_path)
    result = run_outer(channels, cfg.outer_config(), params, snapshot_path=snapshot_path)
    if out_dir:
        write_trace(os.path.join(out_dir, "trace.csv"), result.trace.inner)
        write_outer(os.path.join(out_dir, "outer.csv"), result.trace)
        if programs:
            paths = dump_programs(result.state, channels, params, os.path.join(out_dir, "programs"))
            logger.info("已导出 %d 个子问题", len(paths))
    return result
