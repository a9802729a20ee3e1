"""
runs.csv 分析工具
- 按 (mode, haps) 汇总 SE / PF / 迭代次数 / 信令
- 分布式 vs 集中式的逐 seed 差距
- HAPS vs 纯地面网络的配对符号检验
- 两次实验的对比（基线 vs 当前）
"""

import json
import logging
import os
from datetime import datetime

import numpy as np
from scipy import stats

from pfbwd.harness.experiment import read_runs

logger = logging.getLogger(__name__)

METRICS = [
    ("mean_se", "平均 SE (b/s/Hz)", True),
    ("pf_exact", "PF 目标", True),
    ("total_inner_iters", "内层迭代", False),
    ("scalars_exchanged", "交换标量", False),
]


def status_label(diff_pct, higher_is_better=True):
    """差异百分比 → 评估标签；higher_is_better=False 时正向变化记为回归"""
    change = -diff_pct if higher_is_better else diff_pct
    if abs(change) < 5:
        return "稳定"
    elif change > 15:
        return "!! 回归"
    elif change > 5:
        return "! 轻微回归"
    elif change < -10:
        return "++ 提升"
    else:
        return "+ 轻微提升"


def _stats(series):
    values = series.dropna().to_numpy(dtype=float)
    values = values[np.isfinite(values)]
    if values.size == 0:
        return None
    return {
        "mean": float(values.mean()),
        "median": float(np.median(values)),
        "p10": float(np.percentile(values, 10)),
        "p90": float(np.percentile(values, 90)),
    }


def _grade(rate):
    if rate >= 0.95:
        return "优秀"
    elif rate >= 0.8:
        return "良好"
    elif rate >= 0.5:
        return "一般"
    return "较差"


def summarize(df):
    """每个 (mode, haps) 分组的统计量与收敛率评级"""
    summary = {}
    for (mode, haps), group in df.groupby(["mode", "haps"], sort=True):
        key = f"{mode}/{'haps' if haps else 'terrestrial'}"
        entry = {"realizations": int(len(group))}
        for column, _, _ in METRICS:
            entry[column] = _stats(group[column])
        rate = float(group["converged"].mean())
        entry["converged_rate"] = rate
        entry["grade"] = _grade(rate)
        entry["infeasible"] = int((~group["feasible"]).sum())
        summary[key] = entry
    return summary


def gap_table(df):
    """同一 seed 下分布式相对集中式的平均 SE 差异 (%)"""
    dist = df[df["mode"] == "distributed"].set_index(["seed", "haps"])
    cent = df[df["mode"] == "centralized"].set_index(["seed", "haps"])
    common = dist.index.intersection(cent.index)
    rows = []
    for key in common:
        c_val = float(cent.loc[key, "mean_se"])
        d_val = float(dist.loc[key, "mean_se"])
        diff_pct = (d_val - c_val) / c_val * 100 if c_val > 0 else 0.0
        rows.append({"seed": int(key[0]), "haps": bool(key[1]), "centralized": c_val, "distributed": d_val,
                     "diff_pct": diff_pct, "status": status_label(diff_pct)})
    return rows


def haps_gain(df, column="mean_se"):
    """同 seed 同 mode 下 HAPS 相对纯地面网络的符号检验（单侧，H1: HAPS 更好）"""
    rows = []
    for mode, group in df.groupby("mode", sort=True):
        with_haps = group[group["haps"]].set_index("seed")[column]
        without = group[~group["haps"]].set_index("seed")[column]
        common = with_haps.index.intersection(without.index)
        if common.empty:
            continue
        diff = with_haps.loc[common].to_numpy(dtype=float) - without.loc[common].to_numpy(dtype=float)
        diff = diff[np.isfinite(diff) & (diff != 0)]
        wins = int((diff > 0).sum())
        n = int(diff.size)
        p_value = float(stats.binomtest(wins, n, 0.5, alternative="greater").pvalue) if n else 1.0
        rows.append({"mode": mode, "metric": column, "pairs": n, "wins": wins,
                     "mean_gain": float(diff.mean()) if n else 0.0, "p_value": p_value})
    return rows


def print_report(df):
    print("\n" + "=" * 50)
    print("📊 PFBWD 实验分析报告")
    print("=" * 50)
    print(f"\n实现数: {len(df)}  (seed {int(df['seed'].min())} .. {int(df['seed'].max())})")

    summary = summarize(df)
    for key, entry in summary.items():
        print(f"\n[{key}] {entry['realizations']} 个实现")
        for column, label, _ in METRICS:
            st = entry[column]
            if st:
                print(f"   {label}: 平均 {st['mean']:.3f} | 中位 {st['median']:.3f} | "
                      f"P10 {st['p10']:.3f} | P90 {st['p90']:.3f}")
        print(f"   收敛率: {entry['converged_rate'] * 100:.1f}%  评级: {entry['grade']}")
        if entry["infeasible"]:
            print(f"   ⚠️  {entry['infeasible']} 个解未通过可行性检查")

    gaps = gap_table(df)
    if gaps:
        print("\n[分布式 vs 集中式]")
        print(f"{'seed':<8} {'HAPS':<6} {'集中式':<10} {'分布式':<10} {'差异':<12} {'评估':<10}")
        print("-" * 60)
        for row in gaps:
            print(f"{row['seed']:<8} {str(row['haps']):<6} {row['centralized']:<10.3f} {row['distributed']:<10.3f} "
                  f"{row['diff_pct']:+.1f}%      {row['status']}")
        mean_gap = float(np.mean([row["diff_pct"] for row in gaps]))
        print(f"平均差异: {mean_gap:+.2f}%")

    gains = haps_gain(df)
    if gains:
        print("\n[HAPS vs 纯地面]")
        for row in gains:
            print(f"   {row['mode']}: {row['wins']}/{row['pairs']} 个实现 HAPS 更好, "
                  f"平均增益 {row['mean_gain']:+.3f} b/s/Hz, 符号检验 p = {row['p_value']:.3g}")

    print("\n" + "=" * 50)
    return {"summary": summary, "gaps": gaps, "haps_gain": gains}


def compare_runs(base_df, curr_df):
    """按 (mode, haps) 比较两次实验各指标的均值"""
    rows = []
    base_groups = dict(tuple(base_df.groupby(["mode", "haps"], sort=True)))
    for key, curr in curr_df.groupby(["mode", "haps"], sort=True):
        if key not in base_groups:
            continue
        base = base_groups[key]
        for column, label, higher in METRICS:
            b_val = float(base[column].mean())
            c_val = float(curr[column].mean())
            diff = c_val - b_val
            diff_pct = (diff / abs(b_val) * 100) if b_val != 0 else 0
            rows.append({"mode": key[0], "haps": bool(key[1]), "metric": column, "label": label,
                         "base": b_val, "current": c_val, "diff": diff, "diff_pct": diff_pct,
                         "status": status_label(diff_pct, higher)})
    return rows


def print_compare(base_df, curr_df, base_name="base", curr_name="current"):
    rows = compare_runs(base_df, curr_df)
    print("\n[实验对比分析]")
    print("=" * 80)
    print(f"基线: {base_name}")
    print(f"当前: {curr_name}")
    print("=" * 80)
    group = None
    for row in rows:
        if (row["mode"], row["haps"]) != group:
            group = (row["mode"], row["haps"])
            print(f"\n[{row['mode']} / HAPS={row['haps']}]")
            print(f"{'指标':<16} {'基线':<12} {'当前':<12} {'差异':<18} {'评估':<10}")
            print("-" * 70)
        print(f"{row['label']:<16} {row['base']:<12.3f} {row['current']:<12.3f} "
              f"{row['diff']:+.3f} ({row['diff_pct']:+.1f}%)   {row['status']}")

    issues = [r for r in rows if "回归" in r["status"]]
    improvements = [r for r in rows if "提升" in r["status"]]
    print(f"\n[综合评估]")
    print("-" * 60)
    if issues:
        print("发现问题:")
        for r in issues:
            print(f"  - {r['mode']}/HAPS={r['haps']} {r['label']} {r['diff_pct']:+.1f}%")
    if improvements:
        print("性能提升:")
        for r in improvements:
            print(f"  + {r['mode']}/HAPS={r['haps']} {r['label']} {r['diff_pct']:+.1f}%")
    if not issues and not improvements:
        print("结果稳定，无明显变化")
    print("=" * 80)
    return rows


def save_report(report, out_dir):
    path = os.path.join(out_dir, f"report_{datetime.now().strftime('%Y%m%d_%H%M%S')}.json")
    with open(path, "w") as f:
        json.dump(report, f, indent=2, ensure_ascii=False)
    return path


def report(runs_csv, out_dir=None):
    df = read_runs(runs_csv)
    result = print_report(df)
    if out_dir:
        path = save_report(result, out_dir)
        print(f"📁 报告已保存: {os.path.basename(path)}")
    return result
