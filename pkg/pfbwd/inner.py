"""
内层三块 ADMM：Block 1 (SCA) → Block 2 (每个 BS) → Block 3 (闭式 z) → ψ 更新 → 广播计数 → 停止判据
"""

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from pfbwd import consensus
from pfbwd.csvio import write_rows
from pfbwd.errors import AnchorInitError, SolverError
from pfbwd.subproblems import ScaAnchor, solve_block1_sca, solve_block2_all

logger = logging.getLogger(__name__)

SIGNALING_MODES = ("compact", "strict")
TRACE_FIELDS = ["k", "t", "sum_residual", "crit1", "crit2", "max_crit3", "sca_iters",
                "scalars_broadcast", "ms_block1", "ms_block2", "ms_block3"]


@dataclass
class InnerConfig:
    eps1: float = 1e-3
    eps2: float = 1e-3
    eps_lb: float = 1e-3
    max_inner_iters: int = 100
    delta: float = 2.0
    signaling_mode: str = "compact"

    def __post_init__(self):
        if min(self.eps1, self.eps2, self.eps_lb) <= 0:
            raise ValueError("内层容差必须 > 0")
        if self.delta <= 0:
            raise ValueError("delta 必须 > 0")
        if self.signaling_mode not in SIGNALING_MODES:
            raise ValueError(f"signaling_mode 需为 {SIGNALING_MODES} 之一")


@dataclass
class InnerTrace:
    sum_residual: list = field(default_factory=list)
    crit1: list = field(default_factory=list)
    crit2: list = field(default_factory=list)
    max_crit3: list = field(default_factory=list)
    sca_iters: list = field(default_factory=list)
    scalars_broadcast: list = field(default_factory=list)
    ms_block1: list = field(default_factory=list)
    ms_block2: list = field(default_factory=list)
    ms_block3: list = field(default_factory=list)
    converged: bool = False
    fallback: bool = False
    pf_surrogate: float = float("nan")

    @property
    def iterations(self):
        return len(self.sum_residual)

    @property
    def total_scalars(self):
        return int(sum(self.scalars_broadcast))

    def rows(self, k):
        for t in range(self.iterations):
            yield {"k": k, "t": t + 1, **{name: getattr(self, name)[t] for name in TRACE_FIELDS[2:]}}


def broadcast_scalars(U, mode="compact"):
    """每个 BS 每次内层迭代广播的实数个数：compact 模式 3U（s, I, z 各 U 个），strict 模式 4U（复数 s 占 2U）"""
    if mode == "compact":
        return 3 * U
    if mode == "strict":
        return 4 * U
    raise ValueError(f"未知的信令计数模式: {mode}")


def stopping_check(state, prev_state, cfg):
    """
    返回 (是否停止, (crit1, crit2, max_crit3))
    crit1 = ‖Σ_b Σ_l ρ_l,b (-x̄^t + z^t + x̄^{t-1} - z^{t-1})‖
    crit2 = ‖Σ_b Σ_l ρ_l,b (z^{t-1} - z^t)‖
    crit3 = max_{l,b} ‖r_l,b‖，逐项与 eps_lb 比较
    """
    rho_s = state.rho_s[:, None]
    rho_I = state.rho_I[:, None]
    v1 = (rho_s * (-state.s_bar + state.z_s + prev_state.s_bar - prev_state.z_s)
          + rho_I * (-state.I_bar + state.z_I + prev_state.I_bar - prev_state.z_I)).sum(axis=0)
    v2 = (rho_s * (prev_state.z_s - state.z_s) + rho_I * (prev_state.z_I - state.z_I)).sum(axis=0)
    crit1 = float(np.linalg.norm(v1))
    crit2 = float(np.linalg.norm(v2))
    norms = consensus.residuals(state).norms
    crit3 = float(norms.max(initial=0.0))
    stop = crit1 <= cfg.eps1 and crit2 <= cfg.eps2 and bool(np.all(norms <= cfg.eps_lb))
    return stop, (crit1, crit2, crit3)


def run_inner(state, channels, cfg, params, outer_iter=None, snapshot_path=None):
    """
    第 k 次外层迭代内的 ADMM 循环，state 需已经过 consensus.init_inner
    t > 1 时 Block 1 锚点失败沿用上一轮的全局变量，Block 2 失败则回退到上一轮状态并结束本次内层循环
    snapshot_path 非空时每次迭代追加一帧一致性状态
    返回 (state, InnerTrace, LocalVars | None)
    """
    trace = InnerTrace()
    local = None
    last_block1 = None
    U = state.U
    per_bs = broadcast_scalars(U, cfg.signaling_mode)

    for t in range(1, cfg.max_inner_iters + 1):
        prev = state
        start = time.perf_counter()
        try:
            anchor = ScaAnchor.from_state(state, params.interference_factor, params.noise_power)
            block1 = solve_block1_sca(state, anchor, params)
        except AnchorInitError as e:
            e.locate(t, outer_iter)
            if last_block1 is None:
                raise
            logger.warning("%s，沿用上一轮 Block 1 结果", e)
            block1 = replace(last_block1, sca_iters=0)
        last_block1 = block1
        ms1 = (time.perf_counter() - start) * 1e3
        state = replace(state, s=block1.globals.s, I=block1.globals.I)

        start = time.perf_counter()
        try:
            current = solve_block2_all(state, channels, params)
        except SolverError as e:
            e.locate(t, outer_iter)
            if local is None:
                raise
            logger.warning("%s，回退到 t=%d 的状态并结束本次内层循环", e, t - 1)
            state = prev
            trace.fallback = True
            break
        local = current
        ms2 = (time.perf_counter() - start) * 1e3
        state = replace(state, s_bar=local.s_bar, I_bar=local.I_bar)

        start = time.perf_counter()
        state = consensus.block3_update(state)
        res = consensus.residuals(state)
        state = consensus.psi_update(state, res)
        ms3 = (time.perf_counter() - start) * 1e3

        stop, (c1, c2, c3) = stopping_check(state, prev, cfg)
        trace.sum_residual.append(res.total)
        trace.crit1.append(c1)
        trace.crit2.append(c2)
        trace.max_crit3.append(c3)
        trace.sca_iters.append(block1.sca_iters)
        trace.scalars_broadcast.append(per_bs * state.n_bs)
        trace.ms_block1.append(ms1)
        trace.ms_block2.append(ms2)
        trace.ms_block3.append(ms3)
        trace.pf_surrogate = float(np.sum(np.log(np.maximum(block1.globals.t, 1e-300) / np.log(2))))
        if snapshot_path:
            consensus.dump_snapshot(state, snapshot_path, outer_iter if outer_iter is not None else 0, t)
        logger.debug("内层 t=%d: Σ‖r‖=%.3e, crit=(%.3e, %.3e, %.3e), SCA %d 次", t, res.total, c1, c2, c3,
                     block1.sca_iters)
        if stop:
            trace.converged = True
            break

    if not trace.converged and not trace.fallback and cfg.max_inner_iters > 0:
        logger.debug("内层达到最大迭代次数 %d 未收敛", cfg.max_inner_iters)
    return state, trace, local


def write_trace(csv_path, traces):
    """traces: [(k, InnerTrace), ...]"""
    rows = [row for k, trace in traces for row in trace.rows(k)]
    write_rows(csv_path, TRACE_FIELDS, rows)
