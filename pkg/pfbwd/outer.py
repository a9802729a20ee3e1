"""
外层 ALM：初始化 → 内层 ADMM → λ 更新与 ρ_o 增长 → 外层停止判据
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from pfbwd import consensus
from pfbwd.consensus import ConsensusState
from pfbwd.csvio import write_rows
from pfbwd.errors import SolverError
from pfbwd.inner import InnerConfig, run_inner
from pfbwd.metrics import BeamformingSolution, pf_objective
from pfbwd.subproblems import consensus_terms, matched_filter, scale_channels

logger = logging.getLogger(__name__)

OUTER_FIELDS = ["k", "pf_exact", "pf_surrogate", "max_z_norm", "rho_o", "inner_iters", "inner_converged"]


@dataclass
class OuterConfig:
    rho_o_init: float = 10.0
    omega: float = 0.5
    gamma_growth: float = 1.5
    delta: float = 2.0
    eps_o1: float = 1e-3
    eps_o2: float = 1e-4
    max_outer_iters: int = 15
    lambda_max: float = 1e6
    inner: InnerConfig = field(default_factory=InnerConfig)

    def __post_init__(self):
        if self.rho_o_init <= 0:
            raise ValueError("rho_o_init 必须 > 0")
        if not 0 <= self.omega < 1:
            raise ValueError("omega 需在 [0, 1)")
        if self.gamma_growth <= 1:
            raise ValueError("gamma_growth 必须 > 1")
        if self.delta <= 0:
            raise ValueError("delta 必须 > 0")


@dataclass
class OuterTrace:
    rows: list = field(default_factory=list)
    inner: list = field(default_factory=list)

    @property
    def iterations(self):
        return len(self.rows)

    @property
    def total_inner_iters(self):
        return sum(t.iterations for _, t in self.inner)

    @property
    def total_scalars(self):
        return sum(t.total_scalars for _, t in self.inner)

    @property
    def pf_history(self):
        return [row["pf_exact"] for row in self.rows]


@dataclass
class OuterResult:
    solution: BeamformingSolution
    trace: OuterTrace
    converged: bool
    state: ConsensusState


def outer_stop(state, pf_prev, pf_curr, cfg):
    """所有 ‖z_l,b‖ ≤ eps_o1 且 PF 相对变化 < eps_o2；pf_prev = 0 时改用绝对判据"""
    if state.max_z_norm() > cfg.eps_o1:
        return False
    if not (np.isfinite(pf_prev) and np.isfinite(pf_curr)):
        return False
    if pf_prev == 0:
        return abs(pf_curr) < cfg.eps_o2
    return abs(pf_curr - pf_prev) / abs(pf_prev) < cfg.eps_o2


def initial_state(channels, power_budgets_w, cfg):
    """匹配滤波 W⁰ 给出 s⁰ 与真实干扰 I⁰，s̄ = s，Ī = I，Z = 0，λ = 0"""
    weights = matched_filter(channels, power_budgets_w)
    s, I = consensus_terms(channels, weights)
    zc = np.zeros_like(s)
    zr = np.zeros_like(I)
    rho = np.full(s.shape[0], cfg.delta * cfg.rho_o_init)
    state = ConsensusState(s, s, I, I, zc, zr, zc, zr, zc, zr, cfg.rho_o_init, rho, rho.copy())
    return state, weights


def run_outer(channels, cfg, params, snapshot_path=None):
    """
    优化器在 scale_channels 给出的单位下运行，PF 始终用原始信道计算
    k > 1 时的求解失败不丢弃实现：记录警告并返回已得到的最优解
    """
    budgets = params.power_budgets_w
    scaled = scale_channels(channels, budgets)
    params = replace(params, noise_power=scaled.noise_power)
    state, weights = initial_state(scaled.matrices, budgets, cfg)
    solution = BeamformingSolution(weights, budgets)
    pf_prev = pf_objective(channels, solution)
    best = (pf_prev, solution)
    trace = OuterTrace()
    converged = False
    logger.debug("外层初始化: 匹配滤波 PF = %.6g, κ = %.4g", pf_prev, scaled.scale)

    for k in range(1, cfg.max_outer_iters + 1):
        state = consensus.init_inner(state, delta=cfg.delta)
        rho_used = state.rho_o
        try:
            state, itrace, local = run_inner(state, scaled.matrices, cfg.inner, params, outer_iter=k,
                                             snapshot_path=snapshot_path)
        except SolverError as e:
            e.locate(outer_iter=k)
            if k == 1:
                raise
            logger.warning("%s，外层提前结束，返回最优中间解", e)
            break
        trace.inner.append((k, itrace))
        if local is None:
            break

        solution = BeamformingSolution(local.weights, budgets)
        pf = pf_objective(channels, solution)
        if pf > best[0]:
            best = (pf, solution)
        z_max = state.max_z_norm()
        state, grew = consensus.lambda_update(state, cfg.omega, cfg.gamma_growth, cfg.lambda_max)
        trace.rows.append({
            "k": k,
            "pf_exact": pf,
            "pf_surrogate": itrace.pf_surrogate,
            "max_z_norm": z_max,
            "rho_o": rho_used,
            "inner_iters": itrace.iterations,
            "inner_converged": itrace.converged,
        })
        logger.debug("外层 k=%d: PF=%.6g, max‖z‖=%.3e, 内层 %d 次, ρ_o=%.4g%s", k, pf, z_max, itrace.iterations,
                     rho_used, " (增长)" if grew else "")

        if outer_stop(state, pf_prev, pf, cfg):
            converged = True
            break
        pf_prev = pf

    if not converged:
        logger.debug("外层达到最大迭代次数 %d 未收敛，返回最优中间解", cfg.max_outer_iters)
        solution = best[1]
    return OuterResult(solution, trace, converged, state)


def write_outer(csv_path, trace):
    write_rows(csv_path, OUTER_FIELDS, trace.rows)
