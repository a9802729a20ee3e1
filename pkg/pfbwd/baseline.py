"""
集中式 SCA 基线：不做一致性拆分，所有 BS 的 W 与全局变量放在一个联合 SOCP 中
目标为 Σ log t 的几何平均超图表示
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from pfbwd import conic
from pfbwd.conic import ConicProgram, exp_chain, geomean_hypograph
from pfbwd.errors import BaselineInfeasible
from pfbwd.metrics import BeamformingSolution
from pfbwd.subproblems import (
    ScaAnchor,
    as_matrices,
    consensus_terms,
    inner_product_exprs,
    matched_filter,
    scale_channels,
    taylor_rhs,
)

logger = logging.getLogger(__name__)

CENTRALIZED_MAX_ITERS = 50


@dataclass
class CentralizedResult:
    solution: BeamformingSolution
    objectives: list = field(default_factory=list)
    sca_iters: int = 0
    converged: bool = False


def build_centralized(channels, anchor, params):
    matrices = as_matrices(channels)
    U = matrices[0].shape[1]
    n_bs = len(matrices)
    prog = ConicProgram("centralized")
    t = prog.add_vars("t", U)
    alpha = prog.add_vars("alpha", U, lb=params.gamma_min)
    beta = prog.add_vars("beta", U, lb=params.noise_power)
    p = prog.add_vars("p", U)
    q = prog.add_vars("q", U)
    I = prog.add_vars("I", (n_bs, U), lb=0.0)

    signal_re = [[] for _ in range(U)]
    signal_im = [[] for _ in range(U)]
    for b, H in enumerate(matrices):
        N = H.shape[0]
        prog.add_vars(f"w{b}_re", (N, U))
        prog.add_vars(f"w{b}_im", (N, U))
        idx_re, idx_im = prog.blocks[f"w{b}_re"], prog.blocks[f"w{b}_im"]
        w_all = [conic.AffineExpr({int(i): 1.0}) for i in np.concatenate([idx_re.ravel(), idx_im.ravel()])]
        prog.add_soc(float(np.sqrt(params.power_budgets_w[b])), w_all, family="power")
        for u in range(U):
            gains = [inner_product_exprs(H[:, u], idx_re[:, k], idx_im[:, k]) for k in range(U)]
            signal_re[u].append(gains[u][0])
            signal_im[u].append(gains[u][1])
            leak = [part for k in range(U) if k != u for part in gains[k]]
            prog.add_rsoc(I[b, u], 1.0, leak, family="interference")

    for u in range(U):
        prog.add_eq(p[u], conic.lin_sum(signal_re[u]), family="p_def")
        prog.add_eq(q[u], conic.lin_sum(signal_im[u]), family="q_def")
        prog.add_ge(beta[u], params.interference_factor * conic.lin_sum(I[:, u]) + params.noise_power,
                    family="interference_bound")
        exp_chain(prog, t[u], alpha[u], params.nu, family="se_chain")
        bm = float(anchor.beta[u])
        rhs = taylor_rhs(p[u], q[u], beta[u], (anchor.p[u], anchor.q[u], bm))
        # 两边乘 β^m，行系数与 SINR 同量级
        prog.add_le(bm * alpha[u], bm * rhs, family="sinr_taylor")

    g = prog.add_vars("g")
    geomean_hypograph(prog, t, g)
    prog.minimize(-U * g)
    return prog


def _weights(prog, x, n_bs):
    return [prog.extract(x, f"w{b}_re") + 1j * prog.extract(x, f"w{b}_im") for b in range(n_bs)]


def _diagnose(channels, anchor, params):
    """放松最小 SINR 约束后求解，再回到原问题上找第一个被违反的约束族"""
    relaxed = build_centralized(channels, anchor, replace(params, gamma_min=0.0))
    report = conic.solve(relaxed, tol=params.solver_tol, backend=params.backend)
    if not report.optimal:
        return None
    families = build_centralized(channels, anchor, params).violated_families(report.x)
    return families[0] if families else None


def run_centralized(channels, params, max_iters=CENTRALIZED_MAX_ITERS):
    """与分布式算法相同的缩放单位（scale_channels），从匹配滤波出发做 SCA"""
    scaled = scale_channels(channels, params.power_budgets_w)
    params = replace(params, noise_power=scaled.noise_power)
    matrices = scaled.matrices
    n_bs = len(matrices)
    weights = matched_filter(matrices, params.power_budgets_w)
    s, I = consensus_terms(matrices, weights)
    total = s.sum(axis=0)
    noise = params.noise_power
    anchor = ScaAnchor(total.real, total.imag, np.maximum(params.interference_factor * I.sum(axis=0) + noise, noise))
    result = CentralizedResult(BeamformingSolution(weights, params.power_budgets_w))

    for m in range(max_iters):
        prog = build_centralized(matrices, anchor, params)
        report = conic.solve(prog, tol=params.solver_tol, backend=params.backend)
        if not report.usable:
            if m == 0:
                family = _diagnose(matrices, anchor, params)
                raise BaselineInfeasible(f"集中式基线求解失败 ({report.status})，首个违反约束族: {family}",
                                         status=report.status, family=family)
            logger.warning("集中式 SCA 第 %d 次迭代状态 %s，保留上一次结果", m + 1, report.status)
            break
        result.solution = BeamformingSolution(_weights(prog, report.x, n_bs), params.power_budgets_w)
        result.objectives.append(report.objective)
        result.sca_iters = m + 1
        anchor = ScaAnchor(prog.extract(report.x, "p"), prog.extract(report.x, "q"),
                           np.maximum(prog.extract(report.x, "beta"), noise))
        logger.debug("集中式 SCA #%d: obj=%.9g", m + 1, report.objective)
        if len(result.objectives) >= 2:
            prev, curr = result.objectives[-2:]
            if abs(curr - prev) / max(abs(prev), 1e-12) < params.eps_sca:
                result.converged = True
                break
    return result


def solve_centralized(channels, params, max_iters=CENTRALIZED_MAX_ITERS):
    return run_centralized(channels, params, max_iters).solution
