"""
ADMM Block 1（全局 SCA 子问题）与 Block 2（每个 BS 的本地 SOCP）
优化器在参考幅度单位下工作（见 scale_channels）：H̃ = H / (σ_n κ)，噪声功率 1/κ²，s、I 均为 O(1)
"""

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from pfbwd import conic
from pfbwd.conic import AffineExpr, ConicProgram, exp_chain, geomean_hypograph, quad_epigraph
from pfbwd.errors import AnchorInitError, ChannelDomainError, SubproblemError
from pfbwd.netgen import ChannelSet

logger = logging.getLogger(__name__)

LOG_OBJECTIVES = ("exp_chain", "geomean")


@dataclass
class SubproblemParams:
    power_budgets_w: np.ndarray
    gamma_min: float = 0.0
    interference_factor: float = 1.0
    nu: int = 6
    eps_sca: float = 1e-4
    sca_max_iters: int = 20
    log_objective: str = "exp_chain"
    solver_tol: float = 1e-8
    backend: str = "clarabel"
    bs_workers: int = 1
    noise_power: float = 1.0

    def __post_init__(self):
        self.power_budgets_w = np.asarray(self.power_budgets_w, dtype=float)
        if np.any(self.power_budgets_w <= 0):
            raise ValueError("功率预算必须 > 0")
        if self.log_objective not in LOG_OBJECTIVES:
            raise ValueError(f"log_objective 需为 {LOG_OBJECTIVES} 之一: {self.log_objective}")
        if self.interference_factor <= 0:
            raise ValueError("interference_factor 必须 > 0")
        if not self.noise_power > 0:
            raise ValueError(f"noise_power 必须 > 0: {self.noise_power}")


@dataclass
class ScaAnchor:
    p: np.ndarray
    q: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        self.beta = np.asarray(self.beta, dtype=float)
        if np.any(self.beta <= 0):
            raise ChannelDomainError(f"SCA 锚点要求 β > 0: {self.beta}")

    @classmethod
    def from_state(cls, state, factor=1.0, noise=1.0):
        """p + jq = Σ_b s_b，β = factor·Σ_b I_b + noise（下限为噪声功率）"""
        total = state.s.sum(axis=0)
        beta = np.maximum(factor * state.I.sum(axis=0) + noise, noise)
        return cls(total.real, total.imag, beta)

    def distance(self, other):
        a = np.concatenate([self.p, self.q, self.beta])
        b = np.concatenate([other.p, other.q, other.beta])
        return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12))


@dataclass
class GlobalVars:
    t: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    p: np.ndarray
    q: np.ndarray
    k: np.ndarray
    s: np.ndarray
    I: np.ndarray


@dataclass
class Block1Result:
    globals: GlobalVars
    anchor: ScaAnchor
    objectives: list = field(default_factory=list)
    sca_iters: int = 0
    converged: bool = False
    not_run: bool = False


@dataclass
class LocalVars:
    weights: list
    s_bar: np.ndarray
    I_bar: np.ndarray
    objectives: np.ndarray
    solve_ms: np.ndarray


def as_matrices(channels):
    return channels.normalized() if isinstance(channels, ChannelSet) else [np.asarray(h, dtype=complex) for h in channels]


@dataclass
class ScaledChannels:
    """优化器所用单位下的信道；W 仍为 √W 单位，SINR 与缩放前一致"""
    matrices: list
    noise_power: float
    scale: float


def scale_channels(channels, power_budgets_w):
    """
    κ = max_{b,u} √P_b ‖h^b_u‖（噪声归一化后），H̃ = H / κ，噪声 1/κ²
    于是任意满足功率约束的 W 都有 |s̃| ≤ 1、Ĩ ≤ 1
    """
    matrices = as_matrices(channels)
    budgets = np.asarray(power_budgets_w, dtype=float)
    if len(budgets) != len(matrices):
        raise ChannelDomainError(f"功率预算个数 {len(budgets)} 与 BS 数 {len(matrices)} 不一致")
    peaks = [np.sqrt(P) * np.linalg.norm(H, axis=0).max(initial=0.0) for H, P in zip(matrices, budgets)]
    kappa = float(max(peaks, default=0.0))
    if not (np.isfinite(kappa) and kappa > 0):
        kappa = 1.0
    logger.debug("优化器缩放 κ = %.4g，噪声功率 %.4g", kappa, 1.0 / kappa ** 2)
    return ScaledChannels([H / kappa for H in matrices], 1.0 / kappa ** 2, kappa)


def taylor_rhs(p, q, beta, anchor):
    """
    (p² + q²)/β 在锚点 (p^m, q^m, β^m) 处的一阶展开
    p, q, beta 可以是数值也可以是 AffineExpr
    """
    pm, qm, bm = (float(v) for v in anchor)
    if bm <= 0:
        raise ChannelDomainError(f"β^m 必须 > 0: {bm}")
    mag = (pm * pm + qm * qm) / bm
    return (2 * pm / bm) * (p - pm) + (2 * qm / bm) * (q - qm) + mag * (1 - (beta - bm) / bm)


def inner_product_exprs(h, re_idx, im_idx):
    """(h^H w) 的实部与虚部，w = a + jb 对应变量下标 re_idx / im_idx"""
    c, d = h.real, h.imag
    idx = np.concatenate([re_idx, im_idx])
    re = AffineExpr.from_arrays(idx, np.concatenate([c, d]))
    im = AffineExpr.from_arrays(idx, np.concatenate([-d, c]))
    return re, im


def _penalty_terms(program, r_exprs_by_bs, psi, rho, name):
    """Σ_b [ψ_bᵀ r_b + ρ_b/2 e_b]，e_b ≥ ‖r_b‖²"""
    e = program.add_vars(f"e_{name}", len(r_exprs_by_bs))
    total = AffineExpr()
    for b, (r_exprs, psi_b) in enumerate(zip(r_exprs_by_bs, psi)):
        quad_epigraph(program, r_exprs, e[b], family=f"epigraph_{name}")
        total = total + conic.lin_sum(float(c) * r for c, r in zip(psi_b, r_exprs))
        total = total + (0.5 * float(rho[b])) * e[b]
    return total


def _split(values):
    """复数数组按 [Re..., Im...] 展开成实数"""
    values = np.asarray(values)
    if np.iscomplexobj(values):
        return np.concatenate([values.real.ravel(), values.imag.ravel()])
    return values.ravel().astype(float)


def build_block1(state, anchor, params):
    n_bs, U = state.s.shape
    prog = ConicProgram("block1")
    t = prog.add_vars("t", U)
    alpha = prog.add_vars("alpha", U, lb=params.gamma_min)
    beta = prog.add_vars("beta", U, lb=params.noise_power)
    p = prog.add_vars("p", U)
    q = prog.add_vars("q", U)
    s_re = prog.add_vars("s_re", (n_bs, U))
    s_im = prog.add_vars("s_im", (n_bs, U))
    I = prog.add_vars("I", (n_bs, U), lb=0.0)

    for u in range(U):
        prog.add_ge(beta[u], params.interference_factor * conic.lin_sum(I[:, u]) + params.noise_power,
                    family="interference_bound")
        exp_chain(prog, t[u], alpha[u], params.nu, family="se_chain")
        prog.add_eq(p[u], conic.lin_sum(s_re[:, u]), family="p_def")
        prog.add_eq(q[u], conic.lin_sum(s_im[:, u]), family="q_def")
        bm = float(anchor.beta[u])
        rhs = taylor_rhs(p[u], q[u], beta[u], (anchor.p[u], anchor.q[u], bm))
        # 两边乘 β^m，行系数与 SINR 同量级
        prog.add_le(bm * alpha[u], bm * rhs, family="sinr_taylor")

    if params.log_objective == "exp_chain":
        y = prog.add_vars("y", U)
        for u in range(U):
            exp_chain(prog, y[u], t[u] - 1.0, params.nu, family="log_chain")
        utility = conic.lin_sum(y)
    else:
        g = prog.add_vars("g")
        geomean_hypograph(prog, t, g)
        utility = U * g

    r_s = []
    r_I = []
    for b in range(n_bs):
        c_s = state.z_s[b] - state.s_bar[b]
        r_s.append([s_re[b, u] + c_s[u].real for u in range(U)] + [s_im[b, u] + c_s[u].imag for u in range(U)])
        c_I = state.z_I[b] - state.I_bar[b]
        r_I.append([I[b, u] + float(c_I[u]) for u in range(U)])
    psi_s = [_split(state.psi_s[b]) for b in range(n_bs)]
    psi_I = [_split(state.psi_I[b]) for b in range(n_bs)]
    penalty = _penalty_terms(prog, r_s, psi_s, state.rho_s, "s") + _penalty_terms(prog, r_I, psi_I, state.rho_I, "I")
    prog.minimize(penalty - utility)
    return prog


def _read_block1(prog, x):
    k_blocks = [name for name in prog.blocks if name.startswith("se_chain_k")]
    k = np.stack([prog.extract(x, name) for name in k_blocks])
    return GlobalVars(
        t=prog.extract(x, "t"),
        alpha=prog.extract(x, "alpha"),
        beta=prog.extract(x, "beta"),
        p=prog.extract(x, "p"),
        q=prog.extract(x, "q"),
        k=k,
        s=prog.extract(x, "s_re") + 1j * prog.extract(x, "s_im"),
        I=np.maximum(prog.extract(x, "I"), 0.0),
    )


def solve_block1_sca(state, anchor, params, eps_sca=None, max_iters=None):
    """
    SCA：在锚点处线性化 (p² + q²)/β，解凸子问题，以最优 (p, q, β) 作为新锚点
    相对目标变化 < eps_sca 或锚点几乎不动时停止
    """
    eps_sca = params.eps_sca if eps_sca is None else eps_sca
    max_iters = params.sca_max_iters if max_iters is None else max_iters
    if max_iters <= 0:
        return Block1Result(None, anchor, not_run=True)

    degenerate = np.flatnonzero((anchor.p == 0) & (anchor.q == 0))
    if degenerate.size:
        raise AnchorInitError(f"SCA 锚点在 UE {degenerate.tolist()} 处 p = q = 0，线性化后 SINR 上界恒为 0",
                              diagnostics={"p": anchor.p, "q": anchor.q, "beta": anchor.beta})

    result = Block1Result(None, anchor)
    for m in range(max_iters):
        prog = build_block1(state, result.anchor, params)
        report = conic.solve(prog, tol=params.solver_tol, backend=params.backend)
        if not report.usable:
            if m == 0:
                raise AnchorInitError(f"Block 1 首次 SCA 迭代求解失败 ({report.status})", status=report.status,
                                      diagnostics={"p": anchor.p, "q": anchor.q, "beta": anchor.beta})
            logger.warning("Block 1 第 %d 次 SCA 迭代状态 %s，保留上一次结果", m + 1, report.status)
            break
        if not report.optimal:
            logger.debug("Block 1 SCA #%d 使用非精确解 (%s, 违反量 %.2g)", m + 1, report.status, report.max_violation)
        result.globals = _read_block1(prog, report.x)
        result.sca_iters = m + 1
        result.globals.beta = np.maximum(result.globals.beta, params.noise_power)
        new_anchor = ScaAnchor(result.globals.p, result.globals.q, result.globals.beta)
        moved = new_anchor.distance(result.anchor)
        result.anchor = new_anchor
        result.objectives.append(report.objective)

        if len(result.objectives) >= 2:
            prev, curr = result.objectives[-2], result.objectives[-1]
            if curr > prev + 1e-7 * max(1.0, abs(prev)):
                logger.debug("Block 1 SCA 目标上升: %.9g -> %.9g", prev, curr)
            change = abs(curr - prev) / max(abs(prev), 1e-12)
        else:
            change = np.inf
        logger.debug("Block 1 SCA #%d: obj=%.9g, 锚点移动 %.3g", m + 1, report.objective, moved)
        if change < eps_sca or moved < eps_sca:
            result.converged = True
            break
    return result


def build_block2(b, state, channels, params):
    H = as_matrices(channels)[b]
    N, U = H.shape
    prog = ConicProgram(f"block2_bs{b}")
    w_re = prog.add_vars("w_re", (N, U))
    w_im = prog.add_vars("w_im", (N, U))
    sb_re = prog.add_vars("s_bar_re", U)
    sb_im = prog.add_vars("s_bar_im", U)
    Ib = prog.add_vars("I_bar", U, lb=0.0)
    idx_re = prog.blocks["w_re"]
    idx_im = prog.blocks["w_im"]

    prog.add_soc(float(np.sqrt(params.power_budgets_w[b])), list(w_re.ravel()) + list(w_im.ravel()), family="power")
    for u in range(U):
        gains = [inner_product_exprs(H[:, u], idx_re[:, k], idx_im[:, k]) for k in range(U)]
        prog.add_eq(sb_re[u], gains[u][0], family="signal_re")
        prog.add_eq(sb_im[u], gains[u][1], family="signal_im")
        leak = [part for k in range(U) if k != u for part in gains[k]]
        prog.add_rsoc(Ib[u], 1.0, leak, family="interference")

    c_s = state.s[b] + state.z_s[b]
    r_s = [c_s[u].real - sb_re[u] for u in range(U)] + [c_s[u].imag - sb_im[u] for u in range(U)]
    c_I = state.I[b] + state.z_I[b]
    r_I = [float(c_I[u]) - Ib[u] for u in range(U)]
    penalty = (_penalty_terms(prog, [r_s], [_split(state.psi_s[b])], state.rho_s[b:b + 1], "s")
               + _penalty_terms(prog, [r_I], [_split(state.psi_I[b])], state.rho_I[b:b + 1], "I"))
    prog.minimize(penalty)
    return prog


def _solve_one(b, state, matrices, params):
    start = time.perf_counter()
    prog = build_block2(b, state, matrices, params)
    report = conic.solve(prog, tol=params.solver_tol, backend=params.backend)
    if not report.usable:
        raise SubproblemError(f"Block 2 求解失败 ({report.status})", status=report.status, bs=b)
    if not report.optimal:
        logger.debug("Block 2 (bs=%d) 使用非精确解 (%s, 违反量 %.2g)", b, report.status, report.max_violation)
    W = prog.extract(report.x, "w_re") + 1j * prog.extract(report.x, "w_im")
    s_bar = prog.extract(report.x, "s_bar_re") + 1j * prog.extract(report.x, "s_bar_im")
    I_bar = np.maximum(prog.extract(report.x, "I_bar"), 0.0)
    return W, s_bar, I_bar, report.objective, (time.perf_counter() - start) * 1e3


def solve_block2_all(state, channels, params):
    """各 BS 独立求解；bs_workers > 1 时线程并行，结果按 BS 顺序汇总，与顺序执行一致"""
    matrices = as_matrices(channels)
    n_bs = len(matrices)
    if params.bs_workers > 1 and n_bs > 1:
        with ThreadPoolExecutor(max_workers=min(params.bs_workers, n_bs)) as pool:
            results = list(pool.map(lambda b: _solve_one(b, state, matrices, params), range(n_bs)))
    else:
        results = [_solve_one(b, state, matrices, params) for b in range(n_bs)]

    weights, s_bar, I_bar, objectives, ms = zip(*results)
    for b, W in enumerate(weights):
        power = float(np.linalg.norm(W) ** 2)
        if power > params.power_budgets_w[b] * (1 + 1e-6):
            logger.warning("BS %d 功率 %.6g 超出预算 %.6g", b, power, params.power_budgets_w[b])
    return LocalVars(list(weights), np.stack(s_bar), np.stack(I_bar), np.array(objectives), np.array(ms))


def matched_filter(channels, power_budgets_w):
    """W^b = √(P_b/U) · H^b / 列范数"""
    weights = []
    for H, P in zip(as_matrices(channels), np.asarray(power_budgets_w, dtype=float)):
        U = H.shape[1]
        norms = np.linalg.norm(H, axis=0)
        norms = np.where(norms > 0, norms, 1.0)
        weights.append(np.sqrt(P / U) * H / norms[None, :])
    return weights


def consensus_terms(channels, weights):
    """
    由 W 计算 s_b,u = (h^b_u)^H w^b_u 与 I_b,u = Σ_{k≠u} |(h^b_u)^H w^b_k|²
    返回 (s, I)，形状 (n_bs, U)
    """
    s, I = [], []
    for H, W in zip(as_matrices(channels), weights):
        G = H.conj().T @ W
        power = np.abs(G) ** 2
        s.append(np.diag(G))
        I.append(power.sum(axis=1) - np.diag(power))
    return np.stack(s), np.stack(I)


def dump_programs(state, channels, params, out_dir):
    """给定一致性状态下的 Block 1 与各 BS 的 Block 2 程序文本（ConicProgram.dump 格式），返回文件路径"""
    scaled = scale_channels(channels, params.power_budgets_w)
    params = replace(params, noise_power=scaled.noise_power)
    os.makedirs(out_dir, exist_ok=True)
    anchor = ScaAnchor.from_state(state, params.interference_factor, params.noise_power)
    paths = [os.path.join(out_dir, "block1.txt")]
    build_block1(state, anchor, params).dump(paths[0])
    for b in range(state.n_bs):
        paths.append(os.path.join(out_dir, f"block2_bs{b}.txt"))
        build_block2(b, state, scaled.matrices, params).dump(paths[-1])
    return paths
