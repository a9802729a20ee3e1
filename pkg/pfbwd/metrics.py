"""
精确模型下的性能评估：SINR、频谱效率、PF 目标与可行性检查
所有上报数值都从返回的 W 计算，不使用优化器内部的代理变量 (alpha, t)
"""

import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)


@dataclass
class BeamformingSolution:
    weights: list
    power_budgets_w: np.ndarray

    def __post_init__(self):
        self.weights = [np.asarray(w, dtype=complex) for w in self.weights]
        self.power_budgets_w = np.asarray(self.power_budgets_w, dtype=float)
        if len(self.weights) != len(self.power_budgets_w):
            raise ValueError("weights 与 power_budgets_w 的 BS 数量不一致")

    @property
    def powers_w(self):
        return np.array([np.linalg.norm(w) ** 2 for w in self.weights])

    def scaled(self, factor):
        return BeamformingSolution([w * factor for w in self.weights], self.power_budgets_w)


@dataclass
class FeasibilityReport:
    power_slack_w: np.ndarray
    power_violation_rel: np.ndarray
    sinr_margin: np.ndarray
    sinr_violations: np.ndarray
    tol: float

    @property
    def power_ok(self):
        return bool(np.all(self.power_violation_rel <= self.tol))

    @property
    def sinr_ok(self):
        return not bool(np.any(self.sinr_violations))

    @property
    def feasible(self):
        return self.power_ok and self.sinr_ok

    @property
    def min_sinr_margin(self):
        return float(self.sinr_margin.min())


def _check_shapes(ch, sol):
    if len(sol.weights) != ch.n_bs:
        raise ValueError(f"BS 数量不一致: W 有 {len(sol.weights)} 个, 信道有 {ch.n_bs} 个")
    for h, w in zip(ch.matrices, sol.weights):
        if h.shape != w.shape:
            raise ValueError(f"形状不一致: H {h.shape} vs W {w.shape}")


def effective_gains(ch, sol):
    """G[b, u, k] = (h^b_u)^H w^b_k"""
    _check_shapes(ch, sol)
    return np.stack([h.conj().T @ w for h, w in zip(ch.matrices, sol.weights)])


def sinr_all(ch, sol):
    total = effective_gains(ch, sol).sum(axis=0)
    power = np.abs(total) ** 2
    signal = np.diag(power)
    interference = power.sum(axis=1) - signal
    return signal / (interference + ch.noise_variance_w)


def sinr(ch, sol, u):
    return float(sinr_all(ch, sol)[u])


def spectral_efficiency(gamma):
    """log2(1 + γ)，单位 b/s/Hz"""
    return np.log2(1 + np.asarray(gamma, dtype=float))


def per_ue_se(ch, sol):
    return spectral_efficiency(sinr_all(ch, sol))


def pf_objective(ch, sol):
    """Σ_u ln(SE_u)；有 UE 的 SE 为 0 时返回 -inf（PF 不可行）"""
    se = per_ue_se(ch, sol)
    if np.any(se <= 0):
        logger.debug("PF 不可行: %d 个 UE 的 SE 为 0", int(np.sum(se <= 0)))
        return float("-inf")
    return float(np.sum(np.log(se)))


def interference_terms(ch, sol, u):
    """每个 BS 单独的干扰 Σ_{k≠u} |(h^b_u)^H w^b_k|^2，长度 B+1"""
    power = np.abs(effective_gains(ch, sol)[:, u, :]) ** 2
    return power.sum(axis=1) - power[:, u]


def check_feasibility(ch, sol, gamma_min=0.0, tol=1e-6):
    """检查功率约束与最小 SINR 约束，返回报告而不是抛异常"""
    powers = sol.powers_w
    budgets = sol.power_budgets_w
    slack = budgets - powers
    violation = np.maximum(powers - budgets, 0.0) / budgets
    gamma = sinr_all(ch, sol)
    margin = gamma - gamma_min
    sinr_violations = margin < -tol * max(gamma_min, 1.0)
    report = FeasibilityReport(slack, violation, margin, sinr_violations, tol)
    if not report.feasible:
        logger.debug("可行性检查未通过: 功率越界 %s, SINR 越界 UE %s",
                     np.flatnonzero(violation > tol).tolist(), np.flatnonzero(sinr_violations).tolist())
    return report
