"""
两级算法的耦合状态与更新规则
- s / s̄ / z_s / ψ_s / λ_s 为复数 (n_bs, U)，I / Ī / z_I / ψ_I / λ_I 为实数 (n_bs, U)
- 残差 r = s - s̄ + z，Block 3 闭式解，ψ/λ 乘子更新与外层罚参数增长
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from pfbwd.csvio import ensure_csv_writer, fmt

logger = logging.getLogger(__name__)

LINKS = ("s", "I")
SNAPSHOT_FIELDS = ["k", "t", "b", "l", "u", "component", "value"]


@dataclass
class ConsensusState:
    s: np.ndarray
    s_bar: np.ndarray
    I: np.ndarray
    I_bar: np.ndarray
    z_s: np.ndarray
    z_I: np.ndarray
    psi_s: np.ndarray
    psi_I: np.ndarray
    lam_s: np.ndarray
    lam_I: np.ndarray
    rho_o: float
    rho_s: np.ndarray
    rho_I: np.ndarray
    z_norm_prev: np.ndarray | None = field(default=None)

    def __post_init__(self):
        for name in ("s", "s_bar", "z_s", "psi_s", "lam_s"):
            setattr(self, name, np.array(getattr(self, name), dtype=complex))
        for name in ("I", "I_bar", "z_I", "psi_I", "lam_I"):
            setattr(self, name, np.array(getattr(self, name), dtype=float))
        self.rho_s = np.array(self.rho_s, dtype=float)
        self.rho_I = np.array(self.rho_I, dtype=float)
        shape = self.s.shape
        for name in ("s_bar", "I", "I_bar", "z_s", "z_I", "psi_s", "psi_I", "lam_s", "lam_I"):
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} 形状 {getattr(self, name).shape} 与 s {shape} 不一致")
        if self.rho_o <= 0:
            raise ValueError(f"rho_o 必须 > 0: {self.rho_o}")
        if self.rho_s.shape != (shape[0],) or self.rho_I.shape != (shape[0],):
            raise ValueError("rho_s / rho_I 需为每个 BS 一个值")
        if np.any(self.rho_s <= 0) or np.any(self.rho_I <= 0):
            raise ValueError("内层罚参数必须 > 0")

    @classmethod
    def zeros(cls, n_bs, U, rho_o=10.0, delta=2.0):
        zc = np.zeros((n_bs, U), dtype=complex)
        zr = np.zeros((n_bs, U))
        rho = np.full(n_bs, delta * rho_o)
        return cls(zc, zc, zr, zr, zc, zr, zc, zr, zc, zr, rho_o, rho, rho.copy())

    @property
    def n_bs(self):
        return self.s.shape[0]

    @property
    def U(self):
        return self.s.shape[1]

    def copy(self):
        return replace(self)

    def z_norms(self):
        """每个 BS 的 (‖z_s,b‖, ‖z_I,b‖)，形状 (n_bs, 2)"""
        return np.column_stack([np.linalg.norm(self.z_s, axis=1), np.linalg.norm(self.z_I, axis=1)])

    def stacked_z_norms(self):
        """‖Z_b‖：每个 BS 上 z_s、z_I 拼接后的范数"""
        return np.sqrt(np.sum(self.z_norms() ** 2, axis=1))

    def max_z_norm(self):
        return float(self.z_norms().max(initial=0.0))

    def link(self, l):
        """按链路类型取 (x, x̄, z, ψ, λ, ρ_l)"""
        if l == "s":
            return self.s, self.s_bar, self.z_s, self.psi_s, self.lam_s, self.rho_s
        if l == "I":
            return self.I, self.I_bar, self.z_I, self.psi_I, self.lam_I, self.rho_I
        raise ValueError(f"未知链路类型: {l}")


@dataclass
class Residuals:
    r_s: np.ndarray
    r_I: np.ndarray

    @property
    def norms_s(self):
        return np.linalg.norm(self.r_s, axis=1)

    @property
    def norms_I(self):
        return np.linalg.norm(self.r_I, axis=1)

    @property
    def norms(self):
        """形状 (n_bs, 2)，列顺序 (s, I)"""
        return np.column_stack([self.norms_s, self.norms_I])

    @property
    def total(self):
        return float(self.norms.sum())


def residuals(state):
    return Residuals(state.s - state.s_bar + state.z_s, state.I - state.I_bar + state.z_I)


def block3_update(state, rho_o=None, rho_s=None, rho_I=None):
    """
    z = -(λ + ψ + ρ_l c) / (ρ_o + ρ_l)，c_s = s - s̄，c_I = I - Ī
    即 λz + ρ_o/2 z² + ψ(c+z) + ρ_l/2 (c+z)² 的驻点
    """
    rho_o = state.rho_o if rho_o is None else rho_o
    rho_s = (state.rho_s if rho_s is None else np.broadcast_to(rho_s, (state.n_bs,)))[:, None]
    rho_I = (state.rho_I if rho_I is None else np.broadcast_to(rho_I, (state.n_bs,)))[:, None]
    if np.any(rho_o + rho_s <= 0) or np.any(rho_o + rho_I <= 0):
        raise ValueError("rho_o + rho_l 必须 > 0")
    z_s = -(state.lam_s + state.psi_s + rho_s * (state.s - state.s_bar)) / (rho_o + rho_s)
    z_I = -(state.lam_I + state.psi_I + rho_I * (state.I - state.I_bar)) / (rho_o + rho_I)
    return replace(state, z_s=z_s, z_I=z_I)


def psi_update(state, res=None):
    res = residuals(state) if res is None else res
    return replace(state,
                   psi_s=state.psi_s + state.rho_s[:, None] * res.r_s,
                   psi_I=state.psi_I + state.rho_I[:, None] * res.r_I)


def init_inner(state, lam_s=None, lam_I=None, rho_o=None, delta=2.0):
    """ρ_l,b = δ ρ_o，ψ⁰ = -(λ + ρ_o z⁰)，使 λ + ρ_o z + ψ = 0 在内层第 0 轮严格成立"""
    if delta <= 0:
        raise ValueError(f"delta 必须 > 0: {delta}")
    lam_s = state.lam_s if lam_s is None else np.asarray(lam_s, dtype=complex)
    lam_I = state.lam_I if lam_I is None else np.asarray(lam_I, dtype=float)
    rho_o = state.rho_o if rho_o is None else float(rho_o)
    rho = np.full(state.n_bs, delta * rho_o)
    return replace(state, lam_s=lam_s, lam_I=lam_I, rho_o=rho_o, rho_s=rho, rho_I=rho.copy(),
                   psi_s=-(lam_s + rho_o * state.z_s), psi_I=-(lam_I + rho_o * state.z_I))


def _clamp(values, bound):
    if np.iscomplexobj(values):
        return np.clip(values.real, -bound, bound) + 1j * np.clip(values.imag, -bound, bound)
    return np.clip(values, -bound, bound)


def lambda_update(state, omega=0.5, gamma=1.5, lambda_max=1e6):
    """
    λ ← clamp(λ + ρ_o z, ±λ_max)，复数分量的实部虚部分别截断
    ‖Z_b‖ ≥ ω‖Z_b^prev‖ 对所有 b 成立时 ρ_o ← γ ρ_o
    ‖Z_b‖ 与 ‖Z_b^prev‖ 都为 0 的 BS 视为已收敛；没有上一轮记录时不增长
    返回 (新状态, 是否增长)
    """
    if not 0 <= omega < 1:
        raise ValueError(f"omega 需在 [0, 1): {omega}")
    if gamma <= 1:
        raise ValueError(f"gamma 需 > 1: {gamma}")
    raw_s = state.lam_s + state.rho_o * state.z_s
    raw_I = state.lam_I + state.rho_o * state.z_I
    lam_s = _clamp(raw_s, lambda_max)
    lam_I = _clamp(raw_I, lambda_max)
    clamped = int(np.sum(lam_s != raw_s) + np.sum(lam_I != raw_I))
    if clamped:
        logger.warning("λ 截断生效: %d 个分量超出 ±%.3g", clamped, lambda_max)

    norms = state.stacked_z_norms()
    grow = False
    if state.z_norm_prev is not None:
        prev = state.z_norm_prev
        stalled = (norms >= omega * prev) & ~((norms == 0) & (prev == 0))
        grow = bool(np.all(stalled))
    rho_o = state.rho_o * gamma if grow else state.rho_o
    if grow:
        logger.debug("残差下降不足，ρ_o: %.4g -> %.4g", state.rho_o, rho_o)
    return replace(state, lam_s=lam_s, lam_I=lam_I, rho_o=rho_o, z_norm_prev=norms), grow


def dump_snapshot(state, csv_path, k, t):
    """追加一帧状态到 CSV：k, t, b, l, u, component, value"""
    f, writer = ensure_csv_writer(csv_path, SNAPSHOT_FIELDS)
    with f:
        for l in LINKS:
            x, x_bar, z, psi, lam, _ = state.link(l)
            for name, arr in (("x", x), ("x_bar", x_bar), ("z", z), ("psi", psi), ("lambda", lam)):
                parts = (("re", arr.real), ("im", arr.imag)) if np.iscomplexobj(arr) else (("", arr),)
                for suffix, values in parts:
                    component = f"{name}.{suffix}" if suffix else name
                    for b, u in np.ndindex(values.shape):
                        writer.writerow({"k": k, "t": t, "b": b, "l": l, "u": u,
                                         "component": component, "value": fmt(values[b, u])})
