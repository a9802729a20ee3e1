"""
网络拓扑与信道生成
MBS-UE: Rayleigh 小尺度衰落 + 对数正态阴影 + FSPL
HAPS-UE: 3D Rician（UPA 导向矢量 LoS + 高斯 NLoS）+ FSPL
"""

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from pfbwd.errors import ChannelDomainError, ConfigError

logger = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299_792_458.0

# 随机子流编号：default_rng([seed, stream, index])
STREAM_PLACEMENT = 0
STREAM_MBS = 1
STREAM_HAPS = 2


def dbm_to_watts(dbm):
    return 10 ** (dbm / 10) / 1000


def db_to_linear(db):
    return 10 ** (db / 10)


def linear_to_db(x):
    return 10 * np.log10(x)


@dataclass
class ArrayGeometry:
    """均匀平面阵列，间距以波长为单位"""

    n_h: int
    n_v: int
    dx_wavelengths: float = 0.5
    dy_wavelengths: float = 0.5

    def __post_init__(self):
        if self.n_h < 1 or self.n_v < 1:
            raise ConfigError(f"阵列尺寸必须 >= 1: {self.n_h}x{self.n_v}")
        if self.dx_wavelengths <= 0 or self.dy_wavelengths <= 0:
            raise ConfigError("阵元间距必须为正")

    @property
    def n_elements(self):
        return self.n_h * self.n_v

    @classmethod
    def parse(cls, text, spacing=0.5):
        """解析 "4x4" 形式的阵列描述"""
        try:
            n_h, n_v = (int(part) for part in str(text).lower().split("x"))
        except ValueError:
            raise ConfigError(f"无法解析阵列尺寸: {text!r}（应为 NHxNV，例如 4x4）") from None
        return cls(n_h, n_v, spacing, spacing)

    def __str__(self):
        return f"{self.n_h}x{self.n_v}"


@dataclass
class Topology:
    area_side_m: float
    mbs_positions: np.ndarray
    haps_position: np.ndarray | None
    ue_positions: np.ndarray

    def __post_init__(self):
        self.mbs_positions = np.asarray(self.mbs_positions, dtype=float).reshape(-1, 3)
        self.ue_positions = np.asarray(self.ue_positions, dtype=float).reshape(-1, 3)
        if self.haps_position is not None:
            self.haps_position = np.asarray(self.haps_position, dtype=float).reshape(3)
        if self.U < 1:
            raise ConfigError("至少需要 1 个 UE")
        if self.n_bs < 1:
            raise ConfigError("网络中没有任何 BS（B = 0 且没有 HAPS）")
        xy = self.ue_positions[:, :2]
        if np.any(xy < 0) or np.any(xy > self.area_side_m) or np.any(self.ue_positions[:, 2] != 0):
            raise ConfigError("UE 必须位于 [0, area_side_m]^2 的地面上")
        if self.haps_position is not None and self.B > 0:
            if self.haps_position[2] <= self.mbs_positions[:, 2].max():
                raise ConfigError("HAPS 高度必须高于所有 MBS")

    @property
    def B(self):
        return len(self.mbs_positions)

    @property
    def U(self):
        return len(self.ue_positions)

    @property
    def has_haps(self):
        return self.haps_position is not None

    @property
    def n_bs(self):
        return self.B + int(self.has_haps)


@dataclass
class ChannelParams:
    carrier_hz: float = 2.545e9
    noise_variance_w: float = dbm_to_watts(-100.0)
    rician_k: float = 10.0
    shadow_sigma_db: float = 8.0

    @property
    def wavelength_m(self):
        return SPEED_OF_LIGHT / self.carrier_hz


@dataclass
class ChannelSet:
    """每个 BS 一个 N_b x U 复信道矩阵；有 HAPS 时它总是最后一个"""

    matrices: list
    carrier_hz: float
    noise_variance_w: float
    rician_k: float
    shadow_sigma_db: float
    has_haps: bool = True
    labels: list = field(default_factory=list)

    def __post_init__(self):
        self.matrices = [np.asarray(h, dtype=complex) for h in self.matrices]
        if not self.matrices:
            raise ConfigError("ChannelSet 为空")
        if self.noise_variance_w <= 0:
            raise ConfigError("噪声功率必须为正")
        U = self.matrices[0].shape[1]
        for h in self.matrices:
            if h.ndim != 2 or h.shape[1] != U:
                raise ConfigError("所有信道矩阵必须是 N_b x U 且 U 一致")
            if not np.all(np.isfinite(h)):
                raise ChannelDomainError("信道矩阵含有非有限值")
        if not self.labels:
            B = len(self.matrices) - int(self.has_haps)
            self.labels = [f"mbs{b}" for b in range(B)] + (["haps"] if self.has_haps else [])

    @property
    def n_bs(self):
        return len(self.matrices)

    @property
    def U(self):
        return self.matrices[0].shape[1]

    @property
    def n_antennas(self):
        return [h.shape[0] for h in self.matrices]

    def normalized(self):
        """噪声归一化信道 H^b / sigma_n（优化器再按 subproblems.scale_channels 缩放）"""
        scale = 1.0 / math.sqrt(self.noise_variance_w)
        return [h * scale for h in self.matrices]

    def to_csv(self, path):
        """扁平导出：每行 b, r, u, re, im"""
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["b", "r", "u", "re", "im"])
            for b, h in enumerate(self.matrices):
                for r in range(h.shape[0]):
                    for u in range(h.shape[1]):
                        writer.writerow([b, r, u, repr(float(h[r, u].real)), repr(float(h[r, u].imag))])

    @classmethod
    def from_csv(cls, path, params=None, has_haps=True):
        params = params or ChannelParams()
        entries = {}
        with open(path, newline="") as f:
            for row in csv.DictReader(f):
                key = (int(row["b"]), int(row["r"]), int(row["u"]))
                entries[key] = complex(float(row["re"]), float(row["im"]))
        n_bs = 1 + max(k[0] for k in entries)
        matrices = []
        for b in range(n_bs):
            n_r = 1 + max(k[1] for k in entries if k[0] == b)
            n_u = 1 + max(k[2] for k in entries if k[0] == b)
            h = np.zeros((n_r, n_u), dtype=complex)
            for (bb, r, u), value in entries.items():
                if bb == b:
                    h[r, u] = value
            matrices.append(h)
        return cls(matrices, params.carrier_hz, params.noise_variance_w, params.rician_k,
                   params.shadow_sigma_db, has_haps=has_haps)


def grid_shape(B):
    """近方形网格 rows x cols = B，cols - rows ∈ {0, 1}；不存在时返回 None"""
    if B == 0:
        return 0, 0
    rows = int(math.isqrt(B))
    for r in (rows, rows - 1):
        if r >= 1 and B % r == 0 and B // r - r in (0, 1):
            return r, B // r
    return None


def place_network(seed, B, U, area_side_m=4000.0, haps_alt_m=20e3, *, haps=True,
                  grid=True, mbs_height_m=25.0):
    """
    生成网络布局
    grid=True 时 MBS 放在近方形网格的格心（B=4 即四个象限中心），否则在区域内均匀随机
    """
    if B < 0 or U < 1 or area_side_m <= 0:
        raise ConfigError(f"非法网络规模: B={B}, U={U}, area={area_side_m}")
    rng = np.random.default_rng([seed, STREAM_PLACEMENT, 0])

    if grid:
        shape = grid_shape(B)
        if shape is None:
            raise ConfigError(
                f"B={B} 无法排成近方形网格，请设置 grid_placement = false 使用随机放置"
            )
        rows, cols = shape
        cell_x = area_side_m / max(cols, 1)
        cell_y = area_side_m / max(rows, 1)
        mbs = [((i + 0.5) * cell_x, (j + 0.5) * cell_y, mbs_height_m)
               for j in range(rows) for i in range(cols)]
    else:
        xy = rng.uniform(0, area_side_m, size=(B, 2))
        mbs = [(x, y, mbs_height_m) for x, y in xy]

    ue_xy = rng.uniform(0, area_side_m, size=(U, 2))
    ues = np.column_stack([ue_xy, np.zeros(U)])
    haps_pos = (area_side_m / 2, area_side_m / 2, haps_alt_m) if haps else None
    return Topology(area_side_m, np.array(mbs, dtype=float).reshape(-1, 3), haps_pos, ues)


def fspl(f_hz, d_m):
    """自由空间路径损耗（线性）: (4 pi f d / c)^2"""
    f_hz = np.asarray(f_hz, dtype=float)
    d_m = np.asarray(d_m, dtype=float)
    if np.any(f_hz <= 0):
        raise ChannelDomainError("载频必须为正")
    if np.any(d_m <= 0):
        raise ChannelDomainError("距离为 0：UE 与 BS 重合")
    value = (4 * np.pi * f_hz * d_m / SPEED_OF_LIGHT) ** 2
    return float(value) if value.ndim == 0 else value


def _distances(origin, points):
    return np.linalg.norm(points - origin[None, :], axis=1)


def mbs_channel(seed, topo, geom, b, params, *, fading=None):
    """
    MBS b 到所有 UE 的信道矩阵 (N_b x U)
    h = r * xi / sqrt(PL)，阴影每个 (b,u) 抽一次，小尺度衰落每个阵元独立
    fading 可注入确定性的小尺度系数（测试用）
    """
    if not 0 <= b < topo.B:
        raise ConfigError(f"MBS 下标越界: {b}")
    rng = np.random.default_rng([seed, STREAM_MBS, b])
    n = geom.n_elements
    shadow_db = rng.normal(0.0, params.shadow_sigma_db, size=topo.U)
    if fading is None:
        fading = (rng.standard_normal((n, topo.U)) + 1j * rng.standard_normal((n, topo.U))) / np.sqrt(2)
    xi = 10 ** (shadow_db / 10)
    pl = fspl(params.carrier_hz, _distances(topo.mbs_positions[b], topo.ue_positions))
    return np.asarray(fading) * (xi / np.sqrt(pl))[None, :]


def haps_steering(theta, phi, geom):
    """
    UPA 导向矢量 a(θ,φ) ⊗ b(θ,φ)
    θ 在 HAPS 处相对水平面量测（天底 θ = π/2），φ 相对阵列 x 轴
    """
    d_h = geom.dx_wavelengths * np.cos(theta) * np.sin(phi)
    d_v = geom.dy_wavelengths * np.cos(theta) * np.cos(phi)
    a = np.exp(1j * 2 * np.pi * np.arange(geom.n_h) * d_h)
    v = np.exp(1j * 2 * np.pi * np.arange(geom.n_v) * d_v)
    return np.kron(a, v)


def haps_angles(topo):
    """每个 UE 相对 HAPS 的 (θ, φ)"""
    delta = topo.ue_positions - topo.haps_position[None, :]
    horizontal = np.hypot(delta[:, 0], delta[:, 1])
    theta = np.arctan2(-delta[:, 2], horizontal)
    phi = np.arctan2(delta[:, 1], delta[:, 0])
    # arctan2 返回 (-π, π]，约定区间为 [-π, π)
    phi = np.where(phi >= np.pi, phi - 2 * np.pi, phi)
    return theta, phi


def haps_channel(seed, topo, geom, params):
    """HAPS 到所有 UE 的 Rician 信道矩阵 (N x U)"""
    if not topo.has_haps:
        raise ConfigError("拓扑中没有 HAPS")
    rng = np.random.default_rng([seed, STREAM_HAPS, 0])
    n = geom.n_elements
    k = params.rician_k
    nlos = (rng.standard_normal((n, topo.U)) + 1j * rng.standard_normal((n, topo.U))) / np.sqrt(2)
    theta, phi = haps_angles(topo)
    los = np.column_stack([haps_steering(theta[u], phi[u], geom) for u in range(topo.U)])
    pl = fspl(params.carrier_hz, _distances(topo.haps_position, topo.ue_positions))
    h = np.sqrt(1 / (1 + k)) * nlos + np.sqrt(k / (1 + k)) * los
    return h / np.sqrt(pl)[None, :]


def generate_channels(seed, topo, mbs_geom, haps_geom, params):
    """按 BS 顺序（MBS 0..B-1，最后是 HAPS）生成完整 ChannelSet"""
    matrices = [mbs_channel(seed, topo, mbs_geom, b, params) for b in range(topo.B)]
    if topo.has_haps:
        matrices.append(haps_channel(seed, topo, haps_geom, params))
    logger.debug("信道生成完成: seed=%s, B=%d, U=%d, HAPS=%s", seed, topo.B, topo.U, topo.has_haps)
    return ChannelSet(matrices, params.carrier_hz, params.noise_variance_w, params.rician_k,
                      params.shadow_sigma_db, has_haps=topo.has_haps)
