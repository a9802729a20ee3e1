"""
配置加载
- 进程级设置: .env（load_dotenv + os.getenv），输出目录、日志目录、求解后端、并行度
- 实验配置: 平铺的 key = value 文件（dotenv_values 解析），优先级 默认值 < 预设 < 文件 < 命令行
"""

import dataclasses
import logging
import math
import os
from dataclasses import dataclass
from pathlib import Path

from dotenv import dotenv_values, load_dotenv

from pfbwd.conic import BACKENDS
from pfbwd.errors import ConfigError
from pfbwd.inner import SIGNALING_MODES, InnerConfig
from pfbwd.netgen import ArrayGeometry, ChannelParams, db_to_linear, dbm_to_watts, grid_shape
from pfbwd.outer import OuterConfig
from pfbwd.subproblems import LOG_OBJECTIVES, SubproblemParams

logger = logging.getLogger(__name__)

PROJECT_DIR = Path(__file__).resolve().parent.parent.parent
MODES = ("distributed", "centralized", "both")
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def load_settings():
    load_dotenv()
    settings = {
        "out_dir": os.getenv("PFBWD_OUT_DIR", str(PROJECT_DIR / "data")),
        "log_dir": os.getenv("PFBWD_LOG_DIR", str(PROJECT_DIR / "logs")),
        "backend": os.getenv("PFBWD_BACKEND", "clarabel"),
        "workers": int(os.getenv("PFBWD_WORKERS", "1")),
        "bs_workers": int(os.getenv("PFBWD_BS_WORKERS", "1")),
        "log_level": os.getenv("PFBWD_LOG_LEVEL", "INFO").upper(),
    }
    if settings["backend"] not in BACKENDS:
        raise ConfigError(f"PFBWD_BACKEND 需为 {', '.join(BACKENDS)} 之一: {settings['backend']}")
    if settings["workers"] < 1 or settings["bs_workers"] < 1:
        raise ConfigError("PFBWD_WORKERS / PFBWD_BS_WORKERS 必须 >= 1")
    os.makedirs(settings["out_dir"], exist_ok=True)
    os.makedirs(settings["log_dir"], exist_ok=True)
    return settings


@dataclass
class ExperimentConfig:
    # 信道
    carrier_hz: float = 2.545e9
    shadow_sigma_db: float = 8.0
    rician_k: float = 10.0
    spacing_wavelengths: float = 0.5
    noise_dbm: float = -100.0
    mbs_array: str = "2x2"
    haps_array: str = "4x4"
    mbs_power_dbm: float = 43.0
    haps_power_dbm: float = 52.0
    # 算法参数
    rho_o_init: float = 10.0
    delta: float = 2.0
    omega: float = 0.5
    gamma_growth: float = 1.5
    # 拓扑
    num_mbs: int = 2
    num_ues: int = 4
    area_side_m: float = 4000.0
    haps: bool = True
    haps_alt_m: float = 20e3
    mbs_height_m: float = 25.0
    grid_placement: bool = True
    # 实验
    mode: str = "distributed"
    seed: int = 1
    realizations: int = 20
    # 容差与开关
    gamma_min_db: str = "none"
    interference_bound_factor: str = "1"
    nu: int = 6
    eps_sca: float = 1e-4
    sca_max_iters: int = 20
    eps1: float = 1e-3
    eps2: float = 1e-3
    eps_lb: float = 1e-3
    max_inner_iters: int = 100
    eps_o1: float = 1e-3
    eps_o2: float = 1e-4
    max_outer_iters: int = 15
    lambda_max: float = 1e6
    signaling_mode: str = "compact"
    log_objective: str = "exp_chain"
    solver_tol: float = 1e-8

    def validate(self):
        positive = ("carrier_hz", "rician_k", "spacing_wavelengths", "rho_o_init", "delta", "area_side_m",
                    "haps_alt_m", "mbs_height_m", "eps_sca", "eps1", "eps2", "eps_lb", "eps_o1", "eps_o2",
                    "lambda_max", "solver_tol")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} 必须 > 0: {getattr(self, name)}")
        if self.shadow_sigma_db < 0:
            raise ConfigError("shadow_sigma_db 不能为负")
        if not 0 <= self.omega < 1:
            raise ConfigError(f"omega 需在 [0, 1): {self.omega}")
        if self.gamma_growth <= 1:
            raise ConfigError(f"gamma_growth 必须 > 1: {self.gamma_growth}")
        if self.mode not in MODES:
            raise ConfigError(f"mode 需为 {MODES} 之一: {self.mode}")
        if self.signaling_mode not in SIGNALING_MODES:
            raise ConfigError(f"signaling_mode 需为 {SIGNALING_MODES} 之一: {self.signaling_mode}")
        if self.log_objective not in LOG_OBJECTIVES:
            raise ConfigError(f"log_objective 需为 {LOG_OBJECTIVES} 之一: {self.log_objective}")
        if self.num_mbs < 0 or self.num_ues < 1:
            raise ConfigError(f"非法网络规模: num_mbs={self.num_mbs}, num_ues={self.num_ues}")
        if self.num_mbs + int(self.haps) < 1:
            raise ConfigError("至少需要一个 BS（num_mbs >= 1 或启用 HAPS）")
        if self.grid_placement and grid_shape(self.num_mbs) is None:
            raise ConfigError(f"num_mbs={self.num_mbs} 无法排成近方形网格，请设置 grid_placement = false")
        if self.haps and self.haps_alt_m <= self.mbs_height_m:
            raise ConfigError("HAPS 高度必须高于 MBS")
        if self.seed < 0:
            raise ConfigError("seed 不能为负")
        if self.realizations < 0:
            raise ConfigError("realizations 不能为负")
        if self.nu < 1 or self.sca_max_iters < 1 or self.max_outer_iters < 1 or self.max_inner_iters < 0:
            raise ConfigError("nu / sca_max_iters / max_outer_iters 必须 >= 1，max_inner_iters >= 0")
        # 解析失败时这些派生量会抛 ConfigError
        _ = (self.mbs_geometry, self.haps_geometry, self.gamma_min, self.interference_factor(1))
        return self

    # ---- 派生量 ----
    @property
    def mbs_geometry(self):
        return ArrayGeometry.parse(self.mbs_array, self.spacing_wavelengths)

    @property
    def haps_geometry(self):
        return ArrayGeometry.parse(self.haps_array, self.spacing_wavelengths)

    @property
    def n_bs(self):
        return self.num_mbs + int(self.haps)

    @property
    def channel_params(self):
        return ChannelParams(self.carrier_hz, dbm_to_watts(self.noise_dbm), self.rician_k, self.shadow_sigma_db)

    @property
    def power_budgets_w(self):
        budgets = [dbm_to_watts(self.mbs_power_dbm)] * self.num_mbs
        if self.haps:
            budgets.append(dbm_to_watts(self.haps_power_dbm))
        return budgets

    @property
    def gamma_min(self):
        """线性最小 SINR；none 表示 0（约束不起作用）"""
        text = str(self.gamma_min_db).strip().lower()
        if text in ("none", "", "-inf"):
            return 0.0
        try:
            return db_to_linear(float(text))
        except ValueError as e:
            raise ConfigError(f"gamma_min_db 非法: {self.gamma_min_db}") from e

    def interference_factor(self, n_bs):
        """interference_bound_factor: 数值，或 n_bs 表示 Cauchy–Schwarz 系数 B+1"""
        text = str(self.interference_bound_factor).strip().lower()
        if text == "n_bs":
            return float(n_bs)
        try:
            value = float(text)
        except ValueError as e:
            raise ConfigError(f"interference_bound_factor 非法: {self.interference_bound_factor}") from e
        if not value > 0 or not math.isfinite(value):
            raise ConfigError(f"interference_bound_factor 必须为正: {value}")
        return value

    def subproblem_params(self, backend="clarabel", bs_workers=1):
        return SubproblemParams(
            power_budgets_w=self.power_budgets_w,
            gamma_min=self.gamma_min,
            interference_factor=self.interference_factor(self.n_bs),
            nu=self.nu,
            eps_sca=self.eps_sca,
            sca_max_iters=self.sca_max_iters,
            log_objective=self.log_objective,
            solver_tol=self.solver_tol,
            backend=backend,
            bs_workers=bs_workers,
        )

    def outer_config(self):
        inner = InnerConfig(self.eps1, self.eps2, self.eps_lb, self.max_inner_iters, self.delta, self.signaling_mode)
        return OuterConfig(self.rho_o_init, self.omega, self.gamma_growth, self.delta, self.eps_o1, self.eps_o2,
                           self.max_outer_iters, self.lambda_max, inner)


FIELD_TYPES = {f.name: type(f.default) for f in dataclasses.fields(ExperimentConfig)}

PRESETS = {
    "desk": {},
    "full": {
        "num_mbs": 4,
        "num_ues": 16,
        "mbs_array": "4x4",
        "haps_array": "8x8",
        "realizations": 1000,
    },
}


def _convert(key, value):
    kind = FIELD_TYPES[key]
    if isinstance(value, kind) and not (kind is int and isinstance(value, bool)):
        return value
    text = str(value).strip()
    try:
        if kind is bool:
            low = text.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(text)
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"{key} 的取值无法解析: {value!r}") from None


def parse_config_file(path):
    """读取 key = value 配置文件，返回已转换类型的字典"""
    if not os.path.isfile(path):
        raise ConfigError(f"配置文件不存在: {path}")
    raw = dotenv_values(path)
    values = {}
    for key, value in raw.items():
        key = key.strip().lower()
        if key not in FIELD_TYPES:
            raise ConfigError(f"{path}: 未知配置项 {key}")
        if value is None:
            raise ConfigError(f"{path}: 配置项 {key} 缺少取值")
        values[key] = _convert(key, value)
    return values


def build_config(preset="desk", path=None, overrides=None):
    """默认值 < 预设 < 配置文件 < 命令行覆盖"""
    if preset not in PRESETS:
        raise ConfigError(f"未知预设: {preset}（可选 {', '.join(PRESETS)}）")
    values = dict(PRESETS[preset])
    if path:
        values.update(parse_config_file(path))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in FIELD_TYPES:
            raise ConfigError(f"未知配置项 {key}")
        values[key] = _convert(key, value)
    cfg = ExperimentConfig(**values)
    return cfg.validate()


def with_overrides(cfg, **overrides):
    values = {key: _convert(key, value) for key, value in overrides.items() if key in FIELD_TYPES}
    unknown = set(overrides) - set(values)
    if unknown:
        raise ConfigError(f"未知配置项 {', '.join(sorted(unknown))}")
    return dataclasses.replace(cfg, **values).validate()
