import numpy as np
import pytest

from pfbwd.harness.config import build_config
from pfbwd.harness.experiment import RunRecord
from pfbwd.netgen import ChannelSet
from pfbwd.subproblems import SubproblemParams


def _make_channels(matrices, noise=1.0, has_haps=False):
    return ChannelSet(matrices, 2.545e9, noise, 10.0, 8.0, has_haps=has_haps)


def _random_matrices(rng, shapes, scale=1.0):
    return [scale * (rng.standard_normal(s) + 1j * rng.standard_normal(s)) / np.sqrt(2) for s in shapes]


def _make_record(seed, mode="distributed", haps=True, se=(1.0, 2.0), **kwargs):
    se = list(se)
    values = dict(
        seed=seed, mode=mode, haps=haps, B=2, U=len(se),
        pf_exact=float(np.sum(np.log(se))), mean_se=float(np.mean(se)), min_se=float(np.min(se)),
        per_ue_se=se, outer_iters=3, total_inner_iters=12, scalars_exchanged=12 * 3 * len(se) * 3,
        cone_dim_per_bs=24, converged=True, feasible=True, wall_time_ms=1.5,
    )
    values.update(kwargs)
    return RunRecord(**values)


@pytest.fixture
def make_channels():
    return _make_channels


@pytest.fixture
def make_record():
    return _make_record


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_channels(rng):
    """两个 BS（2 天线、3 天线）、两个 UE，噪声功率 1"""
    return _make_channels(_random_matrices(rng, [(2, 2), (3, 2)], scale=3.0))


@pytest.fixture
def tiny_params():
    return SubproblemParams(power_budgets_w=[1.0, 2.0])


@pytest.fixture
def env_dirs(tmp_path, monkeypatch):
    out_dir = tmp_path / "data"
    log_dir = tmp_path / "logs"
    monkeypatch.setenv("PFBWD_OUT_DIR", str(out_dir))
    monkeypatch.setenv("PFBWD_LOG_DIR", str(log_dir))
    monkeypatch.setenv("PFBWD_BACKEND", "clarabel")
    monkeypatch.setenv("PFBWD_WORKERS", "1")
    monkeypatch.setenv("PFBWD_BS_WORKERS", "1")
    return out_dir


@pytest.fixture
def desk_cfg():
    return build_config("desk")
