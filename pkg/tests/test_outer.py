import csv
from dataclasses import replace

import numpy as np
import pytest

from pfbwd.consensus import ConsensusState
from pfbwd.errors import SubproblemError
from pfbwd.inner import InnerConfig
from pfbwd.metrics import check_feasibility
from pfbwd.inner import run_inner
from pfbwd.outer import OUTER_FIELDS, OuterConfig, initial_state, outer_stop, run_outer, write_outer
from pfbwd.subproblems import consensus_terms, matched_filter


def z_state(value):
    state = ConsensusState.zeros(2, 2)
    z_I = np.zeros((2, 2))
    z_I[0, 0] = value
    return replace(state, z_I=z_I)


def test_stop_when_z_zero_and_pf_flat():
    assert outer_stop(z_state(0.0), 1.0, 1.0, OuterConfig())


def test_no_stop_with_large_z():
    cfg = OuterConfig(eps_o1=1e-3)
    assert not outer_stop(z_state(2e-3), 1.0, 1.0, cfg)


def test_relative_pf_change():
    cfg = OuterConfig(eps_o2=1e-3)
    assert outer_stop(z_state(1e-4), 1.000, 1.0005, cfg)
    assert not outer_stop(z_state(1e-4), 1.000, 1.01, cfg)


def test_absolute_criterion_at_zero_pf():
    cfg = OuterConfig(eps_o2=1e-4)
    assert outer_stop(z_state(0.0), 0.0, 5e-5, cfg)
    assert not outer_stop(z_state(0.0), 0.0, 1e-3, cfg)


def test_infinite_pf_never_stops():
    assert not outer_stop(z_state(0.0), float("-inf"), 1.0, OuterConfig())


def test_outer_config_validation():
    with pytest.raises(ValueError):
        OuterConfig(gamma_growth=1.0)
    with pytest.raises(ValueError):
        OuterConfig(omega=1.5)
    with pytest.raises(ValueError):
        OuterConfig(rho_o_init=0.0)


def test_initial_state_from_matched_filter(tiny_channels, tiny_params):
    cfg = OuterConfig(rho_o_init=5.0, delta=0.5)
    state, weights = initial_state(tiny_channels, tiny_params.power_budgets_w, cfg)
    s, I = consensus_terms(tiny_channels, matched_filter(tiny_channels, tiny_params.power_budgets_w))
    np.testing.assert_allclose(state.s, s)
    np.testing.assert_allclose(state.s_bar, s)
    np.testing.assert_allclose(state.I, I)
    assert np.all(state.z_s == 0) and np.all(state.lam_I == 0)
    assert state.rho_o == 5.0
    np.testing.assert_allclose(state.rho_s, [2.5, 2.5])
    assert len(weights) == 2


@pytest.fixture
def short_run(tiny_channels, tiny_params):
    cfg = OuterConfig(max_outer_iters=3, inner=InnerConfig(max_inner_iters=4))
    return run_outer(tiny_channels, cfg, tiny_params), cfg


def test_run_outer_bookkeeping(short_run, tiny_channels):
    result, cfg = short_run
    trace = result.trace
    assert 1 <= trace.iterations <= cfg.max_outer_iters
    assert len(trace.inner) == trace.iterations
    assert trace.total_inner_iters == sum(row["inner_iters"] for row in trace.rows)
    assert trace.total_scalars == 12 * trace.total_inner_iters
    rhos = [row["rho_o"] for row in trace.rows]
    assert rhos[0] == cfg.rho_o_init
    for a, b in zip(rhos, rhos[1:]):
        assert b == a or b == pytest.approx(a * cfg.gamma_growth)


def test_run_outer_solution_is_feasible(short_run, tiny_channels):
    result, _ = short_run
    report = check_feasibility(tiny_channels, result.solution)
    assert report.power_ok
    assert np.isfinite(result.trace.pf_history).all()


def test_write_outer(tmp_path, short_run):
    result, _ = short_run
    path = tmp_path / "outer.csv"
    write_outer(path, result.trace)
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    assert list(rows[0].keys()) == OUTER_FIELDS
    assert len(rows) == result.trace.iterations
    assert rows[0]["inner_converged"] in ("0", "1")


def test_later_failure_returns_best_solution(tiny_channels, tiny_params, monkeypatch):
    calls = {"n": 0}

    def flaky(*args, **kwargs):
        calls["n"] += 1
        if calls["n"] > 1:
            raise SubproblemError("Block 2 求解失败 (numerical-limit)", status="numerical-limit", bs=1)
        return run_inner(*args, **kwargs)

    monkeypatch.setattr("pfbwd.outer.run_inner", flaky)
    cfg = OuterConfig(max_outer_iters=4, eps_o1=1e-12, inner=InnerConfig(max_inner_iters=2))
    result = run_outer(tiny_channels, cfg, tiny_params)
    assert result.trace.iterations == 1
    assert not result.converged
    assert check_feasibility(tiny_channels, result.solution).power_ok


def test_first_failure_is_raised_with_context(tiny_channels, tiny_params, monkeypatch):
    def failing(*args, **kwargs):
        raise SubproblemError("Block 2 求解失败 (infeasible)", status="infeasible", bs=0, inner_iter=1)

    monkeypatch.setattr("pfbwd.outer.run_inner", failing)
    with pytest.raises(SubproblemError) as info:
        run_outer(tiny_channels, OuterConfig(max_outer_iters=2), tiny_params)
    assert "k=1, t=1, bs=0" in str(info.value)


def test_snapshots_follow_inner_iterations(tiny_channels, tiny_params, tmp_path):
    path = tmp_path / "consensus.csv"
    cfg = OuterConfig(max_outer_iters=2, inner=InnerConfig(max_inner_iters=2))
    result = run_outer(tiny_channels, cfg, tiny_params, snapshot_path=str(path))
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    # 每帧: s 链路 5 个复数量（10 个分量）+ I 链路 5 个实数量，(n_bs, U) = (2, 2)
    assert len(rows) == 15 * 4 * result.trace.total_inner_iters
    assert {row["k"] for row in rows} == {str(k) for k, _ in result.trace.inner}
