import numpy as np
import pytest

from pfbwd.metrics import (
    BeamformingSolution,
    check_feasibility,
    effective_gains,
    interference_terms,
    per_ue_se,
    pf_objective,
    sinr,
    sinr_all,
    spectral_efficiency,
)


def random_weights(rng, channels, scale=0.5):
    return [scale * (rng.standard_normal(h.shape) + 1j * rng.standard_normal(h.shape)) for h in channels.matrices]


def sinr_loop(channels, weights):
    """逐项标量循环实现，作为对照"""
    U = channels.U
    out = []
    for u in range(U):
        gains = []
        for k in range(U):
            total = 0j
            for h, w in zip(channels.matrices, weights):
                for r in range(h.shape[0]):
                    total += np.conj(h[r, u]) * w[r, k]
            gains.append(abs(total) ** 2)
        interference = sum(g for k, g in enumerate(gains) if k != u)
        out.append(gains[u] / (interference + channels.noise_variance_w))
    return np.array(out)


def test_single_link_sinr(make_channels):
    ch = make_channels([np.array([[1.0]])])
    sol = BeamformingSolution([np.array([[2.0]])], [10.0])
    assert sinr(ch, sol, 0) == pytest.approx(4.0)


def test_zero_weights_give_zero_sinr(tiny_channels):
    sol = BeamformingSolution([np.zeros(h.shape) for h in tiny_channels.matrices], [1.0, 2.0])
    np.testing.assert_array_equal(sinr_all(tiny_channels, sol), [0.0, 0.0])


def test_sinr_matches_scalar_loop(rng, tiny_channels):
    weights = random_weights(rng, tiny_channels)
    sol = BeamformingSolution(weights, [1.0, 2.0])
    np.testing.assert_allclose(sinr_all(tiny_channels, sol), sinr_loop(tiny_channels, weights), rtol=1e-12)


def test_spectral_efficiency_values():
    np.testing.assert_allclose(spectral_efficiency([0.0, 1.0, 4.0]), [0.0, 1.0, np.log2(5)])
    assert float(spectral_efficiency(4.0)) == pytest.approx(2.3219, abs=1e-4)


def test_pf_objective_reference_points(make_channels):
    ch = make_channels([np.eye(2)])
    unit = BeamformingSolution([np.eye(2)], [10.0])
    assert pf_objective(ch, unit) == pytest.approx(0.0, abs=1e-12)
    gamma = 2 ** np.e - 1
    sol = BeamformingSolution([np.sqrt(gamma) * np.eye(2)], [10.0])
    assert pf_objective(ch, sol) == pytest.approx(2.0)


def test_pf_objective_matches_loop(rng, tiny_channels):
    weights = random_weights(rng, tiny_channels)
    sol = BeamformingSolution(weights, [1.0, 2.0])
    expected = np.sum(np.log(np.log2(1 + sinr_loop(tiny_channels, weights))))
    assert pf_objective(tiny_channels, sol) == pytest.approx(expected, rel=1e-12)


def test_pf_objective_infeasible(tiny_channels):
    sol = BeamformingSolution([np.zeros(h.shape) for h in tiny_channels.matrices], [1.0, 2.0])
    assert pf_objective(tiny_channels, sol) == float("-inf")


def test_feasibility_of_zero_weights(tiny_channels):
    sol = BeamformingSolution([np.zeros(h.shape) for h in tiny_channels.matrices], [1.0, 2.0])
    report = check_feasibility(tiny_channels, sol, gamma_min=0.0)
    assert report.power_ok
    assert report.feasible
    assert report.min_sinr_margin == 0.0


def test_power_violation_is_relative(rng, tiny_channels):
    weights = random_weights(rng, tiny_channels)
    budgets = np.array([1.0, 2.0])
    sol = BeamformingSolution([w / np.linalg.norm(w) * np.sqrt(2 * p) for w, p in zip(weights, budgets)], budgets)
    report = check_feasibility(tiny_channels, sol)
    np.testing.assert_allclose(report.power_violation_rel, [1.0, 1.0])
    assert not report.power_ok


def test_sinr_floor_violation(make_channels):
    ch = make_channels([np.array([[1.0]])])
    sol = BeamformingSolution([np.array([[1.0]])], [10.0])
    report = check_feasibility(ch, sol, gamma_min=2.0)
    assert not report.sinr_ok
    assert report.min_sinr_margin == pytest.approx(-1.0)


def test_interference_single_ue_is_zero(make_channels):
    ch = make_channels([np.array([[1.0 + 1j], [0.5]])])
    sol = BeamformingSolution([np.array([[0.3], [0.2j]])], [1.0])
    np.testing.assert_array_equal(interference_terms(ch, sol, 0), [0.0])


def test_interference_orthogonal_channels(make_channels):
    ch = make_channels([np.eye(2), 2 * np.eye(2)])
    sol = BeamformingSolution([np.eye(2), np.eye(2)], [1.0, 1.0])
    np.testing.assert_allclose(interference_terms(ch, sol, 1), [0.0, 0.0])


def test_interference_matches_loop(rng, tiny_channels):
    weights = random_weights(rng, tiny_channels)
    sol = BeamformingSolution(weights, [1.0, 2.0])
    u = 1
    expected = []
    for h, w in zip(tiny_channels.matrices, weights):
        expected.append(sum(abs(np.vdot(h[:, u], w[:, k])) ** 2 for k in range(w.shape[1]) if k != u))
    np.testing.assert_allclose(interference_terms(tiny_channels, sol, u), expected, rtol=1e-12)


def test_per_ue_se_shape(rng, tiny_channels):
    sol = BeamformingSolution(random_weights(rng, tiny_channels), [1.0, 2.0])
    assert per_ue_se(tiny_channels, sol).shape == (2,)


def test_shape_mismatch_raises(tiny_channels):
    sol = BeamformingSolution([np.zeros((2, 2))], [1.0])
    with pytest.raises(ValueError):
        sinr_all(tiny_channels, sol)


def test_factored_interference_bound(rng, make_channels):
    shapes = [(2, 3), (3, 3), (4, 3)]
    for _ in range(10_000):
        ch = make_channels([rng.standard_normal(s) + 1j * rng.standard_normal(s) for s in shapes])
        sol = BeamformingSolution(random_weights(rng, ch), [1.0, 1.0, 1.0])
        power = np.abs(effective_gains(ch, sol).sum(axis=0)) ** 2
        for u in range(3):
            exact = power[u].sum() - power[u, u]
            bound = ch.n_bs * interference_terms(ch, sol, u).sum()
            assert exact <= bound * (1 + 1e-12) + 1e-12
