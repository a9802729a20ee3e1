import numpy as np
import pytest

from pfbwd.conic import (
    INEXACT_TOL,
    INFEASIBLE,
    NUMERICAL_LIMIT,
    OPTIMAL,
    SolveReport,
    AffineExpr,
    ConicProgram,
    exp_chain,
    geomean_hypograph,
    get_backend,
    quad_epigraph,
    solve,
)


def test_affine_arithmetic():
    e = AffineExpr({0: 1.0}) * 2 + 3 - AffineExpr({1: 1.0})
    x = np.array([1.5, 4.0])
    assert e.value(x) == pytest.approx(2.0)
    assert (1 - e).value(x) == pytest.approx(-1.0)
    assert (np.float64(0.5) * e).value(x) == pytest.approx(1.0)
    assert e.max_index() == 1


def test_affine_rejects_non_numbers():
    with pytest.raises(TypeError):
        AffineExpr.lift("x")


def test_linear_lower_bound():
    prog = ConicProgram("lb")
    x = prog.add_vars("x")
    prog.add_ge(x, 3.0)
    prog.minimize(x)
    report = solve(prog)
    assert report.optimal
    assert report.x[0] == pytest.approx(3.0, abs=1e-6)
    assert report.objective == pytest.approx(3.0, abs=1e-6)


@pytest.mark.parametrize("backend", ["clarabel", "cvxpy"])
def test_norm_minimization(backend):
    prog = ConicProgram("norm")
    x = prog.add_vars("x", 2)
    t = prog.add_vars("t")
    prog.add_eq(x[0] + x[1], 2.0)
    prog.add_soc(t, x)
    prog.minimize(t)
    report = solve(prog, backend=backend)
    assert report.optimal
    np.testing.assert_allclose(prog.extract(report.x, "x"), [1.0, 1.0], atol=1e-5)
    assert report.objective == pytest.approx(np.sqrt(2), abs=1e-6)
    assert report.backend == backend


def test_infeasible_pair():
    prog = ConicProgram("infeasible")
    x = prog.add_vars("x")
    prog.add_ge(x, 1.0)
    prog.add_le(x, 0.0)
    prog.minimize(x)
    report = solve(prog)
    assert report.status == INFEASIBLE
    assert report.x is None


def test_usable_status():
    x = np.zeros(2)
    assert SolveReport(OPTIMAL, x, 0.0, 5, 0.01, 0.0).usable
    assert SolveReport(NUMERICAL_LIMIT, x, 0.0, 200, 0.01, INEXACT_TOL / 2).usable
    assert not SolveReport(NUMERICAL_LIMIT, x, 0.0, 200, 0.01, INEXACT_TOL * 10).usable
    assert not SolveReport(NUMERICAL_LIMIT, None, float("nan"), 200, 0.01).usable
    assert not SolveReport(INFEASIBLE, None, float("nan"), 8, 0.01).usable


def test_iteration_limit_keeps_last_iterate():
    prog = ConicProgram("norm")
    x = prog.add_vars("x", 2)
    t = prog.add_vars("t")
    prog.add_eq(x[0] + x[1], 2.0)
    prog.add_soc(t, x)
    prog.minimize(t)
    report = solve(prog, max_iter=1)
    assert report.status == NUMERICAL_LIMIT
    assert report.x is not None
    assert np.isfinite(report.max_violation)


def test_unknown_backend():
    with pytest.raises(ValueError):
        get_backend("mosek")


def test_references_to_missing_variables():
    prog = ConicProgram("broken")
    prog.add_vars("x")
    prog.add_ge(AffineExpr({5: 1.0}), 0.0)
    with pytest.raises(ValueError):
        prog.compile()


def test_duplicate_block_name():
    prog = ConicProgram()
    prog.add_vars("x")
    with pytest.raises(ValueError):
        prog.add_vars("x")


def test_variable_bounds_and_blocks():
    prog = ConicProgram()
    prog.add_vars("a", 2)
    b = prog.add_vars("b", (2, 3), lb=0.0)
    assert b.shape == (2, 3)
    assert prog.blocks["b"].shape == (2, 3)
    assert prog.n_vars == 8
    assert "b_lb" in prog.families()


def test_violated_families():
    prog = ConicProgram()
    x = prog.add_vars("x", 2)
    prog.add_ge(x[0], 1.0, family="floor")
    prog.add_soc(1.0, x, family="ball")
    assert prog.violated_families(np.array([0.0, 0.0])) == ["floor"]
    assert prog.violated_families(np.array([1.0, 1.0])) == ["ball"]
    assert prog.violated_families(np.array([1.0, 0.0])) == []


def exp_chain_minimum(t_value, nu=6):
    prog = ConicProgram("chain")
    t = prog.add_vars("t")
    alpha = prog.add_vars("alpha")
    prog.add_eq(t, t_value)
    k = exp_chain(prog, t, alpha, nu)
    assert k.shape == (nu + 4,)
    prog.minimize(alpha)
    report = solve(prog)
    assert report.optimal
    return prog.extract(report.x, "alpha").item()


def test_exp_chain_at_zero():
    assert exp_chain_minimum(0.0) == pytest.approx(0.0, abs=1e-5)


def test_exp_chain_accuracy_and_monotonicity():
    grid = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0]
    minima = [exp_chain_minimum(t) for t in grid]
    for t, alpha in zip(grid, minima):
        assert abs((1 + alpha) - np.exp(t)) / np.exp(t) <= 1e-5
    assert all(b >= a for a, b in zip(minima, minima[1:]))


def log_chain_maximum(t_value, nu):
    """max y s.t. e^y <= t（链式近似），即链给出的 log t"""
    prog = ConicProgram("log_chain")
    y = prog.add_vars("y")
    exp_chain(prog, y, t_value - 1.0, nu)
    prog.minimize(-1.0 * y)
    report = solve(prog)
    assert report.optimal
    return prog.extract(report.x, "y").item()


def taylor4_log_gap(y, nu):
    """y - 2^ν log T4(y/2^ν)：四阶截断在 y > 0 时的固有偏差"""
    x = y / 2 ** nu
    return 2 ** nu * (x - np.log(1 + x + x ** 2 / 2 + x ** 3 / 6 + x ** 4 / 24))


@pytest.mark.parametrize("nu, decades", [(4, 1.3), (5, 2.0), (6, 2.0), (8, 2.0)])
def test_log_chain_sweep(nu, decades):
    rng = np.random.default_rng(nu)
    for t in 10.0 ** rng.uniform(-decades, decades, size=12):
        y = log_chain_maximum(t, nu)
        assert abs(y - np.log(t)) <= 1e-4
        # t <= 1 时截断误差使链偏保守；t > 1 时超出量不超过截断项本身
        assert y - np.log(t) <= max(taylor4_log_gap(y, nu), 0.0) + 1e-5
        if t <= 1:
            assert y <= np.log(t) + 1e-5


def test_exp_chain_rejects_bad_nu():
    prog = ConicProgram()
    t = prog.add_vars("t")
    alpha = prog.add_vars("alpha")
    with pytest.raises(ValueError):
        exp_chain(prog, t, alpha, nu=0)


def geomean_maximum(values):
    prog = ConicProgram("geomean")
    t = prog.add_vars("t", len(values))
    g = prog.add_vars("g")
    for expr, v in zip(t, values):
        prog.add_eq(expr, v)
    geomean_hypograph(prog, t, g)
    prog.minimize(-1.0 * g)
    report = solve(prog)
    assert report.optimal
    return prog.extract(report.x, "g").item()


@pytest.mark.parametrize("values, expected", [
    ([5.0], 5.0),
    ([4.0, 1.0], 2.0),
    ([8.0, 8.0, 8.0], 8.0),
    ([1.0, 2.0, 4.0, 8.0, 16.0], 4.0),
])
def test_geomean_hypograph(values, expected):
    assert geomean_maximum(values) == pytest.approx(expected, rel=1e-6)


@pytest.mark.parametrize("exprs, expected", [
    ([0.0], 0.0),
    ([3.0, 4.0], 25.0),
    ([1.0], 1.0),
])
def test_quad_epigraph(exprs, expected):
    prog = ConicProgram("quad")
    s = prog.add_vars("s")
    quad_epigraph(prog, exprs, s)
    prog.minimize(s)
    report = solve(prog)
    assert report.optimal
    assert report.x[0] == pytest.approx(expected, abs=1e-6)


def test_dump_lists_every_row(tmp_path):
    prog = ConicProgram("dump")
    x = prog.add_vars("x", 2)
    prog.add_eq(x[0] - x[1], 0.0, family="tie")
    prog.add_soc(2.0, x, family="ball")
    prog.add_rsoc(x[0], 1.0, [x[1]], family="cone")
    prog.minimize(x[0])
    path = tmp_path / "dump.txt"
    prog.dump(path)
    text = path.read_text()
    assert "var 0 x[0]" in text
    assert "eq tie" in text
    assert "soc ball" in text
    assert "rsoc cone" in text
    assert text.startswith("# dump: 2 vars")
