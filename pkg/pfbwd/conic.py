"""
与求解器无关的 SOCP 中间表示
- AffineExpr / ConicProgram: 变量、线性目标、等式/不等式、二阶锥与旋转锥
- 求解后端: Clarabel 直接接口（默认）或 cvxpy
- 可复用的锥构造: exp_chain、geomean_hypograph、quad_epigraph
"""

import logging
import numbers
import time
from dataclasses import dataclass

import numpy as np
from scipy import sparse

logger = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERICAL_LIMIT = "numerical-limit"

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 200
# numerical-limit 的迭代点在复核违反量不超过该值时仍可作为非精确解使用
INEXACT_TOL = 1e-6


class AffineExpr:
    """稀疏仿射表达式 Σ c_i x_i + const"""

    __slots__ = ("terms", "const")
    # 让 numpy 标量参与运算时回退到本类的反射方法
    __array_ufunc__ = None

    def __init__(self, terms=None, const=0.0):
        self.terms = dict(terms) if terms else {}
        self.const = float(const)

    @classmethod
    def from_arrays(cls, indices, coeffs, const=0.0):
        expr = cls(const=const)
        terms = expr.terms
        for i, c in zip(np.asarray(indices).ravel().tolist(), np.asarray(coeffs, dtype=float).ravel().tolist()):
            if c != 0.0:
                terms[i] = terms.get(i, 0.0) + c
        return expr

    @staticmethod
    def lift(value):
        if isinstance(value, AffineExpr):
            return value
        if isinstance(value, numbers.Real):
            return AffineExpr(const=float(value))
        raise TypeError(f"无法转换为仿射表达式: {type(value).__name__}")

    def copy(self):
        return AffineExpr(self.terms, self.const)

    def __add__(self, other):
        if not isinstance(other, (AffineExpr, numbers.Real)):
            return NotImplemented
        other = AffineExpr.lift(other)
        out = self.copy()
        for i, c in other.terms.items():
            out.terms[i] = out.terms.get(i, 0.0) + c
        out.const += other.const
        return out

    __radd__ = __add__

    def __neg__(self):
        return AffineExpr({i: -c for i, c in self.terms.items()}, -self.const)

    def __sub__(self, other):
        if not isinstance(other, (AffineExpr, numbers.Real)):
            return NotImplemented
        return self + (-AffineExpr.lift(other))

    def __rsub__(self, other):
        if not isinstance(other, numbers.Real):
            return NotImplemented
        return (-self) + float(other)

    def __mul__(self, other):
        if not isinstance(other, numbers.Real):
            return NotImplemented
        k = float(other)
        return AffineExpr({i: c * k for i, c in self.terms.items()}, self.const * k)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, numbers.Real):
            return NotImplemented
        return self * (1.0 / float(other))

    def value(self, x):
        return self.const + sum(c * x[i] for i, c in self.terms.items())

    def max_index(self):
        return max(self.terms, default=-1)

    def __repr__(self):
        parts = [f"{c:+.6g}*x{i}" for i, c in sorted(self.terms.items())]
        if self.const != 0.0 or not parts:
            parts.append(f"{self.const:+.6g}")
        return " ".join(parts)


def lin_sum(exprs):
    out = AffineExpr()
    for e in exprs:
        out = out + e
    return out


def values(exprs, x):
    """对 object 数组中的每个表达式求值"""
    arr = np.asarray(exprs, dtype=object)
    return np.vectorize(lambda e: AffineExpr.lift(e).value(x), otypes=[float])(arr) if arr.size else np.zeros(arr.shape)


@dataclass
class SolveReport:
    status: str
    x: np.ndarray | None
    objective: float
    iterations: int
    solve_time_s: float
    max_violation: float = float("nan")
    backend: str = ""

    @property
    def optimal(self):
        return self.status == OPTIMAL

    @property
    def usable(self):
        """optimal，或 numerical-limit 但迭代点通过 INEXACT_TOL 复核"""
        if self.optimal:
            return True
        return (self.status == NUMERICAL_LIMIT and self.x is not None
                and np.isfinite(self.max_violation) and self.max_violation <= INEXACT_TOL)


@dataclass
class StandardForm:
    """A x + s = b, s ∈ K；K = 零锥 × 非负锥 × 若干二阶锥（按此顺序）"""

    q: np.ndarray
    A: sparse.csc_matrix
    b: np.ndarray
    n_zero: int
    n_nonneg: int
    soc_dims: list
    objective_const: float


class ConicProgram:
    """
    SOCP 构造器
    约束记录为表达式，compile() 时统一组装成稀疏标准型
    """

    def __init__(self, name="program"):
        self.name = name
        self.n_vars = 0
        self.blocks = {}
        self.var_names = []
        self.objective = AffineExpr()
        self.eqs = []        # (family, expr)            expr == 0
        self.ineqs = []      # (family, expr)            expr >= 0
        self.socs = []       # (family, t, [exprs])      ||exprs|| <= t
        self.rsocs = []      # (family, x, y, [exprs])   x*y >= ||exprs||^2, x, y >= 0

    # ---- 变量 ----
    def add_vars(self, name, shape=(), lb=None, ub=None):
        if name in self.blocks:
            raise ValueError(f"变量块重名: {name}")
        shape = tuple(int(d) for d in np.atleast_1d(shape)) if shape != () else ()
        size = int(np.prod(shape)) if shape else 1
        idx = np.arange(self.n_vars, self.n_vars + size).reshape(shape)
        self.n_vars += size
        self.blocks[name] = idx
        if shape:
            self.var_names.extend(f"{name}{list(map(int, pos))}" for pos in np.ndindex(*shape))
        else:
            self.var_names.append(name)
        exprs = np.empty(shape, dtype=object)
        flat = exprs.reshape(-1) if shape else None
        if shape:
            for k, i in enumerate(idx.ravel()):
                flat[k] = AffineExpr({int(i): 1.0})
        else:
            exprs = AffineExpr({int(idx): 1.0})
        for e in np.asarray(exprs, dtype=object).ravel():
            if lb is not None:
                self.add_ge(e, lb, family=f"{name}_lb")
            if ub is not None:
                self.add_le(e, ub, family=f"{name}_ub")
        return exprs

    def extract(self, x, name):
        return np.asarray(x)[self.blocks[name]]

    # ---- 约束 ----
    def add_eq(self, lhs, rhs=0.0, family="eq"):
        self.eqs.append((family, AffineExpr.lift(lhs) - rhs))

    def add_ge(self, lhs, rhs=0.0, family="ineq"):
        self.ineqs.append((family, AffineExpr.lift(lhs) - rhs))

    def add_le(self, lhs, rhs=0.0, family="ineq"):
        self.ineqs.append((family, AffineExpr.lift(rhs) - lhs))

    def add_soc(self, t, exprs, family="soc"):
        exprs = [AffineExpr.lift(e) for e in np.asarray(exprs, dtype=object).ravel()]
        if not exprs:
            self.add_ge(t, 0.0, family=family)
            return
        self.socs.append((family, AffineExpr.lift(t), exprs))

    def add_rsoc(self, x, y, exprs, family="rsoc"):
        exprs = [AffineExpr.lift(e) for e in np.asarray(exprs, dtype=object).ravel()]
        if not exprs:
            self.add_ge(x, 0.0, family=family)
            self.add_ge(y, 0.0, family=family)
            return
        self.rsocs.append((family, AffineExpr.lift(x), AffineExpr.lift(y), exprs))

    def minimize(self, expr):
        self.objective = AffineExpr.lift(expr)

    def families(self):
        seen = []
        for group in (self.eqs, self.ineqs, self.socs, self.rsocs):
            for item in group:
                if item[0] not in seen:
                    seen.append(item[0])
        return seen

    def violated_families(self, x, tol=1e-6):
        """在点 x 处被违反的约束族，按添加顺序"""
        out = []

        def mark(family, viol, scale):
            if viol > tol * max(1.0, scale) and family not in out:
                out.append(family)

        for family, e in self.eqs:
            v = e.value(x)
            mark(family, abs(v), abs(e.const))
        for family, e in self.ineqs:
            mark(family, -e.value(x), abs(e.const))
        for family, t, zs in self.socs:
            tv = t.value(x)
            mark(family, np.linalg.norm([z.value(x) for z in zs]) - tv, abs(tv))
        for family, a, b, zs in self.rsocs:
            av, bv = a.value(x), b.value(x)
            lhs = float(np.sum(np.square([z.value(x) for z in zs])))
            mark(family, max(lhs - av * bv, -av, -bv), abs(av * bv))
        return out

    def validate(self):
        exprs = [self.objective]
        exprs += [e for _, e in self.eqs] + [e for _, e in self.ineqs]
        for _, t, zs in self.socs:
            exprs += [t] + zs
        for _, x, y, zs in self.rsocs:
            exprs += [x, y] + zs
        worst = max((e.max_index() for e in exprs), default=-1)
        if worst >= self.n_vars:
            raise ValueError(f"{self.name}: 约束引用了不存在的变量 x{worst}")

    # ---- 标准型 ----
    def compile(self):
        self.validate()
        rows, cols, data, b = [], [], [], []

        def push(expr):
            r = len(b)
            for i, c in expr.terms.items():
                rows.append(r)
                cols.append(i)
                data.append(-c)
            b.append(expr.const)

        for _, e in self.eqs:
            push(e)
        for _, e in self.ineqs:
            push(e)
        soc_dims = []
        for _, t, zs in self.socs:
            push(t)
            for z in zs:
                push(z)
            soc_dims.append(1 + len(zs))
        for _, x, y, zs in self.rsocs:
            # x*y >= ||z||^2  <=>  ||(2z, x-y)|| <= x+y
            push(x + y)
            for z in zs:
                push(2.0 * z)
            push(x - y)
            soc_dims.append(2 + len(zs))

        A = sparse.csc_matrix((data, (rows, cols)), shape=(len(b), self.n_vars))
        q = np.zeros(self.n_vars)
        for i, c in self.objective.terms.items():
            q[i] += c
        return StandardForm(q, A, np.asarray(b, dtype=float), len(self.eqs), len(self.ineqs),
                            soc_dims, self.objective.const)

    # ---- 调试导出 ----
    def dump(self, path):
        """
        文本格式，每行一个约束:
          var <index> <name>
          min <expr>
          eq <family> : <expr> = 0
          ge <family> : <expr> >= 0
          soc <family> : || <e1> ; <e2> ... || <= <t>
          rsoc <family> : (<x>) * (<y>) >= || <e1> ; ... ||^2
        """
        with open(path, "w") as f:
            f.write(f"# {self.name}: {self.n_vars} vars\n")
            for i, name in enumerate(self.var_names):
                f.write(f"var {i} {name}\n")
            f.write(f"min {self.objective!r}\n")
            for family, e in self.eqs:
                f.write(f"eq {family} : {e!r} = 0\n")
            for family, e in self.ineqs:
                f.write(f"ge {family} : {e!r} >= 0\n")
            for family, t, zs in self.socs:
                f.write(f"soc {family} : || {' ; '.join(map(repr, zs))} || <= {t!r}\n")
            for family, x, y, zs in self.rsocs:
                f.write(f"rsoc {family} : ({x!r}) * ({y!r}) >= || {' ; '.join(map(repr, zs))} ||^2\n")


def cone_violation(form, x):
    """独立于后端的残差检查：返回相对最大违反量"""
    s = form.b - form.A @ x
    viol = 0.0
    if form.n_zero:
        viol = max(viol, float(np.max(np.abs(s[:form.n_zero]))))
    start = form.n_zero
    if form.n_nonneg:
        viol = max(viol, float(np.max(np.maximum(-s[start:start + form.n_nonneg], 0.0))))
    start += form.n_nonneg
    for d in form.soc_dims:
        block = s[start:start + d]
        viol = max(viol, float(np.linalg.norm(block[1:]) - block[0]))
        start += d
    scale = max(1.0, float(np.max(np.abs(form.b), initial=0.0)), float(np.max(np.abs(x), initial=0.0)),
                float(np.max(np.abs(s), initial=0.0)))
    return max(viol, 0.0) / scale


class ClarabelBackend:
    name = "clarabel"

    _STATUS = {
        "Solved": OPTIMAL,
        "AlmostSolved": OPTIMAL,
        "PrimalInfeasible": INFEASIBLE,
        "AlmostPrimalInfeasible": INFEASIBLE,
        "DualInfeasible": UNBOUNDED,
        "AlmostDualInfeasible": UNBOUNDED,
    }

    def solve(self, form, tol, max_iter):
        import clarabel

        n = len(form.q)
        P = sparse.csc_matrix((n, n))
        cones = []
        if form.n_zero:
            cones.append(clarabel.ZeroConeT(form.n_zero))
        if form.n_nonneg:
            cones.append(clarabel.NonnegativeConeT(form.n_nonneg))
        cones.extend(clarabel.SecondOrderConeT(d) for d in form.soc_dims)

        settings = clarabel.DefaultSettings()
        settings.verbose = False
        settings.max_iter = max_iter
        settings.tol_feas = tol
        settings.tol_gap_abs = tol
        settings.tol_gap_rel = tol

        solver = clarabel.DefaultSolver(P, form.q, form.A, form.b, cones, settings)
        sol = solver.solve()
        status_name = str(sol.status).split(".")[-1]
        status = self._STATUS.get(status_name, NUMERICAL_LIMIT)
        x = None
        if status in (OPTIMAL, NUMERICAL_LIMIT):
            x = np.asarray(sol.x, dtype=float)
            if x.shape != form.q.shape or not np.all(np.isfinite(x)):
                x, status = None, NUMERICAL_LIMIT
        return status, x, int(sol.iterations)


class CvxpyBackend:
    name = "cvxpy"

    def solve(self, form, tol, max_iter):
        import cvxpy as cp

        n = len(form.q)
        x = cp.Variable(n)
        s = form.b - form.A @ x
        constraints = []
        if form.n_zero:
            constraints.append(s[:form.n_zero] == 0)
        start = form.n_zero
        if form.n_nonneg:
            constraints.append(s[start:start + form.n_nonneg] >= 0)
        start += form.n_nonneg
        for d in form.soc_dims:
            constraints.append(cp.SOC(s[start], s[start + 1:start + d]))
            start += d
        prob = cp.Problem(cp.Minimize(form.q @ x), constraints)
        try:
            prob.solve(solver=cp.CLARABEL, verbose=False, max_iter=max_iter,
                       tol_feas=tol, tol_gap_abs=tol, tol_gap_rel=tol)
        except cp.error.SolverError as e:
            logger.debug("cvxpy 求解异常: %s", e)
            return NUMERICAL_LIMIT, None, 0

        if prob.status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
            status = OPTIMAL
        elif prob.status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
            status = INFEASIBLE
        elif prob.status in (cp.UNBOUNDED, cp.UNBOUNDED_INACCURATE):
            status = UNBOUNDED
        else:
            status = NUMERICAL_LIMIT
        iters = prob.solver_stats.num_iters if prob.solver_stats and prob.solver_stats.num_iters else 0
        values_ = np.asarray(x.value, dtype=float) if status == OPTIMAL and x.value is not None else None
        if status == OPTIMAL and values_ is None:
            status = NUMERICAL_LIMIT
        return status, values_, int(iters)


BACKENDS = {
    "clarabel": ClarabelBackend,
    "cvxpy": CvxpyBackend,
}


def get_backend(name):
    try:
        return BACKENDS[name]()
    except KeyError:
        raise ValueError(f"未知的求解后端: {name}（可选 {', '.join(BACKENDS)}）") from None


def solve(program, tol=DEFAULT_TOL, backend="clarabel", max_iter=DEFAULT_MAX_ITER):
    """
    求解 ConicProgram
    status=optimal 时以 10*tol 做一次独立的锥约束复核，复核失败降级为 numerical-limit
    numerical-limit 时保留后端的最后迭代点，是否可用见 SolveReport.usable
    """
    engine = get_backend(backend) if isinstance(backend, str) else backend
    form = program.compile()
    start = time.perf_counter()
    status, x, iters = engine.solve(form, tol, max_iter)
    elapsed = time.perf_counter() - start

    objective = float("nan")
    violation = float("nan")
    if x is not None:
        violation = cone_violation(form, x)
        objective = float(form.q @ x + form.objective_const)
        if status == OPTIMAL and violation > 10 * tol:
            logger.warning("%s: 后端返回 optimal 但复核违反量 %.3g > %.3g，降级为 numerical-limit",
                           program.name, violation, 10 * tol)
            status = NUMERICAL_LIMIT
    logger.debug("%s: status=%s, obj=%.6g, iters=%d, %.1f ms", program.name, status, objective, iters,
                 elapsed * 1e3)
    return SolveReport(status, x, objective, iters, elapsed, violation, engine.name)


# ---- 锥构造 ----

EXP_CHAIN_CONSTANTS = (19 / 72, 5 / 3, 1 / 24)


def exp_chain(program, t, alpha, nu=6, family="exp_chain"):
    """
    e^t <= 1 + alpha 的 SOC 链式近似，引入 nu+4 个松弛变量 k_1..k_{nu+4}
    k_4 >= 1 + x + x^2/2 + x^3/6 + x^4/24（x = t/2^nu），k_{nu+4} >= k_4^(2^nu)
    """
    if nu < 1:
        raise ValueError("nu 必须 >= 1")
    c0, c_half, c_quart = EXP_CHAIN_CONSTANTS
    t = AffineExpr.lift(t)
    alpha = AffineExpr.lift(alpha)
    tag = f"{family}_k{len(program.blocks)}"
    k = program.add_vars(tag, nu + 4)

    program.add_le(k[nu + 3], 1.0 + alpha, family=family)
    program.add_soc(1.0 + k[0], [2.0 + t / 2 ** (nu - 1), 1.0 - k[0]], family=family)
    program.add_soc(1.0 + k[1], [c_half + t / 2 ** nu, 1.0 - k[1]], family=family)
    program.add_soc(1.0 + k[2], [2.0 * k[0], 1.0 - k[2]], family=family)
    program.add_le(c0 + k[1] + c_quart * k[2], k[3], family=family)
    for i in range(4, nu + 4):
        program.add_soc(1.0 + k[i], [2.0 * k[i - 1], 1.0 - k[i]], family=family)
    # 保证 1 + t/2^nu >= 0，链在该区间内关于 t 单调
    program.add_ge(t, -(2.0 ** nu), family=f"{family}_domain")
    return k


def geomean_hypograph(program, t_exprs, g, family="geomean"):
    """
    g <= (Π t_u)^(1/U) 的二叉旋转锥树
    非 2 的幂时用 g 自身补齐叶子（g^n <= Π t · g^(n-U) 等价于 g^U <= Π t）
    """
    leaves = [AffineExpr.lift(t) for t in np.asarray(t_exprs, dtype=object).ravel()]
    if not leaves:
        raise ValueError("geomean_hypograph 至少需要一个变量")
    g = AffineExpr.lift(g)
    if len(leaves) == 1:
        program.add_le(g, leaves[0], family=family)
        program.add_ge(leaves[0], 0.0, family=family)
        return
    n = 1
    while n < len(leaves):
        n *= 2
    level = leaves + [g] * (n - len(leaves))
    depth = 0
    while len(level) > 1:
        nodes = program.add_vars(f"{family}_tree{len(program.blocks)}_{depth}", len(level) // 2)
        for i, node in enumerate(nodes):
            program.add_rsoc(level[2 * i], level[2 * i + 1], [node], family=family)
        level = list(nodes)
        depth += 1
    program.add_le(g, level[0], family=family)


def quad_epigraph(program, exprs, s, family="quad_epigraph"):
    """s >= ||exprs||^2（旋转锥 s * 1 >= ||exprs||^2）"""
    program.add_rsoc(s, 1.0, exprs, family=family)
