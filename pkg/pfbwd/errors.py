"""异常类型：库代码只抛出，CLI 负责转换为退出码"""


class PfbwdError(Exception):
    pass


class ConfigError(PfbwdError, ValueError):
    """配置文件或命令行参数非法（CLI 退出码 1）"""


class ChannelDomainError(PfbwdError, ValueError):
    """几何/数值定义域错误，例如 UE 与 BS 重合（d = 0）"""


class SolverError(PfbwdError, RuntimeError):
    """
    求解失败（CLI 退出码 2）
    outer_iter / inner_iter / bs 由调用方在已知时补上，字符串形式附带 (k=.., t=.., bs=..)
    """

    def __init__(self, message, status=None, bs=None, inner_iter=None, outer_iter=None):
        super().__init__(message)
        self.status = status
        self.bs = bs
        self.inner_iter = inner_iter
        self.outer_iter = outer_iter

    def locate(self, inner_iter=None, outer_iter=None):
        """补充迭代位置，已有的值不覆盖"""
        if self.inner_iter is None:
            self.inner_iter = inner_iter
        if self.outer_iter is None:
            self.outer_iter = outer_iter
        return self

    def __str__(self):
        where = []
        if self.outer_iter is not None:
            where.append(f"k={self.outer_iter}")
        if self.inner_iter is not None:
            where.append(f"t={self.inner_iter}")
        if self.bs is not None:
            where.append(f"bs={self.bs}")
        base = super().__str__()
        return f"{base} ({', '.join(where)})" if where else base


class AnchorInitError(SolverError):
    """Block 1 的第一次 SCA 迭代不可行：锚点初始化失败"""

    def __init__(self, message, status=None, diagnostics=None, inner_iter=None, outer_iter=None):
        super().__init__(message, status, inner_iter=inner_iter, outer_iter=outer_iter)
        self.diagnostics = diagnostics or {}


class SubproblemError(SolverError):
    """某个 BS 的子问题失败，附带 BS 编号与迭代位置"""


class BaselineInfeasible(SolverError):
    """集中式基线不可行，family 为首个被违反的约束族"""

    def __init__(self, message, status=None, family=None):
        super().__init__(message, status)
        self.family = family
