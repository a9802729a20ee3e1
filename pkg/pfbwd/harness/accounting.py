"""计算复杂度（锥维度）与信令开销估计"""

from pfbwd.inner import broadcast_scalars

MODES = ("distributed", "centralized")


def _check(U, N_list, mode):
    if mode not in MODES:
        raise ValueError(f"mode 需为 {MODES} 之一: {mode}")
    if U < 0 or any(n < 0 for n in N_list):
        raise ValueError("U 与天线数不能为负")


def cone_dimensions(U, N_list):
    """每个 BS 子问题的锥维度 U² + N_b·U"""
    return [U * U + n * U for n in N_list]


def complexity_estimate(U, N_list, mode):
    """
    distributed: max_b (U² + N_b U)，各 BS 并行求解取最大者
    centralized: Σ_b (U² + N_b U)
    返回 (维度, 复杂度描述)
    """
    _check(U, N_list, mode)
    dims = cone_dimensions(U, N_list)
    dim = max(dims, default=0) if mode == "distributed" else sum(dims)
    return dim, f"O({dim}^3.5)"


def signaling_estimate(U, N_list, mode, signaling_mode="compact"):
    """
    每个 BS 交换的实数个数
    distributed: 每次内层迭代 3U（strict 模式 4U），对所有 BS 相同
    centralized: 上传 CSI 2·N_b·U
    """
    _check(U, N_list, mode)
    if mode == "distributed":
        return [broadcast_scalars(U, signaling_mode) for _ in N_list]
    return [2 * n * U for n in N_list]


def comparison_table(U, mbs_antennas, haps_antennas, num_mbs):
    """复杂度与信令对比表：(分布式维度, 集中式维度, 分布式信令, MBS 集中式信令, HAPS 集中式信令)"""
    N_list = [mbs_antennas] * num_mbs + [haps_antennas]
    central = signaling_estimate(U, N_list, "centralized")
    return {
        "distributed_dim": complexity_estimate(U, N_list, "distributed")[0],
        "centralized_dim": complexity_estimate(U, N_list, "centralized")[0],
        "distributed_signaling": signaling_estimate(U, N_list, "distributed")[0],
        "centralized_signaling_mbs": central[0] if num_mbs else 0,
        "centralized_signaling_haps": central[-1],
    }
