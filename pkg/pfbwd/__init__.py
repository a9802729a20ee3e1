"""
pfbwd - cell-free HAPS-MBS 垂直异构网络的分布式比例公平波束成形
两级算法（ALM 外层 + 三块 ADMM 内层）、集中式 SCA 基线与实验框架
"""

__version__ = "0.3.0"
