"""实验编排：配置、计数、Monte Carlo 运行、报告与命令行"""
