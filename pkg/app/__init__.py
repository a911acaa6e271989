"""
Pruning Sim - 果树剪枝视觉伺服与导纳控制仿真
"""

__version__ = "1.0.0"
