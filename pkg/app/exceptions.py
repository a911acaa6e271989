"""
异常定义模块

所有库代码抛出的异常都继承自 PruningError，
命令行入口据此映射退出码（配置错误 1，运行时错误 2）
"""


class PruningError(Exception):
    """剪枝仿真异常基类"""


class ConfigError(PruningError):
    """配置文件缺失、无法解析或取值非法"""


class DimensionError(PruningError, ValueError):
    """图像或张量尺寸不符合约定"""


class NotCuttableError(PruningError):
    """目标枝条与刀具切割平面不相交"""


class EpisodeProtocolError(PruningError, RuntimeError):
    """回合协议错误（例如在终止后继续 step）"""


class PlacementError(PruningError):
    """多次重采样后仍无法放置刀具初始位姿，或场景无法满足侧枝 / 目标数量要求"""


class NonFiniteLossError(PruningError, FloatingPointError):
    """PPO 更新中出现非有限损失"""

    def __init__(self, message: str, diagnostics: dict = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class CheckpointError(PruningError):
    """策略检查点缺失或格式错误"""


class ExportError(PruningError, OSError):
    """文件导出失败（PPM / CSV）"""
