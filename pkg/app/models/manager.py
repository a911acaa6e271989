"""
策略管理模块

按检查点路径懒加载并缓存策略网络
"""

import threading
from pathlib import Path
from typing import Dict, Optional, Union

from ..utils.logger import get_logger
from .checkpoint import load_checkpoint
from .policy import GreedyPolicy, PolicyNet

logger = get_logger(__name__)


class PolicyManager:
    """
    策略管理器

    单例模式；同一进程内同一检查点只加载一次，多个试验线程共享只读网络。
    """

    _instance: Optional["PolicyManager"] = None

    def __new__(cls) -> "PolicyManager":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
            cls._instance._initialized = False
        return cls._instance

    def __init__(self):
        if self._initialized:
            return
        self._nets: Dict[str, PolicyNet] = {}
        self._lock = threading.Lock()
        self._initialized = True

    def is_loaded(self, path: Union[str, Path]) -> bool:
        return str(Path(path).resolve()) in self._nets

    def get_net(self, path: Union[str, Path]) -> PolicyNet:
        key = str(Path(path).resolve())
        with self._lock:
            if key not in self._nets:
                logger.info(f"正在加载策略检查点: {path}")
                self._nets[key] = load_checkpoint(path)
                logger.info("✅ 策略加载完成")
            return self._nets[key]

    def get_policy(self, path: Union[str, Path]) -> GreedyPolicy:
        return GreedyPolicy(self.get_net(path))

    def unload_all(self) -> None:
        with self._lock:
            self._nets.clear()
        logger.info("所有策略已卸载")


def get_policy_manager() -> PolicyManager:
    """获取策略管理器实例"""
    return PolicyManager()
