"""
内存监控

PPO 更新之间、每个试验任务之后记录进程内存；批量试验结束时回收一次。
"""

import gc
from dataclasses import asdict, dataclass
from typing import Any, Dict

import psutil
import torch

from .logger import get_logger

logger = get_logger(__name__)

_MB = 1024 ** 2


@dataclass(frozen=True)
class MemorySnapshot:
    rss_mb: float
    system_percent: float
    torch_threads: int


def snapshot() -> MemorySnapshot:
    try:
        rss = psutil.Process().memory_info().rss / _MB
        percent = float(psutil.virtual_memory().percent)
    except psutil.Error as e:
        logger.warning(f"获取进程内存信息失败: {e}")
        rss, percent = 0.0, 0.0
    return MemorySnapshot(rss_mb=rss, system_percent=percent, torch_threads=torch.get_num_threads())


def get_memory_info() -> Dict[str, Any]:
    """当前内存信息（字典形式，便于写入日志或 JSON）"""
    return asdict(snapshot())


def cleanup_memory() -> Dict[str, Any]:
    """
    触发一次垃圾回收

    Returns:
        回收前后的快照与释放量 (MB)
    """
    before = snapshot()
    collected = gc.collect()
    after = snapshot()
    freed = max(0.0, before.rss_mb - after.rss_mb)
    logger.debug(f"内存清理完成 | 回收对象: {collected} | RSS 释放: {freed:.1f}MB")
    return {"before": asdict(before), "after": asdict(after), "freed_mb": freed}


def log_memory_status(prefix: str = "") -> None:
    """
    记录当前内存状态（DEBUG 级别）

    Args:
        prefix: 日志前缀，标识调用位置
    """
    snap = snapshot()
    logger.debug(
        f"{prefix or '内存状态'} | 进程内存(RSS): {snap.rss_mb:.1f}MB | "
        f"系统占用: {snap.system_percent:.0f}% | torch 线程: {snap.torch_threads}"
    )
