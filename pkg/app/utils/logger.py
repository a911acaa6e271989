"""
日志配置模块

日志统一写到 stderr（可选再写文件），stdout 只留给命令行的结果输出；
回合级日志通过 episode_logger() 自动带上 [控制器|目标] 前缀。
"""

import logging
import sys
from pathlib import Path
from typing import TYPE_CHECKING, Any, MutableMapping, Optional, Tuple

if TYPE_CHECKING:
    from ..config import LoggingSettings

DEFAULT_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

# 第三方库日志只保留警告以上
_NOISY_LOGGERS = ("PIL", "asyncio")

_initialized = False
_file_handler: Optional[logging.FileHandler] = None


def init_logging(
    level: str = "INFO",
    log_format: Optional[str] = None,
    file_enabled: bool = False,
    file_path: Optional[str] = None,
    force: bool = False,
) -> None:
    """
    配置根 logger

    Args:
        level: 日志级别
        log_format: 日志格式
        file_enabled: 是否同时写文件
        file_path: 日志文件路径
        force: 已初始化时是否重新配置（加载 --config 后使用）
    """
    global _initialized, _file_handler

    if _initialized and not force:
        return

    log_level = getattr(logging, level.upper(), logging.INFO)
    formatter = logging.Formatter(log_format or DEFAULT_FORMAT)

    handlers = []
    console = logging.StreamHandler(sys.stderr)
    console.setFormatter(formatter)
    handlers.append(console)

    if _file_handler is not None:
        _file_handler.close()
        _file_handler = None
    if file_enabled and file_path:
        Path(file_path).parent.mkdir(parents=True, exist_ok=True)
        _file_handler = logging.FileHandler(file_path, encoding="utf-8")
        _file_handler.setFormatter(formatter)
        handlers.append(_file_handler)

    root = logging.getLogger()
    root.handlers.clear()
    root.setLevel(log_level)
    for handler in handlers:
        handler.setLevel(log_level)
        root.addHandler(handler)
    for name in _NOISY_LOGGERS:
        logging.getLogger(name).setLevel(max(log_level, logging.WARNING))

    _initialized = True


def init_logging_from(cfg: "LoggingSettings", force: bool = False) -> None:
    """按配置段初始化日志"""
    init_logging(
        level=cfg.level,
        log_format=cfg.format,
        file_enabled=cfg.file_enabled,
        file_path=cfg.file_path,
        force=force,
    )


def get_logger(name: str = "pruning_sim") -> logging.Logger:
    """
    获取 logger 实例

    尚未初始化时按默认配置文件中的 logging 段初始化
    """
    if not _initialized:
        try:
            from ..config import settings
            init_logging_from(settings.logging)
        except Exception:
            init_logging()
    return logging.getLogger(name)


class EpisodeLogAdapter(logging.LoggerAdapter):
    """给每条消息加上 [控制器|目标 N] 前缀"""

    def process(self, msg: Any, kwargs: MutableMapping[str, Any]) -> Tuple[Any, MutableMapping[str, Any]]:
        return f"[{self.extra['controller']}|目标 {self.extra['target_id']}] {msg}", kwargs


def episode_logger(logger: logging.Logger, controller: str, target_id: int) -> EpisodeLogAdapter:
    return EpisodeLogAdapter(logger, {"controller": controller, "target_id": target_id})
