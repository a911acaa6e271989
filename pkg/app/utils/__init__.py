"""
工具模块
"""

from .logger import episode_logger, get_logger, init_logging, init_logging_from
from .image_utils import write_ppm, read_ppm, frame_path
from .memory_utils import cleanup_memory, get_memory_info, log_memory_status
from .seeding import derive_seed, make_rng

__all__ = [
    "episode_logger",
    "init_logging",
    "init_logging_from",
    "get_logger",
    "write_ppm",
    "read_ppm",
    "frame_path",
    "cleanup_memory",
    "get_memory_info",
    "log_memory_status",
    "derive_seed",
    "make_rng",
]
