"""
图像处理工具模块

分割图像以二进制 PPM (P6) 落盘与读回，以及帧数据集目录布局
"""

from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image

from ..exceptions import ExportError
from .logger import get_logger

logger = get_logger(__name__)

PathLike = Union[str, Path]


def write_ppm(pixels: np.ndarray, path: PathLike) -> Path:
    """
    将 HxWx3 的 uint8 像素写为二进制 PPM

    Args:
        pixels: 像素数组
        path: 目标路径

    Returns:
        写入的文件路径
    """
    if path is None or str(path) == "":
        raise ExportError("PPM 导出路径为空")
    if pixels.dtype != np.uint8 or pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ExportError(f"PPM 只支持 HxWx3 uint8 图像，实际 {pixels.dtype} {pixels.shape}")

    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(np.ascontiguousarray(pixels)).save(path, format="PPM")
    except (OSError, ValueError) as e:
        raise ExportError(f"PPM 写入失败 {path}: {e}") from e

    logger.debug(f"PPM 已保存: {path} ({pixels.shape[1]}x{pixels.shape[0]})")
    return path


def read_ppm(path: PathLike) -> np.ndarray:
    """读取 PPM 文件为 HxWx3 uint8 数组"""
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"), dtype=np.uint8).copy()
    except (OSError, ValueError) as e:
        raise ExportError(f"PPM 读取失败 {path}: {e}") from e


def frame_path(root: PathLike, episode: int, step: int) -> Path:
    """帧数据集布局: frames/ep{N}/step{M}.ppm"""
    return Path(root) / "frames" / f"ep{episode}" / f"step{step}.ppm"
