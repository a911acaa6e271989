"""
策略检查点

二进制格式（全部小端）：
    magic      4 字节  b"PRNC"
    version    u32
    arch_len   u32     随后 arch_len 字节 UTF-8 JSON（ArchConfig）
    count      u32     张量个数
    每个张量:
        name_len u16, name (UTF-8)
        ndim     u8,  dims u32 × ndim
        data     float32 × prod(dims)
"""

import json
import struct
from pathlib import Path
from typing import BinaryIO, Union

import numpy as np
import torch

from ..config import ArchConfig
from ..exceptions import CheckpointError, ExportError
from ..utils.logger import get_logger
from .policy import PolicyNet

logger = get_logger(__name__)

MAGIC = b"PRNC"
VERSION = 1


def save_checkpoint(net: PolicyNet, path: Union[str, Path]) -> Path:
    """写出检查点，返回路径"""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as f:
            arch = json.dumps(net.arch.model_dump(), sort_keys=True).encode("utf-8")
            state = net.state_dict()
            f.write(MAGIC)
            f.write(struct.pack("<II", VERSION, len(arch)))
            f.write(arch)
            f.write(struct.pack("<I", len(state)))
            for name, tensor in state.items():
                encoded = name.encode("utf-8")
                data = tensor.detach().cpu().numpy().astype("<f4")
                f.write(struct.pack("<H", len(encoded)))
                f.write(encoded)
                f.write(struct.pack("<B", data.ndim))
                f.write(struct.pack(f"<{data.ndim}I", *data.shape))
                f.write(data.tobytes(order="C"))
    except OSError as e:
        raise ExportError(f"检查点写入失败 {path}: {e}") from e
    logger.info(f"检查点已保存: {path}")
    return path


def _read(f: BinaryIO, n: int) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise CheckpointError("检查点文件被截断")
    return data


def load_checkpoint(path: Union[str, Path]) -> PolicyNet:
    """
    读取检查点并重建网络

    Raises:
        CheckpointError: 文件缺失、魔数/版本不符、结构与张量不一致
    """
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"检查点不存在: {path}")
    with open(path, "rb") as f:
        if _read(f, 4) != MAGIC:
            raise CheckpointError(f"不是策略检查点文件: {path}")
        version, arch_len = struct.unpack("<II", _read(f, 8))
        if version != VERSION:
            raise CheckpointError(f"不支持的检查点版本 {version}")
        try:
            arch = ArchConfig(**json.loads(_read(f, arch_len).decode("utf-8")))
        except (ValueError, TypeError) as e:
            raise CheckpointError(f"检查点网络结构非法: {e}") from e

        (count,) = struct.unpack("<I", _read(f, 4))
        tensors = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read(f, 2))
            name = _read(f, name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", _read(f, 1))
            dims = struct.unpack(f"<{ndim}I", _read(f, 4 * ndim)) if ndim else ()
            size = int(np.prod(dims)) if dims else 1
            data = np.frombuffer(_read(f, 4 * size), dtype="<f4").reshape(dims)
            tensors[name] = torch.from_numpy(data.astype(np.float32))
        if f.read(1):
            raise CheckpointError("检查点末尾有多余数据")

    net = PolicyNet(arch)
    try:
        net.load_state_dict(tensors, strict=True)
    except RuntimeError as e:
        raise CheckpointError(f"检查点张量与网络结构不匹配: {e}") from e
    return net.eval()
