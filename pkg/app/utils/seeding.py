"""
种子派生

实验中的每个随机量都由 (主种子, 若干标签) 派生，
因此结果与调度顺序、并行度无关。
"""

import hashlib
from typing import Union

import numpy as np

SeedPart = Union[int, str]

_MASK64 = (1 << 64) - 1


def derive_seed(*parts: SeedPart) -> int:
    """由任意整数/字符串标签派生 64 位种子（blake2b）"""
    text = "|".join(f"{type(p).__name__}:{p}" for p in parts)
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") & _MASK64


def make_rng(*parts: SeedPart) -> np.random.Generator:
    """派生种子并构造 numpy 随机数发生器"""
    return np.random.default_rng(derive_seed(*parts))
