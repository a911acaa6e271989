"""
梯度校验

在双精度副本上比较自动微分梯度与中心差分梯度。
"""

import copy
from typing import Callable, Iterable, Optional

import torch

from ..config import ArchConfig
from .policy import PolicyNet, build_policy

LossFn = Callable[[PolicyNet, torch.Tensor], torch.Tensor]
GradHook = Callable[[str, torch.Tensor], torch.Tensor]


def reduced_arch() -> ArchConfig:
    """8x8 输入的缩小网络：3 层卷积 -> 16 维展平 -> 8 维特征"""
    return ArchConfig(
        conv_layers=[[4, 3, 1], [4, 3, 1], [4, 2, 2]],
        feature_dim=8,
        in_channels=3,
        input_height=8,
        input_width=8,
    )


def build_reduced_net(seed: int = 0) -> PolicyNet:
    return build_policy(reduced_arch(), seed)


def output_loss(net: PolicyNet, obs: torch.Tensor) -> torch.Tensor:
    """动作均值与价值的二次型（对单个参数分段二次，中心差分无截断误差）"""
    mean, value = net(obs)
    return 0.5 * (mean ** 2).sum() + 0.5 * (value ** 2).sum() + mean.sum()


def grad_check(
    net: PolicyNet,
    obs: torch.Tensor,
    loss: Optional[LossFn] = None,
    h: float = 1e-5,
    params: Optional[Iterable[str]] = None,
    perturb: Optional[GradHook] = None,
) -> float:
    """
    解析梯度 vs 中心差分

    Args:
        net: 被检查的网络（不修改，内部使用双精度副本）
        obs: 输入观测 (B, C, H, W)
        loss: 标量损失函数，默认 output_loss
        h: 差分步长
        params: 只检查这些参数名（None 表示全部）
        perturb: 对解析梯度的注入变换 (name, grad) -> grad

    Returns:
        最大相对误差 |a - n| / max(|a|, |n|, 1e-6)
    """
    loss = loss or output_loss
    model = copy.deepcopy(net).double()
    obs = obs.double()
    names = set(params) if params is not None else None

    model.zero_grad()
    loss(model, obs).backward()

    worst = 0.0
    with torch.no_grad():
        for name, param in model.named_parameters():
            if names is not None and name not in names:
                continue
            analytic = param.grad.detach().clone() if param.grad is not None else torch.zeros_like(param)
            if perturb is not None:
                analytic = perturb(name, analytic)
            flat = param.view(-1)
            numeric = torch.zeros_like(flat)
            for i in range(flat.numel()):
                original = flat[i].item()
                flat[i] = original + h
                plus = loss(model, obs).item()
                flat[i] = original - h
                minus = loss(model, obs).item()
                flat[i] = original
                numeric[i] = (plus - minus) / (2 * h)
            a = analytic.view(-1)
            denom = torch.maximum(torch.maximum(a.abs(), numeric.abs()), torch.full_like(a, 1e-6))
            worst = max(worst, float(((a - numeric).abs() / denom).max()))
    return worst
