"""
策略网络

三层卷积 + 一层全连接的特征提取器，actor/critic 共享特征；
actor 输出二维动作均值与状态无关的 log 标准差，critic 输出标量价值。
"""

import math
from typing import Iterable, Optional, Protocol, Sequence, Tuple, Union

import numpy as np
import torch
from torch import nn

from ..config import ArchConfig
from ..exceptions import DimensionError
from ..sim.camera import SegmentedImage
from ..sim.env import PolicyAction

ObsLike = Union[SegmentedImage, np.ndarray]

_LOG_2PI = math.log(2.0 * math.pi)


class PolicyNet(nn.Module):
    """
    卷积 actor-critic 网络

    输入为 (B, C, H, W)、取值 [0, 1] 的浮点张量。
    """

    def __init__(self, arch: ArchConfig):
        super().__init__()
        self.arch = arch

        layers = []
        in_ch = arch.in_channels
        for out_ch, kernel, stride in arch.conv_layers:
            layers += [nn.Conv2d(in_ch, out_ch, kernel_size=kernel, stride=stride), nn.ReLU()]
            in_ch = out_ch
        layers.append(nn.Flatten())
        self.cnn = nn.Sequential(*layers)

        with torch.no_grad():
            dummy = torch.zeros(1, arch.in_channels, arch.input_height, arch.input_width)
            n_flatten = self.cnn(dummy).shape[1]
        if n_flatten <= 0:
            raise DimensionError(f"输入 {arch.input_width}x{arch.input_height} 对卷积层过小")
        self.n_flatten = n_flatten

        self.linear = nn.Sequential(nn.Linear(n_flatten, arch.feature_dim), nn.ReLU())
        self.actor = nn.Linear(arch.feature_dim, 2)
        self.critic = nn.Linear(arch.feature_dim, 1)
        self.log_std = nn.Parameter(torch.full((2,), float(arch.log_std_init)))

        self._init_weights()

    def _init_weights(self) -> None:
        """正交初始化：特征层 √2，actor 0.01，critic 1"""
        for module in list(self.cnn) + list(self.linear):
            if isinstance(module, (nn.Conv2d, nn.Linear)):
                nn.init.orthogonal_(module.weight, gain=math.sqrt(2))
                nn.init.zeros_(module.bias)
        nn.init.orthogonal_(self.actor.weight, gain=0.01)
        nn.init.zeros_(self.actor.bias)
        nn.init.orthogonal_(self.critic.weight, gain=1.0)
        nn.init.zeros_(self.critic.bias)

    def zero_heads(self) -> None:
        """把 actor/critic 最后一层清零"""
        with torch.no_grad():
            for head in (self.actor, self.critic):
                head.weight.zero_()
                head.bias.zero_()

    def check_input(self, obs: torch.Tensor) -> None:
        expected = (self.arch.in_channels, self.arch.input_height, self.arch.input_width)
        if obs.dim() != 4 or tuple(obs.shape[1:]) != expected:
            raise DimensionError(f"观测尺寸 {tuple(obs.shape)} 与网络输入 (B, {expected}) 不符")

    def forward(self, obs: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        self.check_input(obs)
        features = self.linear(self.cnn(obs))
        return self.actor(features), self.critic(features).squeeze(-1)

    def distribution(self, obs: torch.Tensor) -> Tuple[torch.distributions.Normal, torch.Tensor]:
        mean, value = self(obs)
        std = self.log_std.exp().expand_as(mean)
        return torch.distributions.Normal(mean, std), value

    def entropy(self) -> torch.Tensor:
        """对角高斯熵，只依赖 log_std"""
        return (0.5 + 0.5 * _LOG_2PI + self.log_std).sum()


def build_policy(arch: ArchConfig, seed: int) -> PolicyNet:
    """在隔离的随机数上下文中构造网络，使初始化只由 seed 决定"""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(int(seed) & 0xFFFF_FFFF)
        return PolicyNet(arch)


def obs_to_tensor(observations: Union[ObsLike, Sequence[ObsLike]], dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """
    (H, W, 3) uint8 观测 -> (B, 3, H, W) 浮点张量，归一化到 [0, 1]
    """
    if isinstance(observations, np.ndarray) and observations.ndim == 4:
        batch = observations
    else:
        if isinstance(observations, (SegmentedImage, np.ndarray)):
            observations = [observations]
        batch = np.stack([o.pixels if isinstance(o, SegmentedImage) else np.asarray(o) for o in observations])
    if batch.ndim != 4 or batch.shape[3] != 3:
        raise DimensionError(f"观测必须为 (H, W, 3): {batch.shape[1:]}")
    batch = batch.astype(np.float32) / 255.0
    return torch.from_numpy(batch).permute(0, 3, 1, 2).contiguous().to(dtype)


def gaussian_log_prob(raw: np.ndarray, mean: np.ndarray, log_std: np.ndarray) -> float:
    std = np.exp(log_std)
    z = (raw - mean) / std
    return float(np.sum(-0.5 * z * z - log_std - 0.5 * _LOG_2PI))


def sample_action(
    mean: np.ndarray, log_std: np.ndarray, rng: np.random.Generator
) -> Tuple[PolicyAction, np.ndarray, float]:
    """
    从对角高斯分布采样并截断到 [-1, 1]

    Returns:
        (截断后的动作, 截断前的样本, 截断前样本的对数概率)
    """
    mean = np.asarray(mean, dtype=np.float64).reshape(2)
    log_std = np.asarray(log_std, dtype=np.float64).reshape(2)
    raw = mean + np.exp(log_std) * rng.standard_normal(2)
    return PolicyAction.clamped(raw[0], raw[1]), raw, gaussian_log_prob(raw, mean, log_std)


class ActionPolicy(Protocol):
    def act(self, obs: SegmentedImage) -> PolicyAction: ...


class GreedyPolicy:
    """确定性策略：输出截断后的均值"""

    def __init__(self, net: PolicyNet):
        self.net = net.eval()

    @torch.no_grad()
    def act(self, obs: SegmentedImage) -> PolicyAction:
        mean, _ = self.net(obs_to_tensor(obs))
        a_x, a_y = mean[0].double().tolist()
        return PolicyAction.clamped(a_x, a_y)


class StochasticPolicy:
    """训练用随机策略，同时返回价值与对数概率"""

    def __init__(self, net: PolicyNet, rng: np.random.Generator):
        self.net = net
        self.rng = rng

    @torch.no_grad()
    def sample(self, obs: SegmentedImage) -> Tuple[PolicyAction, np.ndarray, float, float]:
        mean, value = self.net(obs_to_tensor(obs))
        log_std = self.net.log_std.detach().double().numpy()
        action, raw, log_prob = sample_action(mean[0].double().numpy(), log_std, self.rng)
        return action, raw, log_prob, float(value[0])

    def act(self, obs: SegmentedImage) -> PolicyAction:
        return self.sample(obs)[0]


class RandomPolicy:
    """[-1, 1]² 上的均匀随机策略（评估基线）"""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def act(self, obs: Optional[SegmentedImage] = None) -> PolicyAction:
        a_x, a_y = self.rng.uniform(-1.0, 1.0, size=2)
        return PolicyAction.clamped(a_x, a_y)


class ZeroPolicy:
    """始终直行（无横向修正）"""

    def act(self, obs: Optional[SegmentedImage] = None) -> PolicyAction:
        return PolicyAction(0.0, 0.0)


def parameter_count(params: Iterable[torch.Tensor]) -> int:
    return sum(p.numel() for p in params)
