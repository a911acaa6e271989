"""
PPO 训练

rollout 采集、GAE、截断代理目标与参数更新。
超参数默认值与常用 PPO 实现一致（ε=0.2, γ=0.99, λ=0.95, lr=3e-4, 2048 步, 批 64, 10 轮）。
"""

import copy
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Protocol, Tuple

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from ..config import TrainConfig
from ..exceptions import NonFiniteLossError
from ..schemas.records import CurvePoint
from ..sim.camera import SegmentedImage
from ..sim.env import PolicyAction, StepOutcome, Terminal
from ..utils.logger import get_logger
from ..utils.memory_utils import log_memory_status
from .policy import PolicyNet, StochasticPolicy, obs_to_tensor

logger = get_logger(__name__)


class TrainingEnv(Protocol):
    """训练环境接口：reset 自行挑选下一个 (场景, 目标, 种子)"""

    def reset(self) -> SegmentedImage: ...

    def step(self, action: PolicyAction) -> StepOutcome: ...


@dataclass
class RolloutBatch:
    """对齐的 rollout 数组"""
    observations: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    terminals: np.ndarray
    advantages: Optional[np.ndarray] = None
    returns: Optional[np.ndarray] = None

    def __post_init__(self):
        n = len(self.rewards)
        for name in ("observations", "actions", "log_probs", "values", "terminals"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"RolloutBatch.{name} 长度 {len(getattr(self, name))} != {n}")

    def __len__(self) -> int:
        return len(self.rewards)


def gae(
    rewards: np.ndarray,
    values: np.ndarray,
    terminals: np.ndarray,
    gamma: float,
    lam: float,
    last_value: float = 0.0,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    广义优势估计

    terminals[t] 为真表示第 t 步之后回合结束，不再向 t+1 自举。
    last_value 是 rollout 末尾之后状态的价值（末步为终止时不使用）。

    Returns:
        (advantages, returns)，returns = advantages + values
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    terminals = np.asarray(terminals, dtype=bool)
    n = len(rewards)
    advantages = np.zeros(n)
    running = 0.0
    for t in reversed(range(n)):
        next_value = last_value if t == n - 1 else values[t + 1]
        non_terminal = 0.0 if terminals[t] else 1.0
        delta = rewards[t] + gamma * next_value * non_terminal - values[t]
        running = delta + gamma * lam * non_terminal * running
        advantages[t] = running
    return advantages, advantages + values


def clipped_surrogate(ratio: torch.Tensor, advantages: torch.Tensor, clip_ratio: float) -> torch.Tensor:
    """逐样本 min(r·A, clip(r, 1-ε, 1+ε)·A)"""
    return torch.min(ratio * advantages, torch.clamp(ratio, 1.0 - clip_ratio, 1.0 + clip_ratio) * advantages)


def make_optimizer(net: PolicyNet, cfg: TrainConfig) -> torch.optim.Optimizer:
    return torch.optim.Adam(net.parameters(), lr=cfg.learning_rate, eps=cfg.adam_eps)


def ppo_update(
    net: PolicyNet,
    optimizer: torch.optim.Optimizer,
    batch: RolloutBatch,
    cfg: TrainConfig,
    generator: torch.Generator,
) -> Dict[str, float]:
    """
    对一个 rollout 执行 epochs_per_update 轮小批量更新

    优势在每次更新开始时统一归一化（零均值、单位方差）。

    Raises:
        NonFiniteLossError: 损失出现 NaN/Inf，参数与优化器状态回滚到更新前
    """
    if batch.advantages is None or batch.returns is None:
        raise ValueError("RolloutBatch 缺少 advantages/returns，先调用 gae()")

    snapshot = (copy.deepcopy(net.state_dict()), copy.deepcopy(optimizer.state_dict()))

    obs = obs_to_tensor(batch.observations)
    actions = torch.as_tensor(batch.actions, dtype=torch.float32)
    old_log_probs = torch.as_tensor(batch.log_probs, dtype=torch.float32)
    returns = torch.as_tensor(batch.returns, dtype=torch.float32)
    adv = torch.as_tensor(batch.advantages, dtype=torch.float32)
    adv = (adv - adv.mean()) / (adv.std(unbiased=False) + 1e-8)

    n = len(batch)
    stats = {"policy_loss": [], "value_loss": [], "entropy": [], "approx_kl": [], "clip_fraction": []}
    net.train()
    for epoch in range(cfg.epochs_per_update):
        order = torch.randperm(n, generator=generator)
        for start in range(0, n, cfg.minibatch_size):
            idx = order[start:start + cfg.minibatch_size]
            dist, values = net.distribution(obs[idx])
            log_probs = dist.log_prob(actions[idx]).sum(-1)
            ratio = torch.exp(log_probs - old_log_probs[idx])

            policy_loss = -clipped_surrogate(ratio, adv[idx], cfg.clip_ratio).mean()
            value_loss = F.mse_loss(values, returns[idx])
            entropy = net.entropy()
            loss = policy_loss + cfg.vf_coef * value_loss - cfg.ent_coef * entropy

            if not torch.isfinite(loss):
                net.load_state_dict(snapshot[0])
                optimizer.load_state_dict(snapshot[1])
                diagnostics = {
                    "epoch": epoch,
                    "policy_loss": float(policy_loss),
                    "value_loss": float(value_loss),
                    "max_ratio": float(ratio.max()),
                    "log_std": net.log_std.detach().tolist(),
                }
                logger.error(f"PPO 更新出现非有限损失，已回滚参数 | {diagnostics}")
                raise NonFiniteLossError("PPO 损失非有限", diagnostics)

            optimizer.zero_grad()
            loss.backward()
            nn.utils.clip_grad_norm_(net.parameters(), cfg.max_grad_norm)
            optimizer.step()

            with torch.no_grad():
                log_ratio = log_probs - old_log_probs[idx]
                stats["approx_kl"].append(float(((ratio - 1) - log_ratio).mean()))
                stats["clip_fraction"].append(float(((ratio - 1).abs() > cfg.clip_ratio).float().mean()))
            stats["policy_loss"].append(float(policy_loss))
            stats["value_loss"].append(float(value_loss))
            stats["entropy"].append(float(entropy))

    return {key: float(np.mean(values)) if values else 0.0 for key, values in stats.items()}


def collect_rollout(
    env: TrainingEnv,
    policy: StochasticPolicy,
    horizon: int,
    obs: SegmentedImage,
    episode_log: List[Tuple[float, bool]],
    episode_reward: float,
) -> Tuple[RolloutBatch, SegmentedImage, float, float]:
    """
    采集 horizon 步

    Returns:
        (batch, 下一观测, 当前未完成回合的累计奖励, 末状态价值)
    """
    observations, actions, log_probs, rewards, values, terminals = [], [], [], [], [], []
    for _ in range(horizon):
        action, raw, log_prob, value = policy.sample(obs)
        outcome = env.step(action)
        observations.append(obs.pixels)
        actions.append(raw)
        log_probs.append(log_prob)
        rewards.append(outcome.reward)
        values.append(value)
        done = outcome.terminal is not Terminal.RUNNING
        terminals.append(done)
        episode_reward += outcome.reward
        if done:
            episode_log.append((episode_reward, outcome.terminal is Terminal.SUCCESS))
            episode_reward = 0.0
            obs = env.reset()
        else:
            obs = outcome.observation

    with torch.no_grad():
        _, last_value = policy.net(obs_to_tensor(obs))
    batch = RolloutBatch(
        observations=np.stack(observations),
        actions=np.array(actions, dtype=np.float32),
        log_probs=np.array(log_probs, dtype=np.float32),
        rewards=np.array(rewards),
        values=np.array(values),
        terminals=np.array(terminals),
    )
    return batch, obs, episode_reward, float(last_value[0])


def train(
    env_factory: Callable[[], TrainingEnv],
    net: PolicyNet,
    cfg: TrainConfig,
    on_update: Optional[Callable[[CurvePoint], None]] = None,
) -> List[CurvePoint]:
    """
    rollout/update 循环，直到累计 total_steps 步

    Args:
        env_factory: 构造训练环境
        net: 策略网络（原地更新）
        cfg: 训练超参数
        on_update: 每次更新后的回调

    Returns:
        学习曲线（每次更新一点）
    """
    curve: List[CurvePoint] = []
    if cfg.total_steps <= 0:
        return curve

    rng = np.random.default_rng(cfg.seed)
    generator = torch.Generator().manual_seed(cfg.seed)
    optimizer = make_optimizer(net, cfg)
    policy = StochasticPolicy(net, rng)
    env = env_factory()
    obs = env.reset()
    episode_reward = 0.0

    env_steps = 0
    update = 0
    logger.info(f"开始训练 | total_steps={cfg.total_steps} | horizon={cfg.rollout_horizon}")
    while env_steps < cfg.total_steps:
        horizon = min(cfg.rollout_horizon, cfg.total_steps - env_steps)
        episodes: List[Tuple[float, bool]] = []
        net.eval()
        batch, obs, episode_reward, last_value = collect_rollout(env, policy, horizon, obs, episodes, episode_reward)
        batch.advantages, batch.returns = gae(
            batch.rewards, batch.values, batch.terminals, cfg.gamma, cfg.gae_lambda, last_value
        )
        stats = ppo_update(net, optimizer, batch, cfg, generator)
        env_steps += horizon
        update += 1

        point = CurvePoint(
            update=update,
            env_steps=env_steps,
            mean_episode_reward=float(np.mean([r for r, _ in episodes])) if episodes else None,
            success_rate=float(np.mean([s for _, s in episodes])) if episodes else None,
            episodes=len(episodes),
            **stats,
        )
        curve.append(point)
        logger.info(
            f"更新 {update} | 步数 {env_steps}/{cfg.total_steps} | 回合 {len(episodes)} | "
            f"平均奖励 {point.mean_episode_reward} | 成功率 {point.success_rate}"
        )
        log_memory_status(f"PPO 更新 {update} 后")
        if on_update is not None:
            on_update(point)

    logger.info(f"训练完成 | 更新次数 {update}")
    return curve
