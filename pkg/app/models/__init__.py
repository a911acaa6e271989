"""
策略网络、PPO 训练与检查点
"""

from .checkpoint import load_checkpoint, save_checkpoint
from .manager import PolicyManager, get_policy_manager
from .policy import GreedyPolicy, PolicyNet, RandomPolicy, build_policy, obs_to_tensor, sample_action
from .ppo import RolloutBatch, clipped_surrogate, gae, ppo_update, train

__all__ = [
    "GreedyPolicy",
    "PolicyManager",
    "PolicyNet",
    "RandomPolicy",
    "RolloutBatch",
    "build_policy",
    "clipped_surrogate",
    "gae",
    "get_policy_manager",
    "load_checkpoint",
    "obs_to_tensor",
    "ppo_update",
    "sample_action",
    "save_checkpoint",
    "train",
]
