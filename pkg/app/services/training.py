"""
策略训练与评估服务

训练场景池由若干程序化场景组成（每个场景 train_spindle_count 棵纺锤树），
评估使用种子偏移后的保留场景，与训练场景不重叠。
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from ..config import Settings
from ..exceptions import PlacementError
from ..models.checkpoint import save_checkpoint
from ..models.policy import ActionPolicy, PolicyNet, build_policy
from ..models.ppo import train
from ..schemas.records import CurvePoint
from ..sim.camera import SegmentedImage
from ..sim.env import PolicyAction, PruningEnv, StepOutcome, Terminal
from ..sim.scene import PruneTarget, SceneGraph, build_scene
from ..utils.logger import get_logger
from ..utils.seeding import derive_seed, make_rng
from .traces import write_csv

logger = get_logger(__name__)

CURVE_HEADER = list(CurvePoint.model_fields)


def build_scene_pool(settings: Settings, seed: int, count: Optional[int] = None) -> List[SceneGraph]:
    """构造场景池，只保留至少有一个目标的场景"""
    count = count or settings.policy.train_scene_count
    scene_cfg = settings.scene.model_copy(update={"spindle_count": settings.policy.train_spindle_count})
    scenes = []
    for i in range(count):
        scene = build_scene(scene_cfg, derive_seed(seed, "scene", i))
        if scene.targets:
            scenes.append(scene)
    if not scenes:
        raise PlacementError("场景池中没有可用目标")
    logger.info(f"场景池构造完成 | 场景: {len(scenes)} | 目标: {sum(len(s.targets) for s in scenes)}")
    return scenes


class EpisodeSampler:
    """按种子从场景池中均匀抽取 (场景, 目标, 回合种子)"""

    def __init__(self, scenes: List[SceneGraph], seed: int):
        self.pairs: List[Tuple[SceneGraph, PruneTarget]] = [(s, t) for s in scenes for t in s.targets]
        self.rng = make_rng(seed, "episodes")

    def next(self) -> Tuple[SceneGraph, PruneTarget, int]:
        scene, target = self.pairs[int(self.rng.integers(len(self.pairs)))]
        return scene, target, int(self.rng.integers(0, 2 ** 63 - 1))


class SampledEnv:
    """训练接口：reset() 自行抽取下一个回合"""

    def __init__(self, env: PruningEnv, sampler: EpisodeSampler):
        self.env = env
        self.sampler = sampler

    def reset(self) -> SegmentedImage:
        for _ in range(len(self.sampler.pairs) + 1):
            scene, target, seed = self.sampler.next()
            try:
                return self.env.reset(scene, target, seed)
            except PlacementError as e:
                logger.warning(f"跳过无法放置的回合: {e}")
        raise PlacementError("连续多个回合无法放置刀具")

    def step(self, action: PolicyAction) -> StepOutcome:
        return self.env.step(action)


def train_policy(
    settings: Settings,
    out_dir: Union[str, Path],
    seed: Optional[int] = None,
) -> Tuple[PolicyNet, List[CurvePoint]]:
    """
    训练策略并写出 policy.ckpt 与 learning_curve.csv

    Args:
        settings: 全部配置
        out_dir: 输出目录
        seed: 覆盖 policy.train.seed
    """
    train_cfg = settings.policy.train
    if seed is not None:
        train_cfg = train_cfg.model_copy(update={"seed": seed})
    out = Path(out_dir)

    scenes = build_scene_pool(settings, train_cfg.seed)
    net = build_policy(settings.policy.arch, train_cfg.seed)

    def env_factory() -> SampledEnv:
        return SampledEnv(PruningEnv(settings.env, settings.camera), EpisodeSampler(scenes, train_cfg.seed))

    curve = train(env_factory, net, train_cfg)
    save_checkpoint(net, out / "policy.ckpt")
    write_csv(out / "learning_curve.csv", CURVE_HEADER, ([getattr(p, k) for k in CURVE_HEADER] for p in curve))
    return net, curve


@dataclass
class EvalResult:
    episodes: int
    successes: int
    mean_reward: float
    terminals: Dict[str, int] = field(default_factory=dict)

    @property
    def success_rate(self) -> float:
        return self.successes / self.episodes if self.episodes else 0.0

    def to_dict(self) -> Dict[str, object]:
        return {
            "episodes": self.episodes,
            "successes": self.successes,
            "success_rate": self.success_rate,
            "mean_reward": self.mean_reward,
            "terminals": dict(self.terminals),
        }


def evaluate_policy(
    settings: Settings,
    policy: ActionPolicy,
    episodes: int,
    seed: int,
    heldout: bool = True,
) -> EvalResult:
    """
    在（保留）场景上评估策略的成功率

    同一 seed 下随机策略与训练策略看到完全相同的回合序列。
    """
    pool_seed = seed + settings.policy.heldout_seed_offset if heldout else seed
    scenes = build_scene_pool(settings, pool_seed)
    sampled = SampledEnv(PruningEnv(settings.env, settings.camera), EpisodeSampler(scenes, pool_seed))

    successes = 0
    rewards: List[float] = []
    terminals: Dict[str, int] = {}
    for _ in range(episodes):
        obs = sampled.reset()
        total = 0.0
        while True:
            outcome = sampled.step(policy.act(obs))
            total += outcome.reward
            obs = outcome.observation
            if outcome.terminal is not Terminal.RUNNING:
                break
        rewards.append(total)
        terminals[outcome.terminal.value] = terminals.get(outcome.terminal.value, 0) + 1
        successes += outcome.terminal is Terminal.SUCCESS

    result = EvalResult(episodes, successes, float(np.mean(rewards)) if rewards else 0.0, terminals)
    logger.info(f"评估完成 | 回合: {episodes} | 成功率: {result.success_rate:.3f} | 终止: {terminals}")
    return result
