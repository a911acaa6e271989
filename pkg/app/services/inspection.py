"""
调试输出：整帧分割图像序列与单回合轨迹
"""

from pathlib import Path
from typing import Dict, Optional, Union

from ..config import CONTROLLER_IDS, Settings
from ..exceptions import ConfigError
from ..models.policy import ActionPolicy, ZeroPolicy
from ..sim.camera import export_ppm, render_segmented
from ..sim.env import PruningEnv, Terminal
from ..sim.scene import build_scene
from ..utils.image_utils import frame_path
from ..utils.logger import get_logger
from ..utils.seeding import derive_seed
from .harness import TrialJob, run_episode, select_targets
from .training import EpisodeSampler, SampledEnv, build_scene_pool
from .traces import write_controller_trace, write_episode_trace, write_plant_trace

logger = get_logger(__name__)


def render_episodes(
    settings: Settings,
    out_dir: Union[str, Path],
    episodes: int,
    seed: int,
    policy: Optional[ActionPolicy] = None,
) -> int:
    """
    运行若干视觉阶段回合，并把每一步的 424x240 整帧写为 frames/ep{N}/step{M}.ppm

    没有策略时下发零动作（纯前进）。

    Returns:
        写出的帧数
    """
    policy = policy or ZeroPolicy()
    env_cfg = settings.env.model_copy(update={"render": True})
    scenes = build_scene_pool(settings, seed)
    env = PruningEnv(env_cfg, settings.camera)
    sampled = SampledEnv(env, EpisodeSampler(scenes, seed))

    written = 0
    for ep in range(episodes):
        obs = sampled.reset()
        export_ppm(render_segmented(env.scene, env.pose, env.camera), frame_path(out_dir, ep, 0))
        written += 1
        while True:
            outcome = sampled.step(policy.act(obs))
            obs = outcome.observation
            export_ppm(render_segmented(env.scene, env.pose, env.camera), frame_path(out_dir, ep, env.n))
            written += 1
            if outcome.terminal is not Terminal.RUNNING:
                break
        logger.info(f"回合 {ep} 渲染完成 | 步数: {env.n} | 终止: {outcome.terminal.value}")
    return written


def trace_episode(
    settings: Settings,
    out_dir: Union[str, Path],
    controller: str,
    target_index: int = 0,
    policy: Optional[ActionPolicy] = None,
) -> Dict[str, Path]:
    """
    对选中目标运行一次指定控制器（第 0 次试验），写出回合、控制器与接触对象轨迹

    Args:
        target_index: 在按主种子选出的目标列表中的序号

    Raises:
        ConfigError: 控制器未知或目标序号越界
    """
    if controller not in CONTROLLER_IDS:
        raise ConfigError(f"未知控制器: {controller}，可选 {list(CONTROLLER_IDS)}")
    h = settings.harness
    scene = build_scene(settings.scene, h.master_seed)
    targets = select_targets(scene, h.n_targets, h.master_seed)
    if not 0 <= target_index < len(targets):
        raise ConfigError(f"目标序号越界: {target_index}，可选 0..{len(targets) - 1}")

    target = targets[target_index]
    job = TrialJob(
        trial_id=target_index * h.trials_per_target,
        target_id=target.target_id,
        trial_index=0,
        controller=controller,
        seed=derive_seed(h.master_seed, target.target_id, 0, controller),
    )
    record = run_episode(settings, scene, job, policy, record_trace=True)

    out = Path(out_dir)
    paths = {
        "episode": write_episode_trace(out / "episode_trace.csv", record.episode_trace),
        "controller": write_controller_trace(out / "controller_trace.csv", record.controller_trace),
        "plant": write_plant_trace(out / "plant_trace.csv", record.plant_trace),
    }
    logger.info(
        f"轨迹已写出 | {controller} | 目标 {target.target_id} | {record.terminal.value} | "
        f"控制器行数: {len(record.controller_trace)}"
    )
    return paths
