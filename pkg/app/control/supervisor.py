"""
混合监督器

视觉阶段（慢速模式 + 确定性策略）-> 接触切换（滤波后力 > 0.75 N）-> 导纳控制 -> 完成。
状态只允许 Approach→Interact、Approach→Failed、Interact→Done、Interact→Failed。
"""

from typing import List, Optional

import numpy as np

from ..config import Settings
from ..exceptions import NotCuttableError
from ..models.policy import ActionPolicy
from ..schemas.records import (
    HYBRID_TRANSITIONS,
    EpisodeRecord,
    EpisodeTerminal,
    HybridState,
    TrialMetrics,
)
from ..sim.contact import ContactPlant, force_magnitude
from ..sim.cutter import ZoneStatus
from ..sim.env import PruningEnv, Terminal
from ..sim.geometry import Pose
from ..sim.scene import PruneTarget, SceneGraph, branch_remnant_length, query_zone
from ..utils.logger import episode_logger, get_logger
from ..utils.seeding import derive_seed
from .admittance import WrenchFilter
from .interaction import InteractionController, InteractionOutcome

logger = get_logger(__name__)


class ContactMonitor:
    """
    接近阶段的接触监视器

    每个子步把刀具移到新位姿、推进接触对象一个传感器周期并更新滤波器；
    滤波后力的模第一次超过阈值时触发。
    """

    def __init__(self, plant: ContactPlant, wrench_filter: WrenchFilter, threshold: float):
        self.plant = plant
        self.filter = wrench_filter
        self.threshold = threshold
        self.triggered = False
        self.ticks = 0

    def __call__(self, pose: Pose) -> bool:
        self.plant.move_tool(pose)
        filtered = self.filter.push(self.plant.tick())
        self.ticks += 1
        if force_magnitude(filtered) > self.threshold:
            self.triggered = True
        return self.triggered


class StateMachine:
    """记录并校验状态转移"""

    def __init__(self):
        self.history: List[HybridState] = [HybridState.APPROACH]

    @property
    def state(self) -> HybridState:
        return self.history[-1]

    def to(self, new_state: HybridState) -> None:
        if (self.state, new_state) not in HYBRID_TRANSITIONS:
            raise RuntimeError(f"非法状态转移 {self.state.value} -> {new_state.value}")
        self.history.append(new_state)


def approach_pose(point: np.ndarray, distance: float) -> Pose:
    """垂直于棚架平面、位于 point 前方 distance 处的刀具位姿"""
    return Pose(np.eye(3), np.asarray(point, dtype=np.float64) - np.array([0.0, 0.0, distance]))


def compute_metrics(plant: ContactPlant, scene: SceneGraph, target: PruneTarget, pose: Pose) -> TrialMetrics:
    """
    回合结束时的评价指标

    发生过接触时按接触对象中变形后的枝条位置判定区域，否则按刚性几何；
    pivot_offset 仅在接触后有值。
    """
    if plant.contact_occurred:
        zone = plant.zone()
        offset = plant.branch_offset()
        pivot_offset = None if offset is None else float(np.hypot(offset[0], offset[1]))
    else:
        zone = query_zone(scene, pose, target)
        pivot_offset = None
    try:
        remnant: Optional[float] = branch_remnant_length(scene, pose, target)
    except NotCuttableError:
        remnant = None
    return TrialMetrics(
        success=zone is ZoneStatus.SUCCESS,
        zone=zone.value,
        pivot_offset_m=pivot_offset,
        remnant_len_m=remnant,
        max_force_N=plant.max_force,
    )


def creep_until_contact(monitor: ContactMonitor, pose: Pose, speed: float, distance: float, sub_dt: float) -> Pose:
    """沿刀具 z 缓慢前进，直到接触或走完 distance"""
    n = int(round(distance / (speed * sub_dt)))
    start = pose.position
    for k in range(1, n + 1):
        pose = Pose(pose.rotation, start + pose.axis_z * (speed * sub_dt * k))
        if monitor(pose):
            break
    return pose


def interact(
    plant: ContactPlant,
    monitor: ContactMonitor,
    settings: Settings,
    machine: StateMachine,
    record_trace: bool,
):
    """交互阶段：共用接近阶段的滤波历史"""
    machine.to(HybridState.INTERACT)
    controller = InteractionController(settings.admittance, monitor.filter)
    result = controller.run(plant, settings.supervisor.interact_timeout, record_trace)
    if result.outcome is InteractionOutcome.DONE:
        machine.to(HybridState.DONE)
        return EpisodeTerminal.DONE, result
    machine.to(HybridState.FAILED)
    return EpisodeTerminal.INTERACT_TIMEOUT, result


def run_hybrid(
    scene: SceneGraph,
    target: PruneTarget,
    policy: ActionPolicy,
    settings: Settings,
    seed: int,
    start_pose: Optional[Pose] = None,
    controller_id: str = "HC",
    record_trace: bool = False,
) -> EpisodeRecord:
    """
    混合控制回合

    Args:
        scene: 场景
        target: 剪枝目标
        policy: 视觉策略（确定性动作）
        settings: 全部配置
        seed: 回合种子（初始位姿抖动与传感器噪声）
        start_pose: 指定初始位姿，None 时由环境采样
        controller_id: 记录中的控制器编号
        record_trace: 是否记录轨迹
    """
    env_cfg = settings.env.slow_mode()
    env = PruningEnv(env_cfg, settings.camera)
    obs = env.reset(scene, target, seed, start_pose)

    plant = ContactPlant(scene, target, env.pose, settings.plant, derive_seed(seed, "plant"), record_trace)
    monitor = ContactMonitor(plant, WrenchFilter(settings.admittance.filter_taps), settings.supervisor.contact_threshold)
    log = episode_logger(logger, controller_id, target.target_id)
    machine = StateMachine()
    terminal: Optional[EpisodeTerminal] = None
    interaction = None
    switch_step: Optional[int] = None

    while terminal is None:
        outcome = env.step(policy.act(obs), monitor)
        obs = outcome.observation

        if outcome.terminal is Terminal.CONTACT:
            log.debug(f"第 {env.n} 步检测到接触，切换到导纳控制")
            switch_step = env.n
            terminal, interaction = interact(plant, monitor, settings, machine, record_trace)
        elif outcome.terminal is Terminal.SUCCESS:
            creep_until_contact(
                monitor, env.pose, env_cfg.s_forward, settings.supervisor.creep_distance, env_cfg.substep_dt
            )
            if monitor.triggered:
                switch_step = env.n
                terminal, interaction = interact(plant, monitor, settings, machine, record_trace)
            else:
                machine.to(HybridState.FAILED)
                terminal = EpisodeTerminal.MISSED
        elif outcome.terminal is Terminal.FAILURE_ZONE:
            machine.to(HybridState.FAILED)
            terminal = EpisodeTerminal.FAILURE_ZONE
        elif outcome.terminal is Terminal.TIMEOUT:
            machine.to(HybridState.FAILED)
            terminal = EpisodeTerminal.TIMEOUT

    metrics = compute_metrics(plant, scene, target, plant.pose)
    return EpisodeRecord(
        controller=controller_id,
        target_id=target.target_id,
        seed=seed,
        terminal=terminal,
        metrics=metrics,
        steps=env.n,
        contact_occurred=plant.contact_occurred,
        states=list(machine.history),
        episode_trace=list(env.trace),
        controller_trace=interaction.trace if interaction is not None else [],
        plant_trace=list(plant.trace),
        switch_step=switch_step,
    )
