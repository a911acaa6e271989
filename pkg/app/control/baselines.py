"""
对比控制器

OL / OL-：开环笛卡尔比例控制，最大速度 3 cm/s，到达估计点 1 mm 内停止，无力反馈；
CL：目标设在估计点后方 10 cm，接触后切换到导纳控制。
"""

from typing import Optional

import numpy as np

from ..config import Settings
from ..schemas.records import EpisodeRecord, EpisodeTerminal, HybridState
from ..sim.contact import ContactPlant
from ..sim.geometry import Pose
from ..sim.scene import PruneTarget, SceneGraph
from ..utils.logger import episode_logger, get_logger
from ..utils.seeding import derive_seed
from .admittance import WrenchFilter
from .estimation import TargetEstimate
from .supervisor import ContactMonitor, StateMachine, approach_pose, compute_metrics, interact

logger = get_logger(__name__)


def open_loop_velocity(position: np.ndarray, goal: np.ndarray, gain: float, max_speed: float) -> np.ndarray:
    """v = gain·(goal - p)，模长截断到 max_speed"""
    v = gain * (np.asarray(goal) - np.asarray(position))
    speed = float(np.linalg.norm(v))
    if speed > max_speed:
        v = v * (max_speed / speed)
    return v


def run_open_loop(
    scene: SceneGraph,
    target: PruneTarget,
    estimate: TargetEstimate,
    settings: Settings,
    seed: int,
    controller_id: str = "OL",
    start_pose: Optional[Pose] = None,
    record_trace: bool = False,
) -> EpisodeRecord:
    """
    开环比例控制回合

    刀具按运动学移动，接触力只被记录，不影响运动。
    """
    sup = settings.supervisor
    pose = start_pose if start_pose is not None else approach_pose(estimate.point, sup.start_distance)
    plant = ContactPlant(scene, target, pose, settings.plant, derive_seed(seed, "plant"), record_trace)
    dt = plant.dt
    goal = estimate.point

    terminal = EpisodeTerminal.TIMEOUT
    ticks = 0
    for _ in range(int(round(sup.ol_timeout / dt))):
        if np.linalg.norm(goal - pose.position) <= sup.ol_stop_tolerance:
            terminal = EpisodeTerminal.STOPPED
            break
        pose = pose.translated(open_loop_velocity(pose.position, goal, sup.ol_gain, sup.ol_max_speed) * dt)
        plant.move_tool(pose)
        plant.tick()
        ticks += 1
    else:
        if np.linalg.norm(goal - pose.position) <= sup.ol_stop_tolerance:
            terminal = EpisodeTerminal.STOPPED

    metrics = compute_metrics(plant, scene, target, pose)
    episode_logger(logger, controller_id, target.target_id).debug(
        f"{terminal.value} | 区域 {metrics.zone} | "
        f"最大力 {metrics.max_force_N:.3f}N"
    )
    return EpisodeRecord(
        controller=controller_id,
        target_id=target.target_id,
        seed=seed,
        terminal=terminal,
        metrics=metrics,
        steps=ticks,
        contact_occurred=plant.contact_occurred,
        states=[],
        plant_trace=list(plant.trace),
    )


def run_closed_loop(
    scene: SceneGraph,
    target: PruneTarget,
    estimate: TargetEstimate,
    settings: Settings,
    seed: int,
    controller_id: str = "CL",
    start_pose: Optional[Pose] = None,
    record_trace: bool = False,
) -> EpisodeRecord:
    """
    闭环基线：朝估计点后方 cl_overshoot 处做比例运动，接触后交给导纳控制

    未接触就到达目标点视为漏检（Missed）。
    """
    sup = settings.supervisor
    pose = start_pose if start_pose is not None else approach_pose(estimate.point, sup.start_distance)
    ray = estimate.point - pose.position
    norm = float(np.linalg.norm(ray))
    direction = ray / norm if norm > 1e-12 else pose.axis_z
    goal = estimate.point + sup.cl_overshoot * direction

    plant = ContactPlant(scene, target, pose, settings.plant, derive_seed(seed, "plant"), record_trace)
    monitor = ContactMonitor(plant, WrenchFilter(settings.admittance.filter_taps), sup.contact_threshold)
    machine = StateMachine()
    dt = plant.dt

    terminal = EpisodeTerminal.TIMEOUT
    interaction = None
    for _ in range(int(round(sup.ol_timeout / dt))):
        if np.linalg.norm(goal - pose.position) <= sup.ol_stop_tolerance:
            terminal = EpisodeTerminal.MISSED
            break
        pose = pose.translated(open_loop_velocity(pose.position, goal, sup.ol_gain, sup.ol_max_speed) * dt)
        if monitor(pose):
            terminal, interaction = interact(plant, monitor, settings, machine, record_trace)
            break
    if machine.state is HybridState.APPROACH:
        machine.to(HybridState.FAILED)

    metrics = compute_metrics(plant, scene, target, plant.pose)
    episode_logger(logger, controller_id, target.target_id).debug(
        f"{terminal.value} | 区域 {metrics.zone} | "
        f"最大力 {metrics.max_force_N:.3f}N"
    )
    return EpisodeRecord(
        controller=controller_id,
        target_id=target.target_id,
        seed=seed,
        terminal=terminal,
        metrics=metrics,
        steps=monitor.ticks,
        contact_occurred=plant.contact_occurred,
        states=list(machine.history),
        controller_trace=interaction.trace if interaction is not None else [],
        plant_trace=list(plant.trace),
    )
