"""
视觉阶段 MDP

回合生命周期、观测生成、速度动作合成、奖励与终止判定。
一个环境实例只在单线程内使用；多个实例之间没有共享的可变状态。
"""

from dataclasses import dataclass
from enum import Enum
from typing import Callable, List, Optional

import numpy as np

from ..config import CameraSettings, EnvSettings
from ..exceptions import EpisodeProtocolError, PlacementError
from ..utils.logger import get_logger
from .camera import CameraModel, SegmentedImage, observation_pixels, render_segmented
from .cutter import ZoneStatus
from .geometry import Pose
from .scene import PruneTarget, SceneGraph, distance_to_target, placement_clear, query_zone

logger = get_logger(__name__)

# 子步监视器：接收子步末的刀具位姿，返回 True 表示接触并中止本步
SubstepMonitor = Callable[[Pose], bool]


class Terminal(str, Enum):
    """单步终止状态"""
    RUNNING = "Running"
    SUCCESS = "Success"
    FAILURE_ZONE = "FailureZone"
    TIMEOUT = "Timeout"
    # 仅在子步监视器检测到接触时出现
    CONTACT = "Contact"


@dataclass(frozen=True)
class PolicyAction:
    """策略输出，两个分量都截断到 [-1, 1]"""
    a_x: float
    a_y: float

    @classmethod
    def clamped(cls, a_x: float, a_y: float) -> "PolicyAction":
        if not (np.isfinite(a_x) and np.isfinite(a_y)):
            raise ValueError(f"动作分量必须有限: ({a_x}, {a_y})")
        return cls(float(np.clip(a_x, -1.0, 1.0)), float(np.clip(a_y, -1.0, 1.0)))


@dataclass(frozen=True)
class VelocityCommand:
    """刀具系速度 (m/s)"""
    v: np.ndarray


@dataclass(frozen=True)
class StepOutcome:
    observation: SegmentedImage
    reward: float
    terminal: Terminal
    distance: float


@dataclass(frozen=True)
class TraceRow:
    """回合轨迹行"""
    step: int
    a_x: float
    a_y: float
    reward: float
    distance: float
    terminal: str


def compose_velocity(a: PolicyAction, s_forward: float) -> VelocityCommand:
    """v = (a_x·s, a_y·s, s)"""
    a = PolicyAction.clamped(a.a_x, a.a_y)
    return VelocityCommand(np.array([a.a_x * s_forward, a.a_y * s_forward, s_forward]))


def reward(d_next: float, cfg: EnvSettings) -> float:
    """非终止奖励：dt · max(1 - d/d_min, 0)"""
    return cfg.dt * max(1.0 - d_next / cfg.d_min, 0.0)


class PruningEnv:
    """
    剪枝视觉阶段环境

    reset() 在目标前方 15-20 cm 放置刀具并返回首帧观测；
    step() 以合成速度推进 dt 秒并按 成功区 > 失败区 > 步数耗尽 的顺序判定终止。
    """

    def __init__(self, env_cfg: EnvSettings, camera_cfg: CameraSettings):
        self.cfg = env_cfg
        self.camera_cfg = camera_cfg
        self.camera = CameraModel.from_settings(camera_cfg)
        self._pixels = observation_pixels(camera_cfg)
        self._substeps = int(round(env_cfg.dt / env_cfg.substep_dt))

        self.scene: Optional[SceneGraph] = None
        self.target: Optional[PruneTarget] = None
        self.pose: Optional[Pose] = None
        self.n = 0
        self.done = True
        self.trace: List[TraceRow] = []

    @property
    def observation_shape(self):
        rows, cols = self._pixels[0].shape
        return rows, cols

    def observe(self) -> SegmentedImage:
        if not self.cfg.render:
            rows, cols = self.observation_shape
            return SegmentedImage(np.zeros((rows, cols, 3), dtype=np.uint8))
        return render_segmented(self.scene, self.pose, self.camera, self._pixels)

    def sample_start_pose(self, scene: SceneGraph, target: PruneTarget, rng: np.random.Generator) -> Pose:
        """
        采样初始位姿：沿 -z 距目标 start_distance_range 内，带横向与偏航抖动

        Raises:
            PlacementError: 连续 max_placement_attempts 次与场景碰撞
        """
        lo, hi = self.cfg.start_distance_range
        jitter = self.cfg.lateral_jitter
        yaw_lim = np.radians(self.cfg.yaw_jitter_deg)
        for attempt in range(self.cfg.max_placement_attempts):
            dist = rng.uniform(lo, hi)
            jx, jy = rng.uniform(-jitter, jitter, size=2)
            yaw = rng.uniform(-yaw_lim, yaw_lim)
            rot = Pose.from_yaw(yaw, np.zeros(3)).rotation
            dz = np.sqrt(dist * dist - jx * jx - jy * jy)
            offset_tool = np.array([jx, jy, -dz])
            pose = Pose(rot, target.point + rot @ offset_tool)
            lookahead = pose.to_world(np.array([
                [0.0, 0.0, 0.0],
                [0.0, 0.0, scene.cutter.mouth_depth],
                [0.0, 0.0, -0.08],
            ]))
            if placement_clear(scene, lookahead, margin=0.005):
                return pose
            logger.debug(f"初始位姿与场景碰撞，重采样 ({attempt + 1}/{self.cfg.max_placement_attempts})")
        raise PlacementError(
            f"目标 {target.target_id} 连续 {self.cfg.max_placement_attempts} 次无法放置刀具"
        )

    def reset(
        self,
        scene: SceneGraph,
        target: PruneTarget,
        seed: int,
        start_pose: Optional[Pose] = None,
    ) -> SegmentedImage:
        """
        开始新回合

        Args:
            scene: 场景
            target: 剪枝目标
            seed: 回合种子
            start_pose: 指定初始位姿（跳过采样）
        """
        self.scene = scene
        self.target = target
        rng = np.random.default_rng(int(seed) & ((1 << 64) - 1))
        self.pose = start_pose if start_pose is not None else self.sample_start_pose(scene, target, rng)
        self.n = 0
        self.done = False
        self.trace = []
        return self.observe()

    def distance(self) -> float:
        return distance_to_target(self.pose, self.target)

    def step(self, action: PolicyAction, monitor: Optional[SubstepMonitor] = None) -> StepOutcome:
        """
        推进一个控制周期

        Args:
            action: 策略动作（截断到 [-1, 1]）
            monitor: 可选的子步接触监视器，返回 True 时本步提前结束并返回 Contact

        Raises:
            EpisodeProtocolError: 回合已终止或未 reset
        """
        if self.done or self.pose is None:
            raise EpisodeProtocolError("回合已结束，需要先 reset()")

        action = PolicyAction.clamped(action.a_x, action.a_y)
        v_world = self.pose.rotation @ compose_velocity(action, self.cfg.s_forward).v
        start = self.pose.position
        contact = False
        for k in range(1, self._substeps + 1):
            self.pose = Pose(self.pose.rotation, start + v_world * (self.cfg.substep_dt * k))
            if monitor is not None and monitor(self.pose):
                contact = True
                break
        self.n += 1

        d_next = self.distance()
        zone = query_zone(self.scene, self.pose, self.target)
        T = self.cfg.horizon
        if contact:
            terminal, r = Terminal.CONTACT, reward(d_next, self.cfg)
        elif zone is ZoneStatus.SUCCESS:
            terminal, r = Terminal.SUCCESS, T - self.cfg.dt * self.n
        elif zone is ZoneStatus.FAILURE:
            terminal, r = Terminal.FAILURE_ZONE, -T
        elif self.n >= self.cfg.n_steps:
            terminal, r = Terminal.TIMEOUT, -T
        else:
            terminal, r = Terminal.RUNNING, reward(d_next, self.cfg)

        self.done = terminal is not Terminal.RUNNING
        self.trace.append(TraceRow(self.n, action.a_x, action.a_y, r, d_next, terminal.value))
        return StepOutcome(self.observe(), r, terminal, d_next)
