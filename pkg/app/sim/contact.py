"""
交互阶段接触对象

柔性枝条（刀具 yz 平面内的弹簧-阻尼圆盘）、刀刃轮廓的罚函数接触、
刚性障碍（主干、铁丝），以及 500 Hz 带噪力/力矩传感器。

扳手（wrench）统一为刀具系下 [τx, τy, τz, fx, fy, fz]，
表示刀具施加在环境上的力/力矩，力矩参考点为枢轴点。
刀具在交互阶段姿态不变，平面坐标取 Rᵀ·p 的 (y, z) 分量。
"""

from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import numpy as np

from ..config import PlantSettings
from ..utils.logger import get_logger
from .cutter import CutterProfile, ZoneStatus
from .geometry import CapsuleChain, Pose, closest_point_on_segment
from .scene import PruneTarget, SceneGraph, cut_plane_crossing

logger = get_logger(__name__)

TAU_X, TAU_Y, TAU_Z, F_X, F_Y, F_Z = range(6)
FORCE_AXES = slice(3, 6)
TORQUE_AXES = slice(0, 3)


def make_wrench(tau_x: float = 0.0, f_y: float = 0.0, f_z: float = 0.0) -> np.ndarray:
    w = np.zeros(6)
    w[TAU_X], w[F_Y], w[F_Z] = tau_x, f_y, f_z
    return w


def force_magnitude(wrench: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(wrench)[FORCE_AXES]))


@dataclass(frozen=True)
class BranchState:
    """
    刀具 yz 平面内的枝条截面

    Attributes:
        rest_position: 未受力时的截面中心
        position: 当前截面中心
        velocity: 当前速度
        radius: 截面半径
        stiffness: 弹簧刚度 k_b
        damping: 阻尼 c_b
        mass: 虚拟质量
    """
    rest_position: np.ndarray
    position: np.ndarray
    velocity: np.ndarray
    radius: float
    stiffness: float
    damping: float
    mass: float

    def __post_init__(self):
        if self.radius <= 0 or self.stiffness <= 0 or self.mass <= 0:
            raise ValueError("枝条半径、刚度与质量必须为正")
        if self.damping < 0:
            raise ValueError("枝条阻尼不能为负")

    @classmethod
    def at_rest(cls, rest: np.ndarray, cfg: PlantSettings) -> "BranchState":
        rest = np.asarray(rest, dtype=np.float64).copy()
        return cls(
            rest_position=rest,
            position=rest.copy(),
            velocity=np.zeros(2),
            radius=cfg.branch_radius,
            stiffness=cfg.branch_stiffness,
            damping=cfg.branch_damping,
            mass=cfg.branch_mass,
        )

    @property
    def kinetic_energy(self) -> float:
        return 0.5 * self.mass * float(self.velocity @ self.velocity)


@dataclass(frozen=True)
class DiscContact:
    """圆盘与刀刃接触的汇总结果"""
    wrench: np.ndarray
    # 刀刃施加在圆盘上的合力（yz）
    force: np.ndarray
    penetration: float

    @property
    def active(self) -> bool:
        return self.penetration > 0.0


class SensorModel:
    """
    力/力矩传感器：真实扳手 + 零均值高斯噪声

    同一种子产生相同的噪声序列。
    """

    def __init__(self, rate_hz: float, force_std: float, torque_std: float, seed: int):
        if rate_hz <= 0:
            raise ValueError(f"传感器频率必须为正: {rate_hz}")
        self.rate_hz = rate_hz
        self.force_std = force_std
        self.torque_std = torque_std
        self.rng = np.random.default_rng(int(seed) & ((1 << 64) - 1))
        self._std = np.array([torque_std] * 3 + [force_std] * 3)

    @classmethod
    def from_settings(cls, cfg: PlantSettings, seed: int) -> "SensorModel":
        return cls(cfg.rate_hz, cfg.force_noise_std, cfg.torque_noise_std, seed)

    @property
    def dt(self) -> float:
        return 1.0 / self.rate_hz

    def sample(self, true_wrench: np.ndarray) -> np.ndarray:
        true_wrench = np.asarray(true_wrench, dtype=np.float64)
        if not self._std.any():
            return true_wrench.copy()
        return true_wrench + self.rng.normal(0.0, 1.0, size=6) * self._std


def sensor_sample(true_wrench: np.ndarray, model: SensorModel) -> np.ndarray:
    """带噪采样一次"""
    return model.sample(true_wrench)


def disc_contact(profile: CutterProfile, center: np.ndarray, radius: float, k_contact: float) -> DiscContact:
    """
    圆盘与四条刀刃的双侧最近点罚函数接触

    Args:
        profile: 刀口轮廓
        center: 圆盘中心（相对枢轴点的刀具 yz 坐标）
        radius: 圆盘半径
        k_contact: 接触刚度 (N/m)
    """
    center = np.asarray(center, dtype=np.float64)
    force = np.zeros(2)
    tau_x = 0.0
    deepest = 0.0
    for a, b, n_in in profile.blade_edges:
        q, _ = closest_point_on_segment(a, b, center)
        d = center - q
        dist = float(np.hypot(d[0], d[1]))
        pen = radius - dist
        if pen <= 0.0:
            continue
        direction = d / dist if dist > 1e-12 else n_in
        f = k_contact * pen * direction
        force += f
        # τ = r × f，r 为接触点相对枢轴的力臂
        tau_x += q[0] * f[1] - q[1] * f[0]
        deepest = max(deepest, pen)
    return DiscContact(make_wrench(tau_x, force[0], force[1]), force, deepest)


def contact_wrench(profile: CutterProfile, pivot_yz: np.ndarray, branch: BranchState, k_contact: float) -> np.ndarray:
    """
    刀刃与枝条接触产生的扳手（刀具施加于枝条）

    Args:
        profile: 刀口轮廓
        pivot_yz: 枢轴点的平面坐标
        branch: 枝条状态（同一平面坐标）
        k_contact: 接触刚度
    """
    rel = np.asarray(branch.position) - np.asarray(pivot_yz)
    return disc_contact(profile, rel, branch.radius, k_contact).wrench


def branch_dynamics_step(branch: BranchState, applied_force: np.ndarray, dt: float) -> BranchState:
    """
    半隐式欧拉积分 m·ẍ = F - k_b·(x - rest) - c_b·ẋ
    """
    if dt <= 0:
        raise ValueError(f"dt 必须为正: {dt}")
    spring = -branch.stiffness * (branch.position - branch.rest_position)
    accel = (np.asarray(applied_force, dtype=np.float64) + spring - branch.damping * branch.velocity) / branch.mass
    velocity = branch.velocity + accel * dt
    position = branch.position + velocity * dt
    return replace(branch, position=position, velocity=velocity)


@dataclass(frozen=True)
class PlantTraceRow:
    time: float
    branch_y: Optional[float]
    branch_z: Optional[float]
    penetration: float
    wrench: Tuple[float, ...]


class ContactPlant:
    """
    一个回合的接触对象

    tick() 在当前刀具位姿下求接触、推进枝条动力学并返回一次带噪传感器读数；
    最大力按无噪接触力统计，未接触时严格为 0。
    """

    def __init__(
        self,
        scene: SceneGraph,
        target: PruneTarget,
        tool_pose: Pose,
        cfg: PlantSettings,
        seed: int,
        record_trace: bool = False,
    ):
        self.scene = scene
        self.target = target
        self.cfg = cfg
        self.profile = scene.cutter
        self.sensor = SensorModel.from_settings(cfg, seed)
        self.dt = self.sensor.dt
        self.record_trace = record_trace

        self._wires = [CapsuleChain(np.stack([w.a, w.b]), [w.radius]) for w in scene.wires]
        self.branch: Optional[BranchState] = None
        self.time = 0.0
        self.max_force = 0.0
        self.contact_occurred = False
        self.last_contact: Optional[DiscContact] = None
        self.trace: List[PlantTraceRow] = []
        self.pose = tool_pose
        self.move_tool(tool_pose)

    # ------------------------------------------------------------------
    # 坐标
    # ------------------------------------------------------------------

    def _plane(self, p: np.ndarray) -> np.ndarray:
        """世界点 -> 刀具姿态下的 (x, y, z) 分量（不平移）"""
        return np.asarray(p, dtype=np.float64) @ self.pose.rotation

    @property
    def pivot_plane(self) -> np.ndarray:
        return self._plane(self.pose.position)

    def branch_offset(self) -> Optional[np.ndarray]:
        """枝条截面中心相对枢轴点的刀具 yz 坐标；枝条不与刀具平面相交时为 None"""
        if self.branch is None:
            return None
        return self.branch.position - self.pivot_plane[1:]

    def zone(self) -> ZoneStatus:
        """按变形后的枝条位置分类刀口区域"""
        offset = self.branch_offset()
        if offset is None:
            return ZoneStatus.NONE
        x_target = float(self.pose.to_local(self.target.point)[0])
        return self.profile.classify(offset, x_target)

    def move_tool(self, pose: Pose) -> None:
        """更新刀具位姿并重新求枝条静止位置（刀具沿 x 移动时截面随之改变）"""
        self.pose = pose
        hit = cut_plane_crossing(self.scene.branch_of(self.target), pose, self.target)
        if hit is None:
            if self.branch is not None:
                logger.debug("目标枝条离开刀具平面")
            self.branch = None
            return
        rest = self._plane(hit[1])[1:]
        if self.branch is None:
            self.branch = BranchState.at_rest(rest, self.cfg)
        else:
            self.branch = replace(self.branch, rest_position=rest)

    # ------------------------------------------------------------------
    # 接触
    # ------------------------------------------------------------------

    def _obstacle_wrench(self) -> Tuple[np.ndarray, float]:
        """主干与铁丝的刚性接触"""
        wrench = np.zeros(6)
        deepest = 0.0
        pivot = self.pivot_plane
        normal = self.pose.rotation[:, 0]

        for chain in self._wires:
            for _, point in chain.plane_crossings(self.pose.position, normal):
                rel = self._plane(point)[1:] - pivot[1:]
                hit = disc_contact(self.profile, rel, float(chain.radii[0]), self.cfg.wire_stiffness)
                wrench += hit.wrench
                deepest = max(deepest, hit.penetration)

        # 主干：刀尖平面前方的竖直条带，沿刀具 x 以刀口半宽门控
        depth = self.profile.mouth_depth
        world_y = float(self.pose.position[1])
        for spindle in self.scene.spindles:
            axis, r_leader = spindle.leader_axis_at_height(world_y)
            leader = self._plane(axis)
            if abs(leader[0] - pivot[0]) > self.profile.mouth_half_width_x + r_leader:
                continue
            if pivot[2] >= leader[2]:
                continue
            pen = (pivot[2] + depth) - (leader[2] - r_leader)
            if pen <= 0.0:
                continue
            # 接触点 (0, depth)：τx = 0·fz - depth·fy = 0
            wrench[F_Z] += self.cfg.leader_stiffness * pen
            deepest = max(deepest, pen)
        return wrench, deepest

    def true_wrench(self) -> Tuple[np.ndarray, np.ndarray, float]:
        """
        当前状态下的无噪扳手

        Returns:
            (扳手, 刀刃作用在枝条上的力, 最大穿透深度)
        """
        wrench, deepest = self._obstacle_wrench()
        branch_force = np.zeros(2)
        offset = self.branch_offset()
        if offset is not None:
            hit = disc_contact(self.profile, offset, self.branch.radius, self.cfg.contact_stiffness)
            self.last_contact = hit
            wrench = wrench + hit.wrench
            branch_force = hit.force
            deepest = max(deepest, hit.penetration)
        return wrench, branch_force, deepest

    def tick(self) -> np.ndarray:
        """推进一个传感器周期，返回带噪读数"""
        wrench, branch_force, deepest = self.true_wrench()
        if deepest > 0.0:
            self.contact_occurred = True
        self.max_force = max(self.max_force, force_magnitude(wrench))
        if self.branch is not None:
            self.branch = branch_dynamics_step(self.branch, branch_force, self.dt)
        self.time += self.dt

        if self.record_trace:
            offset = self.branch_offset()
            self.trace.append(PlantTraceRow(
                time=self.time,
                branch_y=None if offset is None else float(offset[0]),
                branch_z=None if offset is None else float(offset[1]),
                penetration=deepest,
                wrench=tuple(float(v) for v in wrench),
            ))
        return self.sensor.sample(wrench)
