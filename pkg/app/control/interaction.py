"""
交互阶段控制回路

以传感器频率（500 Hz）运行：采样 -> 滤波 -> 导纳积分 -> 刀具沿 yz 平移 -> 终止检测。
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional

import numpy as np

from ..config import AdmittanceSettings
from ..sim.contact import F_Y, F_Z, ContactPlant
from ..utils.logger import get_logger
from .admittance import (
    AdmittanceGains,
    TerminationWindow,
    WrenchFilter,
    admittance_step,
    check_termination,
    deadzone,
    select,
)

logger = get_logger(__name__)

WRENCH_NAMES = ("tx", "ty", "tz", "fx", "fy", "fz")


class InteractionOutcome(str, Enum):
    DONE = "Done"
    TIMEOUT = "Timeout"


@dataclass(frozen=True)
class ControllerTraceRow:
    """内环单步记录"""
    time: float
    raw: np.ndarray
    filtered: np.ndarray
    error: np.ndarray
    accel: np.ndarray
    twist: np.ndarray

    def as_row(self) -> List[float]:
        values = [self.time]
        for vec in (self.raw, self.filtered, self.error, self.accel, self.twist):
            values.extend(float(v) for v in vec)
        return values


def controller_trace_header() -> List[str]:
    header = ["time"]
    for prefix in ("raw", "filtered", "error", "accel", "twist"):
        header.extend(f"{prefix}_{name}" for name in WRENCH_NAMES)
    return header


@dataclass
class InteractionResult:
    outcome: InteractionOutcome
    duration: float
    ticks: int
    trace: List[ControllerTraceRow] = field(default_factory=list)


class InteractionController:
    """
    导纳控制器实例（单个回合独占）

    滤波器可以由接近阶段传入，使接触检测与导纳控制共用同一段历史。
    """

    def __init__(self, cfg: AdmittanceSettings, wrench_filter: Optional[WrenchFilter] = None):
        self.cfg = cfg
        self.gains = AdmittanceGains.from_settings(cfg)
        self.filter = wrench_filter if wrench_filter is not None else WrenchFilter(cfg.filter_taps)
        self.window = TerminationWindow.from_settings(cfg)
        self.twist = np.zeros(6)

    def step(self, raw: np.ndarray):
        """处理一个传感器样本，返回 (滤波值, 误差, 加速度, 新速度)"""
        filtered = self.filter.push(raw)
        error = deadzone(self.gains.desired - select(self.gains.selection, filtered), self.gains.deadzone)
        accel, self.twist = admittance_step(self.gains, filtered, self.twist)
        return filtered, error, accel, self.twist

    def run(self, plant: ContactPlant, timeout: float, record_trace: bool = False) -> InteractionResult:
        """
        驱动接触对象直到终止条件满足或超时

        Args:
            plant: 接触对象（当前刀具位姿即交互起点）
            timeout: 仿真时间上限 (s)
            record_trace: 是否记录逐步控制器轨迹
        """
        dt = self.gains.inner_dt
        max_ticks = int(round(timeout / dt))
        trace: List[ControllerTraceRow] = []
        rotation = plant.pose.rotation

        for tick in range(1, max_ticks + 1):
            raw = plant.tick()
            filtered, error, accel, twist = self.step(raw)

            # 刀具系速度 (0, v_y, v_z) 转到世界系
            delta = rotation[:, 1] * (twist[F_Y] * dt) + rotation[:, 2] * (twist[F_Z] * dt)
            plant.move_tool(plant.pose.translated(delta))

            self.window.push_wrench(filtered, plant.pivot_plane[1:])
            if record_trace:
                trace.append(ControllerTraceRow(tick * dt, raw, filtered, error, accel, twist.copy()))

            if check_termination(self.window, self.cfg.desired_torque_x):
                logger.debug(f"导纳控制终止条件满足 | t={tick * dt:.3f}s")
                return InteractionResult(InteractionOutcome.DONE, tick * dt, tick, trace)

        logger.debug(f"导纳控制超时 | timeout={timeout}s")
        return InteractionResult(InteractionOutcome.TIMEOUT, max_ticks * dt, max_ticks, trace)
