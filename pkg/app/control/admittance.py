"""
导纳控制器

扳手滤波（51 点滑动平均）、死区、选择矩阵投影、
虚拟质量-阻尼积分以及终止检测。刀具系扳手顺序为 [τx, τy, τz, fx, fy, fz]。
"""

from collections import deque
from dataclasses import dataclass
from typing import Deque, Tuple

import numpy as np

from ..config import AdmittanceSettings
from ..sim.contact import TAU_X


@dataclass(frozen=True)
class AdmittanceGains:
    """
    对角导纳增益

    Attributes:
        mass: 虚拟质量对角元 M
        damping: 虚拟阻尼对角元 B
        selection: 选择矩阵对角元 Λ（0/1）
        desired: 期望扳手 F_des
        deadzone: 死区阈值 F_th (N)
        inner_dt: 内环周期 (s)
    """
    mass: np.ndarray
    damping: np.ndarray
    selection: np.ndarray
    desired: np.ndarray
    deadzone: float
    inner_dt: float

    def __post_init__(self):
        for name in ("mass", "damping", "selection", "desired"):
            value = np.asarray(getattr(self, name), dtype=np.float64).reshape(6)
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        if self.deadzone < 0:
            raise ValueError(f"死区阈值不能为负: {self.deadzone}")
        if not np.all(np.isin(self.selection, (0.0, 1.0))):
            raise ValueError(f"选择矩阵对角元必须为 0/1: {self.selection}")
        selected = self.selected_axes
        if np.any(self.mass[selected] <= 0):
            raise ValueError("被选轴的虚拟质量必须为正")
        if np.any(self.damping[selected] * self.inner_dt >= self.mass[selected]):
            raise ValueError("被选轴离散不稳定: B·dt >= M")

    @classmethod
    def from_settings(cls, cfg: AdmittanceSettings) -> "AdmittanceGains":
        return cls(
            mass=cfg.mass,
            damping=cfg.damping,
            selection=cfg.selection,
            desired=cfg.desired_wrench,
            deadzone=cfg.deadzone,
            inner_dt=cfg.inner_dt,
        )

    @property
    def selected_axes(self) -> np.ndarray:
        return self.selection == 1.0

    def decay_factors(self) -> np.ndarray:
        """零误差时各被选轴速度的逐步衰减系数 1 - B·dt/M"""
        factors = np.zeros(6)
        sel = self.selected_axes
        factors[sel] = 1.0 - self.damping[sel] * self.inner_dt / self.mass[sel]
        return factors


class WrenchFilter:
    """
    滑动平均滤波器

    未填满前对已收到的样本求平均（不补零）。
    """

    def __init__(self, taps: int = 51):
        if taps <= 0:
            raise ValueError(f"滤波器长度必须为正: {taps}")
        self.taps = taps
        self._buffer = np.zeros((taps, 6))
        self._index = 0
        self.count = 0

    def push(self, raw: np.ndarray) -> np.ndarray:
        self._buffer[self._index] = np.asarray(raw, dtype=np.float64)
        self._index = (self._index + 1) % self.taps
        self.count = min(self.count + 1, self.taps)
        return self.value()

    def value(self) -> np.ndarray:
        if self.count == 0:
            return np.zeros(6)
        if self.count < self.taps:
            return self._buffer[:self.count].sum(axis=0) / self.count
        return self._buffer.sum(axis=0) / self.taps


def filter_wrench(state: WrenchFilter, raw: np.ndarray) -> np.ndarray:
    return state.push(raw)


def deadzone(value, threshold: float):
    """sgn(x)·max(|x| - F_th, 0)，逐分量"""
    if threshold < 0:
        raise ValueError(f"死区阈值不能为负: {threshold}")
    value = np.asarray(value, dtype=np.float64)
    out = np.sign(value) * np.maximum(np.abs(value) - threshold, 0.0)
    return float(out) if out.ndim == 0 else out


def select(selection: np.ndarray, wrench: np.ndarray) -> np.ndarray:
    return np.asarray(selection, dtype=np.float64) * np.asarray(wrench, dtype=np.float64)


def admittance_step(
    gains: AdmittanceGains, filtered: np.ndarray, twist: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """
    一个内环周期的导纳积分

    被选轴：a = (dz(F_des - Λ·F') - B·v) / M；未选轴加速度与速度恒为 0。

    Returns:
        (加速度指令, 新的刀具速度)
    """
    sel = gains.selected_axes
    twist = np.where(sel, np.asarray(twist, dtype=np.float64), 0.0)
    error = deadzone(gains.desired - select(gains.selection, filtered), gains.deadzone)
    accel = np.zeros(6)
    accel[sel] = (error[sel] - gains.damping[sel] * twist[sel]) / gains.mass[sel]
    new_twist = twist + accel * gains.inner_dt
    return accel, new_twist


class TerminationWindow:
    """
    最近 window_s 秒内的 (τx, 刀具 y, 刀具 z) 历史

    窗口按内环频率存放 window_s/inner_dt + 1 个样本，首尾跨度恰为 window_s。
    """

    def __init__(self, window_s: float, inner_dt: float, torque_tol: float, motion_tol: float):
        self.capacity = int(round(window_s / inner_dt)) + 1
        self.torque_tol = torque_tol
        self.motion_tol = motion_tol
        self._tau: Deque[float] = deque(maxlen=self.capacity)
        self._y: Deque[float] = deque(maxlen=self.capacity)
        self._z: Deque[float] = deque(maxlen=self.capacity)

    @classmethod
    def from_settings(cls, cfg: AdmittanceSettings) -> "TerminationWindow":
        return cls(cfg.window_s, cfg.inner_dt, cfg.torque_tolerance, cfg.motion_tolerance)

    def push(self, tau_x: float, tool_y: float, tool_z: float) -> None:
        self._tau.append(float(tau_x))
        self._y.append(float(tool_y))
        self._z.append(float(tool_z))

    def push_wrench(self, filtered: np.ndarray, tool_yz: np.ndarray) -> None:
        self.push(filtered[TAU_X], tool_yz[0], tool_yz[1])

    @property
    def full(self) -> bool:
        return len(self._tau) == self.capacity

    @property
    def current_tau(self) -> float:
        return self._tau[-1]

    def displacement(self) -> Tuple[float, float]:
        """窗口内 y、z 的最大位移（极差）"""
        return max(self._y) - min(self._y), max(self._z) - min(self._z)


def check_termination(win: TerminationWindow, tau_des_x: float = 0.0) -> bool:
    """
    力矩接近期望且最近一秒内几乎不动时判定完成
    """
    if not win.full:
        return False
    if abs(win.current_tau - tau_des_x) > win.torque_tol:
        return False
    dy, dz = win.displacement()
    return dy < win.motion_tol and dz < win.motion_tol
