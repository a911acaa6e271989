"""
回合记录、试验行与汇总表
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field, field_validator


class HybridState(str, Enum):
    """混合监督器状态"""
    APPROACH = "Approach"
    INTERACT = "Interact"
    DONE = "Done"
    FAILED = "Failed"


# 合法的状态转移
HYBRID_TRANSITIONS = {
    (HybridState.APPROACH, HybridState.INTERACT),
    (HybridState.APPROACH, HybridState.FAILED),
    (HybridState.INTERACT, HybridState.DONE),
    (HybridState.INTERACT, HybridState.FAILED),
}


class EpisodeTerminal(str, Enum):
    """回合最终状态（写入 CSV 的 terminal 列）"""
    DONE = "Done"
    INTERACT_TIMEOUT = "InteractTimeout"
    FAILURE_ZONE = "FailureZone"
    TIMEOUT = "Timeout"
    STOPPED = "Stopped"
    MISSED = "Missed"


class TrialMetrics(BaseModel):
    """单个回合的评价指标"""
    success: bool
    zone: str
    pivot_offset_m: Optional[float] = Field(None, ge=0, description="枝条到枢轴点距离，仅接触后有值")
    remnant_len_m: Optional[float] = Field(None, description="剪断后留在主干上的枝长")
    max_force_N: float = Field(..., ge=0, description="最大接触力")


@dataclass
class EpisodeRecord:
    """
    一次控制器回合的完整记录

    pivot_offset 仅在发生接触时有值；max_force >= 0。
    """
    controller: str
    target_id: int
    seed: int
    terminal: EpisodeTerminal
    metrics: TrialMetrics
    steps: int
    contact_occurred: bool
    states: List[HybridState] = field(default_factory=list)
    episode_trace: List[Any] = field(default_factory=list)
    controller_trace: List[Any] = field(default_factory=list)
    plant_trace: List[Any] = field(default_factory=list)
    # 切换到导纳控制时已执行的视觉步数；未切换时为空
    switch_step: Optional[int] = None

    @property
    def zone(self) -> str:
        return self.metrics.zone

    @property
    def vision_steps_after_interact(self) -> int:
        """回合轨迹中步号晚于切换步的视觉动作数，应恒为 0"""
        if self.switch_step is None:
            return 0
        return sum(1 for row in self.episode_trace if row.step > self.switch_step)


class TrialRow(BaseModel):
    """试验 CSV 的一行"""
    trial_id: int
    controller: str
    target_id: int
    seed: int
    success: bool
    pivot_offset_m: Optional[float] = None
    remnant_len_m: Optional[float] = None
    max_force_N: float
    steps: int
    terminal: str

    @classmethod
    def from_record(cls, trial_id: int, record: EpisodeRecord) -> "TrialRow":
        m = record.metrics
        return cls(
            trial_id=trial_id,
            controller=record.controller,
            target_id=record.target_id,
            seed=record.seed,
            success=m.success,
            pivot_offset_m=m.pivot_offset_m,
            remnant_len_m=m.remnant_len_m,
            max_force_N=m.max_force_N,
            steps=record.steps,
            terminal=record.terminal.value,
        )


class MetricStat(BaseModel):
    """均值 ± 总体标准差"""
    mean: Optional[float] = None
    std: Optional[float] = None
    count: int = 0

    @field_validator("std")
    @classmethod
    def _non_negative(cls, v: Optional[float]) -> Optional[float]:
        if v is not None and v < 0:
            raise ValueError("标准差不能为负")
        return v


class ControllerSummary(BaseModel):
    """单个控制器的汇总"""
    controller: str
    trials: int
    successes: int
    accuracy_pct: int = Field(..., ge=0, le=100)
    pivot_offset_cm: MetricStat
    remnant_len_cm: MetricStat
    max_force_N: MetricStat


class SummaryTable(BaseModel):
    """按控制器汇总"""
    rows: List[ControllerSummary] = Field(default_factory=list)

    def by_controller(self) -> Dict[str, ControllerSummary]:
        return {row.controller: row for row in self.rows}


class CurvePoint(BaseModel):
    """学习曲线上的一点（每次 PPO 更新）"""
    update: int
    env_steps: int
    mean_episode_reward: Optional[float] = None
    success_rate: Optional[float] = None
    episodes: int = 0
    policy_loss: float = 0.0
    value_loss: float = 0.0
    entropy: float = 0.0
    approx_kl: float = 0.0
    clip_fraction: float = 0.0
