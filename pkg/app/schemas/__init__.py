"""
数据模型模块
"""

from .records import (
    ControllerSummary,
    CurvePoint,
    EpisodeRecord,
    EpisodeTerminal,
    HybridState,
    MetricStat,
    SummaryTable,
    TrialMetrics,
    TrialRow,
)

__all__ = [
    "ControllerSummary",
    "CurvePoint",
    "EpisodeRecord",
    "EpisodeTerminal",
    "HybridState",
    "MetricStat",
    "SummaryTable",
    "TrialMetrics",
    "TrialRow",
]
