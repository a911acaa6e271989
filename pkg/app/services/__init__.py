"""
服务模块
"""

from .task_queue import (
    TrialQueue,
    TaskStatus,
    TaskResult,
    get_task_queue,
)
from .harness import run_trials, summarize, summary_text, trial_csv
from .training import evaluate_policy, train_policy
from .inspection import render_episodes, trace_episode
from .selftest import run_selftest

__all__ = [
    "TrialQueue",
    "TaskStatus",
    "TaskResult",
    "get_task_queue",
    "run_trials",
    "summarize",
    "summary_text",
    "trial_csv",
    "evaluate_policy",
    "train_policy",
    "render_episodes",
    "trace_episode",
    "run_selftest",
]
