"""
实验编排

每次运行由主种子构造一个场景，选取 n_targets 个目标，每个目标做 trials_per_target 次试验，
每次试验依次运行配置中的各控制器。同一次试验内各控制器共享场景与目标估计抽样（OL- 另加标定扰动）。
"""

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..config import CONTROLLER_IDS, Settings
from ..control.baselines import run_closed_loop, run_open_loop
from ..control.estimation import estimate_target, miscalibrated_estimate, perturb_calibration
from ..control.supervisor import approach_pose, run_hybrid
from ..exceptions import CheckpointError, ExportError
from ..models.manager import get_policy_manager
from ..models.policy import ActionPolicy
from ..schemas.records import ControllerSummary, EpisodeRecord, MetricStat, SummaryTable, TrialRow
from ..sim.camera import CameraModel
from ..sim.scene import PruneTarget, SceneGraph, build_scene
from ..utils.logger import get_logger
from ..utils.memory_utils import log_memory_status
from ..utils.seeding import derive_seed, make_rng
from .task_queue import get_task_queue
from .traces import csv_text

logger = get_logger(__name__)

TRIAL_CSV_HEADER = [
    "trial_id", "controller", "target_id", "seed", "success",
    "pivot_offset_m", "remnant_len_m", "max_force_N", "steps", "terminal",
]


@dataclass(frozen=True)
class TrialJob:
    """一次 (目标, 试验, 控制器) 回合"""
    trial_id: int
    target_id: int
    trial_index: int
    controller: str
    seed: int


def select_targets(scene: SceneGraph, n_targets: int, master_seed: int) -> List[PruneTarget]:
    """从场景中按主种子抽取目标（按 target_id 排序）"""
    if not scene.targets:
        return []
    n = min(n_targets, len(scene.targets))
    if n < n_targets:
        logger.warning(f"场景只有 {len(scene.targets)} 个目标，少于配置的 {n_targets}")
    rng = make_rng(master_seed, "targets")
    picked = sorted(int(i) for i in rng.choice(len(scene.targets), size=n, replace=False))
    return [scene.targets[i] for i in picked]


def plan_trials(settings: Settings, scene: SceneGraph) -> List[TrialJob]:
    """按 (trial_id, 控制器顺序) 生成全部任务"""
    h = settings.harness
    jobs = []
    for t_index, target in enumerate(select_targets(scene, h.n_targets, h.master_seed)):
        for k in range(h.trials_per_target):
            trial_id = t_index * h.trials_per_target + k
            for controller in h.controllers:
                seed = derive_seed(h.master_seed, target.target_id, k, controller)
                jobs.append(TrialJob(trial_id, target.target_id, k, controller, seed))
    return jobs


def home_camera_pose(settings: Settings, target: PruneTarget):
    """拍摄目标的相机“home”位姿"""
    camera = CameraModel.from_settings(settings.camera)
    return camera.camera_pose(approach_pose(target.point, settings.supervisor.home_distance))


def run_episode(
    settings: Settings,
    scene: SceneGraph,
    job: TrialJob,
    policy: Optional[ActionPolicy] = None,
    record_trace: bool = False,
) -> EpisodeRecord:
    """运行单个回合"""
    master = settings.harness.master_seed
    target = scene.targets[job.target_id]
    home = home_camera_pose(settings, target)
    estimate = estimate_target(
        target.point, home, settings.estimate, make_rng(master, job.target_id, job.trial_index, "estimate")
    )
    start = approach_pose(estimate.point, settings.supervisor.start_distance)

    if job.controller == "HC":
        if policy is None:
            raise CheckpointError("混合控制器需要策略")
        return run_hybrid(scene, target, policy, settings, job.seed, start_pose=start, record_trace=record_trace)
    if job.controller == "CL":
        return run_closed_loop(scene, target, estimate, settings, job.seed, record_trace=record_trace)
    if job.controller == "OL":
        return run_open_loop(scene, target, estimate, settings, job.seed, record_trace=record_trace)
    if job.controller == "OL-":
        perturbed = perturb_calibration(
            home,
            make_rng(master, job.target_id, job.trial_index, "calibration"),
            settings.estimate.miscalibration_translation,
            settings.estimate.miscalibration_rotation_deg,
        )
        wrong = miscalibrated_estimate(estimate, home, perturbed)
        return run_open_loop(scene, target, wrong, settings, job.seed, controller_id="OL-", record_trace=record_trace)
    raise ValueError(f"未知控制器: {job.controller}")


def _run_job(settings: Settings, scene: SceneGraph, policy: Optional[ActionPolicy], job: TrialJob) -> TrialRow:
    record = run_episode(settings, scene, job, policy)
    logger.info(
        f"试验 {job.trial_id} | {job.controller} | 目标 {job.target_id} | {record.terminal.value} | "
        f"成功: {record.metrics.success}"
    )
    return TrialRow.from_record(job.trial_id, record)


@lru_cache(maxsize=4)
def _cached_context(settings_json: str) -> Tuple[Settings, SceneGraph]:
    settings = Settings.from_dict(json.loads(settings_json))
    return settings, build_scene(settings.scene, settings.harness.master_seed)


def run_trial_job(settings_json: str, job: TrialJob) -> TrialRow:
    """进程池入口：在子进程内重建配置与场景，按检查点路径加载策略"""
    settings, scene = _cached_context(settings_json)
    policy = None
    if job.controller == "HC":
        policy = get_policy_manager().get_policy(settings.harness.policy_checkpoint)
    row = _run_job(settings, scene, policy, job)
    log_memory_status(f"试验 {job.trial_id}/{job.controller} 后")
    return row


def _sort_rows(rows: Sequence[TrialRow], controllers: Sequence[str]) -> List[TrialRow]:
    order = {c: i for i, c in enumerate(controllers)}
    return sorted(rows, key=lambda r: (r.trial_id, order.get(r.controller, len(order))))


def run_trial_rows(settings: Settings, policy: Optional[ActionPolicy] = None) -> List[TrialRow]:
    """
    运行全部试验并按 (trial_id, 控制器顺序) 排序

    Args:
        settings: 全部配置
        policy: 混合控制器使用的策略；None 时从 harness.policy_checkpoint 加载

    Raises:
        CheckpointError: 启用混合控制器但检查点不存在
    """
    h = settings.harness
    if "HC" in h.controllers and policy is None:
        checkpoint = Path(h.policy_checkpoint)
        if not checkpoint.is_file():
            raise CheckpointError(f"混合控制器需要策略检查点: {checkpoint}")

    scene = build_scene(settings.scene, h.master_seed)
    jobs = plan_trials(settings, scene)
    logger.info(
        f"开始试验 | 控制器: {h.controllers} | 目标数: {len({j.target_id for j in jobs})} | "
        f"每目标试验: {h.trials_per_target} | 回合数: {len(jobs)}"
    )
    if not jobs:
        return []

    queue = get_task_queue(settings.task_queue)
    if settings.task_queue.execution_mode == "process":
        if policy is not None:
            logger.warning("进程模式下忽略传入的策略对象，改为从检查点加载")
        settings_json = json.dumps(settings.to_dict(), sort_keys=True)
        for job in jobs:
            queue.submit(run_trial_job, settings_json, job, task_id=f"{job.trial_id}-{job.controller}")
    else:
        if policy is None and "HC" in h.controllers:
            policy = get_policy_manager().get_policy(h.policy_checkpoint)
        for job in jobs:
            queue.submit(_run_job, settings, scene, policy, job, task_id=f"{job.trial_id}-{job.controller}")

    return _sort_rows(queue.run(), h.controllers)


def trial_csv(rows: Sequence[TrialRow]) -> str:
    return csv_text(
        TRIAL_CSV_HEADER,
        ([getattr(r, col) for col in TRIAL_CSV_HEADER] for r in rows),
    )


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _stat(values: List[float], scale: float = 1.0) -> MetricStat:
    if not values:
        return MetricStat()
    arr = np.asarray(values, dtype=np.float64) * scale
    return MetricStat(mean=float(arr.mean()), std=float(arr.std(ddof=0)), count=len(values))


def summarize(rows: Sequence[TrialRow], controllers: Optional[Sequence[str]] = None) -> SummaryTable:
    """
    按控制器汇总：准确率四舍五入为整数百分比，其余指标为均值 ± 总体标准差

    长度指标以厘米给出，缺失值不参与统计。
    """
    if controllers is None:
        controllers = [c for c in CONTROLLER_IDS if any(r.controller == c for r in rows)]
        controllers += sorted({r.controller for r in rows} - set(controllers))
    table = SummaryTable()
    for controller in controllers:
        subset = [r for r in rows if r.controller == controller]
        if not subset:
            continue
        successes = sum(1 for r in subset if r.success)
        table.rows.append(ControllerSummary(
            controller=controller,
            trials=len(subset),
            successes=successes,
            accuracy_pct=_round_half_up(100.0 * successes / len(subset)),
            pivot_offset_cm=_stat([r.pivot_offset_m for r in subset if r.pivot_offset_m is not None], 100.0),
            remnant_len_cm=_stat([r.remnant_len_m for r in subset if r.remnant_len_m is not None], 100.0),
            max_force_N=_stat([r.max_force_N for r in subset]),
        ))
    return table


def _fmt_stat(stat: MetricStat, digits: int = 1) -> str:
    if stat.mean is None:
        return "-"
    return f"{stat.mean:.{digits}f} ± {stat.std:.{digits}f}"


def summary_text(table: SummaryTable) -> str:
    """汇总表文本（控制器 | 准确率 | 枢轴距离 | 剩余枝长 | 最大力）"""
    header = ["Controller", "Accuracy", "Pivot length (cm)", "Remnant length (cm)", "Max force (N)", "Trials"]
    lines = [header]
    for row in table.rows:
        lines.append([
            row.controller,
            f"{row.accuracy_pct}%",
            _fmt_stat(row.pivot_offset_cm),
            _fmt_stat(row.remnant_len_cm),
            _fmt_stat(row.max_force_N),
            str(row.trials),
        ])
    widths = [max(len(line[i]) for line in lines) for i in range(len(header))]
    return "\n".join(
        " | ".join(cell.ljust(widths[i]) for i, cell in enumerate(line)).rstrip() for line in lines
    ) + "\n"


def write_outputs(out_dir: Union[str, Path], rows: Sequence[TrialRow], table: SummaryTable) -> Dict[str, Path]:
    """写出 trials.csv、summary.txt、summary.json"""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "trials": out / "trials.csv",
            "summary_text": out / "summary.txt",
            "summary_json": out / "summary.json",
        }
        with open(paths["trials"], "w", encoding="utf-8", newline="") as f:
            f.write(trial_csv(rows))
        with open(paths["summary_text"], "w", encoding="utf-8", newline="") as f:
            f.write(summary_text(table))
        with open(paths["summary_json"], "w", encoding="utf-8", newline="") as f:
            f.write(table.model_dump_json(indent=2) + "\n")
    except OSError as e:
        raise ExportError(f"无法写出试验结果到 {out}: {e}") from e
    return paths


def run_trials(
    settings: Settings,
    out_dir: Optional[Union[str, Path]] = None,
    policy: Optional[ActionPolicy] = None,
) -> Tuple[List[TrialRow], SummaryTable]:
    """
    完整对比实验：运行、汇总并写出结果
    """
    out = Path(out_dir or settings.harness.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ExportError(f"输出目录不可写: {out}: {e}") from e

    rows = run_trial_rows(settings, policy)
    table = summarize(rows, settings.harness.controllers)
    paths = write_outputs(out, rows, table)
    logger.info(f"试验完成 | 行数: {len(rows)} | 结果: {paths['trials']}")
    return rows, table
