from __future__ import annotations

import threading
import time

import pytest

from app.config import TaskQueueSettings
from app.exceptions import CheckpointError
from app.schemas.records import TrialRow
from app.services.harness import (
    TRIAL_CSV_HEADER,
    plan_trials,
    run_trials,
    select_targets,
    summarize,
    summary_text,
    trial_csv,
)
from app.services.task_queue import TaskStatus, TrialQueue
from app.sim.scene import build_scene


def _row(trial_id: int, controller: str, success: bool, pivot=None, remnant=None, force: float = 0.0) -> TrialRow:
    return TrialRow(
        trial_id=trial_id,
        controller=controller,
        target_id=trial_id // 4,
        seed=trial_id,
        success=success,
        pivot_offset_m=pivot,
        remnant_len_m=remnant,
        max_force_N=force,
        steps=10,
        terminal="Done" if success else "Timeout",
    )


def test_plan_trials_order_and_seeds(settings):
    scene = build_scene(settings.scene, settings.harness.master_seed)
    jobs = plan_trials(settings, scene)
    h = settings.harness
    n_targets = min(h.n_targets, len(scene.targets))
    assert len(jobs) == n_targets * h.trials_per_target * len(h.controllers)
    assert [j.controller for j in jobs[: len(h.controllers)]] == h.controllers
    assert [j.trial_id for j in jobs] == sorted(j.trial_id for j in jobs)
    assert len({j.seed for j in jobs}) == len(jobs)
    assert jobs == plan_trials(settings, scene)


def test_select_targets_is_sorted_and_seeded(scene):
    picked = select_targets(scene, 3, 11)
    ids = [t.target_id for t in picked]
    assert ids == sorted(ids)
    assert ids == [t.target_id for t in select_targets(scene, 3, 11)]


def test_trial_csv_format():
    rows = [_row(0, "HC", True, 0.0123, 0.03, 1.5), _row(0, "OL", False, None, None, 0.0)]
    text = trial_csv(rows)
    lines = text.split("\n")
    assert lines[0] == ",".join(TRIAL_CSV_HEADER)
    assert lines[1] == "0,HC,0,0,1,0.012300,0.030000,1.500000,10,Done"
    assert lines[2] == "0,OL,0,0,0,,,0.000000,10,Timeout"
    assert text.endswith("\n") and "\r" not in text


def test_summarize_accuracy_rounding():
    rows = [_row(i, "HC", i < 20) for i in range(26)]
    summary = summarize(rows).by_controller()["HC"]
    assert summary.trials == 26
    assert summary.successes == 20
    assert summary.accuracy_pct == 77


def test_summarize_statistics_in_centimetres():
    rows = [
        _row(0, "CL", True, pivot=0.01, remnant=0.02, force=1.0),
        _row(1, "CL", True, pivot=0.03, remnant=None, force=3.0),
    ]
    summary = summarize(rows).by_controller()["CL"]
    assert summary.pivot_offset_cm.mean == pytest.approx(2.0)
    assert summary.pivot_offset_cm.std == pytest.approx(1.0)
    assert summary.remnant_len_cm.count == 1
    assert summary.remnant_len_cm.std == 0.0
    assert summary.max_force_N.mean == pytest.approx(2.0)


def test_summarize_keeps_controller_order_and_missing_metrics():
    rows = [_row(0, "OL", False), _row(0, "HC", True)]
    table = summarize(rows)
    assert [r.controller for r in table.rows] == ["HC", "OL"]
    assert table.rows[1].pivot_offset_cm.mean is None
    text = summary_text(table)
    assert text.splitlines()[0].startswith("Controller")
    assert "100%" in text and " - " in text


def test_run_trials_writes_outputs(fast_settings, tmp_path):
    rows, table = run_trials(fast_settings, tmp_path / "run")
    assert [r.controller for r in rows] == ["CL", "OL", "OL-"]
    for name in ("trials.csv", "summary.txt", "summary.json"):
        assert (tmp_path / "run" / name).is_file()
    assert {r.controller for r in table.rows} == {"CL", "OL", "OL-"}
    assert all(r.max_force_N >= 0 for r in rows)


@pytest.mark.slow
def test_run_trials_is_deterministic(fast_settings, tmp_path):
    rows_a, _ = run_trials(fast_settings, tmp_path / "a")
    rows_b, _ = run_trials(fast_settings, tmp_path / "b")
    assert trial_csv(rows_a) == trial_csv(rows_b)


@pytest.mark.slow
def test_process_pool_matches_serial_threads(fast_settings, tmp_path):
    base = fast_settings.with_overrides(harness={"trials_per_target": 2})
    serial = base.with_overrides(task_queue={"execution_mode": "thread", "max_workers": 1})
    parallel = base.with_overrides(task_queue={"execution_mode": "process", "max_workers": 2})
    rows_serial, _ = run_trials(serial, tmp_path / "serial")
    rows_parallel, _ = run_trials(parallel, tmp_path / "parallel")
    assert trial_csv(rows_parallel) == trial_csv(rows_serial)
    assert (tmp_path / "parallel" / "trials.csv").read_bytes() == (tmp_path / "serial" / "trials.csv").read_bytes()


def test_hybrid_without_checkpoint_raises(fast_settings, tmp_path):
    cfg = fast_settings.with_overrides(
        harness={"controllers": ["HC"], "policy_checkpoint": str(tmp_path / "missing.ckpt")}
    )
    with pytest.raises(CheckpointError):
        run_trials(cfg, tmp_path / "out")


def test_queue_returns_results_in_submission_order():
    queue = TrialQueue(TaskQueueSettings(max_workers=4, execution_mode="thread"))

    def work(i: int) -> int:
        time.sleep(0.01 * (5 - i))
        return i * i

    ids = [queue.submit(work, i, task_id=f"job-{i}") for i in range(5)]
    assert queue.run() == [0, 1, 4, 9, 16]
    assert all(queue.get_task_status(t).status is TaskStatus.COMPLETED for t in ids)


def test_queue_runs_in_parallel_threads():
    queue = TrialQueue(TaskQueueSettings(max_workers=2, execution_mode="thread"))
    names = set()
    barrier = threading.Barrier(2, timeout=5)

    def work() -> None:
        names.add(threading.current_thread().name)
        barrier.wait()

    queue.submit(work)
    queue.submit(work)
    queue.run()
    assert len(names) == 2


def test_queue_reraises_first_failure():
    queue = TrialQueue(TaskQueueSettings(max_workers=1, execution_mode="thread"))

    def boom() -> None:
        raise KeyError("broken")

    queue.submit(lambda: 1, task_id="ok")
    queue.submit(boom, task_id="bad")
    with pytest.raises(KeyError):
        queue.run()
    assert queue.get_task_status("bad").status is TaskStatus.FAILED
    assert queue.get_task_status("ok").to_dict()["status"] == "completed"


def test_duplicate_task_id_rejected():
    queue = TrialQueue(TaskQueueSettings(max_workers=1))
    queue.submit(lambda: None, task_id="x")
    with pytest.raises(ValueError):
        queue.submit(lambda: None, task_id="x")
