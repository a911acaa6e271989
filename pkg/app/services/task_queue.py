"""
任务队列管理模块

试验回合之间互不依赖，由 asyncio 工作协程分发到线程池或进程池：
- thread：默认，共享已加载的策略与场景
- process：每个进程独立加载，任务函数与参数必须可 pickle

结果按提交顺序返回，与调度顺序无关。
"""

import asyncio
import functools
import os
import time
import uuid
from concurrent.futures import Executor, ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional

from ..config import TaskQueueSettings, settings
from ..utils.logger import get_logger
from ..utils.memory_utils import cleanup_memory, log_memory_status

logger = get_logger(__name__)


class TaskStatus(str, Enum):
    """试验任务状态"""
    PENDING = "pending"
    RUNNING = "running"
    COMPLETED = "completed"
    FAILED = "failed"


@dataclass
class TaskResult:
    """单个试验任务的执行记录"""
    task_id: str
    status: TaskStatus = TaskStatus.PENDING
    result: Any = None
    error: Optional[str] = None
    exception: Optional[BaseException] = field(default=None, repr=False)
    worker_id: Optional[int] = None
    started_at: Optional[float] = None
    finished_at: Optional[float] = None

    @property
    def elapsed_s(self) -> Optional[float]:
        if self.started_at is None or self.finished_at is None:
            return None
        return self.finished_at - self.started_at

    def to_dict(self) -> Dict[str, Any]:
        return {
            "task_id": self.task_id,
            "status": self.status.value,
            "worker_id": self.worker_id,
            "elapsed_s": self.elapsed_s,
            "error": self.error,
        }


@dataclass
class _Job:
    task_id: str
    func: Callable
    args: tuple = ()
    kwargs: dict = field(default_factory=dict)


class TrialQueue:
    """
    试验任务队列

    submit() 登记任务，run() 启动 max_workers 个工作协程直到队列清空；
    有任务失败时在全部任务结束后抛出第一个失败任务的异常。
    """

    def __init__(self, config: Optional[TaskQueueSettings] = None):
        config = config or settings.task_queue
        self.execution_mode = config.execution_mode
        self.max_workers = config.max_workers if config.max_workers > 0 else (os.cpu_count() or 1)
        self._pending: List[_Job] = []
        self._tasks: Dict[str, TaskResult] = {}
        logger.info(f"任务队列初始化 | 模式: {self.execution_mode} | 最大并行数: {self.max_workers}")

    def submit(self, func: Callable, *args, task_id: Optional[str] = None, **kwargs) -> str:
        """登记一个任务，返回任务 ID"""
        task_id = task_id or uuid.uuid4().hex
        if task_id in self._tasks:
            raise ValueError(f"任务 ID 重复: {task_id}")
        if kwargs and self.execution_mode == "process":
            raise ValueError("进程模式下任务只支持位置参数")
        self._pending.append(_Job(task_id, func, args, kwargs))
        self._tasks[task_id] = TaskResult(task_id)
        return task_id

    def get_task_status(self, task_id: str) -> Optional[TaskResult]:
        return self._tasks.get(task_id)

    def _make_executor(self) -> Executor:
        if self.execution_mode == "process":
            return ProcessPoolExecutor(max_workers=self.max_workers)
        return ThreadPoolExecutor(max_workers=self.max_workers, thread_name_prefix="trial_worker")

    async def _worker(self, worker_id: int, queue: "asyncio.Queue[_Job]", executor: Executor) -> None:
        loop = asyncio.get_running_loop()
        while not queue.empty():
            job = queue.get_nowait()
            record = self._tasks[job.task_id]
            record.status = TaskStatus.RUNNING
            record.worker_id = worker_id
            record.started_at = time.perf_counter()
            try:
                call = functools.partial(job.func, *job.args, **job.kwargs)
                record.result = await loop.run_in_executor(executor, call)
                record.status = TaskStatus.COMPLETED
            except Exception as e:
                record.status = TaskStatus.FAILED
                record.error = str(e)
                record.exception = e
                logger.error(f"任务 {job.task_id} 失败 (工作者 {worker_id}): {e}")
            finally:
                record.finished_at = time.perf_counter()
                log_memory_status(f"任务 {job.task_id} 完成后")

    async def _run(self) -> None:
        queue: "asyncio.Queue[_Job]" = asyncio.Queue()
        for job in self._pending:
            queue.put_nowait(job)
        self._pending = []

        n_workers = max(1, min(self.max_workers, queue.qsize()))
        with self._make_executor() as executor:
            await asyncio.gather(*(self._worker(i, queue, executor) for i in range(n_workers)))

    def run(self) -> List[Any]:
        """
        执行全部已登记任务

        Returns:
            按提交顺序排列的结果
        """
        total = len(self._pending)
        logger.info(f"任务队列开始执行 | 任务数: {total} | 工作者: {self.max_workers}")
        asyncio.run(self._run())
        cleanup_memory()

        records = list(self._tasks.values())
        failed = [r for r in records if r.status is TaskStatus.FAILED]
        logger.info(f"任务队列执行完毕 | 成功: {total - len(failed)} | 失败: {len(failed)}")
        if failed:
            raise failed[0].exception
        return [r.result for r in records]


def get_task_queue(config: Optional[TaskQueueSettings] = None) -> TrialQueue:
    """按配置构造任务队列"""
    return TrialQueue(config)
