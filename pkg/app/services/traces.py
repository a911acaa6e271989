"""
CSV 导出

统一格式：UTF-8、LF 换行、浮点六位小数、布尔写 1/0、缺失值写空字段。
"""

import csv
import io
from pathlib import Path
from typing import Any, Iterable, List, Sequence, Union

from ..control.interaction import ControllerTraceRow, controller_trace_header
from ..exceptions import ExportError
from ..sim.contact import PlantTraceRow
from ..sim.env import TraceRow
from ..utils.logger import get_logger

logger = get_logger(__name__)

EPISODE_TRACE_HEADER = ["step", "a_x", "a_y", "reward", "distance", "terminal"]
PLANT_TRACE_HEADER = ["time", "branch_y", "branch_z", "penetration", "tx", "ty", "tz", "fx", "fy", "fz"]


def fmt_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def csv_text(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt_value(v) for v in row])
    return buffer.getvalue()


def write_csv(path: Union[str, Path], header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(csv_text(header, rows))
    except OSError as e:
        raise ExportError(f"CSV 写入失败 {path}: {e}") from e
    logger.debug(f"CSV 已写出: {path}")
    return path


def episode_trace_rows(trace: Iterable[TraceRow]) -> List[list]:
    return [[r.step, r.a_x, r.a_y, r.reward, r.distance, r.terminal] for r in trace]


def plant_trace_rows(trace: Iterable[PlantTraceRow]) -> List[list]:
    return [[r.time, r.branch_y, r.branch_z, r.penetration, *r.wrench] for r in trace]


def write_episode_trace(path: Union[str, Path], trace: Iterable[TraceRow]) -> Path:
    return write_csv(path, EPISODE_TRACE_HEADER, episode_trace_rows(trace))


def write_controller_trace(path: Union[str, Path], trace: Iterable[ControllerTraceRow]) -> Path:
    return write_csv(path, controller_trace_header(), [row.as_row() for row in trace])


def write_plant_trace(path: Union[str, Path], trace: Iterable[PlantTraceRow]) -> Path:
    return write_csv(path, PLANT_TRACE_HEADER, plant_trace_rows(trace))
