"""
场景模型

棚架（立柱 + 两根铁丝）、程序化生成的纺锤形果树、剪枝目标，
以及刀口区域查询、距离与剩余枝长计算。场景构造后不可变，可在并发回合间只读共享。
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..config import SceneSettings, SpindleParams, validated
from ..exceptions import NotCuttableError, PlacementError
from ..utils.logger import get_logger
from .cutter import CutterProfile, ZoneStatus, build_cutter_profile
from .geometry import CapsuleChain, Pose, chain_distance

logger = get_logger(__name__)

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class Box:
    """轴对齐盒（m）"""
    lo: np.ndarray
    hi: np.ndarray


@dataclass(frozen=True)
class Wire:
    """棚架铁丝：细胶囊"""
    a: np.ndarray
    b: np.ndarray
    radius: float

    @property
    def height(self) -> float:
        return float(self.a[1])


@dataclass(frozen=True)
class TreeSpindle:
    """纺锤形树：主干胶囊链 + 根植于主干表面的侧枝胶囊链"""
    leader: CapsuleChain
    side_branches: Tuple[CapsuleChain, ...]
    model_id: int

    def translated(self, offset: np.ndarray) -> "TreeSpindle":
        def shift(chain: CapsuleChain) -> CapsuleChain:
            return CapsuleChain(chain.points + offset, chain.radii)
        return TreeSpindle(shift(self.leader), tuple(shift(c) for c in self.side_branches), self.model_id)

    def leader_axis_at_height(self, y: float) -> Tuple[np.ndarray, float]:
        """主干轴线在高度 y 处的点与半径（超出范围时截断）"""
        pts = self.leader.points
        y = float(np.clip(y, pts[0, 1], pts[-1, 1]))
        i = int(np.clip(np.searchsorted(pts[:, 1], y, side="right") - 1, 0, self.leader.n_segments - 1))
        u = (y - pts[i, 1]) / (pts[i + 1, 1] - pts[i, 1])
        return pts[i] + u * (pts[i + 1] - pts[i]), float(self.leader.radii[i])


@dataclass(frozen=True)
class PruneTarget:
    """
    剪枝目标

    point 位于 (spindle_id, branch_id) 侧枝上、距主干着生点弧长 arclength 处。
    """
    target_id: int
    point: np.ndarray
    spindle_id: int
    branch_id: int
    arclength: float
    leader_attach: np.ndarray


@dataclass(frozen=True)
class SceneGraph:
    """完整场景"""
    frame_boxes: Tuple[Box, ...]
    wires: Tuple[Wire, ...]
    spindles: Tuple[TreeSpindle, ...]
    targets: Tuple[PruneTarget, ...]
    rng_seed: int
    cutter: CutterProfile
    config: SceneSettings = field(repr=False, default=None)

    def branch_of(self, target: PruneTarget) -> CapsuleChain:
        return self.spindles[target.spindle_id].side_branches[target.branch_id]

    @classmethod
    def empty(cls, cutter: CutterProfile) -> "SceneGraph":
        """不含任何图元的场景（渲染测试用）"""
        return cls((), (), (), (), 0, cutter)

    def export_text(self) -> str:
        """纯文本几何转储（调试用）"""
        lines = [f"# scene seed={self.rng_seed}"]
        for i, box in enumerate(self.frame_boxes):
            lines.append(f"box {i} lo={_fmt(box.lo)} hi={_fmt(box.hi)}")
        for i, wire in enumerate(self.wires):
            lines.append(f"wire {i} a={_fmt(wire.a)} b={_fmt(wire.b)} r={wire.radius:.6f}")
        for s, spindle in enumerate(self.spindles):
            lines.append(f"spindle {s} model={spindle.model_id}")
            lines.extend(_chain_lines(f"  leader", spindle.leader))
            for b, branch in enumerate(spindle.side_branches):
                lines.extend(_chain_lines(f"  branch {b}", branch))
        for t in self.targets:
            lines.append(
                f"target {t.target_id} spindle={t.spindle_id} branch={t.branch_id} "
                f"s={t.arclength:.6f} point={_fmt(t.point)} attach={_fmt(t.leader_attach)}"
            )
        return "\n".join(lines) + "\n"


def _fmt(v: np.ndarray) -> str:
    return "(" + ", ".join(f"{x:.6f}" for x in v) + ")"


def _chain_lines(prefix: str, chain: CapsuleChain) -> List[str]:
    return [
        f"{prefix} seg {i} {_fmt(chain.points[i])} -> {_fmt(chain.points[i + 1])} r={chain.radii[i]:.6f}"
        for i in range(chain.n_segments)
    ]


def _rng(*seeds: int) -> np.random.Generator:
    return np.random.default_rng([int(s) & _MASK64 for s in seeds])


def _sample_heights(
    rng: np.random.Generator, params: SpindleParams, count: int, avoid: Sequence[float]
) -> List[float]:
    """在允许区间内拒绝采样侧枝着生高度（避开铁丝、保持最小间距）"""
    lo, hi = params.branch_height_range
    heights: List[float] = []
    for _ in range(200):
        if len(heights) == count:
            break
        h = float(rng.uniform(lo, hi))
        if any(abs(h - w) < params.wire_clearance for w in avoid):
            continue
        if any(abs(h - other) < params.branch_min_gap for other in heights):
            continue
        heights.append(h)
    return sorted(heights)


def generate_spindle(
    params: SpindleParams,
    model_id: int,
    seed: int,
    avoid_heights: Sequence[float] = (),
) -> TreeSpindle:
    """
    程序化生成一棵纺锤形树（以原点为基部）

    Args:
        params: 生成参数
        model_id: 模型编号 [0, 8)
        seed: 场景种子
        avoid_heights: 侧枝需要避开的高度（铁丝）

    Returns:
        TreeSpindle，对 (params, model_id, seed) 确定

    Raises:
        PlacementError: 侧枝数量达不到 branch_count_range 下限
    """
    if not 0 <= model_id < 8:
        raise ValueError(f"model_id 必须在 [0, 8) 内: {model_id}")
    rng = _rng(seed, model_id)

    # 主干：竖直胶囊链，端点带少量随机偏移，半径线性收细
    n = params.leader_segments
    ys = np.linspace(0.0, params.leader_height, n + 1)
    wobble = rng.uniform(-params.leader_wobble, params.leader_wobble, size=(n + 1, 2))
    wobble[0] = 0.0
    leader_pts = np.column_stack([wobble[:, 0], ys, wobble[:, 1]])
    leader_radii = np.linspace(params.leader_base_radius, params.leader_tip_radius, n)
    leader = CapsuleChain(leader_pts, leader_radii)
    base = TreeSpindle(leader, (), model_id)

    lo_count, hi_count = params.branch_count_range
    count = int(rng.integers(lo_count, hi_count + 1))
    heights = _sample_heights(rng, params, count, avoid_heights)
    if len(heights) < lo_count:
        raise PlacementError(
            f"模型 {model_id} 只放下 {len(heights)} 根侧枝，少于下限 {lo_count} "
            f"（检查着生高度区间、最小间距与铁丝间距）"
        )

    branches = []
    for h in heights:
        side = 1.0 if rng.random() < 0.5 else -1.0
        elevation = np.radians(rng.uniform(*params.elevation_range_deg))
        azimuth = np.radians(rng.uniform(-params.azimuth_limit_deg, params.azimuth_limit_deg))
        length = float(rng.uniform(*params.branch_length_range))

        direction = np.array([
            side * np.cos(elevation) * np.cos(azimuth),
            np.sin(elevation),
            np.cos(elevation) * np.sin(azimuth),
        ])
        axis_pt, r_leader = base.leader_axis_at_height(h)
        horizontal = np.array([direction[0], 0.0, direction[2]])
        horizontal /= np.linalg.norm(horizontal)
        start = axis_pt + horizontal * r_leader

        seg_len = length / params.branch_segments
        pts = [start]
        d = direction
        for k in range(params.branch_segments):
            if k > 0:
                # 逐段轻微下垂并随机偏转
                bend = np.radians(rng.uniform(0.0, params.bend_deg))
                d = d + np.array([0.0, -np.sin(bend), 0.0]) + rng.normal(0.0, 0.03, size=3)
                d /= np.linalg.norm(d)
            pts.append(pts[-1] + d * seg_len)
        radii = np.linspace(params.branch_base_radius, params.branch_tip_radius, params.branch_segments)
        branches.append(CapsuleChain(np.array(pts), radii))

    return TreeSpindle(leader, tuple(branches), model_id)


def build_scene(config: SceneSettings, seed: int) -> SceneGraph:
    """
    构造场景：立柱、两根铁丝、spindle_count 棵纺锤树与剪枝目标

    Args:
        config: 场景配置（非正尺寸等非法值抛出 ConfigError）
        seed: 64 位场景种子

    Returns:
        对 (config, seed) 确定的 SceneGraph

    Raises:
        PlacementError: 某棵纺锤树没有可用的剪枝目标
    """
    config = validated(SceneSettings, config)
    seed = int(seed) & _MASK64
    rng = _rng(seed)

    half_w = config.frame_width / 2
    pw = config.post_width / 2
    frame_boxes = tuple(
        Box(np.array([x - pw, 0.0, -pw]), np.array([x + pw, config.frame_height, pw]))
        for x in (-half_w, half_w)
    )
    wires = tuple(
        Wire(np.array([-half_w, h, config.wire_z]), np.array([half_w, h, config.wire_z]), config.wire_radius)
        for h in config.wire_heights
    )

    n = config.spindle_count
    replace = n > config.model_count
    model_ids = rng.choice(config.model_count, size=n, replace=replace)
    xs = (np.arange(n) - (n - 1) / 2) * config.spindle_spacing

    spindles = []
    for x, model_id in zip(xs, model_ids):
        spindle = generate_spindle(config.spindle, int(model_id), seed, config.wire_heights)
        spindles.append(spindle.translated(np.array([x, 0.0, 0.0])))

    targets = []
    for s, spindle in enumerate(spindles):
        first = len(targets)
        for b, branch in enumerate(spindle.side_branches):
            point = branch.point_at(config.spindle.target_arclength)
            if _too_close_to_wires(point, wires, config.spindle.wire_clearance / 2):
                continue
            targets.append(PruneTarget(
                target_id=len(targets),
                point=point,
                spindle_id=s,
                branch_id=b,
                arclength=config.spindle.target_arclength,
                leader_attach=branch.points[0].copy(),
            ))
        if len(targets) == first:
            raise PlacementError(f"纺锤树 {s} 的侧枝都太靠近铁丝，没有可用的剪枝目标 | seed={seed}")

    cutter = build_cutter_profile(config)
    scene = SceneGraph(
        frame_boxes=frame_boxes,
        wires=wires,
        spindles=tuple(spindles),
        targets=tuple(targets),
        rng_seed=seed,
        cutter=cutter,
        config=config,
    )
    logger.debug(
        f"场景构造完成 | seed={seed} | 纺锤树: {len(spindles)} | 模型: {list(map(int, model_ids))} | 目标: {len(targets)}"
    )
    return scene


def _too_close_to_wires(point: np.ndarray, wires: Sequence[Wire], clearance: float) -> bool:
    return any(
        np.hypot(point[1] - w.a[1], point[2] - w.a[2]) < clearance for w in wires
    )


# ----------------------------------------------------------------------
# 查询
# ----------------------------------------------------------------------

def cut_plane_crossing(branch: CapsuleChain, pose: Pose, target: PruneTarget) -> Optional[Tuple[float, np.ndarray]]:
    """侧枝轴线与刀具 yz 平面的交点中，离目标弧长最近的一个"""
    crossings = branch.plane_crossings(pose.position, pose.rotation[:, 0])
    if not crossings:
        return None
    return min(crossings, key=lambda c: abs(c[0] - target.arclength))


def query_zone(scene: SceneGraph, cutter_pose: Pose, target: PruneTarget) -> ZoneStatus:
    """
    目标枝条是否进入刀口

    取目标侧枝与刀具 yz 平面的交点（枝条截面中心）投影到刀口轮廓；
    目标点沿刀具 x 的偏移超过刀口半宽时不在任何区域。
    """
    x_target = float(cutter_pose.to_local(target.point)[0])
    if abs(x_target) > scene.cutter.mouth_half_width_x:
        return ZoneStatus.NONE
    hit = cut_plane_crossing(scene.branch_of(target), cutter_pose, target)
    if hit is None:
        return ZoneStatus.NONE
    local = cutter_pose.to_local(hit[1])
    return scene.cutter.classify(local[1:], x_target)


def distance_to_target(cutter_pose: Pose, target: PruneTarget) -> float:
    """枢轴点（世界系）到剪枝点的欧氏距离"""
    return float(np.linalg.norm(cutter_pose.position - target.point))


def branch_remnant_length(scene: SceneGraph, cutter_pose: Pose, target: PruneTarget) -> float:
    """
    沿刀具 yz 平面剪断后留在主干上的枝长

    Raises:
        NotCuttableError: 侧枝与切割平面不相交
    """
    hit = cut_plane_crossing(scene.branch_of(target), cutter_pose, target)
    if hit is None:
        raise NotCuttableError(f"目标 {target.target_id} 的侧枝与切割平面不相交")
    return hit[0]


def placement_clear(scene: SceneGraph, points: np.ndarray, margin: float = 0.0) -> bool:
    """一组点是否都不在场景图元内部（刀具放置检查）"""
    for p in np.atleast_2d(points):
        for box in scene.frame_boxes:
            if np.all(p >= box.lo - margin) and np.all(p <= box.hi + margin):
                return False
        for wire in scene.wires:
            if chain_distance(CapsuleChain(np.stack([wire.a, wire.b]), [wire.radius]), p) < margin:
                return False
        for spindle in scene.spindles:
            if chain_distance(spindle.leader, p) < margin:
                return False
            for branch in spindle.side_branches:
                if chain_distance(branch, p) < margin:
                    return False
    return True
