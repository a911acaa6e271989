"""
剪刀刀口轮廓与成功/失败区域

所有二维坐标都在刀具 yz 平面内，原点为枢轴点，
第一个分量为 y（竖直），第二个分量为 z（进给方向）。
"""

from dataclasses import dataclass
from enum import Enum
from typing import List, Tuple

import numpy as np

from ..config import SceneSettings
from .geometry import (
    OrientedBox,
    convex_polygons_disjoint,
    ensure_ccw,
    inward_normals,
    point_in_convex_polygon,
)


class ZoneStatus(str, Enum):
    """刀口区域判定结果"""
    NONE = "None"
    SUCCESS = "Success"
    FAILURE = "Failure"


@dataclass(frozen=True)
class CutterProfile:
    """
    旁路剪刀刀口轮廓

    Attributes:
        pivot: 枢轴点（yz）
        mouth_polygon: 刀口漏斗（逆时针），枢轴点为其顶点
        success_region: 刀口内部并向开口外延伸的成功区域
        failure_regions: 两侧刀刃外缘的失败带
        mouth_half_width_x: 刀口沿刀具 x 方向的半宽
        blade_edges: 参与接触的四条刀刃边（不含开口边），[(a, b, 内法向)]
    """

    pivot: np.ndarray
    mouth_polygon: np.ndarray
    success_region: np.ndarray
    failure_regions: Tuple[np.ndarray, ...]
    mouth_half_width_x: float
    blade_thickness: float
    blade_edges: Tuple[Tuple[np.ndarray, np.ndarray, np.ndarray], ...]

    @property
    def mouth_depth(self) -> float:
        return float(self.mouth_polygon[:, 1].max())

    @property
    def tips(self) -> np.ndarray:
        """刀尖点（开口两端）"""
        z_max = self.mouth_polygon[:, 1].max()
        return self.mouth_polygon[np.isclose(self.mouth_polygon[:, 1], z_max)]

    def classify(self, yz: np.ndarray, x: float = 0.0) -> ZoneStatus:
        """
        对刀具系中的点分类

        Args:
            yz: 刀具 yz 平面坐标
            x: 该点沿刀具 x 的偏移，超过刀口半宽时视为不在任何区域
        """
        if abs(x) > self.mouth_half_width_x:
            return ZoneStatus.NONE
        yz = np.asarray(yz, dtype=np.float64)
        if point_in_convex_polygon(self.success_region, yz):
            return ZoneStatus.SUCCESS
        if any(point_in_convex_polygon(poly, yz) for poly in self.failure_regions):
            return ZoneStatus.FAILURE
        return ZoneStatus.NONE

    def render_boxes(self) -> List[OrientedBox]:
        """
        刀具在刀具坐标系中的渲染几何：每条刀刃一块薄板，外加枢轴后方的刀身
        """
        boxes = []
        hx = self.mouth_half_width_x
        t = self.blade_thickness
        for a, b, n_in in self.blade_edges:
            mid = 0.5 * (a + b)
            length = float(np.linalg.norm(b - a))
            along = (b - a) / length
            # 刀板位于刀刃外侧
            center_yz = mid - n_in * (t / 2)
            axes = np.array([
                [1.0, 0.0, 0.0],
                [0.0, along[0], along[1]],
                [0.0, -n_in[0], -n_in[1]],
            ])
            boxes.append(OrientedBox(
                center=[0.0, center_yz[0], center_yz[1]],
                axes=axes,
                half=[hx, length / 2 + t, t / 2],
            ))
        # 刀身/手柄
        boxes.append(OrientedBox(
            center=[0.0, 0.0, -0.04],
            axes=np.eye(3),
            half=[0.008, 0.012, 0.04 - 1e-4],
        ))
        return boxes


def build_cutter_profile(config: SceneSettings) -> CutterProfile:
    """
    由场景配置构造刀口轮廓

    漏斗：枢轴 (0,0)，刀座角点 (±seat_half_width, seat_depth)，
    刀尖 (±opening/2, depth)。成功区域在开口外再延伸 success_extension，
    失败带位于两侧刀刃外 blade_thickness 到 blade_thickness + failure_band。
    """
    half_open = config.mouth_opening / 2
    seat_w, seat_d = config.seat_half_width, config.seat_depth
    depth = config.mouth_depth

    pivot = np.zeros(2)
    seat_r = np.array([seat_w, seat_d])
    seat_l = np.array([-seat_w, seat_d])
    tip_r = np.array([half_open, depth])
    tip_l = np.array([-half_open, depth])

    mouth = ensure_ccw(np.stack([pivot, seat_r, tip_r, tip_l, seat_l]))

    # 成功区域：沿两侧刀刃方向外推到 z = depth + extension
    ext = config.success_extension
    side_r = (tip_r - seat_r) / (tip_r[1] - seat_r[1])
    ext_r = tip_r + side_r * ext
    ext_l = np.array([-ext_r[0], ext_r[1]])
    success = ensure_ccw(np.stack([pivot, seat_r, tip_r, ext_r, ext_l, tip_l, seat_l]))

    normals = inward_normals(mouth)
    edges = []
    n_vertices = len(mouth)
    for i in range(n_vertices):
        a, b = mouth[i], mouth[(i + 1) % n_vertices]
        # 开口边不是刀刃
        if np.isclose(a[1], depth) and np.isclose(b[1], depth):
            continue
        edges.append((a.copy(), b.copy(), normals[i].copy()))

    # 失败带：两侧刀刃（刀座角点 -> 刀尖）外缘的平行带
    t, band = config.blade_thickness, config.failure_band
    failures = []
    for a, b in ((seat_r, tip_r), (seat_l, tip_l)):
        n_in = _edge_inward_normal(mouth, a, b)
        inner_a, inner_b = a - n_in * t, b - n_in * t
        outer_a, outer_b = a - n_in * (t + band), b - n_in * (t + band)
        failures.append(ensure_ccw(np.stack([inner_a, inner_b, outer_b, outer_a])))

    profile = CutterProfile(
        pivot=pivot,
        mouth_polygon=mouth,
        success_region=success,
        failure_regions=tuple(failures),
        mouth_half_width_x=config.mouth_half_width_x,
        blade_thickness=t,
        blade_edges=tuple(edges),
    )
    _check_profile(profile)
    return profile


def _edge_inward_normal(poly: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    normals = inward_normals(poly)
    for i in range(len(poly)):
        p, q = poly[i], poly[(i + 1) % len(poly)]
        if (np.allclose(p, a) and np.allclose(q, b)) or (np.allclose(p, b) and np.allclose(q, a)):
            return normals[i]
    raise ValueError("边不属于多边形")


def _check_profile(profile: CutterProfile) -> None:
    """构造时断言区域不变量"""
    if not any(np.allclose(v, profile.pivot) for v in profile.mouth_polygon):
        raise ValueError("枢轴点必须是刀口多边形的顶点")
    for v in profile.mouth_polygon:
        if not point_in_convex_polygon(profile.success_region, v):
            raise ValueError("成功区域必须包含刀口")
    if profile.success_region[:, 1].max() <= profile.mouth_depth:
        raise ValueError("成功区域必须越过刀口开口平面")
    for poly in profile.failure_regions:
        if not convex_polygons_disjoint(profile.success_region, poly):
            raise ValueError("成功区域与失败区域相交")
