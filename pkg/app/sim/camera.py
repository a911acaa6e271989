"""
虚拟相机

以针孔模型对场景逐像素射线求交，直接生成三通道分割图像：
H 平面为类别编码，S 平面为树木掩码，V 平面为朗伯着色。
"""

from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from ..config import CameraSettings
from ..exceptions import DimensionError
from ..utils.image_utils import read_ppm, write_ppm
from .geometry import (
    Pose,
    box_normals,
    capsule_normals,
    dot3,
    ray_boxes,
    ray_capsules,
    ray_oriented_boxes,
    rotate_rows,
)
from .scene import SceneGraph


class SegmentClass(IntEnum):
    """H 平面的类别编码"""
    BACKGROUND = 0
    FRAME = 30
    TREE = 90
    WIRE = 150
    CUTTER = 200


CLASS_CODES = tuple(int(c) for c in SegmentClass)
TREE_MASK = 255


@dataclass(frozen=True)
class SegmentedImage:
    """HxWx3 uint8 分割图像"""

    pixels: np.ndarray

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def hue(self) -> np.ndarray:
        return self.pixels[..., 0]

    @property
    def mask(self) -> np.ndarray:
        return self.pixels[..., 1]

    @property
    def value(self) -> np.ndarray:
        return self.pixels[..., 2]

    def is_valid(self) -> bool:
        """类别划分与掩码一致性"""
        classes_ok = np.isin(self.hue, CLASS_CODES).all()
        mask_ok = np.array_equal(self.mask == TREE_MASK, self.hue == SegmentClass.TREE)
        mask_values_ok = np.isin(self.mask, (0, TREE_MASK)).all()
        return bool(classes_ok and mask_ok and mask_values_ok)


@dataclass(frozen=True)
class CameraModel:
    """
    针孔相机

    mount 为刀具系 -> 相机系的刚体变换；相机系 x 向右、y 向下、z 沿光轴。
    """

    width: int
    height: int
    horizontal_fov_deg: float
    mount: Pose
    draw_cutter: bool = True
    light_direction: Tuple[float, float, float] = (-0.3, -0.8, 0.5)
    ambient: float = 0.3
    background_value: int = 64

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise DimensionError(f"相机分辨率必须为正: {self.width}x{self.height}")
        if not 0 < self.horizontal_fov_deg < 180:
            raise ValueError(f"视场角必须在 (0, 180) 内: {self.horizontal_fov_deg}")

    @classmethod
    def from_settings(cls, cfg: CameraSettings) -> "CameraModel":
        # 相机轴在刀具系中：x_c = -x_t, y_c = -y_t, z_c = z_t
        rot = np.diag([-1.0, -1.0, 1.0])
        return cls(
            width=cfg.width,
            height=cfg.height,
            horizontal_fov_deg=cfg.horizontal_fov_deg,
            mount=Pose(rot, np.asarray(cfg.mount_translation)),
            draw_cutter=cfg.draw_cutter,
            light_direction=tuple(cfg.light_direction),
            ambient=cfg.ambient,
            background_value=cfg.background_value,
        )

    @property
    def focal(self) -> float:
        return (self.width / 2) / np.tan(np.radians(self.horizontal_fov_deg) / 2)

    @property
    def principal_point(self) -> Tuple[float, float]:
        return self.width / 2, self.height / 2

    def camera_pose(self, tool_pose: Pose) -> Pose:
        """相机在世界系中的位姿"""
        return tool_pose.compose(self.mount)

    def pixel_rays(self, cols: np.ndarray, rows: np.ndarray) -> np.ndarray:
        """像素中心射线方向（相机系，单位向量），输入为同形状的列/行索引"""
        cx, cy = self.principal_point
        f = self.focal
        d = np.stack([
            (cols + 0.5 - cx) / f,
            (rows + 0.5 - cy) / f,
            np.ones_like(cols, dtype=np.float64),
        ], axis=-1)
        return d / np.linalg.norm(d, axis=-1, keepdims=True)

    def project(self, point_world: np.ndarray, tool_pose: Pose) -> Optional[Tuple[float, float]]:
        """世界点投影到像素坐标（连续坐标，像素中心为 +0.5）"""
        p = self.camera_pose(tool_pose).to_local(point_world)
        if p[2] <= 0:
            return None
        cx, cy = self.principal_point
        return cx + self.focal * p[0] / p[2], cy + self.focal * p[1] / p[2]


def _resample_index(n_out: int, n_in: int) -> np.ndarray:
    """最近邻缩放（首尾对齐）：输出索引 o 取 round(o·(n_in-1)/(n_out-1))"""
    if n_out == 1:
        return np.zeros(1, dtype=np.int64)
    o = np.arange(n_out, dtype=np.int64)
    return (2 * o * (n_in - 1) + (n_out - 1)) // (2 * (n_out - 1))


def observation_pixels(cfg: CameraSettings) -> Tuple[np.ndarray, np.ndarray]:
    """
    观测图像每个像素对应的全分辨率像素 (列, 行)

    先裁剪右下 360x180 并缩放到 160x80，开启 obs_downscale 时再缩到 80x40。
    """
    x0, y0, w, h = cfg.crop
    cols = x0 + _resample_index(cfg.obs_width, w)
    rows = y0 + _resample_index(cfg.obs_height, h)
    if cfg.obs_downscale:
        cols = cols[_resample_index(cfg.obs_width // 2, cfg.obs_width)]
        rows = rows[_resample_index(cfg.obs_height // 2, cfg.obs_height)]
    return np.meshgrid(cols, rows)


def render_segmented(
    scene: SceneGraph,
    tool_pose: Pose,
    cam: CameraModel,
    pixels: Optional[Tuple[np.ndarray, np.ndarray]] = None,
) -> SegmentedImage:
    """
    渲染分割图像

    Args:
        scene: 场景
        tool_pose: 刀具位姿
        cam: 相机模型
        pixels: 只渲染给定的 (列, 行) 网格；为空时渲染整幅图像

    Returns:
        与 pixels 网格同形状（或 height x width）的分割图像
    """
    if pixels is None:
        cols, rows = np.meshgrid(np.arange(cam.width), np.arange(cam.height))
    else:
        cols, rows = pixels
    shape = cols.shape

    cam_pose = cam.camera_pose(tool_pose)
    dirs_cam = cam.pixel_rays(cols.reshape(-1).astype(np.float64), rows.reshape(-1).astype(np.float64))
    dirs = rotate_rows(dirs_cam, cam_pose.rotation)
    n = len(dirs)
    origins = np.broadcast_to(cam_pose.position, (n, 3)).copy()

    best_t = np.full(n, np.inf)
    best_cls = np.full(n, int(SegmentClass.BACKGROUND), dtype=np.int64)
    best_normal = np.zeros((n, 3))

    def take(t: np.ndarray, cls: int, normals_fn) -> None:
        nonlocal best_t
        if t.shape[1] == 0:
            return
        j = np.argmin(t, axis=1)
        tj = t[np.arange(n), j]
        better = tj < best_t
        if not better.any():
            return
        best_t = np.where(better, tj, best_t)
        best_cls[better] = cls
        best_normal[better] = normals_fn(better, j[better], tj[better])

    # 棚架立柱
    if scene.frame_boxes:
        lo = np.stack([b.lo for b in scene.frame_boxes])
        hi = np.stack([b.hi for b in scene.frame_boxes])
        t, axis = ray_boxes(origins, dirs, lo, hi)
        take(t, SegmentClass.FRAME,
             lambda m, j, tj: box_normals(origins[m] + dirs[m] * tj[:, None], dirs[m], axis[m, j]))

    # 铁丝
    if scene.wires:
        wa = np.stack([w.a for w in scene.wires])
        wb = np.stack([w.b for w in scene.wires])
        wr = np.array([w.radius for w in scene.wires])
        t = ray_capsules(origins, dirs, wa, wb, wr)
        take(t, SegmentClass.WIRE,
             lambda m, j, tj: capsule_normals(origins[m] + dirs[m] * tj[:, None], wa[j], wb[j], wr[j]))

    # 树木（视锥剔除后统一求交）
    ta, tb, tr = _tree_capsules(scene, cam_pose, dirs_cam)
    if len(ta):
        t = ray_capsules(origins, dirs, ta, tb, tr)
        take(t, SegmentClass.TREE,
             lambda m, j, tj: capsule_normals(origins[m] + dirs[m] * tj[:, None], ta[j], tb[j], tr[j]))

    # 刀具（在刀具系中求交）
    if cam.draw_cutter:
        boxes = scene.cutter.render_boxes()
        o_t = rotate_rows(origins - tool_pose.position, tool_pose.rotation.T)
        d_t = rotate_rows(dirs, tool_pose.rotation.T)
        t, normals_t = ray_oriented_boxes(o_t, d_t, boxes)
        take(t, SegmentClass.CUTTER,
             lambda m, j, tj: rotate_rows(normals_t[np.arange(n)[m], j], tool_pose.rotation))

    light = np.asarray(cam.light_direction, dtype=np.float64)
    light = light / np.linalg.norm(light)
    lambert = np.clip(dot3(best_normal, -light), 0.0, 1.0)
    shade = cam.ambient + (1.0 - cam.ambient) * lambert
    value = np.rint(np.clip(shade, 0.0, 1.0) * 255).astype(np.uint8)
    hit = best_cls != SegmentClass.BACKGROUND
    value = np.where(hit, value, np.uint8(cam.background_value)).astype(np.uint8)

    out = np.empty((n, 3), dtype=np.uint8)
    out[:, 0] = best_cls.astype(np.uint8)
    out[:, 1] = np.where(best_cls == SegmentClass.TREE, TREE_MASK, 0).astype(np.uint8)
    out[:, 2] = value
    return SegmentedImage(out.reshape(*shape, 3))


def _tree_capsules(scene: SceneGraph, cam_pose: Pose, dirs_cam: np.ndarray):
    """收集树木胶囊并按射线锥剔除不可见段"""
    a_list, b_list, r_list = [], [], []
    for spindle in scene.spindles:
        for chain in (spindle.leader, *spindle.side_branches):
            a_list.append(chain.starts)
            b_list.append(chain.ends)
            r_list.append(chain.radii)
    if not a_list:
        return np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0)
    a = np.concatenate(a_list)
    b = np.concatenate(b_list)
    r = np.concatenate(r_list)

    keep = _in_ray_cone(cam_pose, dirs_cam, 0.5 * (a + b), 0.5 * np.linalg.norm(b - a, axis=1) + r)
    return a[keep], b[keep], r[keep]


def _in_ray_cone(cam_pose: Pose, dirs_cam: np.ndarray, centers: np.ndarray, radii: np.ndarray) -> np.ndarray:
    """
    包围球是否可能被任一射线命中（保守判定）

    以射线方向的外接圆锥近似视锥：球心方向与锥轴夹角减去球的角半径不超过锥半角。
    """
    axis = dirs_cam.mean(axis=0)
    axis /= np.linalg.norm(axis)
    half_angle = np.arccos(np.clip(dirs_cam @ axis, -1.0, 1.0)).max()

    c = cam_pose.to_local(centers)
    dist = np.linalg.norm(c, axis=1)
    inside = dist <= radii
    with np.errstate(invalid="ignore", divide="ignore"):
        ang = np.arccos(np.clip((c @ axis) / np.maximum(dist, 1e-12), -1.0, 1.0))
        ang_r = np.arcsin(np.clip(radii / np.maximum(dist, 1e-12), 0.0, 1.0))
    return inside | (ang - ang_r <= half_angle + 1e-9)


def crop_rescale(img: SegmentedImage, cfg: Optional[CameraSettings] = None) -> SegmentedImage:
    """
    裁剪右下 360x180 并最近邻缩放到 160x80

    Raises:
        DimensionError: 输入不是 424x240
    """
    cfg = cfg or CameraSettings()
    if img.width != cfg.width or img.height != cfg.height:
        raise DimensionError(
            f"crop_rescale 需要 {cfg.width}x{cfg.height} 输入，实际 {img.width}x{img.height}"
        )
    x0, y0, w, h = cfg.crop
    cols = x0 + _resample_index(cfg.obs_width, w)
    rows = y0 + _resample_index(cfg.obs_height, h)
    return SegmentedImage(img.pixels[np.ix_(rows, cols)].copy())


def downscale(img: SegmentedImage) -> SegmentedImage:
    """最近邻缩小一半（160x80 -> 80x40）"""
    cols = _resample_index(img.width // 2, img.width)
    rows = _resample_index(img.height // 2, img.height)
    return SegmentedImage(img.pixels[np.ix_(rows, cols)].copy())


def export_ppm(img: SegmentedImage, path: Union[str, Path]) -> Path:
    """写出二进制 PPM (P6)"""
    return write_ppm(img.pixels, path)


def import_ppm(path: Union[str, Path]) -> SegmentedImage:
    return SegmentedImage(read_ppm(path))
