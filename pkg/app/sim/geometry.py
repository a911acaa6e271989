"""
几何基础

刚体位姿、胶囊链、射线求交（胶囊 / 轴对齐盒 / 有向盒）与凸多边形判定。
射线求交均对 N 条射线 x P 个图元做向量化计算，返回 (N, P) 的命中距离，
未命中为 +inf。
"""

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

_EPS = 1e-12


def dot3(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """逐元素三维点积（支持广播，结果与数组形状无关）"""
    return x[..., 0] * y[..., 0] + x[..., 1] * y[..., 1] + x[..., 2] * y[..., 2]


def rotate_rows(v: np.ndarray, m: np.ndarray) -> np.ndarray:
    """对行向量组 v 计算 v @ m.T（逐元素展开）"""
    return np.stack([dot3(v, m[0]), dot3(v, m[1]), dot3(v, m[2])], axis=-1)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Pose:
    """
    刚体位姿（刀具坐标系 -> 世界坐标系）

    rotation 的列是刀具 x/y/z 轴在世界系中的方向；position 是刀具原点（枢轴点）。
    刀具系约定：x 左右、y 向上、z 为进给方向。
    """

    rotation: np.ndarray
    position: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", _frozen(self.rotation).reshape(3, 3))
        object.__setattr__(self, "position", _frozen(self.position).reshape(3))

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_yaw(cls, yaw_rad: float, position: Sequence[float]) -> "Pose":
        """绕世界 y 轴（竖直）旋转 yaw 的位姿"""
        rot = Rotation.from_rotvec([0.0, yaw_rad, 0.0]).as_matrix()
        return cls(rot, np.asarray(position, dtype=np.float64))

    def to_world(self, local: np.ndarray) -> np.ndarray:
        """局部坐标 -> 世界坐标，支持 (..., 3)"""
        return np.asarray(local) @ self.rotation.T + self.position

    def to_local(self, world: np.ndarray) -> np.ndarray:
        """世界坐标 -> 局部坐标，支持 (..., 3)"""
        return (np.asarray(world) - self.position) @ self.rotation

    def compose(self, other: "Pose") -> "Pose":
        """self ∘ other：先 other 再 self"""
        return Pose(self.rotation @ other.rotation, self.to_world(other.position))

    def inverse(self) -> "Pose":
        return Pose(self.rotation.T, -self.rotation.T @ self.position)

    def translated(self, delta_world: np.ndarray) -> "Pose":
        return Pose(self.rotation, self.position + np.asarray(delta_world))

    @property
    def axis_z(self) -> np.ndarray:
        return self.rotation[:, 2]


@dataclass(frozen=True)
class CapsuleChain:
    """
    胶囊链：points[i] -> points[i+1] 为第 i 段，半径 radii[i]

    相邻段首尾相连（由构造保证）。
    """

    points: np.ndarray
    radii: np.ndarray

    def __post_init__(self):
        pts = _frozen(self.points).reshape(-1, 3)
        radii = _frozen(self.radii).reshape(-1)
        if len(pts) != len(radii) + 1:
            raise ValueError(f"胶囊链端点数 {len(pts)} 与段数 {len(radii)} 不匹配")
        if np.any(radii <= 0):
            raise ValueError("胶囊半径必须为正")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "radii", radii)

    @property
    def n_segments(self) -> int:
        return len(self.radii)

    @property
    def starts(self) -> np.ndarray:
        return self.points[:-1]

    @property
    def ends(self) -> np.ndarray:
        return self.points[1:]

    @property
    def segment_lengths(self) -> np.ndarray:
        return np.linalg.norm(self.ends - self.starts, axis=1)

    @property
    def length(self) -> float:
        return float(self.segment_lengths.sum())

    def point_at(self, arclength: float) -> np.ndarray:
        """沿链弧长 s 处的轴线点（超出范围时截断到端点）"""
        lengths = self.segment_lengths
        s = float(np.clip(arclength, 0.0, lengths.sum()))
        cum = np.concatenate([[0.0], np.cumsum(lengths)])
        i = int(np.clip(np.searchsorted(cum, s, side="right") - 1, 0, self.n_segments - 1))
        u = (s - cum[i]) / lengths[i]
        return self.points[i] + u * (self.points[i + 1] - self.points[i])

    def radius_at(self, arclength: float) -> float:
        lengths = self.segment_lengths
        cum = np.cumsum(lengths)
        i = int(np.clip(np.searchsorted(cum, arclength, side="left"), 0, self.n_segments - 1))
        return float(self.radii[i])

    def plane_crossings(self, origin: np.ndarray, normal: np.ndarray) -> list:
        """
        链轴线与平面 (x - origin)·normal = 0 的全部交点

        Returns:
            [(弧长, 交点)] 列表，按弧长升序
        """
        sd = (self.points - origin) @ normal
        lengths = self.segment_lengths
        cum = np.concatenate([[0.0], np.cumsum(lengths)])
        hits = []
        for i in range(self.n_segments):
            a, b = sd[i], sd[i + 1]
            if a == 0.0 and b == 0.0:
                # 整段位于平面内：取段起点
                hits.append((float(cum[i]), self.points[i].copy()))
                continue
            if (a <= 0.0 <= b) or (b <= 0.0 <= a):
                u = a / (a - b)
                hits.append((float(cum[i] + u * lengths[i]),
                             self.points[i] + u * (self.points[i + 1] - self.points[i])))
        # 去重（交点恰在段连接处时两段各报告一次）
        unique = []
        for s, p in hits:
            if not unique or abs(unique[-1][0] - s) > 1e-12:
                unique.append((s, p))
        return unique


# ----------------------------------------------------------------------
# 射线求交
# ----------------------------------------------------------------------

def ray_capsules(
    origins: np.ndarray,
    dirs: np.ndarray,
    a: np.ndarray,
    b: np.ndarray,
    r: np.ndarray,
) -> np.ndarray:
    """
    射线与胶囊（圆柱 + 两端半球）求交

    Args:
        origins, dirs: (N, 3)，dirs 为单位向量
        a, b: (P, 3) 胶囊轴线端点
        r: (P,) 半径

    Returns:
        (N, P) 最近正命中距离，未命中为 inf
    """
    n, p = len(origins), len(a)
    if p == 0:
        return np.full((n, 0), np.inf)

    d = dirs[:, None, :]
    ba = (b - a)[None, :, :]                          # (1,P,3)
    baba = dot3(ba, ba)                               # (1,P)
    oc = origins[:, None, :] - a[None, :, :]          # (N,P,3)
    bard = dot3(d, ba)                                # (N,P)
    baoc = dot3(oc, ba)
    rdoc = dot3(d, oc)
    ococ = dot3(oc, oc)

    t = np.full((n, p), np.inf)

    # 圆柱侧面
    k2 = baba - bard * bard
    k1 = baba * rdoc - baoc * bard
    k0 = baba * ococ - baoc * baoc - (r * r) * baba
    h = k1 * k1 - k2 * k0
    with np.errstate(invalid="ignore", divide="ignore"):
        sq = np.sqrt(np.where(h >= 0, h, 0.0))
        t_cyl = np.where(np.abs(k2) > _EPS, (-k1 - sq) / k2, np.inf)
    y = baoc + t_cyl * bard
    body = (h >= 0) & (t_cyl > _EPS) & (y > 0) & (y < baba)
    t = np.where(body, t_cyl, t)

    # 两端半球
    for center in (a, b):
        oc_s = origins[:, None, :] - center[None, :, :]
        bs = dot3(d, oc_s)
        cs = dot3(oc_s, oc_s) - r * r
        hs = bs * bs - cs
        with np.errstate(invalid="ignore"):
            ts = -bs - np.sqrt(np.where(hs >= 0, hs, 0.0))
        hit = (hs >= 0) & (ts > _EPS)
        t = np.where(hit & (ts < t), ts, t)

    return t


def capsule_normals(points: np.ndarray, a: np.ndarray, b: np.ndarray, r: np.ndarray) -> np.ndarray:
    """命中点 (M,3) 在对应胶囊 (M,·) 上的外法向"""
    ba = b - a
    baba = dot3(ba, ba)
    u = np.clip(dot3(points - a, ba) / baba, 0.0, 1.0)
    n = points - (a + u[:, None] * ba)
    return n / np.maximum(np.linalg.norm(n, axis=1, keepdims=True), _EPS)


def ray_boxes(
    origins: np.ndarray,
    dirs: np.ndarray,
    lo: np.ndarray,
    hi: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    射线与轴对齐盒求交（slab 法）

    Returns:
        t: (N, P) 进入距离（未命中 inf）
        axis: (N, P) 进入面所在的轴 0/1/2
    """
    n, p = len(origins), len(lo)
    if p == 0:
        return np.full((n, 0), np.inf), np.zeros((n, 0), dtype=np.int64)

    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs                                            # (N,3)
        t1 = (lo[None, :, :] - origins[:, None, :]) * inv[:, None, :]  # (N,P,3)
        t2 = (hi[None, :, :] - origins[:, None, :]) * inv[:, None, :]
    # 射线与某轴平行且位于 slab 外时 0*inf 产生 nan
    tmin = np.fmin(t1, t2)
    tmax = np.fmax(t1, t2)
    inside_parallel = (dirs[:, None, :] == 0) & (
        (origins[:, None, :] >= lo[None]) & (origins[:, None, :] <= hi[None])
    )
    outside_parallel = (dirs[:, None, :] == 0) & ~inside_parallel
    tmin = np.where(inside_parallel, -np.inf, tmin)
    tmax = np.where(inside_parallel, np.inf, tmax)

    t_enter = tmin.max(axis=2)
    axis = tmin.argmax(axis=2)
    t_exit = tmax.min(axis=2)
    hit = (t_enter <= t_exit) & (t_enter > _EPS) & ~outside_parallel.any(axis=2)
    return np.where(hit, t_enter, np.inf), axis


@dataclass(frozen=True)
class OrientedBox:
    """有向盒：中心、局部轴（行向量）与半边长"""

    center: np.ndarray
    axes: np.ndarray
    half: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", _frozen(self.center).reshape(3))
        object.__setattr__(self, "axes", _frozen(self.axes).reshape(3, 3))
        object.__setattr__(self, "half", _frozen(self.half).reshape(3))


def ray_oriented_boxes(
    origins: np.ndarray, dirs: np.ndarray, boxes: Sequence[OrientedBox]
) -> Tuple[np.ndarray, np.ndarray]:
    """
    射线与若干有向盒求交

    Returns:
        t: (N, P) 命中距离
        normals: (N, P, 3) 命中面外法向（未命中处为 0）
    """
    n = len(origins)
    ts = np.full((n, len(boxes)), np.inf)
    normals = np.zeros((n, len(boxes), 3))
    for j, box in enumerate(boxes):
        o_local = rotate_rows(origins - box.center, box.axes)
        d_local = rotate_rows(dirs, box.axes)
        t, axis = ray_boxes(o_local, d_local, -box.half[None], box.half[None])
        ts[:, j] = t[:, 0]
        ax = axis[:, 0]
        sign = -np.sign(d_local[np.arange(n), ax])
        local_n = np.zeros((n, 3))
        local_n[np.arange(n), ax] = sign
        normals[:, j] = rotate_rows(local_n, box.axes.T)
    return ts, normals


def box_normals(points: np.ndarray, dirs: np.ndarray, axis: np.ndarray) -> np.ndarray:
    """轴对齐盒进入面的外法向"""
    m = len(points)
    n = np.zeros((m, 3))
    n[np.arange(m), axis] = -np.sign(dirs[np.arange(m), axis])
    return n


# ----------------------------------------------------------------------
# 二维凸多边形
# ----------------------------------------------------------------------

def polygon_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def ensure_ccw(poly: np.ndarray) -> np.ndarray:
    poly = np.asarray(poly, dtype=np.float64)
    return poly if polygon_area(poly) > 0 else poly[::-1].copy()


def inward_normals(poly: np.ndarray) -> np.ndarray:
    """逆时针凸多边形每条边 (i -> i+1) 的单位内法向"""
    edges = np.roll(poly, -1, axis=0) - poly
    n = np.stack([-edges[:, 1], edges[:, 0]], axis=1)
    return n / np.linalg.norm(n, axis=1, keepdims=True)


def point_in_convex_polygon(poly: np.ndarray, point: np.ndarray, tol: float = 1e-12) -> bool:
    """闭凸多边形（逆时针）包含判定，边界算在内"""
    d = (np.asarray(point) - poly)
    return bool(np.all(np.einsum("ik,ik->i", d, inward_normals(poly)) >= -tol))


def convex_polygons_disjoint(p: np.ndarray, q: np.ndarray, tol: float = 1e-12) -> bool:
    """分离轴判定两个闭凸多边形是否不相交"""
    for poly in (p, q):
        for n in inward_normals(poly):
            a = p @ n
            b = q @ n
            if a.max() < b.min() - tol or b.max() < a.min() - tol:
                return True
    return False


def closest_point_on_segment(a: np.ndarray, b: np.ndarray, p: np.ndarray) -> Tuple[np.ndarray, float]:
    """二维/三维线段上距 p 最近的点及其参数 u∈[0,1]"""
    ab = b - a
    denom = float(ab @ ab)
    u = 0.0 if denom < _EPS else float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
    return a + u * ab, u


def random_unit_vector(rng: np.random.Generator) -> np.ndarray:
    """球面上均匀分布的单位向量"""
    while True:
        v = rng.standard_normal(3)
        norm = np.linalg.norm(v)
        if norm > 1e-9:
            return v / norm


def rotation_angle_deg(r: np.ndarray) -> float:
    """旋转矩阵对应的转角（度）"""
    return float(np.degrees(Rotation.from_matrix(r).magnitude()))


def segment_point_distance(a: np.ndarray, b: np.ndarray, p: np.ndarray) -> float:
    q, _ = closest_point_on_segment(a, b, p)
    return float(np.linalg.norm(p - q))


def chain_distance(chain: CapsuleChain, p: np.ndarray) -> float:
    """点到胶囊链表面的有符号距离（负值表示在内部）"""
    best = np.inf
    for i in range(chain.n_segments):
        d = segment_point_distance(chain.points[i], chain.points[i + 1], p) - chain.radii[i]
        best = min(best, d)
    return float(best)
