"""
目标估计误差与相机标定扰动模型
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.spatial.transform import Rotation

from ..config import EstimateSettings
from ..sim.geometry import Pose, random_unit_vector


class EstimateSource(str, Enum):
    EXACT = "Exact"
    DEPTH_MODEL = "DepthModel"
    MISCALIBRATED = "Miscalibrated"


@dataclass(frozen=True)
class TargetEstimate:
    point: np.ndarray
    source: EstimateSource

    def __post_init__(self):
        point = np.asarray(self.point, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(point)):
            raise ValueError(f"目标估计含非有限值: {point}")
        object.__setattr__(self, "point", point)


def estimate_target(
    true_point: np.ndarray,
    camera_pose: Pose,
    model: EstimateSettings,
    rng: np.random.Generator,
) -> TargetEstimate:
    """
    深度估计：真值沿相机视线偏移 bias（负值为偏近），再叠加各向同性噪声

    噪声总是从 rng 抽取三次，σ=0 时结果与真值相同。
    """
    true_point = np.asarray(true_point, dtype=np.float64)
    ray = true_point - camera_pose.position
    ray = ray / np.linalg.norm(ray)
    noise = rng.normal(0.0, 1.0, size=3) * model.noise_std
    point = true_point + model.depth_bias * ray + noise
    source = EstimateSource.EXACT if model.depth_bias == 0 and model.noise_std == 0 else EstimateSource.DEPTH_MODEL
    return TargetEstimate(point, source)


def perturb_calibration(
    camera_pose: Pose,
    rng: np.random.Generator,
    translation: float = 0.01,
    rotation_deg: float = 5.0,
) -> Pose:
    """
    相机外参扰动：沿随机方向平移 translation，绕独立随机轴旋转 rotation_deg

    R' = Rot(axis, θ)·R，t' = t + translation·u
    """
    direction = random_unit_vector(rng)
    axis = random_unit_vector(rng)
    delta = Rotation.from_rotvec(axis * np.radians(rotation_deg)).as_matrix()
    return Pose(delta @ camera_pose.rotation, camera_pose.position + translation * direction)


def miscalibrated_estimate(estimate: TargetEstimate, true_camera: Pose, perturbed_camera: Pose) -> TargetEstimate:
    """把相机系下的估计通过错误的外参重新表达到世界系"""
    point = perturbed_camera.to_world(true_camera.to_local(estimate.point))
    return TargetEstimate(point, EstimateSource.MISCALIBRATED)
