"""
仿真层：场景、相机、视觉阶段环境与接触对象
"""

from .camera import CameraModel, SegmentClass, SegmentedImage, crop_rescale, render_segmented
from .contact import BranchState, ContactPlant, SensorModel, contact_wrench
from .cutter import CutterProfile, ZoneStatus, build_cutter_profile
from .env import PolicyAction, PruningEnv, StepOutcome, Terminal, compose_velocity, reward
from .geometry import Pose
from .scene import PruneTarget, SceneGraph, TreeSpindle, build_scene, query_zone

__all__ = [
    "BranchState",
    "CameraModel",
    "ContactPlant",
    "CutterProfile",
    "PolicyAction",
    "Pose",
    "PruneTarget",
    "PruningEnv",
    "SceneGraph",
    "SegmentClass",
    "SegmentedImage",
    "SensorModel",
    "StepOutcome",
    "Terminal",
    "TreeSpindle",
    "ZoneStatus",
    "build_cutter_profile",
    "build_scene",
    "compose_velocity",
    "contact_wrench",
    "crop_rescale",
    "query_zone",
    "render_segmented",
]
