from __future__ import annotations

import numpy as np
import pytest

from app.config import Settings
from app.sim.cutter import build_cutter_profile
from app.sim.geometry import Pose
from app.sim.scene import build_scene


@pytest.fixture(scope="session")
def settings() -> Settings:
    return Settings.from_dict({})


@pytest.fixture(scope="session")
def scene(settings):
    scene = build_scene(settings.scene, 7)
    assert scene.targets, "默认场景至少应有一个目标"
    return scene


@pytest.fixture(scope="session")
def target(scene):
    return scene.targets[0]


@pytest.fixture(scope="session")
def profile(settings):
    return build_cutter_profile(settings.scene)


@pytest.fixture
def fast_settings(settings, tmp_path) -> Settings:
    """单目标、单次试验、不渲染的小规模配置"""
    return settings.with_overrides(
        env={"render": False},
        harness={
            "n_targets": 1,
            "trials_per_target": 1,
            "controllers": ["CL", "OL", "OL-"],
            "output_dir": str(tmp_path),
        },
    )


def pose_facing(point: np.ndarray, distance: float, offset=(0.0, 0.0)) -> Pose:
    """垂直棚架、位于 point 前方 distance 处并在 x/y 上偏移的刀具位姿"""
    return Pose(np.eye(3), np.asarray(point) + np.array([offset[0], offset[1], -distance]))
