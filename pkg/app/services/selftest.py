"""
内置自检

不依赖 pytest 的快速不变量检查，供 `selftest` 子命令使用。
"""

from typing import Callable, List, Tuple

import numpy as np

from ..config import Settings
from ..control.admittance import (
    AdmittanceGains,
    TerminationWindow,
    WrenchFilter,
    admittance_step,
    check_termination,
    deadzone,
    select,
)
from ..control.estimation import perturb_calibration
from ..models.ppo import gae
from ..schemas.records import TrialRow
from ..sim.camera import CameraModel, SegmentClass, render_segmented
from ..sim.contact import BranchState, branch_dynamics_step
from ..sim.cutter import ZoneStatus, build_cutter_profile
from ..sim.env import PolicyAction, compose_velocity, reward
from ..sim.geometry import Pose, rotation_angle_deg
from ..sim.scene import build_scene
from ..utils.logger import get_logger
from ..utils.seeding import make_rng
from .harness import summarize

logger = get_logger(__name__)

Check = Callable[[Settings], None]


def _close(a, b, tol: float = 1e-12) -> None:
    if not np.allclose(a, b, rtol=0.0, atol=tol):
        raise AssertionError(f"{a} != {b}")


def check_signal_chain(settings: Settings) -> None:
    _close(deadzone(0.5, 0.2), 0.3)
    _close(deadzone(-0.5, 0.2), -0.3)
    _close(deadzone(0.1, 0.2), 0.0)
    _close(select(settings.admittance.selection, np.arange(1.0, 7.0)), [0, 0, 0, 0, 5, 6])

    filt = WrenchFilter(51)
    for i in range(51):
        filt.push(np.array([0, 0, 0, 0, 0, 1.0 if i >= 25 else 0.0]))
    _close(filt.value()[5], 26 / 51)

    gains = AdmittanceGains.from_settings(settings.admittance)
    accel, _ = admittance_step(gains, np.zeros(6), np.zeros(6))
    _close(accel[5], 0.18)
    _close(gains.decay_factors()[4:], [0.992, 0.95])


def check_termination_table(settings: Settings) -> None:
    def window(tau: float, motion: float) -> TerminationWindow:
        win = TerminationWindow.from_settings(settings.admittance)
        for i in range(win.capacity):
            step = motion * i / (win.capacity - 1)
            win.push(tau, step, step)
        return win

    assert check_termination(window(0.001, 0.0002), 0.0)
    assert not check_termination(window(0.01, 0.0002), 0.0)
    assert not check_termination(window(0.001, 0.002), 0.0)


def check_mdp_arithmetic(settings: Settings) -> None:
    _close(compose_velocity(PolicyAction(1.0, -1.0), 0.30).v, [0.30, -0.30, 0.30])
    _close(compose_velocity(PolicyAction(0.5, 0.5), 0.03).v, [0.015, 0.015, 0.03])
    _close(reward(0.05, settings.env), 0.05)
    _close(reward(0.12, settings.env), 0.0)
    _close(reward(0.0, settings.env), settings.env.dt)


def check_cutter_regions(settings: Settings) -> None:
    profile = build_cutter_profile(settings.scene)
    assert profile.classify(np.array([0.0, 0.005])) is ZoneStatus.SUCCESS
    assert profile.classify(np.array([0.0, 0.065])) is ZoneStatus.SUCCESS
    assert profile.classify(np.array([0.018, 0.03])) is ZoneStatus.FAILURE
    assert profile.classify(np.array([0.0, 0.5])) is ZoneStatus.NONE
    assert profile.classify(np.array([0.0, 0.005]), x=0.02) is ZoneStatus.NONE


def check_branch_statics(settings: Settings) -> None:
    state = BranchState.at_rest(np.zeros(2), settings.plant)
    for _ in range(20000):
        state = branch_dynamics_step(state, np.array([0.0, 2.0]), 0.002)
    _close(state.position[1], 2.0 / settings.plant.branch_stiffness, 1e-9)


def check_calibration(settings: Settings) -> None:
    pose = Pose.identity()
    perturbed = perturb_calibration(pose, make_rng("selftest", "calibration"))
    _close(np.linalg.norm(perturbed.position - pose.position), 0.01)
    _close(rotation_angle_deg(perturbed.rotation @ pose.rotation.T), 5.0, 1e-9)


def check_summary(settings: Settings) -> None:
    rows = [
        TrialRow(trial_id=i, controller="HC", target_id=0, seed=i, success=i < 20,
                 max_force_N=1.0, steps=1, terminal="Done")
        for i in range(26)
    ]
    assert summarize(rows).rows[0].accuracy_pct == 77


def check_gae(settings: Settings) -> None:
    adv, ret = gae(np.array([1.0]), np.array([0.5]), np.array([True]), 0.99, 0.95)
    _close(adv, [0.5])
    _close(ret, [1.0])


def check_render_mask(settings: Settings) -> None:
    scene = build_scene(settings.scene, 0)
    camera = CameraModel.from_settings(settings.camera)
    rng = make_rng("selftest", "render")
    for target in scene.targets[:3]:
        offset = np.array([rng.uniform(-0.01, 0.01), rng.uniform(-0.01, 0.01), -0.17])
        image = render_segmented(scene, Pose(np.eye(3), target.point + offset), camera)
        tree = image.hue == int(SegmentClass.TREE)
        assert np.array_equal(tree, image.mask == 255)


CHECKS: List[Tuple[str, Check]] = [
    ("信号链算术", check_signal_chain),
    ("终止判定真值表", check_termination_table),
    ("MDP 速度与奖励", check_mdp_arithmetic),
    ("刀口区域", check_cutter_regions),
    ("枝条静力平衡", check_branch_statics),
    ("标定扰动", check_calibration),
    ("准确率汇总", check_summary),
    ("GAE 单步", check_gae),
    ("分割掩码一致性", check_render_mask),
]


def run_selftest(settings: Settings) -> Tuple[int, List[str]]:
    """
    运行全部检查

    Returns:
        (通过数, 失败项描述)
    """
    failures = []
    for name, check in CHECKS:
        try:
            check(settings)
            logger.info(f"✅ {name}")
        except Exception as e:
            logger.error(f"❌ {name}: {e!r}")
            failures.append(f"{name}: {e!r}")
    return len(CHECKS) - len(failures), failures
