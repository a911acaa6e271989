from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest

from app.control.interaction import InteractionController, InteractionOutcome
from app.sim.contact import (
    F_Y,
    F_Z,
    TAU_X,
    BranchState,
    ContactPlant,
    SensorModel,
    branch_dynamics_step,
    contact_wrench,
    disc_contact,
    force_magnitude,
    sensor_sample,
)
from app.sim.cutter import ZoneStatus
from app.sim.geometry import CapsuleChain, point_in_convex_polygon
from app.sim.scene import PruneTarget, SceneGraph, TreeSpindle

from conftest import pose_facing


def _branch(settings, position) -> BranchState:
    return BranchState.at_rest(np.asarray(position, dtype=float), settings.plant)


def test_no_contact_in_open_mouth(settings, profile):
    wrench = contact_wrench(profile, np.zeros(2), _branch(settings, [0.0, 0.03]), settings.plant.contact_stiffness)
    assert np.array_equal(wrench, np.zeros(6))


def test_centered_seat_contact_pushes_forward(settings, profile):
    hit = disc_contact(profile, np.array([0.0, 0.003]), 0.005, settings.plant.contact_stiffness)
    assert hit.active
    assert hit.wrench[F_Y] == pytest.approx(0.0, abs=1e-12)
    assert hit.wrench[F_Z] > 0
    assert hit.wrench[TAU_X] == pytest.approx(0.0, abs=1e-12)


def test_wall_contact_torque_sign(settings, profile):
    # 靠近 +y 侧刀刃：力指向 -y，力矩 τx = y·fz - z·fy > 0
    hit = disc_contact(profile, np.array([0.008, 0.03]), 0.005, settings.plant.contact_stiffness)
    assert hit.active
    assert hit.wrench[F_Y] < 0
    assert hit.wrench[TAU_X] > 0


def test_contact_force_points_inward(settings, profile):
    rng = np.random.default_rng(1)
    centers = rng.uniform([-0.015, 0.0], [0.015, 0.06], size=(2000, 2))
    centers = [c for c in centers if point_in_convex_polygon(profile.mouth_polygon, c)]
    assert len(centers) > 200
    for center in centers[:200]:
        for edge in profile.blade_edges:
            single = replace(profile, blade_edges=(edge,))
            hit = disc_contact(single, center, 0.005, settings.plant.contact_stiffness)
            assert float(hit.force @ edge[2]) >= 0.0


def test_branch_static_equilibrium(settings):
    state = _branch(settings, [0.0, 0.0])
    for _ in range(20000):
        state = branch_dynamics_step(state, np.array([0.0, 2.0]), 0.002)
    assert state.position[1] == pytest.approx(2.0 / settings.plant.branch_stiffness, abs=1e-9)
    assert state.position[0] == 0.0


def test_branch_free_oscillation_loses_energy(settings):
    state = _branch(settings, [0.0, 0.0])
    state = branch_dynamics_step(state, np.array([5.0, 0.0]), 0.002)
    kinetic = []
    for _ in range(500):
        state = branch_dynamics_step(state, np.zeros(2), 0.002)
        kinetic.append(state.kinetic_energy)
    # 每 100 ms（约一个自由振荡周期）的动能峰值单调下降
    peaks = np.array(kinetic).reshape(10, 50).max(axis=1)
    assert np.all(np.diff(peaks) < 0)
    assert kinetic[-1] < 1e-6 * peaks[0]


def test_branch_dynamics_rejects_bad_dt(settings):
    with pytest.raises(ValueError):
        branch_dynamics_step(_branch(settings, [0.0, 0.0]), np.zeros(2), 0.0)


def test_sensor_noise_is_seeded():
    a = SensorModel(500.0, 0.05, 0.0005, seed=4)
    b = SensorModel(500.0, 0.05, 0.0005, seed=4)
    w = np.arange(6.0)
    assert np.array_equal(a.sample(w), b.sample(w))
    assert a.dt == pytest.approx(0.002)


def test_sensor_noise_statistics():
    sensor = SensorModel(500.0, 0.05, 0.0005, seed=9)
    samples = np.stack([sensor.sample(np.zeros(6)) for _ in range(4000)])
    assert np.abs(samples.mean(axis=0)).max() < 0.01
    assert samples[:, 5].std() == pytest.approx(0.05, rel=0.1)
    assert samples[:, 0].std() == pytest.approx(0.0005, rel=0.1)


def test_noise_free_plant_without_contact_reports_zero_force(settings, scene, target):
    plant = ContactPlant(scene, target, pose_facing(target.point, 0.15), settings.plant, seed=0)
    for _ in range(50):
        plant.tick()
    assert plant.max_force == 0.0
    assert not plant.contact_occurred
    assert plant.zone() is ZoneStatus.NONE


def test_plant_pushing_into_seat_deflects_branch(settings, scene, target):
    plant = ContactPlant(scene, target, pose_facing(target.point, 0.0), settings.plant, seed=0, record_trace=True)
    wrench, _, _ = plant.true_wrench()
    for _ in range(200):
        plant.tick()
    assert plant.contact_occurred
    assert plant.max_force >= force_magnitude(wrench) > 0
    assert len(plant.trace) == 200
    assert plant.trace[-1].time == pytest.approx(0.4)


def test_move_tool_updates_rest_position(settings, scene, target):
    plant = ContactPlant(scene, target, pose_facing(target.point, 0.05), settings.plant, seed=0)
    before = plant.branch.rest_position.copy()
    plant.move_tool(pose_facing(target.point, 0.04))
    assert np.allclose(plant.branch.rest_position, before)
    assert np.allclose(plant.branch_offset(), [0.0, 0.04])


def test_plant_is_reproducible(settings, scene, target):
    def run():
        plant = ContactPlant(scene, target, pose_facing(target.point, 0.0), settings.plant, seed=3)
        return np.stack([plant.tick() for _ in range(20)])
    assert np.array_equal(run(), run())


def test_sensor_noise_mean_within_standard_error():
    sensor = SensorModel(500.0, 0.05, 0.0, seed=2024)
    samples = np.stack([sensor_sample(np.zeros(6), sensor) for _ in range(10_000)])
    bound = 3 * 0.05 / np.sqrt(10_000)
    assert np.all(np.abs(samples[:, 3:].mean(axis=0)) <= bound)
    assert not samples[:, :3].any()


@pytest.fixture(scope="module")
def lone_branch(profile):
    """远离主干、没有铁丝的一根水平侧枝，只考察刀刃接触"""
    leader = CapsuleChain(np.array([[-0.5, 0.0, 0.0], [-0.5, 1.6, 0.0]]), [0.014])
    branch = CapsuleChain(np.array([[-0.486, 1.0, 0.0], [0.3, 1.0, 0.0]]), [0.006])
    target = PruneTarget(0, np.array([0.0, 1.0, 0.0]), 0, 0, 0.486, branch.points[0].copy())
    scene = SceneGraph((), (), (TreeSpindle(leader, (branch,), 0),), (target,), 0, profile)
    return scene, target


def test_branch_settles_with_tool_held_in_contact(settings, lone_branch):
    scene, target = lone_branch
    quiet = settings.plant.model_copy(update={"force_noise_std": 0.0, "torque_noise_std": 0.0})
    plant = ContactPlant(scene, target, pose_facing(target.point, 0.004), quiet, seed=0)
    kinetic = []
    for _ in range(500):
        plant.tick()
        kinetic.append(plant.branch.kinetic_energy)
    assert plant.contact_occurred
    peaks = np.array(kinetic).reshape(10, 50).max(axis=1)
    assert np.all(np.diff(peaks[1:]) <= 0)
    assert kinetic[-1] < 1e-6 * peaks.max()


def test_seat_lock_band_keeps_torque_within_tolerance(settings, profile):
    """死区锁定（|fy|、|fz - F_des| 都不超过阈值）的任意位置，τx 与枢轴偏差都满足终止条件"""
    adm = settings.admittance
    k = settings.plant.contact_stiffness
    r = settings.plant.branch_radius
    fz_des = adm.desired_wrench[F_Z]
    locked = 0
    for y in np.linspace(-0.002, 0.002, 161):
        for z in np.linspace(0.004, 0.0052, 121):
            w = disc_contact(profile, np.array([y, z]), r, k).wrench
            if abs(w[F_Y]) > adm.deadzone or abs(w[F_Z] - fz_des) > adm.deadzone:
                continue
            locked += 1
            assert abs(w[TAU_X]) < adm.torque_tolerance
            assert np.hypot(y, z) < 0.005
    assert locked > 0


def _edge_starts(profile, radius: float, count: int):
    """沿两侧刀刃均匀分布、压入刀刃 0.5 mm 的枝条截面中心"""
    sides = [
        (a, b, n_in) for a, b, n_in in profile.blade_edges
        if np.isclose(max(a[1], b[1]), profile.mouth_depth)
    ]
    assert len(sides) == 2
    starts = []
    for a, b, n_in in sides:
        for t in np.linspace(0.1, 0.9, count // 2):
            starts.append(a + t * (b - a) + n_in * (radius - 0.0005))
    return starts


@pytest.mark.slow
def test_edge_contacts_are_funnelled_to_pivot(settings, profile, lone_branch):
    scene, target = lone_branch
    starts = _edge_starts(profile, settings.plant.branch_radius, 50)
    reached = 0
    for i, (y, z) in enumerate(starts):
        plant = ContactPlant(scene, target, pose_facing(target.point, z, (0.0, -y)), settings.plant, seed=i)
        assert np.allclose(plant.branch_offset(), [y, z])
        result = InteractionController(settings.admittance).run(plant, 30.0)
        assert plant.max_force < 10.0
        wrench, _, _ = plant.true_wrench()
        if (
            result.outcome is InteractionOutcome.DONE
            and np.linalg.norm(plant.branch_offset()) < 0.005
            and abs(wrench[TAU_X]) < settings.admittance.torque_tolerance
        ):
            reached += 1
    assert reached >= 48
