from __future__ import annotations

import numpy as np
import pytest

from app.config import SceneSettings
from app.exceptions import ConfigError, NotCuttableError, PlacementError
from app.sim.cutter import ZoneStatus
from app.sim import scene as scene_model
from app.sim.geometry import CapsuleChain, Pose, chain_distance, convex_polygons_disjoint
from app.sim.scene import (
    PruneTarget,
    SceneGraph,
    TreeSpindle,
    branch_remnant_length,
    build_scene,
    distance_to_target,
    generate_spindle,
    query_zone,
)

from conftest import pose_facing


def test_build_scene_is_deterministic(settings):
    a = build_scene(settings.scene, 42)
    b = build_scene(settings.scene, 42)
    assert a.export_text() == b.export_text()
    for sa, sb in zip(a.spindles, b.spindles):
        assert np.array_equal(sa.leader.points, sb.leader.points)


def test_different_seeds_give_different_scenes(settings):
    assert build_scene(settings.scene, 1).export_text() != build_scene(settings.scene, 2).export_text()


def test_generate_spindle_keeps_branches_off_wires(settings):
    params = settings.scene.spindle
    wires = settings.scene.wire_heights
    spindle = generate_spindle(params, 3, 11, wires)
    again = generate_spindle(params, 3, 11, wires)
    assert spindle.model_id == 3
    assert len(spindle.side_branches) == len(again.side_branches)
    for branch, other in zip(spindle.side_branches, again.side_branches):
        assert np.array_equal(branch.points, other.points)
        h = branch.points[0][1]
        assert all(abs(h - w) >= params.wire_clearance for w in wires)
    with pytest.raises(ValueError):
        generate_spindle(params, 8, 11)


def test_scene_layout(settings, scene):
    assert len(scene.wires) == 2
    assert len(scene.spindles) == settings.scene.spindle_count
    for spindle in scene.spindles:
        assert 4 <= spindle.leader.n_segments <= 6
        assert 3 <= len(spindle.side_branches) <= 8
    for t in scene.targets:
        assert t.arclength == pytest.approx(0.03)
        assert np.allclose(scene.branch_of(t).point_at(t.arclength), t.point)


def test_side_branches_thinner_than_leader(settings):
    params = settings.scene.spindle
    for seed in range(1000):
        spindle = generate_spindle(params, seed % 8, seed, settings.scene.wire_heights)
        thinnest_leader = spindle.leader.radii.min()
        for branch in spindle.side_branches:
            assert branch.radii.max() < thinnest_leader


def test_model_ids_give_distinct_geometry(settings):
    shapes = set()
    for model_id in range(8):
        spindle = generate_spindle(settings.scene.spindle, model_id, 5, settings.scene.wire_heights)
        shapes.add(spindle.leader.points.tobytes() + b"".join(b.points.tobytes() for b in spindle.side_branches))
    assert len(shapes) == 8


def test_every_spindle_has_a_target(settings):
    for seed in range(200):
        scene = build_scene(settings.scene, seed)
        assert {t.spindle_id for t in scene.targets} == set(range(len(scene.spindles)))


def test_too_few_branch_heights_raises(settings):
    cramped = settings.scene.spindle.model_copy(update={"branch_height_range": [0.35, 0.40]})
    with pytest.raises(PlacementError):
        generate_spindle(cramped, 0, 1)


def test_spindle_without_target_raises(settings, monkeypatch):
    monkeypatch.setattr(scene_model, "_too_close_to_wires", lambda *args: True)
    with pytest.raises(PlacementError):
        build_scene(settings.scene, 0)


def test_chain_distance_is_signed():
    chain = CapsuleChain(np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]), [0.1])
    assert isinstance(chain_distance(chain, np.array([0.5, 0.3, 0.0])), float)
    assert chain_distance(chain, np.array([0.5, 0.3, 0.0])) == pytest.approx(0.2)
    assert chain_distance(chain, np.array([0.5, 0.0, 0.0])) == pytest.approx(-0.1)
    assert chain_distance(chain, np.array([1.5, 0.0, 0.0])) == pytest.approx(0.4)


def test_invalid_config_raises():
    bad = SceneSettings.model_construct(**{**SceneSettings().model_dump(), "frame_width": -1.0})
    with pytest.raises(ConfigError):
        build_scene(bad, 0)


def test_cutter_regions_disjoint(profile):
    for band in profile.failure_regions:
        assert convex_polygons_disjoint(profile.success_region, band)


def test_zone_at_target_and_in_mouth(scene, target):
    assert query_zone(scene, pose_facing(target.point, 0.0), target) is ZoneStatus.SUCCESS
    assert query_zone(scene, pose_facing(target.point, 0.03), target) is ZoneStatus.SUCCESS


def test_zone_far_in_front_is_none(scene, target):
    assert query_zone(scene, pose_facing(target.point, 0.15), target) is ZoneStatus.NONE


def test_zone_beside_blade_is_failure(scene, target):
    # 刀刃外侧约 8 mm
    assert query_zone(scene, pose_facing(target.point, 0.03, (0.0, 0.018)), target) is ZoneStatus.FAILURE


def test_zone_sweep_never_jumps_between_success_and_failure(scene, target):
    zones = [
        query_zone(scene, pose_facing(target.point, 0.03, (0.0, y)), target)
        for y in np.arange(0.005, 0.025, 0.0001)
    ]
    assert ZoneStatus.SUCCESS in zones and ZoneStatus.FAILURE in zones
    for a, b in zip(zones, zones[1:]):
        assert {a, b} != {ZoneStatus.SUCCESS, ZoneStatus.FAILURE}
    changes = sum(1 for a, b in zip(zones, zones[1:]) if a is not b)
    assert changes == 3


def test_distance_to_target(target):
    assert distance_to_target(pose_facing(target.point, 0.0), target) == 0.0
    assert distance_to_target(Pose(np.eye(3), target.point + [0.0, 0.0, 0.15]), target) == pytest.approx(0.15)


def test_distance_matches_norm_under_random_poses(target):
    rng = np.random.default_rng(3)
    for _ in range(20):
        position = target.point + rng.normal(0.0, 0.1, 3)
        pose = Pose.from_yaw(rng.uniform(-1, 1), position)
        assert distance_to_target(pose, target) == pytest.approx(np.sqrt(np.sum((position - target.point) ** 2)))


def test_remnant_length_through_target(scene, target):
    assert branch_remnant_length(scene, pose_facing(target.point, 0.1), target) == pytest.approx(0.03, abs=1e-9)


def test_remnant_length_through_attachment(scene, target):
    pose = pose_facing(target.leader_attach, 0.1)
    assert branch_remnant_length(scene, pose, target) == pytest.approx(0.0, abs=1e-9)


def _straight_branch_scene(profile) -> tuple[SceneGraph, PruneTarget]:
    leader = CapsuleChain(np.array([[0.0, 0.0, 0.0], [0.0, 0.8, 0.0], [0.0, 1.6, 0.0]]), [0.014, 0.01])
    branch = CapsuleChain(np.array([[0.01, 1.0, 0.0], [0.11, 1.0, 0.0], [0.21, 1.0, 0.0]]), [0.006, 0.004])
    target = PruneTarget(0, np.array([0.04, 1.0, 0.0]), 0, 0, 0.03, branch.points[0].copy())
    scene = SceneGraph((), (), (TreeSpindle(leader, (branch,), 0),), (target,), 0, profile)
    return scene, target


def test_remnant_length_straight_branch_midpoint(profile):
    scene, target = _straight_branch_scene(profile)
    pose = Pose(np.eye(3), np.array([0.11, 1.0, -0.1]))
    assert branch_remnant_length(scene, pose, target) == pytest.approx(0.10)


def test_remnant_length_not_cuttable(profile):
    scene, target = _straight_branch_scene(profile)
    with pytest.raises(NotCuttableError):
        branch_remnant_length(scene, Pose(np.eye(3), np.array([0.5, 1.0, -0.1])), target)
