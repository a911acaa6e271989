from __future__ import annotations

import numpy as np
import pytest

from app.config import CameraSettings
from app.exceptions import DimensionError, ExportError
from app.sim.camera import (
    CameraModel,
    SegmentClass,
    SegmentedImage,
    crop_rescale,
    downscale,
    export_ppm,
    import_ppm,
    observation_pixels,
    render_segmented,
)
from app.sim.geometry import Pose
from app.sim.scene import SceneGraph

from conftest import pose_facing


@pytest.fixture(scope="module")
def camera(settings) -> CameraModel:
    return CameraModel.from_settings(settings.camera)


def test_empty_scene_without_cutter_is_background(profile, settings):
    cam = CameraModel.from_settings(settings.camera.model_copy(update={"draw_cutter": False}))
    img = render_segmented(SceneGraph.empty(profile), Pose.identity(), cam)
    assert (img.width, img.height) == (424, 240)
    assert np.all(img.hue == int(SegmentClass.BACKGROUND))
    assert np.all(img.mask == 0)


def test_render_is_deterministic_and_valid(scene, target, camera):
    pose = pose_facing(target.point, 0.17)
    a = render_segmented(scene, pose, camera)
    b = render_segmented(scene, pose, camera)
    assert np.array_equal(a.pixels, b.pixels)
    assert a.is_valid()


def test_tree_mask_matches_tree_class(scene, camera):
    rng = np.random.default_rng(5)
    for t in scene.targets[:4]:
        pose = pose_facing(t.point, rng.uniform(0.15, 0.20), rng.uniform(-0.01, 0.01, 2))
        img = render_segmented(scene, pose, camera)
        assert np.array_equal(img.mask == 255, img.hue == int(SegmentClass.TREE))


def test_cutter_is_visible(scene, target, camera):
    img = render_segmented(scene, pose_facing(target.point, 0.17), camera)
    assert np.any(img.hue == int(SegmentClass.CUTTER))


def test_target_projects_inside_crop(settings, scene, target, camera):
    pose = pose_facing(target.point, 0.17)
    u, v = camera.project(target.point, pose)
    x0, y0, w, h = settings.camera.crop
    assert x0 <= u < x0 + w
    assert y0 <= v < y0 + h


def test_crop_rescale_shape_and_bottom_right_corner():
    pixels = np.zeros((240, 424, 3), dtype=np.uint8)
    # 只标记单个像素 (列 423, 行 239)
    pixels[239, 423] = (200, 0, 77)
    out = crop_rescale(SegmentedImage(pixels))
    assert (out.width, out.height) == (160, 80)
    assert tuple(out.pixels[79, 159]) == (200, 0, 77)
    assert np.count_nonzero(out.pixels.any(axis=2)) == 1


def test_crop_rescale_top_left_of_crop():
    pixels = np.zeros((240, 424, 3), dtype=np.uint8)
    pixels[60, 64] = (1, 255, 9)
    pixels[59, 63] = (7, 7, 7)
    out = crop_rescale(SegmentedImage(pixels))
    assert tuple(out.pixels[0, 0]) == (1, 255, 9)
    assert not np.any(out.pixels == 7)


def test_crop_rescale_rejects_wrong_size():
    with pytest.raises(DimensionError):
        crop_rescale(SegmentedImage(np.zeros((100, 100, 3), dtype=np.uint8)))


def test_observation_pixels_match_full_render(settings, scene, target, camera):
    """只渲染观测像素与整帧渲染后裁剪缩放结果一致"""
    pose = pose_facing(target.point, 0.16, (0.004, -0.003))
    full = render_segmented(scene, pose, camera)
    expected = downscale(crop_rescale(full, settings.camera))
    sparse = render_segmented(scene, pose, camera, observation_pixels(settings.camera))
    assert np.array_equal(sparse.pixels, expected.pixels)


def test_observation_without_downscale(settings):
    cfg = settings.camera.model_copy(update={"obs_downscale": False})
    cols, rows = observation_pixels(cfg)
    assert cols.shape == (80, 160)
    assert cols.min() >= 64 and rows.min() >= 60


def test_ppm_roundtrip(tmp_path, scene, target, camera):
    img = render_segmented(scene, pose_facing(target.point, 0.17), camera)
    path = export_ppm(img, tmp_path / "frame.ppm")
    assert path.read_bytes().startswith(b"P6")
    assert np.array_equal(import_ppm(path).pixels, img.pixels)


def test_ppm_export_to_empty_path_fails(camera, profile):
    img = SegmentedImage(np.zeros((2, 2, 3), dtype=np.uint8))
    with pytest.raises(ExportError):
        export_ppm(img, "")


def test_camera_rejects_bad_resolution():
    with pytest.raises(DimensionError):
        CameraModel(0, 10, 60.0, Pose.identity())


def test_default_camera_settings_have_crop_inside_image():
    cfg = CameraSettings()
    x0, y0, w, h = cfg.crop
    assert x0 + w == cfg.width and y0 + h == cfg.height
