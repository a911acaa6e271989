from __future__ import annotations

import logging

import numpy as np
import pytest

from app.exceptions import ExportError
from app.utils.image_utils import frame_path, read_ppm, write_ppm
from app.utils.logger import episode_logger, get_logger
from app.utils.memory_utils import cleanup_memory, get_memory_info
from app.utils.seeding import derive_seed, make_rng


def test_derive_seed_is_stable_and_label_sensitive():
    assert derive_seed(7, 3, 0, "HC") == derive_seed(7, 3, 0, "HC")
    assert derive_seed(7, 3, 0, "HC") != derive_seed(7, 3, 0, "CL")
    # 整数与同字面字符串不冲突
    assert derive_seed(1) != derive_seed("1")
    assert 0 <= derive_seed("x") < 2 ** 64


def test_make_rng_streams_match():
    assert np.array_equal(make_rng(1, "a").random(4), make_rng(1, "a").random(4))


def test_frame_path_layout(tmp_path):
    assert frame_path(tmp_path, 2, 5) == tmp_path / "frames" / "ep2" / "step5.ppm"


def test_write_ppm_rejects_bad_pixels(tmp_path):
    with pytest.raises(ExportError):
        write_ppm(np.zeros((4, 4), dtype=np.uint8), tmp_path / "a.ppm")
    with pytest.raises(ExportError):
        write_ppm(np.zeros((4, 4, 3), dtype=np.float32), tmp_path / "b.ppm")


def test_ppm_pixels_survive_roundtrip(tmp_path):
    pixels = np.random.default_rng(0).integers(0, 256, size=(6, 9, 3), dtype=np.uint8)
    assert np.array_equal(read_ppm(write_ppm(pixels, tmp_path / "c.ppm")), pixels)


def test_read_missing_ppm(tmp_path):
    with pytest.raises(ExportError):
        read_ppm(tmp_path / "missing.ppm")


def test_episode_logger_prefix(caplog):
    log = episode_logger(get_logger("pruning_sim.test"), "OL-", 4)
    with caplog.at_level(logging.INFO, logger="pruning_sim.test"):
        log.info("到达")
    assert "[OL-|目标 4] 到达" in caplog.text


def test_memory_info_and_cleanup():
    info = get_memory_info()
    assert info["rss_mb"] >= 0
    assert info["torch_threads"] >= 1
    assert cleanup_memory()["freed_mb"] >= 0.0
