from __future__ import annotations

import pytest
import yaml

from app.config import DEFAULT_CONFIG_PATH, Settings, load_settings
from app.exceptions import ConfigError


def test_default_config_file_matches_model_defaults():
    from_file = load_settings("default")
    assert from_file.to_dict() == Settings.from_dict({}).to_dict()


def test_defaults(settings):
    assert settings.env.n_steps == 10
    assert settings.env.s_forward == pytest.approx(0.30)
    assert settings.admittance.selection == [0, 0, 0, 0, 1, 1]
    assert settings.harness.controllers == ["HC", "CL", "OL", "OL-"]
    assert settings.supervisor.contact_threshold == pytest.approx(0.75)


def test_missing_config_file_raises(tmp_path):
    with pytest.raises(ConfigError):
        load_settings(tmp_path / "absent.yaml")


def test_unknown_top_level_key_raises(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text(yaml.safe_dump({"harnes": {"n_targets": 2}}), encoding="utf-8")
    with pytest.raises(ConfigError):
        load_settings(path)


def test_unknown_section_key_raises():
    with pytest.raises(ConfigError):
        Settings.from_dict({"admittance": {"dampng": [0, 0, 0, 0, 1, 1]}})


def test_malformed_yaml_raises(tmp_path):
    path = tmp_path / "broken.yaml"
    path.write_text("harness: [unclosed\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_settings(path)


def test_partial_yaml_keeps_other_defaults(tmp_path):
    path = tmp_path / "partial.yaml"
    path.write_text(yaml.safe_dump({"harness": {"n_targets": 2, "controllers": ["CL"]}}), encoding="utf-8")
    cfg = load_settings(path)
    assert cfg.harness.n_targets == 2
    assert cfg.harness.controllers == ["CL"]
    assert cfg.harness.trials_per_target == 4
    assert cfg.config_path == path


def test_env_variable_overrides_file(monkeypatch):
    monkeypatch.setenv("PRUNE_HARNESS_MASTER_SEED", "123")
    cfg = Settings.from_dict({"harness": {"master_seed": 5}})
    assert cfg.harness.master_seed == 123


def test_unstable_admittance_gain_rejected():
    with pytest.raises(ConfigError):
        Settings.from_dict({"admittance": {"mass": [0, 0, 0, 0, 100.0, 0.4]}})


def test_inconsistent_horizon_rejected():
    with pytest.raises(ConfigError):
        Settings.from_dict({"env": {"n_steps": 12}})


def test_unknown_controller_rejected():
    with pytest.raises(ConfigError):
        Settings.from_dict({"harness": {"controllers": ["PID"]}})


def test_bad_execution_mode_rejected():
    with pytest.raises(ConfigError):
        Settings.from_dict({"task_queue": {"execution_mode": "gpu"}})


def test_with_overrides_merges_nested_sections(settings):
    cfg = settings.with_overrides(policy={"train": {"seed": 9}})
    assert cfg.policy.train.seed == 9
    assert cfg.policy.train.clip_ratio == settings.policy.train.clip_ratio
    with pytest.raises(ConfigError):
        settings.with_overrides(nothing={})


def test_default_config_path_exists():
    assert DEFAULT_CONFIG_PATH.is_file()
