"""Strict config parsing and derived-object tests."""
import json

import pytest

from wallsense.config import (CALIBRATED_WALL_LOSS_DB, ConfigError, RunConfig,
                              config_from_dict, load_config, resolve_output_dir)
from wallsense.channel import received_power


def test_defaults_validate():
    cfg = RunConfig()
    assert cfg.scene.time_samples == 150
    assert cfg.scene.freq_bins == 64
    scene = cfg.scene_template()
    assert scene.freq_grid.size == 64
    assert scene.time_grid.size == 150
    mcfg = cfg.model_config()
    assert mcfg.input_len == 150 and mcfg.input_channels == 64
    assert mcfg.num_classes == 6


def test_default_budget_closes_at_published_value():
    assert received_power(RunConfig().budget()) == pytest.approx(-98.52, abs=1e-9)
    assert CALIBRATED_WALL_LOSS_DB == pytest.approx(85.298, abs=5e-4)


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="unknown keys"):
        config_from_dict({"scene": {"freq_bins": 8, "bogus_knob": 1}})
    with pytest.raises(ConfigError, match="unknown keys"):
        config_from_dict({"not_a_section": {}})


def test_partial_override_keeps_other_defaults():
    cfg = config_from_dict({"scene": {"freq_bins": 8},
                            "training": {"epochs": 3}})
    assert cfg.scene.freq_bins == 8
    assert cfg.scene.sample_rate_hz == 50.0
    assert cfg.training.epochs == 3
    assert cfg.training.batch_size == 32


def test_nested_wall_override():
    cfg = config_from_dict({"scene": {"wall": {"thickness_m": 0.5}}})
    assert cfg.scene.wall.thickness_m == 0.5
    assert cfg.scene.wall.conductivity == 0.11


def test_load_config_file_and_invalid_json(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"dataset": {"samples_per_class": 4}}))
    cfg = load_config(str(p))
    assert cfg.dataset.samples_per_class == 4
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(str(bad))
    assert load_config(None).dataset.samples_per_class == 50


def test_to_dict_roundtrip():
    cfg = RunConfig()
    cfg.scene.freq_bins = 12
    again = config_from_dict(cfg.to_dict())
    assert again.to_dict() == cfg.to_dict()


def test_resolve_output_dir_env(monkeypatch):
    monkeypatch.delenv("WALLSENSE_OUT", raising=False)
    assert resolve_output_dir(None) == "runs"
    assert resolve_output_dir("/tmp/x") == "/tmp/x"
    monkeypatch.setenv("WALLSENSE_OUT", "/srv/out")
    assert resolve_output_dir(None) == "/srv/out"
    assert resolve_output_dir(None, "sub") == "/srv/out/sub"
    assert resolve_output_dir("/tmp/x") == "/tmp/x"


def test_scene_template_uses_wall_effect():
    cfg = RunConfig()
    scene = cfg.scene_template()
    assert 0 < scene.wall_effect.amplitude_factor < 1
    assert scene.wall_effect.extra_delay > 0
    assert len(scene.paths) == cfg.scene.static_path_count
