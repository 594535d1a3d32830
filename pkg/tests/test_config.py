"""Test configuration module."""
# Import built-in modules
import json
from pathlib import Path

# Import third-party modules
import pytest

# Import local modules
from spinefuse.config import RunConfig
from spinefuse.config import config_from_dict
from spinefuse.config import load_config
from spinefuse.errors import ConfigError
from spinefuse.parallel import THREADS_ENV


def test_run_config_defaults():
    """Test RunConfig initialization with default values."""
    cfg = RunConfig()
    assert cfg.k == 10
    assert cfg.threads is None
    assert cfg.geometry.sad == 1000.0
    assert cfg.geometry.sdd == 1500.0
    assert cfg.geometry.detector_shape == (512, 512)
    assert cfg.detect.sigma_px == 4.0
    assert cfg.detect.rho_min == 0.3
    assert cfg.detect.delta_min_px == 10.0
    assert (cfg.dp.alpha, cfg.dp.beta) == (0.1, 0.8)
    assert cfg.fusion.voting == "weighted"
    assert cfg.eval.match_radius_mm == 20.0
    cfg.validate()


def test_load_config_defaults():
    """Test that no path means defaults."""
    assert load_config().to_dict() == RunConfig().to_dict()


def test_load_config_file(temp_dir):
    """Test loading a partial JSON config over the defaults."""
    path = Path(temp_dir) / "config.json"
    path.write_text(json.dumps({
        "k": 6,
        "geometry": {"detector_shape": [256, 128], "pitch": [2.0, 2.0]},
        "detector_oracle": {"noise_sigma_px": 1.5},
        "fusion": {"voting": "mean"},
    }))
    cfg = load_config(path)
    assert cfg.k == 6
    assert cfg.geometry.detector_shape == (256, 128)
    assert cfg.geometry.sad == 1000.0
    assert cfg.detector_oracle.noise_sigma_px == 1.5
    assert cfg.fusion.voting == "mean"
    assert len(cfg.geometry.views(cfg.k)) == 6


def test_load_config_errors(temp_dir):
    """Test missing files, bad JSON and unknown keys."""
    with pytest.raises(ConfigError):
        load_config(Path(temp_dir) / "missing.json")
    path = Path(temp_dir) / "config.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(path)
    with pytest.raises(ConfigError, match="unknown key"):
        config_from_dict({"geometry": {"sid": 900.0}})
    with pytest.raises(ConfigError):
        config_from_dict({"geometry": [1, 2]})


def test_config_values_validated_on_load():
    """Test that section preconditions surface as config errors."""
    with pytest.raises(ConfigError):
        config_from_dict({"dp": {"alpha": 0.9, "beta": 0.5}})
    with pytest.raises(ConfigError):
        config_from_dict({"detector_oracle": {"p_miss": 1.0}})


def test_phantom_section_keys():
    """Test the phantom section takes background_radius_mm and rejects the old body radius key."""
    cfg = config_from_dict({"phantom": {"background_radius_mm": 45.0, "n": 3}})
    assert cfg.phantom.background_radius_mm == 45.0
    assert cfg.phantom.n == 3
    with pytest.raises(ConfigError, match="unknown key"):
        config_from_dict({"phantom": {"body_radius_mm": 45.0}})


def test_to_dict_round_trips_through_json():
    """Test that a serialized config loads back to the same values."""
    cfg = RunConfig().with_overrides(k=4, voting="majority")
    payload = json.loads(json.dumps(cfg.to_dict()))
    assert json.dumps(config_from_dict(payload).to_dict()) == json.dumps(cfg.to_dict())


def test_with_overrides():
    """Test flag-style overrides and that the original stays untouched."""
    cfg = RunConfig()
    changed = cfg.with_overrides(k=3, sigma_px=2.5, p_miss=0.1, voting="mean", n=3, start_label=1, seed=None)
    assert changed.k == 3
    assert changed.detect.sigma_px == 2.5
    assert changed.detector_oracle.p_miss == 0.1
    assert changed.fusion.voting == "mean"
    assert (changed.phantom.n, changed.phantom.start_label) == (3, 1)
    assert changed.seed == 0
    assert cfg.k == 10
    assert cfg.detect.sigma_px == 4.0


def test_with_overrides_errors():
    """Test unknown override keys and invalid values."""
    with pytest.raises(ConfigError):
        RunConfig().with_overrides(gamma=1.0)
    with pytest.raises(ConfigError):
        RunConfig().with_overrides(p_spurious=-0.5)
    with pytest.raises(ConfigError):
        RunConfig().with_overrides(n=30)


@pytest.mark.parametrize("overrides", [
    {"k": 1},
    {"voting": "median"},
    {"threads": 0},
])
def test_validate_rejects(overrides):
    """Test run-time precondition checks."""
    with pytest.raises(ConfigError):
        RunConfig().with_overrides(**overrides).validate()


def test_validate_single_view_without_fusion():
    """Test that K = 1 is fine when fusion is not needed."""
    RunConfig(k=1).validate(require_fusion=False)


def test_threads_from_environment(monkeypatch):
    """Test thread resolution from the environment."""
    monkeypatch.setenv(THREADS_ENV, "3")
    assert RunConfig().resolved_threads() == 3
    assert RunConfig(threads=2).resolved_threads() == 2
    monkeypatch.setenv(THREADS_ENV, "many")
    with pytest.raises(ConfigError):
        RunConfig().resolved_threads()
    monkeypatch.delenv(THREADS_ENV)
    assert RunConfig().resolved_threads() == 1
