import os

import pytest

from src.config_loader import ConfigLoader, RunConfig, check_windows
from src.exceptions import ConfigError, ParameterWindowError, UnknownKeyError

DEFAULT_CFG = os.path.join(os.path.dirname(__file__), "..", "data", "default.cfg")


def test_defaults():
    config = ConfigLoader(use_env=False).load()
    assert config == RunConfig()
    assert config.m == 6
    assert config.a is None
    assert config.log_level == "INFO"


def test_default_file_matches_model():
    config = ConfigLoader(DEFAULT_CFG, use_env=False).load()
    assert config == RunConfig()


def test_file_values(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("m = 4\nres = 6\na =\nlog_level = debug\n")
    config = ConfigLoader(str(path), use_env=False).load()
    assert config.m == 4
    assert config.res == 6
    assert config.a is None
    assert config.log_level == "DEBUG"


def test_unknown_key(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("genus = 3\n")
    with pytest.raises(UnknownKeyError):
        ConfigLoader(str(path), use_env=False).load()


def test_unknown_override():
    with pytest.raises(UnknownKeyError):
        ConfigLoader(use_env=False).load({"genus": 3})


def test_small_m_rejected():
    with pytest.raises(ConfigError):
        ConfigLoader(use_env=False).load({"m": 2})


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        ConfigLoader("/nonexistent/run.cfg", use_env=False).load()


def test_environment_override(monkeypatch, tmp_path):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("FBMS_M", "5")
    monkeypatch.setenv("FBMS_THETA0", "0.01")
    config = ConfigLoader().load()
    assert config.m == 5
    assert config.theta0 == pytest.approx(0.01)


def test_overrides_beat_environment(monkeypatch, tmp_path):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("FBMS_M", "5")
    config = ConfigLoader().load({"m": 4, "res": None})
    assert config.m == 4
    assert config.res == 8


def test_check_windows():
    params = check_windows(RunConfig(m=3))
    assert params.m == 3
    assert params.seam == pytest.approx(5 * 0.05 * 3)
    with pytest.raises(ParameterWindowError):
        check_windows(RunConfig(m=6, a=0.5))
