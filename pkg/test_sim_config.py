import logging

import pytest

from exceptions import ConfigError
from sim_config import SimSettings, configure_logging, env_float, env_int, get_logger


def test_settings_defaults(monkeypatch):
    for name in ("QKDSIM_LOG_LEVEL", "QKDSIM_LOG_FILE", "QKDSIM_SEED", "QKDSIM_WORKERS", "QKDSIM_OUTPUT_DIR"):
        monkeypatch.delenv(name, raising=False)
    settings = SimSettings.from_env()
    assert settings == SimSettings()
    assert settings.default_seed == 20240229


def test_settings_from_env(monkeypatch):
    monkeypatch.setenv("QKDSIM_LOG_LEVEL", "debug")
    monkeypatch.setenv("QKDSIM_WORKERS", "4")
    monkeypatch.setenv("QKDSIM_OUTPUT_DIR", "out")
    settings = SimSettings.from_env()
    assert settings.log_level == "DEBUG"
    assert settings.workers == 4
    assert settings.output_dir == "out"


@pytest.mark.parametrize("name, value", [
    ("QKDSIM_LOG_LEVEL", "CHATTY"),
    ("QKDSIM_WORKERS", "0"),
    ("QKDSIM_WORKERS", "two"),
    ("QKDSIM_SEED", "1.5"),
])
def test_bad_settings(monkeypatch, name, value):
    monkeypatch.setenv(name, value)
    with pytest.raises(ConfigError):
        SimSettings.from_env()


def test_env_helpers(monkeypatch):
    monkeypatch.setenv("QKDSIM_PX", "0.25")
    assert env_float("QKDSIM_PX", 0.0) == 0.25
    assert env_int("QKDSIM_NOT_SET", 7) == 7
    monkeypatch.setenv("QKDSIM_PX", "lots")
    with pytest.raises(ConfigError):
        env_float("QKDSIM_PX", 0.0)


def test_loggers_hang_off_qkdsim(tmp_path):
    log_file = tmp_path / "logs" / "qkdsim.log"
    root = configure_logging(SimSettings(log_file=str(log_file)), level="warning")
    assert root.name == "qkdsim"
    assert root.level == logging.WARNING
    assert get_logger("qkd_protocol").name == "qkdsim.qkd_protocol"
    assert get_logger("qkd_protocol").parent is root
