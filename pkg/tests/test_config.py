from pathlib import Path

import pytest
from pydantic import ValidationError

from cv_erasure_code.core.config import Settings


def test_default_settings(monkeypatch):
    """Test default settings values"""
    monkeypatch.delenv("CVQEC_MAX_WORKERS", raising=False)
    monkeypatch.delenv("CVQEC_LOG_LEVEL", raising=False)
    settings = Settings(_env_file=None)
    assert settings.app_name == "CV Erasure Code"
    assert settings.app_version == "0.1.0"
    assert settings.environment == "development"
    assert settings.log_level == "INFO"
    assert settings.json_logs is False
    assert settings.output_dir == Path("results")
    assert settings.max_workers == 4


def test_settings_from_env(monkeypatch):
    """Test settings can be overridden by environment variables"""
    monkeypatch.setenv("CVQEC_APP_NAME", "Test Sim")
    monkeypatch.setenv("CVQEC_JSON_LOGS", "true")
    monkeypatch.setenv("CVQEC_MAX_WORKERS", "8")
    monkeypatch.setenv("CVQEC_ENVIRONMENT", "production")
    monkeypatch.setenv("CVQEC_DEFAULT_SEED", "7")

    settings = Settings()
    assert settings.app_name == "Test Sim"
    assert settings.json_logs is True
    assert settings.max_workers == 8
    assert settings.environment == "production"
    assert settings.default_seed == 7


def test_case_insensitive_env_vars(monkeypatch):
    """Test that environment variables are case insensitive"""
    monkeypatch.setenv("cvqec_app_name", "Case Test")
    monkeypatch.setenv("CVQEC_LOG_LEVEL", "DEBUG")

    settings = Settings()
    assert settings.app_name == "Case Test"
    assert settings.log_level == "DEBUG"


def test_output_dir_expands_home(monkeypatch):
    """Test that OUTPUT_DIR accepts shell-style home paths"""
    monkeypatch.setenv("CVQEC_OUTPUT_DIR", "  ~/cvqec-out ")

    settings = Settings()
    assert settings.output_dir == Path("~/cvqec-out").expanduser()


def test_invalid_values_rejected(monkeypatch):
    """Test that out-of-range settings fail validation"""
    monkeypatch.setenv("CVQEC_MAX_WORKERS", "0")
    with pytest.raises(ValidationError):
        Settings()

    monkeypatch.setenv("CVQEC_MAX_WORKERS", "2")
    monkeypatch.setenv("CVQEC_LOG_LEVEL", "TRACE")
    with pytest.raises(ValidationError):
        Settings()
