"""Tests for our application environment config parsing

Pytest overwrites your local environment with the values set by options in
`tool.pytest.ini_options`
"""

import pydantic
import pytest

from dedem.environment import Settings, get_settings


def test_settings_read_from_env_file(settings):
    assert settings.threads == 1
    assert settings.deterministic is False
    assert settings.log_format == "text"


def test_settings_env_prefix(monkeypatch):
    monkeypatch.setenv("DEDEM_THREADS", "4")
    monkeypatch.setenv("DEDEM_DETERMINISTIC", "true")

    settings = Settings()

    assert settings.threads == 4
    assert settings.deterministic is True


def test_zero_threads_raises():
    with pytest.raises(pydantic.ValidationError):
        Settings(threads=0)


def test_get_settings_is_cached():
    assert get_settings() is get_settings()
