"""
Module dedicated to interacting with the environment (variables, .env file)
"""

from functools import lru_cache
from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """The Settings object extracts environment variables for convenience."""

    # Compute
    threads: int = Field(default=1, ge=1)
    deterministic: bool = False

    # Shipped scenario presets
    config_dir: Path = Path("config")

    # Logging
    log_level: str = "info"
    log_format: str = "json"  # set to "text" for human-readable logs

    model_config = SettingsConfigDict(
        env_prefix="DEDEM_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Return the Settings object; use cache"""
    return Settings()
