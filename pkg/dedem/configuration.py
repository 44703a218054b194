"""
Parsing and validating scenario files occurs within this module
"""

import logging
import tomllib
from pathlib import Path
from typing import Literal

from pydantic import ValidationError
from pydantic_yaml import parse_yaml_raw_as
from ruamel.yaml.error import YAMLError

from dedem import environment
from dedem.errors import ScenarioError
from dedem.models import Scenario

logger = logging.getLogger(__name__)

ScenarioFormat = Literal["toml", "yaml"]
SCENARIO_SUFFIXES = {".toml": "toml", ".yaml": "yaml", ".yml": "yaml"}


def _describe(exception: ValidationError) -> str:
    messages = []
    for error in exception.errors():
        location = ".".join(str(part) for part in error["loc"])
        message = error["msg"].removeprefix("Value error, ")
        messages.append(f"{location}: {message}" if location else message)
    return "; ".join(messages)


def parse_scenario(text: str, format: ScenarioFormat = "toml") -> Scenario:
    """Convert and validate scenario text to a `Scenario`"""
    try:
        if format == "yaml":
            return parse_yaml_raw_as(Scenario, text)
        return Scenario.model_validate(tomllib.loads(text))
    except tomllib.TOMLDecodeError as exception:
        raise ScenarioError(f"syntax error: {exception}") from exception
    except YAMLError as exception:
        raise ScenarioError(f"syntax error: {exception}") from exception
    except ValidationError as exception:
        logger.exception(exception)
        raise ScenarioError(_describe(exception)) from exception


def load_scenario(path: str | Path) -> Scenario:
    """Read a scenario file, choosing the format from its suffix"""
    path = Path(path)
    format = SCENARIO_SUFFIXES.get(path.suffix.lower())
    if format is None:
        raise ScenarioError(f"{path}: unsupported scenario format {path.suffix!r}")
    try:
        text = path.read_text(encoding="utf8")
    except OSError as exception:
        raise ScenarioError(f"cannot read {path}: {exception}") from exception
    try:
        return parse_scenario(text, format)  # type: ignore[arg-type]
    except ScenarioError as exception:
        raise ScenarioError(f"{path}: {exception}") from exception


def list_presets(config_dir: Path | None = None) -> list[Path]:
    """Shipped scenario files, sorted by name"""
    if config_dir is None:
        config_dir = environment.get_settings().config_dir
    return sorted(
        path
        for path in Path(config_dir).iterdir()
        if path.suffix.lower() in SCENARIO_SUFFIXES
    )
