"""INI-style run configuration files.

One ``[section]`` per RunConfig block and one ``key = value`` line per field.
Writing emits every field in declaration order, so a written file reads back
to the same configuration and writes out byte-identically.
"""

from configparser import ConfigParser
from enum import Enum
from pathlib import Path
from typing import Any

from decouple import config as env_config

from data.models import ConfigurationError, RunConfig

NONE_VALUES = {"", "none", "null"}


def env_defaults() -> dict[str, dict[str, Any]]:
    """Process-level defaults from the environment or a .env file."""
    defaults: dict[str, dict[str, Any]] = {
        "run": {"output_dir": env_config("TRAINER_OUTPUT_DIR", default="runs")},
        "collector": {"executor": env_config("TRAINER_EXECUTOR", default="process")},
    }
    max_workers = env_config("TRAINER_MAX_WORKERS", default="")
    if max_workers:
        defaults["collector"]["max_workers"] = int(max_workers)
    return defaults


def log_level() -> str:
    return env_config("TRAINER_LOG_LEVEL", default="INFO")


def _merge(base: dict[str, dict[str, Any]], extra: dict[str, dict[str, Any]]) -> None:
    for section, values in extra.items():
        base.setdefault(section, {}).update(values)


def parse_config_text(text: str, source: str = "<config>") -> dict[str, dict[str, Any]]:
    parser = ConfigParser(interpolation=None)
    parser.optionxform = str  # keep key case (e.g. L0)
    parser.read_string(text, source=source)
    sections = set(RunConfig.model_fields)
    data: dict[str, dict[str, Any]] = {}
    for section in parser.sections():
        if section not in sections:
            raise ConfigurationError(f"{source}: unknown section [{section}]")
        data[section] = {
            key: (None if value.strip().lower() in NONE_VALUES else value.strip())
            for key, value in parser.items(section)
        }
    return data


def load_config(
    path: str | Path | None = None,
    overrides: dict[str, dict[str, Any]] | None = None,
) -> RunConfig:
    """Resolve a RunConfig: environment defaults < config file < overrides.

    Raises:
        ConfigurationError: On unknown sections
        pydantic.ValidationError: On unknown keys or invalid values
    """
    data = env_defaults()
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigurationError(f"Config file not found: {path}")
        _merge(data, parse_config_text(path.read_text(encoding="utf-8"), str(path)))
    if overrides:
        _merge(data, {k: {f: v for f, v in vals.items() if v is not None} for k, vals in overrides.items()})
    return RunConfig.model_validate(data)


def _format_value(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_config(config: RunConfig) -> str:
    blocks = []
    for section in RunConfig.model_fields:
        block = getattr(config, section)
        lines = [f"[{section}]"]
        lines.extend(
            f"{name} = {_format_value(getattr(block, name))}" for name in type(block).model_fields
        )
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def write_config(config: RunConfig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_config(config), encoding="utf-8")
    return path
