"""
Configuration module for the DMC simulator.
Loads runtime settings from the environment and reads/writes scenario files.
"""

import logging
import os
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Optional, Union

from dotenv import load_dotenv
from pydantic import BaseModel, ValidationError

from .errors import ConfigError
from .models import (
    BuckParams,
    GeneratorSetConfig,
    Limits,
    NetworkConfig,
    ScenarioConfig,
    SwitchgearParams,
    TrackerParams,
)

# Load environment variables from .env file
load_dotenv()

logger = logging.getLogger(__name__)


@dataclass
class RuntimeConfig:
    """Process-level knobs (not part of a scenario)."""
    threads: int
    output_dir: str = "./out"
    log_level: str = "WARNING"
    log_format: str = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def get_runtime_config() -> RuntimeConfig:
    """Get runtime configuration from environment variables."""
    threads = os.getenv("DMC_SIM_THREADS")
    try:
        threads = max(1, int(threads)) if threads else (os.cpu_count() or 1)
    except ValueError:
        raise ConfigError(f"DMC_SIM_THREADS must be an integer, got {threads!r}") from None
    log_level = os.getenv("DMC_LOG_LEVEL", "WARNING").upper()
    if not isinstance(logging.getLevelName(log_level), int):
        raise ConfigError(f"DMC_LOG_LEVEL must be a logging level name, got {log_level!r}")
    return RuntimeConfig(
        threads=threads,
        output_dir=os.getenv("DMC_OUTPUT_DIR", "./out"),
        log_level=log_level,
        log_format=os.getenv(
            "DMC_LOG_FORMAT", "%(asctime)s %(levelname)s %(name)s: %(message)s"
        ),
    )


def configure_logging(config: Optional[RuntimeConfig] = None) -> None:
    """Apply the runtime log level and format to the root logger."""
    config = config or get_runtime_config()
    logging.basicConfig(level=config.log_level, format=config.log_format, force=True)


# ============================================================================
# SCENARIO FILES
# ============================================================================

# section name -> nested ScenarioConfig field (None = top-level scenario keys)
SECTIONS: dict[str, Optional[str]] = {
    "scenario": None,
    "limits": "limits",
    "generator": "generator",
    "network": "network",
    "buck": "buck",
    "tracker": "tracker",
    "switchgear": "switchgear",
}

SECTION_MODELS: dict[str, type[BaseModel]] = {
    "limits": Limits,
    "generator": GeneratorSetConfig,
    "network": NetworkConfig,
    "buck": BuckParams,
    "tracker": TrackerParams,
    "switchgear": SwitchgearParams,
}

_NONE_WORDS = {"none", "null", ""}


def _scenario_keys() -> set[str]:
    return {name for name in ScenarioConfig.model_fields if name not in SECTION_MODELS}


def _allowed_keys(section: str) -> set[str]:
    if section == "scenario":
        return _scenario_keys()
    return set(SECTION_MODELS[section].model_fields)


def parse_scenario_text(text: str, path: str = "<string>") -> ScenarioConfig:
    """
    Parse a sectioned `key = value` scenario file.

    Values stay strings until pydantic validates them, so coercion and
    constraint checks live in the models. Errors name the file, line and key.
    """
    raw: dict[str, dict[str, str]] = {name: {} for name in SECTIONS}
    lines: dict[tuple[str, str], int] = {}
    section: Optional[str] = None

    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise ConfigError("malformed section header", path=path, line=lineno)
            section = stripped[1:-1].strip().lower()
            if section not in SECTIONS:
                raise ConfigError(f"unknown section [{section}]", path=path, line=lineno)
            continue
        if "=" not in stripped:
            raise ConfigError("expected 'key = value'", path=path, line=lineno)
        if section is None:
            raise ConfigError("key outside of any section", path=path, line=lineno)

        key, value = (part.strip() for part in stripped.split("=", 1))
        key = key.lower()
        if key not in _allowed_keys(section):
            raise ConfigError(f"unknown key in [{section}]", path=path, line=lineno, key=key)
        if key in raw[section]:
            raise ConfigError(f"duplicate key in [{section}]", path=path, line=lineno, key=key)
        raw[section][key] = value
        lines[(section, key)] = lineno

    data: dict[str, Any] = {
        key: (None if value.lower() in _NONE_WORDS else value)
        for key, value in raw["scenario"].items()
    }
    for section, field in SECTIONS.items():
        if field is not None and raw[section]:
            data[field] = dict(raw[section])

    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        loc = [str(part) for part in first["loc"]]
        if loc and loc[0] in SECTION_MODELS:
            section, key = loc[0], (loc[1] if len(loc) > 1 else None)
        else:
            section, key = "scenario", (loc[0] if loc else None)
        raise ConfigError(
            first["msg"],
            path=path,
            line=lines.get((section, key)) if key else None,
            key=key,
        ) from exc


def load_scenario(path: Union[str, Path]) -> ScenarioConfig:
    """Read and validate a scenario file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", path=str(path)) from exc
    config = parse_scenario_text(text, str(path))
    logger.info("Loaded scenario '%s' from %s", config.name, path)
    return config


def _format_value(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_scenario(config: ScenarioConfig) -> str:
    """Emit a fully resolved scenario file that parse_scenario_text accepts."""
    out = [f"# resolved scenario '{config.name}'", "", "[scenario]"]
    for key in ScenarioConfig.model_fields:
        if key in SECTION_MODELS:
            continue
        out.append(f"{key} = {_format_value(getattr(config, key))}")
    for section, model in SECTION_MODELS.items():
        out.extend(["", f"[{section}]"])
        values = getattr(config, section)
        for key in model.model_fields:
            out.append(f"{key} = {_format_value(getattr(values, key))}")
    return "\n".join(out) + "\n"


def apply_overrides(
    config: ScenarioConfig,
    dt: Optional[float] = None,
    duration: Optional[float] = None,
    decimation: Optional[int] = None,
) -> ScenarioConfig:
    """Return a copy with CLI overrides applied and re-validated."""
    updates: dict[str, Any] = {}
    if dt is not None:
        updates["dt"] = dt
    if duration is not None:
        updates["sim_duration"] = duration
    if decimation is not None:
        updates["decimation"] = decimation
    if not updates:
        return config
    try:
        return ScenarioConfig.model_validate({**config.model_dump(), **updates})
    except ValidationError as exc:
        first = exc.errors()[0]
        raise ConfigError(f"invalid override: {first['msg']}") from exc

