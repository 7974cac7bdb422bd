import logging
import sys
from pathlib import Path
from typing import Any, Dict, Union

from pydantic import ValidationError

from ..core.errors import ConfigError
from ..core.models import RunConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

RUN_SECTION = "run"
_RUN_KEYS = ("seed", "output_dir", "dataset_path", "val_fraction")


def parse_run_config(text: str) -> RunConfig:
    """Parse TOML text; [run] keys map onto RunConfig's top-level fields."""
    try:
        data: Dict[str, Any] = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"Config is not valid TOML: {e}") from e
    run = data.pop(RUN_SECTION, {})
    if not isinstance(run, dict):
        raise ConfigError("[run] must be a section")
    try:
        return RunConfig(**run, **data)
    except (ValidationError, TypeError) as e:
        raise ConfigError(f"Invalid run config: {e}") from e


def load_run_config(path: Union[str, Path]) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read config {path}: {e}") from e
    config = parse_run_config(text)
    logger.info(f"Loaded run config {path} (fingerprint {config.fingerprint()})")
    return config


def _toml_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    return repr(value)


def dump_run_config(config: RunConfig) -> str:
    """Render a RunConfig as TOML that parse_run_config reads back unchanged."""
    data = config.model_dump(mode="json")
    lines = [f"[{RUN_SECTION}]"]
    lines.extend(f"{k} = {_toml_value(data[k])}" for k in _RUN_KEYS if data[k] is not None)
    for section, values in data.items():
        if section in _RUN_KEYS:
            continue
        lines.append("")
        lines.append(f"[{section}]")
        lines.extend(f"{k} = {_toml_value(v)}" for k, v in values.items() if v is not None)
    return "\n".join(lines) + "\n"


def save_run_config(config: RunConfig, path: Union[str, Path]) -> None:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(dump_run_config(config), encoding="utf-8")
