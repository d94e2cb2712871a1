import copy
from pathlib import Path
from typing import Any, Mapping

import yaml

from fedplt.errors import ConfigError


DEFAULT_CONFIG_PATH = Path(__file__).resolve().parent / "config.yaml"


def parse_config(section: str, param: str | None = None) -> Any:
    """Value of `section` (or `section.param`) in the packaged defaults, None when absent."""
    with DEFAULT_CONFIG_PATH.open("r") as f:
        cfg = yaml.safe_load(f) or {}
    conf_section = cfg.get(section, None)
    if conf_section is None or param is None:
        return copy.deepcopy(conf_section)

    return copy.deepcopy(conf_section.get(param, None))


def read_config_file(path: str | Path) -> dict:
    """YAML or JSON file as a mapping; JSON is read by the YAML parser too."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(str(path), "config file not found")
    try:
        with path.open("r") as f:
            data = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise ConfigError(str(path), f"cannot parse: {e}")
    if not isinstance(data, dict):
        raise ConfigError(str(path), "top level must be a mapping")

    return data


def deep_merge(base: Mapping, override: Mapping) -> dict:
    """`override` on top of `base`; nested mappings merge, every other value replaces."""
    merged = copy.deepcopy(dict(base))
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), Mapping):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def flatten(data: Mapping, prefix: str = "") -> dict[str, Any]:
    """Nested mapping to dotted keys, e.g. {"data": {"seed": 1}} -> {"data.seed": 1}."""
    flat = {}
    for key, value in data.items():
        path = f"{prefix}.{key}" if prefix else str(key)
        if isinstance(value, Mapping):
            flat.update(flatten(value, path))
        else:
            flat[path] = value
    return flat
