# splat_avatar/core/config_loader.py
"""
Loading of flat YAML training configs with strict key checking
"""

from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Union

import yaml
from pydantic import ValidationError

from ..config.training_config import TrainingConfig
from ..exceptions import ConfigError, IoError


def _wants_text(key: str) -> bool:
    annotation = TrainingConfig.model_fields[key].annotation
    return annotation is str or (isinstance(annotation, type) and issubclass(annotation, Enum))


def _coerce(key: str, value: Any) -> Any:
    # YAML 1.1 reads bare on/off as booleans
    if isinstance(value, bool) and key in TrainingConfig.model_fields and _wants_text(key):
        return "on" if value else "off"
    return value


def parse_override(item: str) -> tuple:
    """'key=value' with the value typed as a YAML scalar"""
    if "=" not in item:
        raise ConfigError(f"override '{item}' is not of the form key=value")
    key, raw = item.split("=", 1)
    key = key.strip()
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse value '{raw}': {e}", key=key)
    if isinstance(value, (dict, list)):
        raise ConfigError(f"value '{raw}' is not a scalar", key=key)
    return key, value


class ConfigLoader:
    """Load, validate and override training configurations"""

    def __init__(self, config_file: Optional[Union[str, Path]] = None):
        self.config_file = Path(config_file) if config_file else None
        self.values: Dict[str, Any] = self._load_values() if self.config_file else TrainingConfig().to_flat_dict()

    def _load_values(self) -> Dict[str, Any]:
        """Read the YAML mapping from file"""
        try:
            with open(self.config_file, "r", encoding="utf-8") as file:
                data = yaml.safe_load(file)
        except FileNotFoundError:
            raise IoError("config file not found", path=str(self.config_file))
        except OSError as e:
            raise IoError(f"cannot read config file: {e}", path=str(self.config_file))
        except yaml.YAMLError as e:
            raise ConfigError(f"config file {self.config_file} is not valid YAML: {e}")

        if not isinstance(data, dict):
            raise ConfigError(f"config file {self.config_file} must be a flat key: value mapping")
        for key, value in data.items():
            if isinstance(value, (dict, list)):
                raise ConfigError("nested values are not allowed", key=str(key))
        return {str(k): _coerce(str(k), v) for k, v in data.items()}

    @staticmethod
    def check_keys(values: Dict[str, Any], require_all: bool = True):
        documented = TrainingConfig.documented_keys()
        unknown = sorted(set(values) - set(documented))
        if unknown:
            raise ConfigError("unknown config key", key=unknown[0])
        if require_all:
            missing = [key for key in documented if key not in values]
            if missing:
                raise ConfigError("missing config key", key=missing[0])

    def apply_overrides(self, overrides: Iterable[str]) -> "ConfigLoader":
        for item in overrides:
            key, value = parse_override(item)
            if key not in TrainingConfig.model_fields:
                raise ConfigError("unknown config key", key=key)
            self.values[key] = _coerce(key, value)
        return self

    def build(self) -> TrainingConfig:
        """Validate the collected values into a TrainingConfig"""
        self.check_keys(self.values)
        try:
            return TrainingConfig.model_validate(self.values)
        except ValidationError as e:
            error = e.errors()[0]
            key = str(error["loc"][0]) if error.get("loc") else None
            raise ConfigError(error["msg"], key=key)

    @classmethod
    def load(cls, config_file: Optional[Union[str, Path]], overrides: Iterable[str] = ()) -> TrainingConfig:
        return cls(config_file).apply_overrides(overrides).build()

    @staticmethod
    def dump(config: TrainingConfig) -> str:
        """Flat YAML document listing every key"""
        return yaml.safe_dump(config.to_flat_dict(), sort_keys=False, default_flow_style=False)

    @classmethod
    def write(cls, path: Union[str, Path], config: Optional[TrainingConfig] = None):
        """Write `config` (the defaults when omitted) as a complete config file"""
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(cls.dump(config or TrainingConfig()), encoding="utf-8")
        except OSError as e:
            raise IoError(f"cannot write config: {e}", path=str(path))
