"""
Experiment configuration - loader
"""
import json
import os
from pathlib import Path
from typing import Any, Dict, Optional, Union

import toml
import yaml
from dotenv import load_dotenv

from dscca.config.experiment_config import ExperimentConfig
from dscca.utils.exception_handler import ConfigValidationError, ExceptionHandler
from dscca.utils.logging_utils import LoggingUtils


class ConfigLoader:
    """Reads TOML/YAML/JSON experiment files and overlays environment variables"""

    def __init__(self, env_file: Optional[str] = None):
        self.env_file = env_file
        self.env_mapping = {
            "DSCCA_OUTPUT_ROOT": "system.output_root",
            "DSCCA_LOG_LEVEL": "system.log_level",
            "DSCCA_DEBUG": "system.debug",
            "DSCCA_SEED": "training.seed",
            "DSCCA_EPOCHS": "training.epochs",
            "DSCCA_BATCH_SIZE": "training.batch_size",
            "DSCCA_DATA_PATH1": "dataset.path1",
            "DSCCA_DATA_PATH2": "dataset.path2",
            "DSCCA_MNIST_IMAGES": "dataset.images_path",
        }

    def _load_env_vars(self) -> Dict[str, Any]:
        load_dotenv(self.env_file)
        env_config: Dict[str, Any] = {}
        for env_var, config_path in self.env_mapping.items():
            value = os.getenv(env_var)
            if value is not None:
                converted_value = self._convert_env_value(value)
                self._set_nested_value(env_config, config_path, converted_value)
                LoggingUtils.log_debug(
                    "ConfigLoader",
                    "Loaded env var {env_var} -> {config_path}={converted_value}",
                    env_var=env_var,
                    config_path=config_path,
                    converted_value=converted_value,
                )
        return env_config

    def _convert_env_value(self, value: str) -> Any:
        if value.lower() in ("true", "false"):
            return value.lower() == "true"
        try:
            if "." in value or "e" in value.lower():
                return float(value)
            return int(value)
        except ValueError:
            return value

    def _set_nested_value(self, config: Dict[str, Any], path: str, value: Any):
        keys = path.split(".")
        current = config
        for key in keys[:-1]:
            current = current.setdefault(key, {})
        current[keys[-1]] = value

    def parse_file(self, filepath: Union[str, Path]) -> Dict[str, Any]:
        """Parse a config file by extension; JSON is the fallback"""
        filepath = str(filepath)
        try:
            with open(filepath, "r", encoding="utf-8") as f:
                if filepath.endswith((".yaml", ".yml")):
                    data = yaml.safe_load(f)
                elif filepath.endswith(".toml"):
                    data = toml.load(f)
                else:
                    data = json.load(f)
        except OSError as e:
            ExceptionHandler.handle_file_operation_error(e, "ConfigLoader")
            raise ConfigValidationError([f"cannot read config file {filepath}: {e}"]) from e
        except (toml.TomlDecodeError, yaml.YAMLError, json.JSONDecodeError) as e:
            raise ConfigValidationError([f"cannot parse config file {filepath}: {e}"]) from e

        if isinstance(data, dict) and "dscca" in data:
            return data["dscca"]
        if isinstance(data, dict):
            return data
        raise ConfigValidationError([f"config file {filepath} does not hold a table"])

    def _deep_update(self, base: Dict[str, Any], update: Dict[str, Any]) -> Dict[str, Any]:
        result = base.copy()
        for key, value in update.items():
            if key in result and isinstance(result[key], dict) and isinstance(value, dict):
                result[key] = self._deep_update(result[key], value)
            else:
                result[key] = value
        return result

    def load(self, filepath: Optional[Union[str, Path]] = None) -> Dict[str, Any]:
        """Merge file and environment values, environment winning"""
        file_config = self.parse_file(filepath) if filepath else {}
        env_config = self._load_env_vars()
        merged = self._deep_update(file_config, env_config)
        LoggingUtils.log_debug(
            "ConfigLoader",
            "Configuration loaded: {env_count} env sections, {file_count} file sections",
            env_count=len(env_config),
            file_count=len(file_config),
        )
        return merged


def load_config(filepath: Optional[Union[str, Path]] = None, env_file: Optional[str] = None) -> ExperimentConfig:
    """Parse and validate an experiment config"""
    config = ExperimentConfig.from_dict(ConfigLoader(env_file).load(filepath))
    config.validate()
    return config


def dumps_config(config: ExperimentConfig) -> str:
    """Normalized TOML text; parsing it yields an equal config"""
    return toml.dumps(config.to_dict())


def dump_config(config: ExperimentConfig, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_config(config), encoding="utf-8")
    return path


def loads_config(text: str) -> ExperimentConfig:
    try:
        data = toml.loads(text)
    except toml.TomlDecodeError as e:
        raise ConfigValidationError([f"cannot parse config text: {e}"]) from e
    return ExperimentConfig.from_dict(data)
