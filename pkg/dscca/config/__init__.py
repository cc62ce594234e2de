"""
dscca configuration

- experiment_config.py: runtime parameters a user sets per experiment
- constants.py: fixed code-level constants (exception groups, formats, presets)
"""

from .constants import ExceptionConstants, ExitCodes, FormatConstants, NumericConstants
from .experiment_config import (
    ArchitectureConfig,
    DatasetConfig,
    EvalConfig,
    ExperimentConfig,
    ResolvedArchitecture,
    SystemConfig,
    TrainingConfig,
    resolve_ablation,
    with_overrides,
)
from .loader import ConfigLoader, dump_config, dumps_config, load_config, loads_config

__all__ = [
    "ArchitectureConfig",
    "DatasetConfig",
    "EvalConfig",
    "ExperimentConfig",
    "ResolvedArchitecture",
    "SystemConfig",
    "TrainingConfig",
    "resolve_ablation",
    "with_overrides",
    "ConfigLoader",
    "dump_config",
    "dumps_config",
    "load_config",
    "loads_config",
    "ExceptionConstants",
    "ExitCodes",
    "FormatConstants",
    "NumericConstants",
]
