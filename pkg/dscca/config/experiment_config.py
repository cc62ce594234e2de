"""
Experiment configuration - layered dataclass sections
"""
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from dscca.config.constants import ABLATIONS, ARCHITECTURE_PRESETS, CONDITIONING_MODES, MODES
from dscca.utils.exception_handler import ConfigValidationError
from dscca.utils.logging_utils import LoggingUtils

DATA_SOURCES = ("synthetic", "files", "mnist")
FILE_FORMATS = ("csv", "binary")
NONLINEARITIES = ("none", "tanh_mix")


def default_reg_grid() -> List[float]:
    """11 log-spaced points over [1e-8, 1e2]"""
    return [10.0 ** e for e in range(-8, 3)]


@dataclass
class SystemConfig:
    """Runtime settings"""
    output_root: str = "runs"
    run_name: str = ""
    debug: bool = False
    log_level: str = "INFO"


@dataclass
class DatasetConfig:
    """Where the paired views come from and how they are split"""
    source: str = "synthetic"
    name: str = ""
    # files
    path1: str = ""
    path2: str = ""
    format: str = "csv"
    # mnist (IDX image file, split into left/right halves)
    images_path: str = ""
    image_height: int = 28
    image_width: int = 28
    max_samples: int = 0
    # synthetic
    n_samples: int = 2000
    latent_dim: int = 4
    dims: List[int] = field(default_factory=lambda: [20, 20])
    target_correlations: List[float] = field(default_factory=lambda: [0.9, 0.9, 0.9, 0.9])
    nonlinearity: str = "none"
    data_seed: int = 0
    # splits, fractions of N or absolute counts
    split: List[float] = field(default_factory=lambda: [0.8, 0.1, 0.1])
    split_seed: int = 0


@dataclass
class ArchitectureConfig:
    """Mapping functions f1, f2 and the scaling networks"""
    preset: str = ""
    hidden1: List[int] = field(default_factory=lambda: [64, 64])
    hidden2: List[int] = field(default_factory=lambda: [64, 64])
    output_dim: int = 10
    scaler_hidden: List[int] = field(default_factory=lambda: [256])
    conditioning: str = "z_only"
    bn_momentum: float = 0.1
    bn_epsilon: float = 1e-5


@dataclass
class TrainingConfig:
    """Optimization"""
    mode: str = "dsdcca"
    ablation: str = "none"
    epochs: int = 100
    warmup_epochs: int = 50
    batch_size: int = 750
    lr: float = 1e-3
    weight_decay: float = 1e-5
    rmsprop_alpha: float = 0.99
    rmsprop_eps: float = 1e-8
    r1: float = 1e-4
    r2: float = 1e-4
    alpha: float = 0.95
    margin: float = 0.5
    seed: int = 0


@dataclass
class EvalConfig:
    """Evaluation protocols"""
    d: int = 10
    reg_grid: List[float] = field(default_factory=default_reg_grid)
    k_values: List[int] = field(default_factory=lambda: [1, 5, 10])


SECTIONS = {
    "system": SystemConfig,
    "dataset": DatasetConfig,
    "architecture": ArchitectureConfig,
    "training": TrainingConfig,
    "eval": EvalConfig,
}


@dataclass
class ExperimentConfig:
    """Full configuration of one experiment"""
    system: SystemConfig
    dataset: DatasetConfig
    architecture: ArchitectureConfig
    training: TrainingConfig
    eval: EvalConfig

    def to_dict(self) -> Dict[str, Any]:
        return {name: asdict(getattr(self, name)) for name in SECTIONS}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        """Build from nested dicts; unknown sections or keys are rejected."""
        errors = [f"unknown section [{name}]" for name in data if name not in SECTIONS]
        sections = {}
        for name, section_cls in SECTIONS.items():
            values = dict(data.get(name) or {})
            known = set(section_cls.__dataclass_fields__)
            errors.extend(f"unknown key {name}.{key}" for key in values if key not in known)
            sections[name] = section_cls(**{k: v for k, v in values.items() if k in known})
        if errors:
            raise ConfigValidationError(errors)
        return cls(**sections)

    @classmethod
    def create_default(cls) -> "ExperimentConfig":
        return cls(**{name: section_cls() for name, section_cls in SECTIONS.items()})

    def copy(self) -> "ExperimentConfig":
        return ExperimentConfig.from_dict(self.to_dict())

    def hidden_sizes(self) -> Tuple[List[int], List[int], int]:
        """(hidden1, hidden2, output_dim), the preset overriding explicit sizes"""
        if self.architecture.preset:
            hidden1, hidden2, output_dim = ARCHITECTURE_PRESETS[self.architecture.preset]
            return list(hidden1), list(hidden2), output_dim
        return list(self.architecture.hidden1), list(self.architecture.hidden2), self.architecture.output_dim

    def validation_errors(self, check_paths: bool = False) -> List[str]:
        """Every violated constraint, as readable messages"""
        errors = []
        t, a, e, ds = self.training, self.architecture, self.eval, self.dataset

        if t.mode not in MODES:
            errors.append(f"training.mode must be one of {MODES}, got {t.mode!r}")
        if t.ablation not in ABLATIONS:
            errors.append(f"training.ablation must be one of {ABLATIONS}, got {t.ablation!r}")
        if t.epochs < 1:
            errors.append(f"training.epochs must be >= 1, got {t.epochs}")
        if not 0 <= t.warmup_epochs <= t.epochs:
            errors.append(f"training.warmup_epochs must lie in [0, epochs={t.epochs}], got {t.warmup_epochs}")
        if t.batch_size <= e.d:
            errors.append(f"training.batch_size must exceed eval.d={e.d}, got {t.batch_size}")
        if t.lr <= 0:
            errors.append(f"training.lr must be positive, got {t.lr}")
        if t.weight_decay < 0:
            errors.append(f"training.weight_decay must be non-negative, got {t.weight_decay}")
        if not 0.0 <= t.rmsprop_alpha < 1.0:
            errors.append(f"training.rmsprop_alpha must lie in [0, 1), got {t.rmsprop_alpha}")
        if t.r1 <= 0 or t.r2 <= 0:
            errors.append(f"training.r1 and training.r2 must be positive, got {t.r1}, {t.r2}")
        if not 0.0 <= t.alpha < 1.0:
            errors.append(f"training.alpha must lie in [0, 1), got {t.alpha}")
        if t.margin < 0:
            errors.append(f"training.margin must be non-negative, got {t.margin}")

        if a.preset and a.preset not in ARCHITECTURE_PRESETS:
            errors.append(f"architecture.preset must be one of {sorted(ARCHITECTURE_PRESETS)}, got {a.preset!r}")
        if a.conditioning not in CONDITIONING_MODES:
            errors.append(f"architecture.conditioning must be one of {CONDITIONING_MODES}, got {a.conditioning!r}")
        if any(int(s) < 1 for s in [*a.hidden1, *a.hidden2, *a.scaler_hidden]):
            errors.append("architecture layer sizes must be positive")
        if not a.preset and a.output_dim < 1:
            errors.append(f"architecture.output_dim must be >= 1, got {a.output_dim}")
        if not 0.0 < a.bn_momentum <= 1.0:
            errors.append(f"architecture.bn_momentum must lie in (0, 1], got {a.bn_momentum}")
        if a.bn_epsilon <= 0:
            errors.append(f"architecture.bn_epsilon must be positive, got {a.bn_epsilon}")
        if not a.preset or a.preset in ARCHITECTURE_PRESETS:
            output_dim = self.hidden_sizes()[2]
            if not 1 <= e.d <= output_dim:
                errors.append(f"eval.d must lie in [1, output_dim={output_dim}], got {e.d}")
        if t.mode in ("dcca", "ranking") and t.ablation != "none":
            errors.append(f"training.ablation={t.ablation!r} needs a dynamically-scaled mode, got {t.mode!r}")

        if not e.reg_grid or any(r < 0 or not math.isfinite(r) for r in e.reg_grid):
            errors.append("eval.reg_grid must be a non-empty list of non-negative values")
        if not e.k_values or any(k < 1 for k in e.k_values):
            errors.append("eval.k_values must be a non-empty list of positive counts")

        if ds.source not in DATA_SOURCES:
            errors.append(f"dataset.source must be one of {DATA_SOURCES}, got {ds.source!r}")
        if ds.format not in FILE_FORMATS:
            errors.append(f"dataset.format must be one of {FILE_FORMATS}, got {ds.format!r}")
        if ds.nonlinearity not in NONLINEARITIES:
            errors.append(f"dataset.nonlinearity must be one of {NONLINEARITIES}, got {ds.nonlinearity!r}")
        if len(ds.split) != 3 or any(s < 0 for s in ds.split):
            errors.append("dataset.split must hold three non-negative train/val/test sizes")
        if ds.source == "synthetic":
            if len(ds.dims) != 2 or any(n < 1 for n in ds.dims):
                errors.append("dataset.dims must hold two positive view dimensions")
            elif ds.latent_dim > min(ds.dims):
                errors.append(f"dataset.latent_dim must not exceed min(dims)={min(ds.dims)}")
            rho = ds.target_correlations
            if len(rho) != ds.latent_dim:
                errors.append("dataset.target_correlations must have latent_dim entries")
            if any(not 0.0 < r <= 1.0 for r in rho):
                errors.append(f"dataset.target_correlations must lie in (0, 1], got {rho}")
            if any(b > a for a, b in zip(rho, rho[1:])):
                errors.append(f"dataset.target_correlations must be non-increasing, got {rho}")
            if ds.n_samples < 2:
                errors.append("dataset.n_samples must be >= 2")
        if check_paths:
            paths = {"files": ("path1", "path2"), "mnist": ("images_path",)}.get(ds.source, ())
            for key in paths:
                value = getattr(ds, key)
                if not value or not os.path.exists(value):
                    errors.append(f"dataset.{key} does not exist: {value!r}")
        return errors

    def validate(self, check_paths: bool = False) -> bool:
        """Raise ConfigValidationError listing every violation"""
        errors = self.validation_errors(check_paths)
        if errors:
            for error in errors:
                LoggingUtils.log_error("ExperimentConfig", "{error}", error=error)
            raise ConfigValidationError(errors)
        LoggingUtils.log_debug("ExperimentConfig", "Config validation passed")
        return True

    def get(self, path: str, default: Any = None) -> Any:
        """Dotted-path lookup, e.g. "training.lr" """
        value = self
        for key in path.split("."):
            if not hasattr(value, key):
                return default
            value = getattr(value, key)
        return value

    def set(self, path: str, value: Any) -> bool:
        """Dotted-path assignment; False when the path does not exist"""
        keys = path.split(".")
        target = self
        for key in keys[:-1]:
            if not hasattr(target, key):
                return False
            target = getattr(target, key)
        if not hasattr(target, keys[-1]):
            LoggingUtils.log_warning("ExperimentConfig", "Unknown config path '{path}'", path=path)
            return False
        setattr(target, keys[-1], value)
        return True


@dataclass(frozen=True)
class ResolvedArchitecture:
    """Concrete network settings after an ablation is applied"""
    variant: str
    warmup_epochs: int
    hidden1: Tuple[int, ...]
    hidden2: Tuple[int, ...]
    output_dim: int
    widen: Optional[str] = None


def resolve_ablation(config: ExperimentConfig) -> ResolvedArchitecture:
    """
    Map mode and ablation onto a head variant, warm-up length and backbone.

    The plain modes train a conventional head. Wide ablations return the
    unwidened sizes with widen set; the trainer widens them against the
    scaler's parameter count.
    """
    hidden1, hidden2, output_dim = config.hidden_sizes()
    t = config.training
    if t.mode in ("dcca", "ranking"):
        return ResolvedArchitecture("conventional", t.epochs, tuple(hidden1), tuple(hidden2), output_dim)
    variant = "dynamic"
    warmup = t.warmup_epochs
    widen = None
    if t.ablation in ("global_scale", "scale_outputs", "hypernet"):
        variant = t.ablation
    elif t.ablation == "no_warmup":
        warmup = 0
    elif t.ablation in ("wide2", "wide12"):
        variant = "conventional"
        warmup = t.epochs
        widen = t.ablation
    return ResolvedArchitecture(variant, warmup, tuple(hidden1), tuple(hidden2), output_dim, widen)


def with_overrides(config: ExperimentConfig, overrides: Dict[str, Any]) -> ExperimentConfig:
    """Copy of config with dotted-path overrides applied"""
    updated = config.copy()
    unknown = [path for path, value in overrides.items() if not updated.set(path, value)]
    if unknown:
        raise ConfigValidationError([f"unknown config path {path!r}" for path in unknown])
    return updated
