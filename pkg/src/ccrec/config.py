"""ccrec.config
============

Configuration for models, training, synthetic data and baselines.

Provides configuration through:
- Direct construction of the dataclasses
- Environment variables (``CCREC_`` prefix)
- Configuration files (JSON/YAML)
"""

import json
import logging
import math
import os
from dataclasses import dataclass, field, fields
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from .exceptions import CcrecConfigError

try:
    import yaml
    HAS_YAML = True
except ImportError:
    HAS_YAML = False

logger = logging.getLogger(__name__)

_LOG_LEVELS = {'DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'}


class Variant(Enum):
    """Model variants: the full model and its four ablations."""
    FULL = "full"
    NO_CLASSIFICATION = "no_classification"
    NO_ATTENTION = "no_attention"
    NO_ATTENTION_LOSS = "no_attention_loss"
    NO_SEPARATION = "no_separation"

    @property
    def uses_classifier(self) -> bool:
        return self is not Variant.NO_CLASSIFICATION

    @property
    def uses_attention(self) -> bool:
        return self is not Variant.NO_ATTENTION

    @property
    def uses_attention_loss(self) -> bool:
        return self in (Variant.FULL, Variant.NO_CLASSIFICATION)

    @property
    def separated(self) -> bool:
        return self is not Variant.NO_SEPARATION


def _filter_known(cls, data: Dict[str, Any]) -> Dict[str, Any]:
    valid_fields = {f.name for f in fields(cls)}
    filtered = {}
    for key, value in data.items():
        normalized = key.lower().replace('-', '_')
        if normalized not in valid_fields:
            logger.debug(f"Ignoring unknown {cls.__name__} key '{key}'")
            continue
        filtered[normalized] = value
    return filtered


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise CcrecConfigError(message)


@dataclass
class ModelConfig:
    """
    Architecture and loss weights of the cross-channel model.

    Attributes:
        d: Embedding dimension of every user and item table
        d_prime: Width of the attention query/key projections
        clf_hidden: Width of both hidden layers of the interaction classifier
        lambda_cls: Weight of the interaction-classification loss
        lambda_attn: Weight of the attention loss
        variant: Full model or one of the ablations
    """

    d: int = 128
    d_prime: int = 128
    clf_hidden: int = 64
    lambda_cls: float = 0.1
    lambda_attn: float = 0.1
    variant: Variant = Variant.FULL

    def __post_init__(self):
        if isinstance(self.variant, str):
            self.variant = Variant(self.variant)

    def validate(self) -> None:
        for name in ('d', 'd_prime', 'clf_hidden'):
            _require(int(getattr(self, name)) >= 1, f"{name} must be >= 1")
        for name in ('lambda_cls', 'lambda_attn'):
            value = float(getattr(self, name))
            _require(math.isfinite(value) and value >= 0, f"{name} must be finite and >= 0")

    def to_dict(self) -> Dict[str, Any]:
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data['variant'] = self.variant.value
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ModelConfig":
        return cls(**_filter_known(cls, data))


@dataclass
class TrainConfig:
    """
    Optimisation settings.

    Attributes:
        epochs: Maximum number of epochs
        batch_size: Mini-batch size
        learning_rate: Adam step size
        adam_beta1 / adam_beta2 / adam_eps: Adam constants
        patience: Epochs without validation improvement before stopping
        seed: Seed for initialisation, shuffling and negative sampling
        negatives_per_positive: Negatives attached to every positive
        eval_k: Depth of the NDCG used for model selection
        threads: Worker threads for validation ranking
    """

    epochs: int = 200
    batch_size: int = 1024
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    patience: int = 20
    seed: int = 0
    negatives_per_positive: int = 10
    eval_k: int = 10
    threads: int = 1

    def validate(self) -> None:
        _require(self.epochs >= 1, "epochs must be >= 1")
        _require(self.batch_size >= 1, "batch_size must be >= 1")
        _require(self.learning_rate > 0, "learning_rate must be positive")
        _require(0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1, "Adam betas must lie in [0, 1)")
        _require(self.adam_eps > 0, "adam_eps must be positive")
        _require(self.patience >= 1, "patience must be >= 1")
        _require(self.negatives_per_positive >= 0, "negatives_per_positive cannot be negative")
        _require(self.eval_k >= 1, "eval_k must be >= 1")
        _require(self.threads >= 1, "threads must be >= 1")

    def to_dict(self) -> Dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TrainConfig":
        return cls(**_filter_known(cls, data))


@dataclass
class GenConfig:
    """
    Synthetic multi-channel dataset settings.

    Attributes:
        n_users / n_items: Population sizes
        latent_dim: Dimension of the planted factors
        gamma: Strength of the channel-specific offsets
        overlap_user_frac: Share of users active in both channels
        overlap_item_frac: Share of items sold in both channels
        interactions_per_user_channel: Inclusive (low, high) draw count
        dup_prob: Chance an overlapping user's purchase also fires on the other channel
        offline_user_share: Share of single-channel users that are offline-only
        signal_scale: Standard deviation of the planted affinities
        seed: Generator seed
    """

    n_users: int = 600
    n_items: int = 300
    latent_dim: int = 8
    gamma: float = 1.0
    overlap_user_frac: float = 0.3
    overlap_item_frac: float = 0.8
    interactions_per_user_channel: Tuple[int, int] = (20, 40)
    dup_prob: float = 0.2
    offline_user_share: float = 0.5
    signal_scale: float = 2.0
    seed: int = 0

    def __post_init__(self):
        self.interactions_per_user_channel = tuple(int(x) for x in self.interactions_per_user_channel)

    def validate(self) -> None:
        _require(self.n_users >= 1 and self.n_items >= 1, "n_users and n_items must be >= 1")
        _require(self.latent_dim >= 1, "latent_dim must be >= 1")
        _require(self.gamma >= 0, "gamma must be >= 0")
        for name in ('overlap_user_frac', 'overlap_item_frac', 'dup_prob', 'offline_user_share'):
            value = getattr(self, name)
            _require(0.0 <= value <= 1.0, f"{name} must lie in [0, 1]")
        low, high = self.interactions_per_user_channel
        _require(1 <= low <= high, "interactions_per_user_channel must satisfy 1 <= low <= high")
        _require(self.signal_scale > 0, "signal_scale must be positive")

    def to_dict(self) -> Dict[str, Any]:
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data['interactions_per_user_channel'] = list(self.interactions_per_user_channel)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GenConfig":
        return cls(**_filter_known(cls, data))


@dataclass
class BprConfig:
    """BPR matrix-factorisation baseline settings."""

    d: int = 64
    learning_rate: float = 0.01
    reg: float = 1e-4
    epochs: int = 50
    batch_size: int = 64

    def validate(self) -> None:
        _require(self.d >= 1, "bpr d must be >= 1")
        _require(self.learning_rate > 0, "bpr learning_rate must be positive")
        _require(self.reg >= 0, "bpr reg cannot be negative")
        _require(self.epochs >= 1, "bpr epochs must be >= 1")
        _require(self.batch_size >= 1, "bpr batch_size must be >= 1")

    def to_dict(self) -> Dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "BprConfig":
        return cls(**_filter_known(cls, data))


@dataclass
class ExperimentConfig:
    """
    Everything an experiment pipeline needs.

    Attributes:
        model: Model architecture and loss weights
        train: Optimisation settings
        gen: Synthetic data settings
        bpr: Baseline settings
        seeds: Seeds used for multi-seed reporting
        k_values: Ranking depths reported
        log_level: Logging verbosity
        log_file: Optional log file
    """

    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    gen: GenConfig = field(default_factory=GenConfig)
    bpr: BprConfig = field(default_factory=BprConfig)
    seeds: List[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    k_values: List[int] = field(default_factory=lambda: [5, 10])
    log_level: str = "WARNING"
    log_file: Optional[str] = None

    _SECTIONS = {'model': ModelConfig, 'train': TrainConfig, 'gen': GenConfig, 'bpr': BprConfig}

    @classmethod
    def from_env(cls, prefix: str = "CCREC_") -> "ExperimentConfig":
        """
        Create configuration from environment variables.

        Section fields are addressed as ``<PREFIX><SECTION>_<FIELD>``,
        e.g. ``CCREC_MODEL_D_PRIME=64`` or ``CCREC_TRAIN_EPOCHS=30``.
        Top-level fields: ``CCREC_SEEDS=0,1,2``, ``CCREC_K_VALUES=5,10``,
        ``CCREC_LOG`` and ``CCREC_LOG_FILE``.
        """
        def convert(raw: str, current: Any) -> Any:
            if isinstance(current, bool):
                return raw.lower() in ('true', '1', 'yes', 'on')
            if isinstance(current, Enum):
                return type(current)(raw)
            if isinstance(current, tuple):
                return tuple(int(x) for x in raw.split(','))
            if isinstance(current, int):
                return int(raw)
            if isinstance(current, float):
                return float(raw)
            return raw

        sections: Dict[str, Any] = {}
        for section, section_cls in cls._SECTIONS.items():
            default = section_cls()
            values = {}
            for f in fields(section_cls):
                raw = os.getenv(f"{prefix}{section.upper()}_{f.name.upper()}")
                # Present-but-empty variables count as unset.
                if raw is None or not raw.strip():
                    continue
                try:
                    values[f.name] = convert(raw.strip(), getattr(default, f.name))
                except (TypeError, ValueError) as e:
                    raise CcrecConfigError(
                        f"Invalid value for {prefix}{section.upper()}_{f.name.upper()}: {raw!r} ({e})"
                    )
            sections[section] = section_cls(**values)

        config = cls(**sections)
        seeds = os.getenv(f"{prefix}SEEDS")
        if seeds and seeds.strip():
            config.seeds = [int(s) for s in seeds.split(',')]
        k_values = os.getenv(f"{prefix}K_VALUES")
        if k_values and k_values.strip():
            config.k_values = [int(k) for k in k_values.split(',')]
        config.log_level = os.getenv(f"{prefix}LOG", config.log_level) or config.log_level
        config.log_file = os.getenv(f"{prefix}LOG_FILE") or None
        return config

    @classmethod
    def from_file(cls, path: Path, file_format: Optional[str] = None) -> "ExperimentConfig":
        """
        Load configuration from a JSON or YAML file.

        Raises:
            CcrecConfigError: If the file is missing or the format unsupported
        """
        path = Path(path)
        if not path.exists():
            raise CcrecConfigError(
                f"Configuration file not found: {path}",
                path=str(path),
                suggestions=["Check if the file path is correct"],
            )

        if file_format is None:
            file_format = path.suffix.lower().lstrip('.')

        with open(path, 'r', encoding='utf-8') as f:
            if file_format == 'json':
                data = json.load(f)
            elif file_format in ('yaml', 'yml'):
                if not HAS_YAML:
                    raise CcrecConfigError(
                        "PyYAML is required for YAML config files",
                        suggestions=["Install PyYAML with: pip install ccrec[yaml]", "Use a JSON config file instead"],
                    )
                data = yaml.safe_load(f) or {}
            else:
                raise CcrecConfigError(
                    f"Unsupported file format: {file_format}",
                    suggestions=["Use .json, .yaml, or .yml file extensions"],
                )

        return cls.from_dict(data)

    def to_file(self, path: Path, file_format: Optional[str] = None) -> None:
        """Save configuration to a JSON or YAML file."""
        path = Path(path)
        if file_format is None:
            file_format = path.suffix.lower().lstrip('.')
        path.parent.mkdir(parents=True, exist_ok=True)

        with open(path, 'w', encoding='utf-8') as f:
            if file_format == 'json':
                json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            elif file_format in ('yaml', 'yml'):
                if not HAS_YAML:
                    raise CcrecConfigError(
                        "PyYAML is required for YAML config files",
                        suggestions=["Install PyYAML with: pip install ccrec[yaml]"],
                    )
                yaml.safe_dump(self.to_dict(), f, default_flow_style=False)
            else:
                raise CcrecConfigError(f"Unsupported file format: {file_format}")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        """Create configuration from a (possibly partial) nested dictionary."""
        kwargs: Dict[str, Any] = {}
        for key, value in _filter_known(cls, data).items():
            section_cls = cls._SECTIONS.get(key)
            if section_cls is not None:
                if isinstance(value, section_cls):
                    kwargs[key] = value
                else:
                    kwargs[key] = section_cls.from_dict(value or {})
            else:
                kwargs[key] = value
        return cls(**kwargs)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'model': self.model.to_dict(),
            'train': self.train.to_dict(),
            'gen': self.gen.to_dict(),
            'bpr': self.bpr.to_dict(),
            'seeds': list(self.seeds),
            'k_values': list(self.k_values),
            'log_level': self.log_level,
            'log_file': self.log_file,
        }

    def validate(self) -> None:
        """
        Validate every section.

        Raises:
            CcrecConfigError: If any value is invalid
        """
        self.model.validate()
        self.train.validate()
        self.gen.validate()
        self.bpr.validate()
        if not self.seeds:
            raise CcrecConfigError("at least one seed is required", missing_field="seeds")
        if not self.k_values or any(k < 1 for k in self.k_values):
            raise CcrecConfigError("k_values must be a non-empty list of positive integers")
        if list(self.k_values) != sorted(self.k_values):
            raise CcrecConfigError("k_values must be sorted ascending")
        if self.log_level.upper() not in _LOG_LEVELS:
            raise CcrecConfigError(f"log_level must be one of: {', '.join(sorted(_LOG_LEVELS))}")


def _merge(base: Dict[str, Any], override: Dict[str, Any], defaults: Dict[str, Any]) -> Dict[str, Any]:
    """Overlay values of ``override`` that differ from ``defaults`` onto ``base``."""
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict):
            merged[key] = _merge(base.get(key, {}), value, defaults.get(key, {}))
        elif value != defaults.get(key):
            merged[key] = value
    return merged


def load_config(
    config_path: Optional[Path] = None,
    env_prefix: str = "CCREC_",
    use_env_override: bool = True,
) -> ExperimentConfig:
    """
    Load configuration with a fallback hierarchy.

    Priority order:
    1. Environment variables (if use_env_override=True)
    2. Config file (if provided)
    3. Built-in defaults

    Example:
        >>> config = load_config(Path("experiment.yaml"))
        >>> config.model.d_prime
        128
    """
    config = ExperimentConfig()
    if config_path is not None:
        config = ExperimentConfig.from_file(Path(config_path))

    if use_env_override:
        env_config = ExperimentConfig.from_env(env_prefix)
        merged = _merge(config.to_dict(), env_config.to_dict(), ExperimentConfig().to_dict())
        config = ExperimentConfig.from_dict(merged)

    config.validate()
    return config

