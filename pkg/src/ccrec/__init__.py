# src/ccrec/__init__.py
"""Cross-channel retail recommendation: model, baselines and experiment pipelines."""

try:
    from importlib.metadata import PackageNotFoundError, version as _pkg_version

    try:
        __version__ = _pkg_version("ccrec")
    except PackageNotFoundError:  # editable install / source tree without metadata
        __version__ = "0.0.0+unknown"
except ImportError:  # pragma: no cover - importlib.metadata is in stdlib >=3.8
    __version__ = "0.0.0+unknown"

from .config import BprConfig, ExperimentConfig, GenConfig, ModelConfig, TrainConfig, Variant, load_config
from .dataset import (
    ChannelLabel,
    DatasetBundle,
    InteractionStore,
    PairPartition,
    TrainingExample,
    load_interactions,
    sample_negatives,
    split,
    stats,
)
from .model import Parameters, attention_scores, batch_losses, backward, classify_interaction, predict_preference
from .training import GridSpec, TrainResult, adam_step, grid_search, train
from .metrics import CandidateMode, EvalProtocol, MetricReport, UserFilter, evaluate, hr_at_k, ndcg_at_k
from .baselines import BprRegime, bpr_score, bpr_train, probe_experiment, run_bpr_regime
from .synthgen import GroundTruth, generate, oracle_topk
from .persistence import load_checkpoint, save_checkpoint
from .exceptions import (
    CcrecError,
    CcrecDataError,
    CcrecValidationError,
    CcrecConfigError,
    CcrecCheckpointError,
    CcrecTrainingError,
    CcrecEvaluationError,
    CcrecGenerationError,
    CcrecBatchError,
    ErrorCode
)

__all__ = [
    # Configuration
    "BprConfig",
    "ExperimentConfig",
    "GenConfig",
    "ModelConfig",
    "TrainConfig",
    "Variant",
    "load_config",
    # Data
    "ChannelLabel",
    "DatasetBundle",
    "InteractionStore",
    "PairPartition",
    "TrainingExample",
    "load_interactions",
    "sample_negatives",
    "split",
    "stats",
    # Model and training
    "Parameters",
    "attention_scores",
    "batch_losses",
    "backward",
    "classify_interaction",
    "predict_preference",
    "GridSpec",
    "TrainResult",
    "adam_step",
    "grid_search",
    "train",
    # Evaluation and baselines
    "CandidateMode",
    "EvalProtocol",
    "MetricReport",
    "UserFilter",
    "evaluate",
    "hr_at_k",
    "ndcg_at_k",
    "BprRegime",
    "bpr_score",
    "bpr_train",
    "probe_experiment",
    "run_bpr_regime",
    # Synthetic data
    "GroundTruth",
    "generate",
    "oracle_topk",
    "load_checkpoint",
    "save_checkpoint",
    # Exceptions
    "CcrecError",
    "CcrecDataError",
    "CcrecValidationError",
    "CcrecConfigError",
    "CcrecCheckpointError",
    "CcrecTrainingError",
    "CcrecEvaluationError",
    "CcrecGenerationError",
    "CcrecBatchError",
    "ErrorCode"
]
