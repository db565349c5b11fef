"""ccrec.training
==============

Adam optimisation of the cross-channel model with early stopping on
validation NDCG, multi-seed runs and grid search.

Embedding tables are updated lazily: only rows with a non-zero gradient in
the current batch have their Adam moments and values touched. Bias
correction uses the global step count, as sparse Adam implementations do.

Usage example
-------------
>>> result = train(bundle, ModelConfig(d=32), TrainConfig(epochs=30))
>>> result.best_epoch, result.best_score
"""

import itertools
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, MutableMapping, Optional, Sequence, Tuple, Union

import numpy as np

from .config import ModelConfig, TrainConfig
from .dataset import CHANNELS, ChannelLabel, DatasetBundle
from .exceptions import CcrecTrainingError, CcrecValidationError, ErrorCode
from .metrics import (
    CandidateMode,
    EvalProtocol,
    MetricReport,
    UserFilter,
    aggregate_reports,
    evaluate,
    evaluate_channels,
)
from .model import (
    EMBEDDING_NAMES,
    LossBreakdown,
    ModelScorer,
    Parameters,
    backward,
    batch_losses,
    init_parameters,
)
from .persistence import append_jsonl
from .utils import make_rng

logger = logging.getLogger(__name__)

Arrays = Union[Parameters, MutableMapping[str, np.ndarray]]


def _arrays(params: Arrays) -> Dict[str, np.ndarray]:
    return params.as_dict() if isinstance(params, Parameters) else dict(params)


@dataclass
class AdamState:
    """First and second moment estimates, one array per parameter tensor."""
    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]

    @classmethod
    def zeros(cls, params: Arrays) -> "AdamState":
        arrays = _arrays(params)
        return cls(
            m={name: np.zeros_like(a) for name, a in arrays.items()},
            v={name: np.zeros_like(a) for name, a in arrays.items()},
        )


def adam_step(
    params: Arrays,
    grads: Arrays,
    state: AdamState,
    t: int,
    config: TrainConfig,
    sparse: Iterable[str] = EMBEDDING_NAMES,
) -> Tuple[Arrays, AdamState]:
    """
    One Adam update, in place.

    ``m <- b1 m + (1 - b1) g``, ``v <- b2 v + (1 - b2) g^2``,
    ``theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)`` with the usual bias
    correction at step ``t``. Two-dimensional tensors named in ``sparse``
    are updated only on rows whose gradient is non-zero.

    Raises:
        CcrecTrainingError: A gradient holds NaN or inf (names the tensor)
    """
    if t < 1:
        raise CcrecValidationError(f"Adam step index must be >= 1, got {t}", field_errors={"t": str(t)})
    values = _arrays(params)
    gradients = _arrays(grads)

    for name, g in gradients.items():
        if not np.all(np.isfinite(g)):
            bad = int(np.count_nonzero(~np.isfinite(g)))
            raise CcrecTrainingError(
                f"Non-finite gradient in '{name}' at step {t} ({bad} entries)",
                tensor=name,
                operation="adam_step",
            )
        if g.shape != values[name].shape:
            raise CcrecValidationError(f"Gradient shape {g.shape} != parameter shape {values[name].shape} for '{name}'")

    b1, b2 = config.adam_beta1, config.adam_beta2
    correction1 = 1.0 - b1 ** t
    correction2 = 1.0 - b2 ** t
    lr, eps = config.learning_rate, config.adam_eps
    lazy = set(sparse)

    for name, g in gradients.items():
        theta, m, v = values[name], state.m[name], state.v[name]
        if name in lazy and g.ndim == 2:
            rows = np.flatnonzero(np.any(g != 0.0, axis=1))
            if rows.size == 0:
                continue
            g_rows = g[rows]
            m[rows] = b1 * m[rows] + (1.0 - b1) * g_rows
            v[rows] = b2 * v[rows] + (1.0 - b2) * g_rows * g_rows
            theta[rows] -= lr * (m[rows] / correction1) / (np.sqrt(v[rows] / correction2) + eps)
        else:
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            theta -= lr * (m / correction1) / (np.sqrt(v / correction2) + eps)
    return params, state


@dataclass(frozen=True)
class EpochRecord:
    """One line of the training log."""
    epoch: int
    losses: LossBreakdown
    val_ndcg: Dict[str, float]
    selection_score: float

    def to_dict(self) -> Dict[str, object]:
        return {
            "epoch": self.epoch,
            "losses": self.losses.to_dict(),
            "val_ndcg": dict(self.val_ndcg),
            "selection_score": self.selection_score,
        }


@dataclass
class TrainResult:
    """
    Outcome of :func:`train`.

    ``best_params`` are the parameters after ``best_epoch``, the earliest
    epoch reaching the highest validation selection score.
    """
    best_params: Parameters
    best_epoch: int
    best_score: float
    history: List[EpochRecord]
    model_config: ModelConfig
    train_config: TrainConfig

    @property
    def epochs_run(self) -> int:
        return len(self.history)

    def to_dict(self) -> Dict[str, object]:
        return {
            "best_epoch": self.best_epoch,
            "best_score": self.best_score,
            "epochs_run": self.epochs_run,
            "model_config": self.model_config.to_dict(),
            "train_config": self.train_config.to_dict(),
            "history": [record.to_dict() for record in self.history],
        }


def validation_channels(bundle: DatasetBundle) -> List[ChannelLabel]:
    return [c for c in CHANNELS if bundle.ground_truth("val", c)]


def validation_scores(
    params: Parameters,
    model_cfg: ModelConfig,
    bundle: DatasetBundle,
    k: int,
    threads: int = 1,
) -> Dict[ChannelLabel, float]:
    """Validation NDCG@k per channel that has validation users."""
    scorer = ModelScorer(params, model_cfg)
    scores = {}
    for channel in validation_channels(bundle):
        protocol = EvalProtocol((k,), CandidateMode.WITHOUT_PURCHASED, channel)
        report = evaluate(scorer, bundle, protocol, UserFilter.ALL, split="val", threads=threads)
        scores[channel] = report.get(channel, k).ndcg
    return scores


def _mean_losses(sums: Dict[str, float], n: int) -> LossBreakdown:
    return LossBreakdown(**{name: value / n for name, value in sums.items()})


def train(
    bundle: DatasetBundle,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    log_path: Optional[Union[str, Path]] = None,
) -> TrainResult:
    """
    Train with mini-batch Adam and early stopping.

    Each epoch shuffles the train examples with a generator seeded by
    ``train_cfg.seed``, steps through batches, then scores the validation
    split. The selection score is the mean validation NDCG@``eval_k`` over
    the channels that have validation users. Training stops after
    ``patience`` epochs without a strict improvement, or after ``epochs``.

    Raises:
        CcrecTrainingError: Empty train set, no validation users, or a
            non-finite gradient
    """
    model_cfg.validate()
    train_cfg.validate()
    if not bundle.train or not any(e.is_positive for e in bundle.train):
        raise CcrecTrainingError(
            "Train set has no positive examples", operation="train", error_code=ErrorCode.EMPTY_INPUT
        )
    channels = validation_channels(bundle)
    if not channels:
        raise CcrecTrainingError(
            "No validation users in either channel",
            operation="train",
            suggestions=["Give users at least five purchased pairs so the split can hold some out"],
        )
    if len(channels) < 2:
        logger.warning(f"Only {channels[0].value} has validation users; selecting on that channel alone")

    params = init_parameters(bundle.n_users, bundle.n_items, model_cfg, train_cfg.seed)
    examples = bundle.example_batch()
    n = len(examples)
    rng = make_rng(train_cfg.seed, 3)
    state = AdamState.zeros(params)
    step = 0

    best_params = params.copy()
    best_epoch = 0
    best_score = -math.inf
    history: List[EpochRecord] = []

    for epoch in range(1, train_cfg.epochs + 1):
        order = rng.permutation(n)
        sums = {"l_off": 0.0, "l_on": 0.0, "l_cls": 0.0, "l_attn": 0.0, "total": 0.0}
        for start in range(0, n, train_cfg.batch_size):
            batch = examples.take(order[start:start + train_cfg.batch_size])
            losses, cache = batch_losses(batch, params, model_cfg)
            grads = backward(batch, params, model_cfg, cache)
            step += 1
            adam_step(params, grads, state, step, train_cfg)
            for name, value in losses.to_dict().items():
                sums[name] += value * len(batch)

        val = validation_scores(params, model_cfg, bundle, train_cfg.eval_k, train_cfg.threads)
        score = float(np.mean(list(val.values())))
        record = EpochRecord(
            epoch=epoch,
            losses=_mean_losses(sums, n),
            val_ndcg={c.value: s for c, s in val.items()},
            selection_score=score,
        )
        history.append(record)
        if log_path is not None:
            append_jsonl(log_path, record.to_dict())

        if score > best_score:
            best_score, best_epoch = score, epoch
            best_params = params.copy()
        logger.info(
            f"epoch {epoch}: loss={record.losses.total:.5f} "
            f"val_ndcg@{train_cfg.eval_k}={score:.5f} (best {best_score:.5f} @ {best_epoch})"
        )
        if epoch - best_epoch >= train_cfg.patience:
            logger.info(f"Early stopping after epoch {epoch}: no improvement for {train_cfg.patience} epochs")
            break

    return TrainResult(
        best_params=best_params,
        best_epoch=best_epoch,
        best_score=best_score,
        history=history,
        model_config=model_cfg,
        train_config=train_cfg,
    )


def evaluate_result(
    result: TrainResult,
    bundle: DatasetBundle,
    k_values: Sequence[int] = (5, 10),
    candidate_mode: CandidateMode = CandidateMode.WITHOUT_PURCHASED,
    user_filter: UserFilter = UserFilter.ALL,
    threads: int = 1,
) -> MetricReport:
    """Test-split metrics of the best parameters, both channels."""
    scorer = ModelScorer(result.best_params, result.model_config)
    report = evaluate_channels(scorer, bundle, k_values, candidate_mode, user_filter, "test", threads)
    report.seeds = [result.train_config.seed]
    return report


@dataclass
class SeedRunResult:
    """One configuration trained under several seeds."""
    results: List[TrainResult]
    reports: List[MetricReport]
    aggregate: MetricReport

    @property
    def seeds(self) -> List[int]:
        return [r.train_config.seed for r in self.results]


def run_seeds(
    bundle: DatasetBundle,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    seeds: Sequence[int],
    k_values: Sequence[int] = (5, 10),
    candidate_mode: CandidateMode = CandidateMode.WITHOUT_PURCHASED,
) -> SeedRunResult:
    """Train once per seed on the same bundle and aggregate the test reports."""
    if not seeds:
        raise CcrecValidationError("run_seeds needs at least one seed", field_errors={"seeds": "empty"})
    results, reports = [], []
    for seed in seeds:
        result = train(bundle, model_cfg, replace(train_cfg, seed=int(seed)))
        results.append(result)
        reports.append(evaluate_result(result, bundle, k_values, candidate_mode, threads=train_cfg.threads))
    return SeedRunResult(results, reports, aggregate_reports(reports, seeds))


@dataclass(frozen=True)
class GridSpec:
    """Candidate values per tuned hyperparameter; defaults are the full search space."""
    d_prime: Tuple[int, ...] = (64, 128, 256)
    clf_hidden: Tuple[int, ...] = (64, 128)
    learning_rate: Tuple[float, ...] = (1e-4, 5e-4, 1e-3)
    lambda_cls: Tuple[float, ...] = (0.1, 0.3, 0.5)
    lambda_attn: Tuple[float, ...] = (0.01, 0.05, 0.1, 0.3, 0.5)

    def __post_init__(self):
        for name in ("d_prime", "clf_hidden", "learning_rate", "lambda_cls", "lambda_attn"):
            values = tuple(getattr(self, name))
            if not values:
                raise CcrecValidationError(f"Grid axis '{name}' is empty", field_errors={name: "empty"})
            object.__setattr__(self, name, values)

    def __len__(self) -> int:
        return (
            len(self.d_prime) * len(self.clf_hidden) * len(self.learning_rate)
            * len(self.lambda_cls) * len(self.lambda_attn)
        )

    def points(
        self,
        model_cfg: ModelConfig,
        train_cfg: TrainConfig,
    ) -> List[Tuple[ModelConfig, TrainConfig]]:
        """Every combination in row-major order, as concrete configs."""
        combos = itertools.product(
            self.d_prime, self.clf_hidden, self.learning_rate, self.lambda_cls, self.lambda_attn
        )
        return [
            (
                replace(model_cfg, d_prime=int(dp), clf_hidden=int(h), lambda_cls=float(lc), lambda_attn=float(la)),
                replace(train_cfg, learning_rate=float(lr)),
            )
            for dp, h, lr, lc, la in combos
        ]

    def to_dict(self) -> Dict[str, List[float]]:
        return {
            "d_prime": list(self.d_prime),
            "clf_hidden": list(self.clf_hidden),
            "learning_rate": list(self.learning_rate),
            "lambda_cls": list(self.lambda_cls),
            "lambda_attn": list(self.lambda_attn),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Sequence[float]]) -> "GridSpec":
        default = cls()
        return cls(**{
            name: tuple(data.get(name, getattr(default, name)))
            for name in ("d_prime", "clf_hidden", "learning_rate", "lambda_cls", "lambda_attn")
        })


DEFAULT_GRID = GridSpec()


@dataclass(frozen=True)
class GridPoint:
    model_config: ModelConfig
    train_config: TrainConfig
    val_score: float
    best_epoch: int

    def to_dict(self) -> Dict[str, object]:
        return {
            "d_prime": self.model_config.d_prime,
            "clf_hidden": self.model_config.clf_hidden,
            "learning_rate": self.train_config.learning_rate,
            "lambda_cls": self.model_config.lambda_cls,
            "lambda_attn": self.model_config.lambda_attn,
            "val_score": self.val_score,
            "best_epoch": self.best_epoch,
        }


@dataclass
class GridSearchResult:
    best_model: ModelConfig
    best_train: TrainConfig
    table: List[GridPoint]
    final: Optional[SeedRunResult] = None

    def to_dict(self) -> Dict[str, object]:
        data: Dict[str, object] = {
            "best_model": self.best_model.to_dict(),
            "best_train": self.best_train.to_dict(),
            "table": [point.to_dict() for point in self.table],
        }
        if self.final is not None:
            data["final"] = self.final.aggregate.to_dict()
        return data


def grid_search(
    bundle: DatasetBundle,
    grid: GridSpec,
    train_cfg: TrainConfig,
    seeds: Sequence[int],
    model_cfg: Optional[ModelConfig] = None,
    k_values: Sequence[int] = (5, 10),
    report_all_seeds: bool = True,
) -> GridSearchResult:
    """
    Search ``grid`` with the first seed, then re-run the winner on all seeds.

    The winner is the point with the highest best validation score; the
    first such point in grid order wins ties.
    """
    if not seeds:
        raise CcrecValidationError("grid_search needs at least one seed", field_errors={"seeds": "empty"})
    base_model = model_cfg or ModelConfig()
    search_cfg = replace(train_cfg, seed=int(seeds[0]))
    points = grid.points(base_model, search_cfg)
    logger.info(f"Grid search over {len(points)} points with seed {seeds[0]}")

    table: List[GridPoint] = []
    best: Optional[GridPoint] = None
    for i, (m_cfg, t_cfg) in enumerate(points, start=1):
        result = train(bundle, m_cfg, t_cfg)
        point = GridPoint(m_cfg, t_cfg, result.best_score, result.best_epoch)
        table.append(point)
        logger.info(f"grid point {i}/{len(points)}: {point.to_dict()}")
        if best is None or point.val_score > best.val_score:
            best = point

    outcome = GridSearchResult(best.model_config, best.train_config, table)
    if report_all_seeds:
        outcome.final = run_seeds(bundle, best.model_config, best.train_config, seeds, k_values)
    return outcome
