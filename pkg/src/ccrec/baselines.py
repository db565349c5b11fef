"""ccrec.baselines
===============

BPR matrix factorisation as a single-channel baseline, trained under three
regimes:

* ``self_match``: one model per channel, each evaluated on its own channel
* ``cross_match``: one model per channel, each evaluated on the other channel
* ``integration``: one model on the merged train data of both channels

:func:`probe_experiment` restricts the first two regimes to users active in
both channels.
"""

import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, Optional, Sequence

import numpy as np

from .config import BprConfig
from .dataset import CHANNELS, ChannelLabel, DatasetBundle, InteractionStore, user_positive_pairs
from .exceptions import CcrecEvaluationError, CcrecValidationError
from .metrics import CandidateMode, MetricReport, UserFilter, evaluate_channels
from .model import sigmoid
from .utils import make_rng, validate_index

logger = logging.getLogger(__name__)

INIT_STD = 0.1
MAX_RESAMPLE_ROUNDS = 1000


class BprRegime(Enum):
    SELF_MATCH = "self_match"
    CROSS_MATCH = "cross_match"
    INTEGRATION = "integration"


@dataclass
class BprParams:
    """User factors ``P`` (``U x d``) and item factors ``Q`` (``V x d``)."""
    P: np.ndarray
    Q: np.ndarray

    @property
    def d(self) -> int:
        return int(self.P.shape[1])

    @classmethod
    def zeros(cls, n_users: int, n_items: int, d: int) -> "BprParams":
        return cls(np.zeros((n_users, d)), np.zeros((n_items, d)))


def bpr_score(params: BprParams, user: int, item: int) -> float:
    user = validate_index(user, params.P.shape[0], "user")
    item = validate_index(item, params.Q.shape[0], "item")
    return float(params.P[user] @ params.Q[item])


def bpr_triple_loss(params: BprParams, users: np.ndarray, pos: np.ndarray, neg: np.ndarray) -> np.ndarray:
    """``-ln sigmoid(x_ui - x_uj)`` per triple, without regularisation."""
    delta = np.sum(params.P[users] * (params.Q[pos] - params.Q[neg]), axis=1)
    return -np.log(sigmoid(delta))


def _sample_negatives(
    rng: np.random.Generator,
    users: np.ndarray,
    n_items: int,
    positive_codes: np.ndarray,
) -> np.ndarray:
    """One uniformly drawn non-positive item per user, by rejection."""
    neg = rng.integers(0, n_items, size=users.size)
    for _ in range(MAX_RESAMPLE_ROUNDS):
        codes = users * n_items + neg
        pos = np.searchsorted(positive_codes, codes)
        clash = (pos < positive_codes.size) & (positive_codes[np.minimum(pos, positive_codes.size - 1)] == codes)
        if not clash.any():
            return neg
        neg[clash] = rng.integers(0, n_items, size=int(clash.sum()))
    raise CcrecValidationError("Negative sampling did not converge; some users bought almost every item")


def bpr_train(
    pairs: np.ndarray,
    n_users: int,
    n_items: int,
    d: int = 64,
    epochs: int = 50,
    lr: float = 0.01,
    reg: float = 1e-4,
    seed: int = 0,
    batch_size: int = 64,
    init: Optional[BprParams] = None,
) -> BprParams:
    """
    Fit BPR by mini-batch SGD on ``(user, positive, negative)`` triples.

    Every epoch visits each positive pair once in shuffled order with a
    freshly drawn uniform negative. Updates descend the summed
    ``-ln sigmoid(x_ui - x_uj) + reg/2 (|p_u|^2 + |q_i|^2 + |q_j|^2)`` of the
    batch.

    Raises:
        CcrecValidationError: No pairs, or ids out of range
    """
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if pairs.shape[0] == 0:
        raise CcrecValidationError("bpr_train needs at least one positive pair")
    if pairs[:, 0].max() >= n_users or pairs[:, 1].max() >= n_items or pairs.min() < 0:
        raise CcrecValidationError("bpr_train pair ids out of range")

    rng = make_rng(seed, 4)
    if init is None:
        params = BprParams(rng.normal(0.0, INIT_STD, (n_users, d)), rng.normal(0.0, INIT_STD, (n_items, d)))
    else:
        params = BprParams(init.P.copy(), init.Q.copy())

    codes = np.unique(pairs[:, 0] * n_items + pairs[:, 1])
    per_user = np.bincount(codes // n_items, minlength=n_users)
    saturated = per_user >= n_items
    if saturated.any():
        logger.warning(f"Dropping pairs of {int(saturated.sum())} user(s) who bought every item")
        pairs = pairs[~saturated[pairs[:, 0]]]
        if pairs.shape[0] == 0:
            raise CcrecValidationError("Every user bought every item; BPR has nothing to rank")

    P, Q = params.P, params.Q
    for epoch in range(1, epochs + 1):
        order = rng.permutation(pairs.shape[0])
        users_all = pairs[order, 0]
        pos_all = pairs[order, 1]
        neg_all = _sample_negatives(rng, users_all, n_items, codes)
        loss = 0.0
        for start in range(0, users_all.size, batch_size):
            u = users_all[start:start + batch_size]
            i = pos_all[start:start + batch_size]
            j = neg_all[start:start + batch_size]
            pu, qi, qj = P[u], Q[i], Q[j]
            delta = np.sum(pu * (qi - qj), axis=1)
            s = sigmoid(delta)
            loss += float(-np.sum(np.log(np.maximum(s, 1e-12))))
            g = (s - 1.0)[:, None]
            np.add.at(P, u, -lr * (g * (qi - qj) + reg * pu))
            np.add.at(Q, i, -lr * (g * pu + reg * qi))
            np.add.at(Q, j, -lr * (-g * pu + reg * qj))
        logger.debug(f"bpr epoch {epoch}: mean loss {loss / users_all.size:.5f}")

    if not (np.all(np.isfinite(P)) and np.all(np.isfinite(Q))):
        raise CcrecValidationError("BPR diverged to non-finite factors; lower the learning rate")
    return params


class BprScorer:
    """
    Scores for the ranking protocol.

    ``models`` maps a channel to the factors used when ranking for it.
    """

    def __init__(self, models: Dict[ChannelLabel, BprParams]):
        self.models = models

    def __call__(self, user: int, items: np.ndarray, channel: ChannelLabel) -> np.ndarray:
        params = self.models[channel]
        return params.Q[np.asarray(items, dtype=np.int64)] @ params.P[user]


def train_channel_models(
    bundle: DatasetBundle,
    config: BprConfig,
    seed: int,
    channels: Sequence[ChannelLabel] = CHANNELS,
) -> Dict[ChannelLabel, BprParams]:
    """One BPR per channel, each on that channel's train positives of all users."""
    models = {}
    for channel in channels:
        pairs = user_positive_pairs(bundle, channel)
        if pairs.shape[0] == 0:
            logger.warning(f"No {channel.value} train positives; skipping that channel's BPR")
            continue
        models[channel] = bpr_train(
            pairs, bundle.n_users, bundle.n_items,
            d=config.d, epochs=config.epochs, lr=config.learning_rate,
            reg=config.reg, seed=seed, batch_size=config.batch_size,
        )
    return models


def train_integration_model(bundle: DatasetBundle, config: BprConfig, seed: int) -> BprParams:
    """A single BPR on the union of both channels' train positives."""
    return bpr_train(
        user_positive_pairs(bundle), bundle.n_users, bundle.n_items,
        d=config.d, epochs=config.epochs, lr=config.learning_rate,
        reg=config.reg, seed=seed, batch_size=config.batch_size,
    )


def regime_scorer(regime: BprRegime, models: Dict[ChannelLabel, BprParams]) -> BprScorer:
    """Route each target channel to the model the regime ranks it with."""
    if regime is BprRegime.INTEGRATION:
        (model,) = models.values()
        return BprScorer({c: model for c in CHANNELS})
    routes = {}
    for target in CHANNELS:
        source = target if regime is BprRegime.SELF_MATCH else target.other
        if source in models:
            routes[target] = models[source]
    return BprScorer(routes)


def run_bpr_regime(
    bundle: DatasetBundle,
    regime: BprRegime,
    candidate_mode: CandidateMode = CandidateMode.WITHOUT_PURCHASED,
    user_filter: UserFilter = UserFilter.ALL,
    bpr_cfg: Optional[BprConfig] = None,
    seed: int = 0,
    k_values: Sequence[int] = (5, 10),
    threads: int = 1,
    models: Optional[Dict[ChannelLabel, BprParams]] = None,
) -> MetricReport:
    """
    Train (unless ``models`` are given) and evaluate BPR under ``regime``.

    ``models`` holds per-channel factors for self/cross-match, or a single
    entry for integration; passing them lets several protocols share one
    training run.
    """
    bpr_cfg = bpr_cfg or BprConfig()
    bpr_cfg.validate()
    if models is None:
        if regime is BprRegime.INTEGRATION:
            models = {ChannelLabel.OFF: train_integration_model(bundle, bpr_cfg, seed)}
        else:
            models = train_channel_models(bundle, bpr_cfg, seed)

    scorer = regime_scorer(regime, models)
    targets = [c for c in CHANNELS if c in scorer.models]
    if not targets:
        raise CcrecEvaluationError(f"No trained model to evaluate under {regime.value}")
    report = evaluate_channels(
        scorer, bundle, k_values, candidate_mode, user_filter, "test", threads, channels=targets
    )
    report.seeds = [int(seed)]
    logger.info(
        f"BPR {regime.value} ({candidate_mode.value}, {user_filter.value}): "
        + ", ".join(f"{r.channel.value}@{r.k} ndcg={r.ndcg:.4f}" for r in report.rows)
    )
    return report


def probe_experiment(
    store: InteractionStore,
    bundle: DatasetBundle,
    regime: BprRegime,
    candidate_mode: CandidateMode = CandidateMode.WITHOUT_PURCHASED,
    d: int = 64,
    seed: int = 0,
    bpr_cfg: Optional[BprConfig] = None,
    k_values: Sequence[int] = (5, 10),
    models: Optional[Dict[ChannelLabel, BprParams]] = None,
) -> MetricReport:
    """
    Per-channel BPR evaluated on the overlapping users' test data of the
    same channel (self-match) or of the other channel (cross-match).

    Raises:
        CcrecEvaluationError: The store has no user active in both channels
    """
    if regime is BprRegime.INTEGRATION:
        raise CcrecValidationError(
            "probe_experiment compares self-match with cross-match",
            field_errors={"regime": "expected self_match or cross_match"},
        )
    overlapping = store.overlapping_users
    if not overlapping:
        raise CcrecEvaluationError(
            "No overlapping users: nobody purchased in both channels",
            operation="probe_experiment",
        )
    bpr_cfg = replace(bpr_cfg or BprConfig(), d=d)
    probe_bundle = replace(bundle, overlapping_users=overlapping)
    return run_bpr_regime(
        probe_bundle, regime, candidate_mode, UserFilter.OVERLAPPING_ONLY,
        bpr_cfg, seed, k_values, models=models,
    )
