"""ccrec.metrics
=============

Top-k ranking evaluation: HR@k and NDCG@k per channel.

For a user with ground-truth items ``GT`` and a ranking ``r``::

    HR@k   = |r[:k] & GT| / min(k, |GT|)
    DCG@k  = sum over positions i <= k with r_i in GT of 1 / log2(i + 1)
    IDCG@k = sum over i <= min(k, |GT|) of 1 / log2(i + 1)
    NDCG@k = DCG@k / IDCG@k

Candidates are every item, minus the user's train purchases in the
target channel unless the protocol ranks against purchased items too.
Equal scores are broken by ascending item index.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from .batch import DeferredCall, OrderedBatch
from .dataset import CHANNELS, ChannelLabel, DatasetBundle
from .exceptions import CcrecEvaluationError, CcrecValidationError

logger = logging.getLogger(__name__)

# scorer(user, items, channel) -> one score per item
Scorer = Callable[[int, np.ndarray, ChannelLabel], np.ndarray]


class CandidateMode(Enum):
    WITHOUT_PURCHASED = "without_purchased"
    WITH_PURCHASED = "with_purchased"


class UserFilter(Enum):
    ALL = "all"
    OVERLAPPING_ONLY = "overlapping_only"


@dataclass(frozen=True)
class EvalProtocol:
    """Which depths, which candidates and which channel to evaluate."""
    k_values: Tuple[int, ...] = (5, 10)
    candidate_mode: CandidateMode = CandidateMode.WITHOUT_PURCHASED
    channel: ChannelLabel = ChannelLabel.OFF

    def __post_init__(self):
        k_values = tuple(int(k) for k in self.k_values)
        if not k_values or any(k < 1 for k in k_values):
            raise CcrecValidationError(
                "k_values must be a non-empty list of integers >= 1",
                field_errors={"k_values": str(list(self.k_values))},
            )
        if list(k_values) != sorted(k_values):
            raise CcrecValidationError(
                "k_values must be sorted ascending",
                field_errors={"k_values": str(list(k_values))},
            )
        object.__setattr__(self, "k_values", k_values)

    @property
    def max_k(self) -> int:
        return self.k_values[-1]


@dataclass(frozen=True)
class MetricRow:
    """HR/NDCG of one (channel, k); ``*_std`` are set on multi-seed aggregates."""
    channel: ChannelLabel
    k: int
    hr: float
    ndcg: float
    n_users: int
    hr_std: float = 0.0
    ndcg_std: float = 0.0

    def to_dict(self, protocol: str, seeds: Sequence[int]) -> Dict[str, object]:
        return {
            "channel": self.channel.value,
            "k": self.k,
            "hr": self.hr,
            "ndcg": self.ndcg,
            "n_users": self.n_users,
            "protocol": protocol,
            "seeds": list(seeds),
            "mean": {"hr": self.hr, "ndcg": self.ndcg},
            "std": {"hr": self.hr_std, "ndcg": self.ndcg_std},
        }


@dataclass
class MetricReport:
    """
    A set of metric rows sharing one candidate protocol.

    Attributes:
        rows: One row per (channel, k), channel-major
        candidate_mode: Candidate filtering used
        user_filter: Which users were evaluated
        split: "val" or "test"
        seeds: Seeds the rows average over
    """
    rows: List[MetricRow]
    candidate_mode: CandidateMode = CandidateMode.WITHOUT_PURCHASED
    user_filter: UserFilter = UserFilter.ALL
    split: str = "test"
    seeds: List[int] = field(default_factory=list)

    def get(self, channel: ChannelLabel, k: int) -> MetricRow:
        for row in self.rows:
            if row.channel is channel and row.k == k:
                return row
        raise KeyError(f"No row for channel={channel.value}, k={k}")

    def channels(self) -> List[ChannelLabel]:
        return [c for c in CHANNELS if any(r.channel is c for r in self.rows)]

    def merged(self, other: "MetricReport") -> "MetricReport":
        """Rows of both reports, ordered by channel then k."""
        rows = sorted(self.rows + other.rows, key=lambda r: (r.channel.index, r.k))
        return MetricReport(rows, self.candidate_mode, self.user_filter, self.split, list(self.seeds))

    def to_dict(self) -> Dict[str, object]:
        protocol = self.candidate_mode.value
        return {
            "protocol": protocol,
            "user_filter": self.user_filter.value,
            "split": self.split,
            "seeds": list(self.seeds),
            "rows": [row.to_dict(protocol, self.seeds) for row in self.rows],
        }


def top_k(scores: np.ndarray, items: np.ndarray, k: int) -> np.ndarray:
    """
    The ``k`` best items by score, ties to the lower item index.

    Uses a partial selection for the threshold score, then sorts only the
    items at or above it. Equivalent to the prefix of a full sort.
    """
    scores = np.asarray(scores, dtype=np.float64)
    items = np.asarray(items, dtype=np.int64)
    if scores.shape != items.shape:
        raise CcrecValidationError(f"scores {scores.shape} and items {items.shape} differ in shape")
    if not np.all(np.isfinite(scores)):
        raise CcrecEvaluationError("Scorer returned non-finite scores")
    n = items.size
    if k >= n:
        return items[np.lexsort((items, -scores))]
    threshold = -np.partition(-scores, k - 1)[k - 1]
    keep = scores >= threshold
    kept_scores, kept_items = scores[keep], items[keep]
    return kept_items[np.lexsort((kept_items, -kept_scores))][:k]


def candidates(bundle: DatasetBundle, user: int, protocol: EvalProtocol) -> np.ndarray:
    all_items = np.arange(bundle.n_items, dtype=np.int64)
    if protocol.candidate_mode is CandidateMode.WITH_PURCHASED:
        return all_items
    purchased = bundle.train_items(user, protocol.channel)
    if not purchased:
        return all_items
    mask = np.ones(bundle.n_items, dtype=bool)
    mask[np.fromiter(purchased, dtype=np.int64, count=len(purchased))] = False
    return all_items[mask]


def rank_items(scorer: Scorer, user: int, protocol: EvalProtocol, bundle: DatasetBundle) -> List[int]:
    """
    Top ``max(k_values)`` candidates for ``user`` in the protocol's channel.

    Raises:
        CcrecEvaluationError: If no candidate is left after filtering
    """
    pool = candidates(bundle, user, protocol)
    if pool.size == 0:
        raise CcrecEvaluationError(
            f"Empty candidate set for user {user} in channel {protocol.channel.value}",
            operation="rank_items",
        )
    scores = scorer(user, pool, protocol.channel)
    return top_k(scores, pool, protocol.max_k).tolist()


def _check(ground_truth: FrozenSet[int], k: int) -> None:
    if k < 1:
        raise CcrecValidationError(f"k must be >= 1, got {k}", field_errors={"k": str(k)})
    if not ground_truth:
        raise CcrecEvaluationError("Ground truth must not be empty")


def hr_at_k(ranked: Sequence[int], ground_truth: FrozenSet[int], k: int) -> float:
    _check(ground_truth, k)
    hits = sum(1 for item in ranked[:k] if item in ground_truth)
    return hits / min(k, len(ground_truth))


def _discount(position: int) -> float:
    return 1.0 / math.log2(position + 1)


def ndcg_at_k(ranked: Sequence[int], ground_truth: FrozenSet[int], k: int) -> float:
    _check(ground_truth, k)
    dcg = sum(_discount(i) for i, item in enumerate(ranked[:k], start=1) if item in ground_truth)
    idcg = sum(_discount(i) for i in range(1, min(k, len(ground_truth)) + 1))
    return dcg / idcg


def evaluation_users(
    bundle: DatasetBundle,
    channel: ChannelLabel,
    user_filter: UserFilter = UserFilter.ALL,
    split: str = "test",
) -> List[int]:
    """Users with non-empty ground truth in ``channel``, ascending."""
    users = sorted(bundle.ground_truth(split, channel))
    if user_filter is UserFilter.OVERLAPPING_ONLY:
        users = [u for u in users if u in bundle.overlapping_users]
    return users


def evaluate(
    scorer: Scorer,
    bundle: DatasetBundle,
    protocol: EvalProtocol,
    user_filter: UserFilter = UserFilter.ALL,
    split: str = "test",
    threads: int = 1,
) -> MetricReport:
    """
    Average HR@k and NDCG@k uniformly over the evaluable users.

    With ``threads > 1`` users are ranked on a worker pool; per-user
    results are reduced in ascending user order either way, so the report
    does not depend on the thread count.

    Raises:
        CcrecEvaluationError: If no user has ground truth under the filter
    """
    channel = protocol.channel
    users = evaluation_users(bundle, channel, user_filter, split)
    if not users:
        raise CcrecEvaluationError(
            f"No evaluable users for channel {channel.value} ({user_filter.value}, {split})",
            operation="evaluate",
            suggestions=["Check that the split has ground truth for this channel"],
        )
    ground_truth = bundle.ground_truth(split, channel)

    def score_user(user: int) -> Tuple[List[float], List[float]]:
        ranked = rank_items(scorer, user, protocol, bundle)
        gt = ground_truth[user]
        return (
            [hr_at_k(ranked, gt, k) for k in protocol.k_values],
            [ndcg_at_k(ranked, gt, k) for k in protocol.k_values],
        )

    batch = OrderedBatch(
        *(DeferredCall(score_user, u) for u in users),
        max_workers=threads,
        return_exceptions=True,
    )
    results = batch.execute()
    for result in results:
        if isinstance(result, Exception):
            raise result
    logger.debug(
        f"Ranked {len(users)} users for {channel.value}/{split} in {batch.stats.wall_time:.3f}s "
        f"({batch.stats.workers} workers)"
    )

    hr = np.array([r[0] for r in results])
    ndcg = np.array([r[1] for r in results])
    rows = [
        MetricRow(
            channel=channel,
            k=k,
            hr=float(hr[:, i].mean()),
            ndcg=float(ndcg[:, i].mean()),
            n_users=len(users),
        )
        for i, k in enumerate(protocol.k_values)
    ]
    return MetricReport(rows, protocol.candidate_mode, user_filter, split)


def evaluate_channels(
    scorer: Scorer,
    bundle: DatasetBundle,
    k_values: Sequence[int] = (5, 10),
    candidate_mode: CandidateMode = CandidateMode.WITHOUT_PURCHASED,
    user_filter: UserFilter = UserFilter.ALL,
    split: str = "test",
    threads: int = 1,
    channels: Sequence[ChannelLabel] = CHANNELS,
) -> MetricReport:
    """:func:`evaluate` for each channel, merged into one report."""
    report: Optional[MetricReport] = None
    for channel in channels:
        protocol = EvalProtocol(tuple(k_values), candidate_mode, channel)
        single = evaluate(scorer, bundle, protocol, user_filter, split, threads)
        report = single if report is None else report.merged(single)
    if report is None:
        raise CcrecEvaluationError("No channel to evaluate")
    return report


def aggregate_reports(reports: Sequence[MetricReport], seeds: Sequence[int]) -> MetricReport:
    """
    Mean and population standard deviation of every row across reports.

    All reports must contain the same (channel, k) rows.
    """
    if not reports:
        raise CcrecEvaluationError("Nothing to aggregate")
    keys = [(row.channel, row.k) for row in reports[0].rows]
    for report in reports[1:]:
        if [(row.channel, row.k) for row in report.rows] != keys:
            raise CcrecEvaluationError("Reports disagree on their (channel, k) rows")

    rows = []
    for channel, k in keys:
        matched = [report.get(channel, k) for report in reports]
        hr = np.array([r.hr for r in matched])
        ndcg = np.array([r.ndcg for r in matched])
        rows.append(MetricRow(
            channel=channel,
            k=k,
            hr=float(hr.mean()),
            ndcg=float(ndcg.mean()),
            n_users=int(round(np.mean([r.n_users for r in matched]))),
            hr_std=float(hr.std()),
            ndcg_std=float(ndcg.std()),
        ))
    first = reports[0]
    return MetricReport(rows, first.candidate_mode, first.user_filter, first.split, [int(s) for s in seeds])
