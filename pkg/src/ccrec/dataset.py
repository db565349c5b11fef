"""ccrec.dataset
=============

Ingestion of channel-labelled purchase logs and construction of the
train / validation / test split.

A purchase log is a set of ``(user, item, channel)`` triples. Every
``(user, item)`` pair that was bought at all falls in exactly one of three
partitions: offline only, online only, or both channels. The split works
on pairs, cutting every user's pairs 6:2:2; pairs bought in both channels
that land in validation or test are handed alternately to the offline and
online ground truth.

Usage example
-------------
>>> store = load_interactions("interactions.csv")
>>> bundle = split(store, seed=0)
>>> bundle = sample_negatives(bundle, store, per_positive=10, seed=0)
>>> write_split(bundle, "out/split")
"""
from __future__ import annotations

import json
import logging
import re
from collections import defaultdict
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .exceptions import CcrecDataError, CcrecValidationError, ErrorCode
from .utils import make_rng

logger = logging.getLogger(__name__)

INPUT_COLUMNS = ["user_id", "item_id", "channel"]
TRAIN_COLUMNS = ["user_id", "item_id", "label_off", "label_on", "specificity", "is_positive"]
GT_COLUMNS = ["user_id", "item_id"]
SPLIT_META = "split.json"
SPLITS = ("val", "test")


class ChannelLabel(Enum):
    """Sales channel of an interaction. Iteration order is off, on."""
    OFF = "off"
    ON = "on"

    @property
    def index(self) -> int:
        return 0 if self is ChannelLabel.OFF else 1

    @property
    def other(self) -> "ChannelLabel":
        return ChannelLabel.ON if self is ChannelLabel.OFF else ChannelLabel.OFF

    @classmethod
    def parse(cls, token: str) -> "ChannelLabel":
        try:
            return cls(str(token).strip().lower())
        except ValueError:
            raise CcrecValidationError(
                f"Unknown channel token {token!r}",
                field_errors={"channel": f"expected 'off' or 'on', got {token!r}"},
            )


CHANNELS: Tuple[ChannelLabel, ChannelLabel] = (ChannelLabel.OFF, ChannelLabel.ON)


class PairPartition(Enum):
    """Which channels a purchased (user, item) pair occurred in."""
    OFF_ONLY = "off_only"
    ON_ONLY = "on_only"
    BOTH = "both"

    @classmethod
    def of(cls, channels: Iterable[ChannelLabel]) -> "PairPartition":
        seen = set(channels)
        if len(seen) == 2:
            return cls.BOTH
        return cls.OFF_ONLY if ChannelLabel.OFF in seen else cls.ON_ONLY

    @property
    def channels(self) -> Tuple[ChannelLabel, ...]:
        if self is PairPartition.BOTH:
            return CHANNELS
        return (ChannelLabel.OFF,) if self is PairPartition.OFF_ONLY else (ChannelLabel.ON,)


@dataclass(frozen=True)
class Interaction:
    """One purchase: dense user index, dense item index, channel."""
    user: int
    item: int
    channel: ChannelLabel

    def sort_key(self) -> Tuple[int, int, int]:
        return (self.user, self.item, self.channel.index)


@dataclass(frozen=True)
class Vocab:
    """Raw string ids in dense-index order."""
    user_ids: Tuple[str, ...]
    item_ids: Tuple[str, ...]

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    def user_index(self) -> Dict[str, int]:
        return {raw: i for i, raw in enumerate(self.user_ids)}

    def item_index(self) -> Dict[str, int]:
        return {raw: i for i, raw in enumerate(self.item_ids)}

    def to_dict(self) -> Dict[str, List[str]]:
        return {"users": list(self.user_ids), "items": list(self.item_ids)}

    @classmethod
    def from_dict(cls, data: Mapping[str, Sequence[str]]) -> "Vocab":
        return cls(tuple(str(u) for u in data["users"]), tuple(str(i) for i in data["items"]))


@dataclass(frozen=True, eq=False)
class InteractionStore:
    """
    Deduplicated purchase log with its partition bookkeeping.

    Attributes:
        interactions: Unique triples sorted by (user, item, channel)
        vocab: Raw-id vocabularies
        users_off / users_on: Users with at least one purchase in the channel
        items_off / items_on: Items sold at least once in the channel
        pair_partition: (user, item) -> PairPartition
    """
    interactions: Tuple[Interaction, ...]
    vocab: Vocab
    users_off: FrozenSet[int]
    users_on: FrozenSet[int]
    items_off: FrozenSet[int]
    items_on: FrozenSet[int]
    pair_partition: Dict[Tuple[int, int], PairPartition]

    @classmethod
    def from_triples(
        cls,
        triples: Iterable[Tuple[int, int, ChannelLabel]],
        vocab: Vocab,
    ) -> "InteractionStore":
        """Build a store from (user, item, channel) triples; duplicates collapse."""
        unique = {(int(u), int(v), c) for u, v, c in triples}
        interactions = tuple(sorted((Interaction(u, v, c) for u, v, c in unique), key=Interaction.sort_key))

        users: Dict[ChannelLabel, set] = {c: set() for c in CHANNELS}
        items: Dict[ChannelLabel, set] = {c: set() for c in CHANNELS}
        pair_channels: Dict[Tuple[int, int], List[ChannelLabel]] = {}
        for it in interactions:
            if not (0 <= it.user < vocab.n_users and 0 <= it.item < vocab.n_items):
                raise CcrecValidationError(
                    f"Interaction {it} outside vocabulary ({vocab.n_users} users, {vocab.n_items} items)"
                )
            users[it.channel].add(it.user)
            items[it.channel].add(it.item)
            pair_channels.setdefault((it.user, it.item), []).append(it.channel)

        return cls(
            interactions=interactions,
            vocab=vocab,
            users_off=frozenset(users[ChannelLabel.OFF]),
            users_on=frozenset(users[ChannelLabel.ON]),
            items_off=frozenset(items[ChannelLabel.OFF]),
            items_on=frozenset(items[ChannelLabel.ON]),
            pair_partition={pair: PairPartition.of(chs) for pair, chs in pair_channels.items()},
        )

    @property
    def n_users(self) -> int:
        return self.vocab.n_users

    @property
    def n_items(self) -> int:
        return self.vocab.n_items

    def __len__(self) -> int:
        return len(self.interactions)

    def users(self, channel: ChannelLabel) -> FrozenSet[int]:
        return self.users_off if channel is ChannelLabel.OFF else self.users_on

    def items(self, channel: ChannelLabel) -> FrozenSet[int]:
        return self.items_off if channel is ChannelLabel.OFF else self.items_on

    @property
    def overlapping_users(self) -> FrozenSet[int]:
        return self.users_off & self.users_on

    def contains(self, user: int, item: int, channel: ChannelLabel) -> bool:
        partition = self.pair_partition.get((user, item))
        return partition is not None and channel in partition.channels

    def pairs_by_user(self) -> Dict[int, List[Tuple[int, PairPartition]]]:
        """user -> [(item, partition)] with items ascending."""
        grouped: Dict[int, List[Tuple[int, PairPartition]]] = defaultdict(list)
        for (user, item) in sorted(self.pair_partition):
            grouped[user].append((item, self.pair_partition[(user, item)]))
        return dict(grouped)

    def purchased_items(self) -> Dict[int, np.ndarray]:
        """user -> sorted items bought in either channel."""
        return {
            user: np.array([item for item, _ in pairs], dtype=np.int64)
            for user, pairs in self.pairs_by_user().items()
        }

    def partition_counts(self) -> Dict[PairPartition, int]:
        counts = {p: 0 for p in PairPartition}
        for partition in self.pair_partition.values():
            counts[partition] += 1
        return counts


@dataclass(frozen=True)
class TrainingExample:
    """
    One supervised row.

    ``specificity`` is 1 for a pair bought in exactly one channel, 0 for a
    pair bought in both; it is only meaningful for positives.
    """
    user: int
    item: int
    label_off: int
    label_on: int
    specificity: int
    is_positive: bool

    def __post_init__(self):
        if self.is_positive:
            n_labels = self.label_off + self.label_on
            if n_labels < 1:
                raise CcrecValidationError("A positive example needs at least one channel label")
            if self.specificity != (1 if n_labels == 1 else 0):
                raise CcrecValidationError(
                    "specificity must be 1 for single-channel positives and 0 for both-channel positives"
                )
        elif self.label_off or self.label_on:
            raise CcrecValidationError("A negative example must carry labels (0, 0)")

    @classmethod
    def positive(cls, user: int, item: int, partition: PairPartition) -> "TrainingExample":
        channels = partition.channels
        return cls(
            user=user,
            item=item,
            label_off=int(ChannelLabel.OFF in channels),
            label_on=int(ChannelLabel.ON in channels),
            specificity=int(partition is not PairPartition.BOTH),
            is_positive=True,
        )

    @classmethod
    def negative(cls, user: int, item: int) -> "TrainingExample":
        return cls(user=user, item=item, label_off=0, label_on=0, specificity=0, is_positive=False)

    def label(self, channel: ChannelLabel) -> int:
        return self.label_off if channel is ChannelLabel.OFF else self.label_on


@dataclass(frozen=True, eq=False)
class ExampleBatch:
    """Column view of a sequence of :class:`TrainingExample`."""
    users: np.ndarray
    items: np.ndarray
    label_off: np.ndarray
    label_on: np.ndarray
    specificity: np.ndarray
    is_positive: np.ndarray

    @classmethod
    def from_examples(cls, examples: Sequence[TrainingExample]) -> "ExampleBatch":
        n = len(examples)
        return cls(
            users=np.fromiter((e.user for e in examples), dtype=np.int64, count=n),
            items=np.fromiter((e.item for e in examples), dtype=np.int64, count=n),
            label_off=np.fromiter((e.label_off for e in examples), dtype=np.float64, count=n),
            label_on=np.fromiter((e.label_on for e in examples), dtype=np.float64, count=n),
            specificity=np.fromiter((e.specificity for e in examples), dtype=np.float64, count=n),
            is_positive=np.fromiter((e.is_positive for e in examples), dtype=bool, count=n),
        )

    def __len__(self) -> int:
        return int(self.users.shape[0])

    def take(self, index: np.ndarray) -> "ExampleBatch":
        return ExampleBatch(
            users=self.users[index],
            items=self.items[index],
            label_off=self.label_off[index],
            label_on=self.label_on[index],
            specificity=self.specificity[index],
            is_positive=self.is_positive[index],
        )

    def labels(self, channel: ChannelLabel) -> np.ndarray:
        return self.label_off if channel is ChannelLabel.OFF else self.label_on


GroundTruth = Dict[int, FrozenSet[int]]


@dataclass(frozen=True, eq=False)
class DatasetBundle:
    """
    Everything training and evaluation need from a split.

    Attributes:
        train: Positives (and, after negative sampling, negatives)
        val_off / val_on / test_off / test_on: user -> ground-truth items
        train_items_per_user_channel: (user, channel) -> items bought in train
        vocab: Raw-id vocabularies of the full store
        overlapping_users: Users active in both channels of the full store
    """
    train: Tuple[TrainingExample, ...]
    val_off: GroundTruth
    val_on: GroundTruth
    test_off: GroundTruth
    test_on: GroundTruth
    train_items_per_user_channel: Dict[Tuple[int, ChannelLabel], FrozenSet[int]]
    vocab: Vocab
    overlapping_users: FrozenSet[int] = field(default_factory=frozenset)

    @property
    def n_users(self) -> int:
        return self.vocab.n_users

    @property
    def n_items(self) -> int:
        return self.vocab.n_items

    def ground_truth(self, split_name: str, channel: ChannelLabel) -> GroundTruth:
        if split_name == "val":
            return self.val_off if channel is ChannelLabel.OFF else self.val_on
        if split_name == "test":
            return self.test_off if channel is ChannelLabel.OFF else self.test_on
        raise CcrecValidationError(
            f"Unknown split {split_name!r}",
            field_errors={"split": "expected 'val' or 'test'"},
        )

    def train_items(self, user: int, channel: ChannelLabel) -> FrozenSet[int]:
        return self.train_items_per_user_channel.get((user, channel), frozenset())

    def positives(self) -> List[TrainingExample]:
        return [e for e in self.train if e.is_positive]

    def example_batch(self) -> ExampleBatch:
        return ExampleBatch.from_examples(self.train)

    def has_validation(self) -> bool:
        return bool(self.val_off) or bool(self.val_on)


@dataclass(frozen=True)
class ChannelStats:
    users: int
    items: int
    interactions: int
    sparsity: float


@dataclass(frozen=True)
class StatsReport:
    """Per-channel dataset statistics plus cross-channel overlaps."""
    channels: Dict[ChannelLabel, ChannelStats]
    user_overlap: int
    item_overlap: int

    def to_dict(self) -> Dict[str, object]:
        return {
            "channels": {
                c.value: {
                    "users": s.users,
                    "items": s.items,
                    "interactions": s.interactions,
                    "sparsity": s.sparsity,
                }
                for c, s in self.channels.items()
            },
            "user_overlap": self.user_overlap,
            "item_overlap": self.item_overlap,
        }


# ---------------------------------------------------------------------------
# ingestion
# ---------------------------------------------------------------------------

_LINE_RE = re.compile(r"line (\d+)")


def load_interactions(path: Union[str, Path], delimiter: str = ",") -> InteractionStore:
    """
    Read a ``user_id,item_id,channel`` CSV into a deduplicated store.

    Dense indices follow first appearance in the file. Blank lines are
    skipped.

    Raises:
        CcrecDataError: Missing file, wrong header or malformed row (with line number)
        CcrecValidationError: Unknown channel token
    """
    path = Path(path)
    if not path.exists():
        raise CcrecDataError(f"Interaction file not found: {path}", path=str(path))

    try:
        frame = pd.read_csv(
            path,
            sep=delimiter,
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=False,
            encoding="utf-8",
        )
    except pd.errors.EmptyDataError:
        raise CcrecDataError(
            f"Interaction file is empty: {path}",
            path=str(path),
            line_number=1,
            error_code=ErrorCode.EMPTY_INPUT,
        )
    except UnicodeDecodeError as e:
        raise CcrecDataError(
            f"{path} is not valid UTF-8 (byte {e.start}): {e.reason}",
            path=str(path),
            suggestions=["Re-export the file as UTF-8"],
        )
    except pd.errors.ParserError as e:
        match = _LINE_RE.search(str(e))
        raise CcrecDataError(
            f"Malformed row in {path}: {e}",
            line_number=int(match.group(1)) if match else None,
            path=str(path),
        )

    header = [str(c).strip() for c in frame.columns]
    if header != INPUT_COLUMNS:
        raise CcrecDataError(
            f"Unexpected header {header}; expected {INPUT_COLUMNS}",
            line_number=1,
            path=str(path),
        )
    frame.columns = INPUT_COLUMNS
    frame = frame.fillna("")
    for column in INPUT_COLUMNS:
        frame[column] = frame[column].str.strip()

    # Row i of the frame is physical line i + 2 (header is line 1).
    empty = frame.eq("")
    blank_rows = empty.all(axis=1)
    partial = empty.any(axis=1) & ~blank_rows
    if partial.any():
        first = int(np.flatnonzero(partial.to_numpy())[0])
        raise CcrecDataError(
            f"Malformed row in {path}: expected user_id,item_id,channel",
            line_number=first + 2,
            path=str(path),
        )
    frame = frame[~blank_rows]

    channels = []
    for line_number, token in zip(frame.index + 2, frame["channel"]):
        try:
            channels.append(ChannelLabel.parse(token))
        except CcrecValidationError as e:
            raise CcrecValidationError(
                f"{e.message} at line {line_number} of {path}",
                field_errors=e.field_errors,
                path=str(path),
                line_number=int(line_number),
            )

    user_codes, user_ids = pd.factorize(frame["user_id"], sort=False)
    item_codes, item_ids = pd.factorize(frame["item_id"], sort=False)
    vocab = Vocab(tuple(str(u) for u in user_ids), tuple(str(i) for i in item_ids))

    store = InteractionStore.from_triples(zip(user_codes.tolist(), item_codes.tolist(), channels), vocab)
    if not len(store):
        raise CcrecDataError(f"No interactions in {path}", path=str(path))
    logger.info(
        f"Loaded {len(store)} unique interactions ({len(frame)} rows) from {path}: "
        f"{vocab.n_users} users, {vocab.n_items} items"
    )
    return store


def write_interactions(store: InteractionStore, path: Union[str, Path]) -> Path:
    """Write a store back out in the input CSV format."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(
        {
            "user_id": [store.vocab.user_ids[it.user] for it in store.interactions],
            "item_id": [store.vocab.item_ids[it.item] for it in store.interactions],
            "channel": [it.channel.value for it in store.interactions],
        },
        columns=INPUT_COLUMNS,
    )
    frame.to_csv(path, index=False)
    return path


def stats(store: InteractionStore) -> StatsReport:
    """
    Per-channel users, items, interactions and sparsity plus overlaps.

    Raises:
        CcrecValidationError: If the store is empty
    """
    if not len(store):
        raise CcrecValidationError(
            "Cannot compute statistics of an empty store", error_code=ErrorCode.EMPTY_INPUT
        )

    counts = {c: 0 for c in CHANNELS}
    for it in store.interactions:
        counts[it.channel] += 1

    channels = {}
    for c in CHANNELS:
        n_users, n_items = len(store.users(c)), len(store.items(c))
        cells = n_users * n_items
        channels[c] = ChannelStats(
            users=n_users,
            items=n_items,
            interactions=counts[c],
            sparsity=(1.0 - counts[c] / cells) if cells else 1.0,
        )
    return StatsReport(
        channels=channels,
        user_overlap=len(store.users_off & store.users_on),
        item_overlap=len(store.items_off & store.items_on),
    )


# ---------------------------------------------------------------------------
# split and negatives
# ---------------------------------------------------------------------------

def _cut(n: int) -> Tuple[int, int, int]:
    """(n_train, n_val, n_test) with floor rounding; the residue stays in train."""
    n_val = n_test = (2 * n) // 10
    return n - n_val - n_test, n_val, n_test


def _assign_ground_truth(
    user: int,
    units: List[Tuple[int, PairPartition]],
    target: Dict[ChannelLabel, Dict[int, set]],
) -> None:
    """Route held-out pairs to per-channel ground truth.

    Both-channel pairs alternate off, on, off, ... so an odd count gives the
    extra pair to the offline channel.
    """
    both_seen = 0
    for item, partition in units:
        if partition is PairPartition.BOTH:
            channel = CHANNELS[both_seen % 2]
            both_seen += 1
        else:
            channel = partition.channels[0]
        target[channel].setdefault(user, set()).add(item)


def split(store: InteractionStore, seed: int) -> DatasetBundle:
    """
    Cut every user's purchased pairs 6:2:2 into train, validation and test.

    Each user's pairs are shuffled with a generator seeded by ``seed``
    (users visited in ascending order) and cut with
    ``n_val = n_test = floor(0.2 n)``. Train pairs become positives labelled
    with every channel they were bought in. Validation/test pairs become
    per-channel ground truth; both-channel pairs are assigned to one channel
    each, alternating.

    Raises:
        CcrecValidationError: If the store is empty
    """
    if not len(store):
        raise CcrecValidationError("Cannot split an empty store", error_code=ErrorCode.EMPTY_INPUT)

    rng = make_rng(seed)
    train: List[TrainingExample] = []
    held_out: Dict[str, Dict[ChannelLabel, Dict[int, set]]] = {
        name: {c: {} for c in CHANNELS} for name in SPLITS
    }
    train_items: Dict[Tuple[int, ChannelLabel], set] = defaultdict(set)

    for user, pairs in sorted(store.pairs_by_user().items()):
        order = rng.permutation(len(pairs))
        shuffled = [pairs[i] for i in order]
        n_train, n_val, _ = _cut(len(shuffled))

        for item, partition in shuffled[:n_train]:
            train.append(TrainingExample.positive(user, item, partition))
            for c in partition.channels:
                train_items[(user, c)].add(item)

        _assign_ground_truth(user, shuffled[n_train:n_train + n_val], held_out["val"])
        _assign_ground_truth(user, shuffled[n_train + n_val:], held_out["test"])

    frozen_train_items = {key: frozenset(items) for key, items in train_items.items()}

    def finalize(name: str, channel: ChannelLabel) -> GroundTruth:
        result = {}
        for user, items in sorted(held_out[name][channel].items()):
            kept = frozenset(items - frozen_train_items.get((user, channel), frozenset()))
            if kept:
                result[user] = kept
        return result

    bundle = DatasetBundle(
        train=tuple(train),
        val_off=finalize("val", ChannelLabel.OFF),
        val_on=finalize("val", ChannelLabel.ON),
        test_off=finalize("test", ChannelLabel.OFF),
        test_on=finalize("test", ChannelLabel.ON),
        train_items_per_user_channel=frozen_train_items,
        vocab=store.vocab,
        overlapping_users=store.overlapping_users,
    )
    logger.info(
        f"Split seed={seed}: {len(bundle.train)} train positives, "
        f"val users off/on {len(bundle.val_off)}/{len(bundle.val_on)}, "
        f"test users off/on {len(bundle.test_off)}/{len(bundle.test_on)}"
    )
    return bundle


def sample_negatives(
    bundle: DatasetBundle,
    store: InteractionStore,
    per_positive: int,
    seed: int,
) -> DatasetBundle:
    """
    Append ``per_positive`` negatives for every positive train example.

    Negatives for a positive of user ``u`` are drawn uniformly without
    replacement from the items ``u`` bought in neither channel of the full
    store. Users who bought every item get no negatives (logged as a
    warning with the count).
    """
    if per_positive < 0:
        raise CcrecValidationError(
            "per_positive cannot be negative",
            field_errors={"per_positive": str(per_positive)},
        )
    if per_positive == 0:
        return bundle

    rng = make_rng(seed, 1)
    purchased = store.purchased_items()
    all_items = np.arange(store.n_items, dtype=np.int64)
    allowed_cache: Dict[int, np.ndarray] = {}
    saturated: set = set()
    short: set = set()
    negatives: List[TrainingExample] = []

    for example in bundle.train:
        if not example.is_positive:
            continue
        user = example.user
        allowed = allowed_cache.get(user)
        if allowed is None:
            allowed = np.setdiff1d(all_items, purchased.get(user, all_items[:0]), assume_unique=True)
            allowed_cache[user] = allowed
        if allowed.size == 0:
            saturated.add(user)
            continue
        size = min(per_positive, int(allowed.size))
        if size < per_positive:
            short.add(user)
        for item in rng.choice(allowed, size=size, replace=False):
            negatives.append(TrainingExample.negative(user, int(item)))

    if saturated:
        logger.warning(f"Skipped negative sampling for {len(saturated)} user(s) who bought every item")
    if short:
        logger.warning(f"{len(short)} user(s) had fewer than {per_positive} unpurchased items")
    logger.info(f"Appended {len(negatives)} negatives ({per_positive} per positive)")
    return replace(bundle, train=bundle.train + tuple(negatives))


# ---------------------------------------------------------------------------
# split files
# ---------------------------------------------------------------------------

def write_split(bundle: DatasetBundle, out_dir: Union[str, Path]) -> Path:
    """
    Write ``train.csv``, ``val_<c>.csv``, ``test_<c>.csv`` and ``split.json``.

    Ids are written as raw ids. ``split.json`` holds the vocabulary and the
    overlapping users so :func:`read_split` can rebuild the bundle alone.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    users, items = bundle.vocab.user_ids, bundle.vocab.item_ids

    train = pd.DataFrame(
        {
            "user_id": [users[e.user] for e in bundle.train],
            "item_id": [items[e.item] for e in bundle.train],
            "label_off": [e.label_off for e in bundle.train],
            "label_on": [e.label_on for e in bundle.train],
            "specificity": [e.specificity for e in bundle.train],
            "is_positive": [int(e.is_positive) for e in bundle.train],
        },
        columns=TRAIN_COLUMNS,
    )
    train.to_csv(out_dir / "train.csv", index=False)

    for name in SPLITS:
        for c in CHANNELS:
            gt = bundle.ground_truth(name, c)
            rows = [(users[u], items[v]) for u in sorted(gt) for v in sorted(gt[u])]
            pd.DataFrame(rows, columns=GT_COLUMNS).to_csv(out_dir / f"{name}_{c.value}.csv", index=False)

    meta = bundle.vocab.to_dict()
    meta["overlapping_users"] = [users[u] for u in sorted(bundle.overlapping_users)]
    with open(out_dir / SPLIT_META, "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")
    logger.info(f"Wrote split to {out_dir}")
    return out_dir


def _read_csv(path: Path, columns: List[str]) -> pd.DataFrame:
    if not path.exists():
        raise CcrecDataError(f"Split file not found: {path}", path=str(path))
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    if list(frame.columns) != columns:
        raise CcrecDataError(
            f"Unexpected header {list(frame.columns)} in {path}; expected {columns}",
            line_number=1,
            path=str(path),
        )
    return frame


def _lookup(index: Dict[str, int], raw: Iterable[str], kind: str, path: Path) -> List[int]:
    try:
        return [index[r] for r in raw]
    except KeyError as e:
        raise CcrecValidationError(f"Unknown {kind} id {e.args[0]!r} in {path}", path=str(path))


def read_split(split_dir: Union[str, Path]) -> DatasetBundle:
    """Rebuild a :class:`DatasetBundle` written by :func:`write_split`."""
    split_dir = Path(split_dir)
    meta_path = split_dir / SPLIT_META
    if not meta_path.exists():
        raise CcrecDataError(f"Split metadata not found: {meta_path}", path=str(meta_path))
    with open(meta_path, "r", encoding="utf-8") as f:
        meta = json.load(f)
    vocab = Vocab.from_dict(meta)
    user_index, item_index = vocab.user_index(), vocab.item_index()

    train_path = split_dir / "train.csv"
    frame = _read_csv(train_path, TRAIN_COLUMNS)
    user_col = _lookup(user_index, frame["user_id"], "user", train_path)
    item_col = _lookup(item_index, frame["item_id"], "item", train_path)
    train = []
    train_items: Dict[Tuple[int, ChannelLabel], set] = defaultdict(set)
    for u, v, lo, ln, sp, pos in zip(
        user_col, item_col, frame["label_off"], frame["label_on"], frame["specificity"], frame["is_positive"]
    ):
        example = TrainingExample(u, v, int(lo), int(ln), int(sp), bool(int(pos)))
        train.append(example)
        if example.is_positive:
            for c in CHANNELS:
                if example.label(c):
                    train_items[(u, c)].add(v)

    ground_truths: Dict[str, GroundTruth] = {}
    for name in SPLITS:
        for c in CHANNELS:
            path = split_dir / f"{name}_{c.value}.csv"
            gt_frame = _read_csv(path, GT_COLUMNS)
            grouped: Dict[int, set] = defaultdict(set)
            for u, v in zip(
                _lookup(user_index, gt_frame["user_id"], "user", path),
                _lookup(item_index, gt_frame["item_id"], "item", path),
            ):
                grouped[u].add(v)
            ground_truths[f"{name}_{c.value}"] = {u: frozenset(grouped[u]) for u in sorted(grouped)}

    return DatasetBundle(
        train=tuple(train),
        val_off=ground_truths["val_off"],
        val_on=ground_truths["val_on"],
        test_off=ground_truths["test_off"],
        test_on=ground_truths["test_on"],
        train_items_per_user_channel={key: frozenset(items) for key, items in train_items.items()},
        vocab=vocab,
        overlapping_users=frozenset(_lookup(user_index, meta.get("overlapping_users", []), "user", meta_path)),
    )


def user_positive_pairs(bundle: DatasetBundle, channel: Optional[ChannelLabel] = None) -> np.ndarray:
    """
    Unique (user, item) positive train pairs as an ``(n, 2)`` array.

    With ``channel`` set, only pairs bought in that channel; otherwise the
    union of both channels.
    """
    pairs = sorted({
        (e.user, e.item)
        for e in bundle.train
        if e.is_positive and (channel is None or e.label(channel))
    })
    return np.array(pairs, dtype=np.int64).reshape(-1, 2)
