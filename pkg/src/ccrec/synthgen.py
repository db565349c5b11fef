"""ccrec.synthgen
==============

Synthetic multi-channel purchase logs with planted preference structure.

Every user has shared factors ``z_u`` and one offset per channel; every
item has factors ``w_v``. The affinity of user ``u`` for item ``v`` in
channel ``c`` is::

    s_c(u, v) = z_u . w_v + gamma * delta_c(u) . w_v

so ``gamma = 0`` makes both channels indistinguishable and larger values
let the channels drift apart. Each active (user, channel) draws items
without replacement, proportionally to ``softmax(s_c(u, .))`` over the
channel's item pool.

Usage example
-------------
>>> store, truth = generate(GenConfig(gamma=3.0, seed=1))
>>> oracle_topk(truth, user=0, channel=ChannelLabel.ON, k=10)
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Set, Tuple

import numpy as np

from .config import GenConfig
from .dataset import CHANNELS, ChannelLabel, InteractionStore, Vocab
from .exceptions import CcrecGenerationError
from .utils import make_rng, validate_index

logger = logging.getLogger(__name__)


@dataclass
class EmissionCounts:
    """What the generator emitted, counted while emitting."""
    users_off: int = 0
    users_on: int = 0
    items_off: int = 0
    items_on: int = 0
    interactions_off: int = 0
    interactions_on: int = 0
    both_pairs: int = 0
    user_overlap: int = 0
    item_overlap: int = 0

    def to_dict(self) -> Dict[str, int]:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, data: Dict[str, int]) -> "EmissionCounts":
        return cls(**{k: int(v) for k, v in data.items() if k in cls.__dataclass_fields__})


@dataclass
class GroundTruth:
    """
    Planted factors of a generated dataset.

    Attributes:
        z: Shared user factors, ``U x f``
        delta_off / delta_on: Channel offsets, ``U x f``
        w: Item factors, ``V x f``
        gamma: Divergence strength
        vocab: Raw ids of the generated users and items
        counts: Emission bookkeeping
    """
    z: np.ndarray
    delta_off: np.ndarray
    delta_on: np.ndarray
    w: np.ndarray
    gamma: float
    vocab: Vocab
    counts: EmissionCounts = field(default_factory=EmissionCounts)

    @property
    def n_users(self) -> int:
        return int(self.z.shape[0])

    @property
    def n_items(self) -> int:
        return int(self.w.shape[0])

    def delta(self, channel: ChannelLabel) -> np.ndarray:
        return self.delta_off if channel is ChannelLabel.OFF else self.delta_on

    def affinity(self, user: int, channel: ChannelLabel) -> np.ndarray:
        """``s_c(user, v)`` for every item ``v``."""
        user = validate_index(user, self.n_users, "user")
        return self.w @ (self.z[user] + self.gamma * self.delta(channel)[user])

    def affinity_matrix(self, channel: ChannelLabel) -> np.ndarray:
        return (self.z + self.gamma * self.delta(channel)) @ self.w.T


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = np.exp(logits - logits.max())
    return shifted / shifted.sum()


def _split_users(config: GenConfig, rng: np.random.Generator) -> Dict[int, Tuple[ChannelLabel, ...]]:
    n_overlap = int(round(config.overlap_user_frac * config.n_users))
    n_off = int(round(config.offline_user_share * (config.n_users - n_overlap)))
    order = rng.permutation(config.n_users)
    active: Dict[int, Tuple[ChannelLabel, ...]] = {}
    for rank, user in enumerate(order.tolist()):
        if rank < n_overlap:
            active[user] = CHANNELS
        elif rank < n_overlap + n_off:
            active[user] = (ChannelLabel.OFF,)
        else:
            active[user] = (ChannelLabel.ON,)
    return active


def _split_items(config: GenConfig, rng: np.random.Generator) -> Dict[ChannelLabel, np.ndarray]:
    n_shared = int(round(config.overlap_item_frac * config.n_items))
    order = rng.permutation(config.n_items)
    shared = order[:n_shared]
    rest = order[n_shared:]
    half = (len(rest) + 1) // 2
    return {
        ChannelLabel.OFF: np.sort(np.concatenate([shared, rest[:half]])),
        ChannelLabel.ON: np.sort(np.concatenate([shared, rest[half:]])),
    }


def generate(config: GenConfig) -> Tuple[InteractionStore, GroundTruth]:
    """
    Draw a synthetic store and the factors it was drawn from.

    Users are split into overlapping, offline-only and online-only groups;
    items into shared and channel-exclusive pools. With probability
    ``dup_prob`` each purchase of an overlapping user is mirrored to the
    other channel when the item is sold there, which populates the
    both-channel partition.

    Raises:
        CcrecGenerationError: If a draw asks for more items than the pool holds
    """
    config.validate()
    rng = make_rng(config.seed)
    f = config.latent_dim
    scale = math.sqrt(config.signal_scale / math.sqrt(f))

    z = rng.normal(0.0, scale, size=(config.n_users, f))
    delta_off = rng.normal(0.0, scale, size=(config.n_users, f))
    delta_on = rng.normal(0.0, scale, size=(config.n_users, f))
    w = rng.normal(0.0, scale, size=(config.n_items, f))
    vocab = Vocab(
        tuple(f"u{i}" for i in range(config.n_users)),
        tuple(f"i{j}" for j in range(config.n_items)),
    )
    truth = GroundTruth(z=z, delta_off=delta_off, delta_on=delta_on, w=w, gamma=config.gamma, vocab=vocab)

    active = _split_users(config, rng)
    pools = _split_items(config, rng)
    in_pool = {c: np.isin(np.arange(config.n_items), pools[c]) for c in CHANNELS}
    low, high = config.interactions_per_user_channel

    emitted: Dict[ChannelLabel, Set[Tuple[int, int]]] = {c: set() for c in CHANNELS}
    for user in range(config.n_users):
        channels = active[user]
        drawn: Dict[ChannelLabel, np.ndarray] = {}
        for channel in channels:
            pool = pools[channel]
            n_draw = int(rng.integers(low, high + 1))
            if n_draw > pool.size:
                raise CcrecGenerationError(
                    f"User {user} needs {n_draw} {channel.value} items but the pool holds {pool.size}",
                    operation="generate",
                )
            probs = _softmax(truth.affinity(user, channel)[pool])
            drawn[channel] = rng.choice(pool, size=n_draw, replace=False, p=probs)
            emitted[channel].update((user, int(v)) for v in drawn[channel])

        if len(channels) == 2 and config.dup_prob > 0:
            for channel, items in drawn.items():
                mirror = rng.random(items.size) < config.dup_prob
                other = channel.other
                for item in items[mirror]:
                    if in_pool[other][item]:
                        emitted[other].add((user, int(item)))

    truth.counts = _count(emitted)
    triples: List[Tuple[int, int, ChannelLabel]] = [
        (u, v, c) for c in CHANNELS for (u, v) in emitted[c]
    ]
    store = InteractionStore.from_triples(triples, vocab)
    logger.info(
        f"Generated {len(store)} interactions (gamma={config.gamma}, seed={config.seed}): "
        f"{truth.counts.interactions_off} off, {truth.counts.interactions_on} on, "
        f"{truth.counts.both_pairs} both-channel pairs"
    )
    return store, truth


def _count(emitted: Dict[ChannelLabel, Set[Tuple[int, int]]]) -> EmissionCounts:
    off, on = emitted[ChannelLabel.OFF], emitted[ChannelLabel.ON]
    users = {c: {u for u, _ in emitted[c]} for c in CHANNELS}
    items = {c: {v for _, v in emitted[c]} for c in CHANNELS}
    return EmissionCounts(
        users_off=len(users[ChannelLabel.OFF]),
        users_on=len(users[ChannelLabel.ON]),
        items_off=len(items[ChannelLabel.OFF]),
        items_on=len(items[ChannelLabel.ON]),
        interactions_off=len(off),
        interactions_on=len(on),
        both_pairs=len(off & on),
        user_overlap=len(users[ChannelLabel.OFF] & users[ChannelLabel.ON]),
        item_overlap=len(items[ChannelLabel.OFF] & items[ChannelLabel.ON]),
    )


def oracle_topk(gt: GroundTruth, user: int, channel: ChannelLabel, k: int) -> List[int]:
    """Exact top-``k`` items by planted affinity; ties go to the lower item index."""
    scores = gt.affinity(user, channel)
    order = np.lexsort((np.arange(scores.size), -scores))
    return order[:max(0, int(k))].tolist()
