"""ccrec.model
===========

The cross-channel recommendation network, its losses and their exact
analytic gradients.

Every user owns three embeddings: one shared across channels and one per
channel. For a (user, item, channel) triple, a per-channel attention block
weighs the shared embedding against the channel's specific embedding using
the item as query; the weighted embeddings feed two linear heads whose sum
is the preference logit. An interaction classifier on the summed user
embedding and the item embedding predicts which channels the pair occurs
in.

All computations are vectorised over an :class:`~ccrec.dataset.ExampleBatch`
in float64. :func:`backward` is hand-derived; it is validated against
central finite differences in the test-suite.
"""

import logging
import math
from dataclasses import dataclass, field, fields
from typing import Dict, Iterator, Optional, Sequence, Tuple, Union

import numpy as np

from .config import ModelConfig
from .dataset import CHANNELS, ChannelLabel, ExampleBatch, TrainingExample
from .exceptions import CcrecValidationError
from .utils import make_rng, validate_index, validate_indices

logger = logging.getLogger(__name__)

BCE_EPS = 1e-7

EMBEDDING_NAMES = ("X_sh", "X_off", "X_on", "Y")


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Logistic function, stable for large ``|x|``."""
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def bce(p: np.ndarray, o: np.ndarray) -> np.ndarray:
    """Element-wise binary cross-entropy on probabilities clamped to ``[eps, 1 - eps]``."""
    p = np.clip(p, BCE_EPS, 1.0 - BCE_EPS)
    return -(o * np.log(p) + (1.0 - o) * np.log(1.0 - p))


@dataclass
class Parameters:
    """
    Every trainable array of the model.

    Shapes, with ``U`` users, ``V`` items, ``d`` embedding dim, ``d'``
    attention dim and ``H`` classifier width:

    * ``X_sh``, ``X_off``, ``X_on``: ``U x d``; ``Y``: ``V x d``
    * ``WQ_<c>``, ``WK_<c>``: ``d x d'`` with biases ``bQ_<c>``, ``bK_<c>``: ``d'``
    * ``w_sh``, ``w_off``, ``w_on``: ``d`` with biases ``b_*``: ``1``
    * ``C1``: ``2d x H``, ``C2``: ``H x H``, ``C3``: ``H x 2`` with biases ``c1``, ``c2``, ``c3``
    """
    X_sh: np.ndarray
    X_off: np.ndarray
    X_on: np.ndarray
    Y: np.ndarray
    WQ_off: np.ndarray
    bQ_off: np.ndarray
    WK_off: np.ndarray
    bK_off: np.ndarray
    WQ_on: np.ndarray
    bQ_on: np.ndarray
    WK_on: np.ndarray
    bK_on: np.ndarray
    w_sh: np.ndarray
    b_sh: np.ndarray
    w_off: np.ndarray
    b_off: np.ndarray
    w_on: np.ndarray
    b_on: np.ndarray
    C1: np.ndarray
    c1: np.ndarray
    C2: np.ndarray
    c2: np.ndarray
    C3: np.ndarray
    c3: np.ndarray

    @classmethod
    def names(cls) -> Tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    def items(self) -> Iterator[Tuple[str, np.ndarray]]:
        for name in self.names():
            yield name, getattr(self, name)

    def as_dict(self) -> Dict[str, np.ndarray]:
        return dict(self.items())

    @classmethod
    def from_dict(cls, arrays: Dict[str, np.ndarray]) -> "Parameters":
        missing = set(cls.names()) - set(arrays)
        if missing:
            raise CcrecValidationError(f"Missing parameter tensors: {sorted(missing)}")
        return cls(**{name: np.asarray(arrays[name], dtype=np.float64) for name in cls.names()})

    def copy(self) -> "Parameters":
        return Parameters(**{name: array.copy() for name, array in self.items()})

    def zeros_like(self) -> "Parameters":
        return Parameters(**{name: np.zeros_like(array) for name, array in self.items()})

    @property
    def n_users(self) -> int:
        return int(self.X_sh.shape[0])

    @property
    def n_items(self) -> int:
        return int(self.Y.shape[0])

    @property
    def d_prime(self) -> int:
        return int(self.WQ_off.shape[1])

    def query(self, channel: ChannelLabel) -> Tuple[np.ndarray, np.ndarray]:
        if channel is ChannelLabel.OFF:
            return self.WQ_off, self.bQ_off
        return self.WQ_on, self.bQ_on

    def key(self, channel: ChannelLabel) -> Tuple[np.ndarray, np.ndarray]:
        if channel is ChannelLabel.OFF:
            return self.WK_off, self.bK_off
        return self.WK_on, self.bK_on

    def head(self, channel: ChannelLabel) -> Tuple[np.ndarray, np.ndarray]:
        if channel is ChannelLabel.OFF:
            return self.w_off, self.b_off
        return self.w_on, self.b_on

    def specific(self, channel: ChannelLabel) -> np.ndarray:
        return self.X_off if channel is ChannelLabel.OFF else self.X_on

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(array)) for _, array in self.items())


Gradients = Parameters


def parameter_shapes(n_users: int, n_items: int, config: ModelConfig) -> Dict[str, Tuple[int, ...]]:
    """Declared shape of every tensor for the given population and config."""
    d, dp, h = config.d, config.d_prime, config.clf_hidden
    shapes: Dict[str, Tuple[int, ...]] = {
        "X_sh": (n_users, d),
        "X_off": (n_users, d),
        "X_on": (n_users, d),
        "Y": (n_items, d),
    }
    for c in CHANNELS:
        shapes[f"WQ_{c.value}"] = (d, dp)
        shapes[f"bQ_{c.value}"] = (dp,)
        shapes[f"WK_{c.value}"] = (d, dp)
        shapes[f"bK_{c.value}"] = (dp,)
    for head in ("sh", "off", "on"):
        shapes[f"w_{head}"] = (d,)
        shapes[f"b_{head}"] = (1,)
    shapes.update({
        "C1": (2 * d, h), "c1": (h,),
        "C2": (h, h), "c2": (h,),
        "C3": (h, 2), "c3": (2,),
    })
    return {name: shapes[name] for name in Parameters.names()}


def init_parameters(n_users: int, n_items: int, config: ModelConfig, seed: int) -> Parameters:
    """
    Seeded initialisation.

    Embeddings are uniform in ``(-1/sqrt(d), 1/sqrt(d))``, weight matrices
    and head vectors uniform in ``(-1/sqrt(fan_in), 1/sqrt(fan_in))``,
    biases zero.
    """
    config.validate()
    if n_users < 1 or n_items < 1:
        raise CcrecValidationError("init_parameters needs at least one user and one item")
    rng = make_rng(seed, 2)
    arrays: Dict[str, np.ndarray] = {}
    for name, shape in parameter_shapes(n_users, n_items, config).items():
        if name in EMBEDDING_NAMES:
            bound = 1.0 / math.sqrt(config.d)
        elif name[0] in "WCw":
            bound = 1.0 / math.sqrt(shape[0])
        else:
            arrays[name] = np.zeros(shape, dtype=np.float64)
            continue
        arrays[name] = rng.uniform(-bound, bound, size=shape)
    logger.debug(
        f"Initialised parameters: {n_users} users, {n_items} items, d={config.d}, "
        f"d_prime={config.d_prime}, clf_hidden={config.clf_hidden}, seed={seed}"
    )
    return Parameters(**arrays)


# ---------------------------------------------------------------------------
# forward pass
# ---------------------------------------------------------------------------

@dataclass
class ChannelCache:
    """Forward intermediates of one channel, one row per example."""
    x_sp: np.ndarray
    zq: Optional[np.ndarray] = None
    q: Optional[np.ndarray] = None
    zk_sh: Optional[np.ndarray] = None
    k_sh: Optional[np.ndarray] = None
    zk_sp: Optional[np.ndarray] = None
    k_sp: Optional[np.ndarray] = None
    logit_sh: Optional[np.ndarray] = None
    logit_sp: Optional[np.ndarray] = None
    a_sh: Optional[np.ndarray] = None
    a_sp: Optional[np.ndarray] = None
    m_sh: Optional[np.ndarray] = None
    m_sp: Optional[np.ndarray] = None
    mix: Optional[np.ndarray] = None
    z: Optional[np.ndarray] = None
    p: Optional[np.ndarray] = None


@dataclass
class ForwardCache:
    """Intermediates of a batch forward pass, reused by :func:`backward`."""
    users: np.ndarray
    items: np.ndarray
    x_sh: np.ndarray
    x_off: np.ndarray
    x_on: np.ndarray
    y: np.ndarray
    channels: Dict[ChannelLabel, ChannelCache] = field(default_factory=dict)
    x_u: Optional[np.ndarray] = None
    inter: Optional[np.ndarray] = None
    z1: Optional[np.ndarray] = None
    h1: Optional[np.ndarray] = None
    z2: Optional[np.ndarray] = None
    h2: Optional[np.ndarray] = None
    z3: Optional[np.ndarray] = None
    o_hat: Optional[np.ndarray] = None

    def relu_inputs(self) -> Iterator[np.ndarray]:
        """Every pre-activation that passes through a ReLU."""
        for cc in self.channels.values():
            for array in (cc.zq, cc.zk_sh, cc.zk_sp):
                if array is not None:
                    yield array
        for array in (self.z1, self.z2):
            if array is not None:
                yield array


def _attention(
    params: Parameters,
    channel: ChannelLabel,
    x_sh: np.ndarray,
    x_sp: np.ndarray,
    y: np.ndarray,
    cc: ChannelCache,
) -> None:
    WQ, bQ = params.query(channel)
    WK, bK = params.key(channel)
    scale = math.sqrt(params.d_prime)

    cc.zq = y @ WQ + bQ
    cc.q = relu(cc.zq)
    cc.zk_sh = x_sh @ WK + bK
    cc.k_sh = relu(cc.zk_sh)
    cc.zk_sp = x_sp @ WK + bK
    cc.k_sp = relu(cc.zk_sp)
    cc.logit_sh = np.sum(cc.q * cc.k_sh, axis=1) / scale
    cc.logit_sp = np.sum(cc.q * cc.k_sp, axis=1) / scale
    # Two-way softmax.
    cc.a_sh = sigmoid(cc.logit_sh - cc.logit_sp)
    cc.a_sp = 1.0 - cc.a_sh


def forward(
    params: Parameters,
    config: ModelConfig,
    users: np.ndarray,
    items: np.ndarray,
    channels: Sequence[ChannelLabel] = CHANNELS,
    with_classifier: bool = True,
) -> ForwardCache:
    """Vectorised forward pass for aligned ``users`` / ``items`` arrays."""
    users = validate_indices(users, params.n_users, "user")
    items = validate_indices(items, params.n_items, "item")
    variant = config.variant
    cache = ForwardCache(
        users=users,
        items=items,
        x_sh=params.X_sh[users],
        x_off=params.X_off[users],
        x_on=params.X_on[users],
        y=params.Y[items],
    )
    x_sh, y = cache.x_sh, cache.y

    for channel in channels:
        x_sp = cache.x_off if channel is ChannelLabel.OFF else cache.x_on
        cc = ChannelCache(x_sp=x_sp)
        if variant.uses_attention:
            _attention(params, channel, x_sh, x_sp, y, cc)
        else:
            cc.a_sh = np.full(users.shape[0], 0.5)
            cc.a_sp = np.full(users.shape[0], 0.5)

        w_c, b_c = params.head(channel)
        if variant.separated:
            cc.m_sh = cc.a_sh[:, None] * x_sh
            cc.m_sp = cc.a_sp[:, None] * x_sp
            cc.z = (cc.m_sh * y) @ params.w_sh + params.b_sh[0] + (cc.m_sp * y) @ w_c + b_c[0]
        else:
            cc.mix = cc.a_sh[:, None] * x_sh + cc.a_sp[:, None] * x_sp
            cc.z = (cc.mix * y) @ w_c + b_c[0]
        cc.p = sigmoid(cc.z)
        cache.channels[channel] = cc

    if with_classifier:
        cache.x_u = cache.x_sh + cache.x_off + cache.x_on
        cache.inter = np.concatenate([cache.x_u, y], axis=1)
        cache.z1 = cache.inter @ params.C1 + params.c1
        cache.h1 = relu(cache.z1)
        cache.z2 = cache.h1 @ params.C2 + params.c2
        cache.h2 = relu(cache.z2)
        cache.z3 = cache.h2 @ params.C3 + params.c3
        cache.o_hat = sigmoid(cache.z3)
    return cache


def _single(params: Parameters, user: int, item: int) -> Tuple[np.ndarray, np.ndarray]:
    user = validate_index(user, params.n_users, "user")
    item = validate_index(item, params.n_items, "item")
    return np.array([user]), np.array([item])


def attention_scores(
    user: int,
    item: int,
    channel: ChannelLabel,
    params: Parameters,
    config: Optional[ModelConfig] = None,
) -> Tuple[float, float]:
    """
    ``(a_sh, a_sp)`` for one triple; they sum to one.

    ``config`` only matters for the no-attention ablation, where both
    weights are fixed at 0.5.
    """
    config = config or _config_of(params)
    users, items = _single(params, user, item)
    cc = forward(params, config, users, items, channels=(channel,), with_classifier=False).channels[channel]
    return float(cc.a_sh[0]), float(cc.a_sp[0])


def predict_preference(
    user: int,
    item: int,
    channel: ChannelLabel,
    params: Parameters,
    config: Optional[ModelConfig] = None,
    cache: Optional[ForwardCache] = None,
) -> float:
    """Preference probability ``p^c`` of ``user`` for ``item`` in ``channel``.

    With a ``cache`` holding the triple, the cached value is returned
    instead of recomputing.
    """
    if cache is not None and channel in cache.channels:
        hit = np.flatnonzero((cache.users == user) & (cache.items == item))
        if hit.size:
            return float(cache.channels[channel].p[hit[0]])
    config = config or _config_of(params)
    users, items = _single(params, user, item)
    return float(forward(params, config, users, items, channels=(channel,), with_classifier=False).channels[channel].p[0])


def classify_interaction(user: int, item: int, params: Parameters) -> Tuple[float, float]:
    """Independent probabilities ``(o_hat_off, o_hat_on)`` that the pair occurs in each channel."""
    users, items = _single(params, user, item)
    cache = forward(params, _config_of(params), users, items, channels=(), with_classifier=True)
    return float(cache.o_hat[0, 0]), float(cache.o_hat[0, 1])


def _config_of(params: Parameters) -> ModelConfig:
    return ModelConfig(
        d=int(params.Y.shape[1]),
        d_prime=params.d_prime,
        clf_hidden=int(params.C1.shape[1]),
    )


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LossBreakdown:
    """Per-batch loss terms. Terms a variant drops are reported as 0.0."""
    l_off: float
    l_on: float
    l_cls: float
    l_attn: float
    total: float

    def to_dict(self) -> Dict[str, float]:
        return {
            "l_off": self.l_off,
            "l_on": self.l_on,
            "l_cls": self.l_cls,
            "l_attn": self.l_attn,
            "total": self.total,
        }


def _as_batch(batch: Union[ExampleBatch, Sequence[TrainingExample]]) -> ExampleBatch:
    if isinstance(batch, ExampleBatch):
        result = batch
    else:
        result = ExampleBatch.from_examples(list(batch))
    if len(result) == 0:
        raise CcrecValidationError("batch must contain at least one example")
    return result


def recommendation_loss(p: np.ndarray, labels: np.ndarray) -> float:
    """Mean BCE of one channel's preference probabilities."""
    return float(np.mean(bce(p, labels)))


def classification_loss(o_hat: np.ndarray, batch: ExampleBatch) -> float:
    """Mean over the batch of the summed per-channel BCE of the classifier."""
    targets = np.stack([batch.label_off, batch.label_on], axis=1)
    return float(np.mean(np.sum(bce(o_hat, targets), axis=1)))


def attention_targets(batch: ExampleBatch) -> Tuple[np.ndarray, np.ndarray]:
    """Targets ``(1 - o^s, o^s)`` for ``(a_sh, a_sp)``."""
    return 1.0 - batch.specificity, batch.specificity


def attention_loss(cache: ForwardCache, batch: ExampleBatch) -> float:
    """
    Mean over positives of the summed squared distance of both channels'
    attention weights to their targets; zero without positives.
    """
    positive = batch.is_positive
    n_pos = int(np.count_nonzero(positive))
    if n_pos == 0:
        return 0.0
    t_sh, t_sp = attention_targets(batch)
    per_example = np.zeros(len(batch))
    for cc in cache.channels.values():
        per_example += (cc.a_sh - t_sh) ** 2 + (cc.a_sp - t_sp) ** 2
    return float(np.sum(per_example[positive]) / n_pos)


def total_loss(l_off: float, l_on: float, l_cls: float, l_attn: float, config: ModelConfig) -> float:
    return l_off + l_on + config.lambda_cls * l_cls + config.lambda_attn * l_attn


def batch_losses(
    batch: Union[ExampleBatch, Sequence[TrainingExample]],
    params: Parameters,
    config: ModelConfig,
) -> Tuple[LossBreakdown, ForwardCache]:
    """Forward pass plus every loss term for one mini-batch."""
    batch = _as_batch(batch)
    variant = config.variant
    cache = forward(params, config, batch.users, batch.items, with_classifier=variant.uses_classifier)

    l_off = recommendation_loss(cache.channels[ChannelLabel.OFF].p, batch.label_off)
    l_on = recommendation_loss(cache.channels[ChannelLabel.ON].p, batch.label_on)
    l_cls = classification_loss(cache.o_hat, batch) if variant.uses_classifier else 0.0
    l_attn = attention_loss(cache, batch) if variant.uses_attention_loss else 0.0

    losses = LossBreakdown(
        l_off=l_off,
        l_on=l_on,
        l_cls=l_cls,
        l_attn=l_attn,
        total=total_loss(l_off, l_on, l_cls, l_attn, config),
    )
    return losses, cache


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------

def backward(
    batch: Union[ExampleBatch, Sequence[TrainingExample]],
    params: Parameters,
    config: ModelConfig,
    cache: ForwardCache,
) -> Gradients:
    """
    Gradient of ``LossBreakdown.total`` with respect to every parameter.

    The BCE terms use ``p - o`` as the gradient with respect to the logit,
    i.e. the clamp applied to the loss value is ignored here. Parameters
    a variant does not use receive exactly zero gradient.
    """
    batch = _as_batch(batch)
    variant = config.variant
    n = len(batch)
    grads = params.zeros_like()

    g_xsh = np.zeros_like(cache.x_sh)
    g_xsp = {ChannelLabel.OFF: np.zeros_like(cache.x_off), ChannelLabel.ON: np.zeros_like(cache.x_on)}
    g_y = np.zeros_like(cache.y)
    y, x_sh = cache.y, cache.x_sh

    if variant.uses_attention_loss:
        n_pos = int(np.count_nonzero(batch.is_positive))
        t_sh, t_sp = attention_targets(batch)
        attn_scale = (config.lambda_attn / n_pos) * batch.is_positive if n_pos else np.zeros(n)

    for channel, cc in cache.channels.items():
        w_c, _ = params.head(channel)
        g_w_c = grads.head(channel)
        dz = (cc.p - batch.labels(channel)) / n

        if variant.separated:
            g_w_c[0][...] += (cc.m_sp * y).T @ dz
            g_w_c[1][...] += dz.sum()
            grads.w_sh += (cc.m_sh * y).T @ dz
            grads.b_sh += dz.sum()

            g_m_sh = dz[:, None] * params.w_sh[None, :] * y
            g_m_sp = dz[:, None] * w_c[None, :] * y
            g_y += dz[:, None] * (params.w_sh[None, :] * cc.m_sh + w_c[None, :] * cc.m_sp)
            g_a_sh = np.sum(g_m_sh * x_sh, axis=1)
            g_a_sp = np.sum(g_m_sp * cc.x_sp, axis=1)
            g_xsh += g_m_sh * cc.a_sh[:, None]
            g_xsp[channel] += g_m_sp * cc.a_sp[:, None]
        else:
            g_w_c[0][...] += (cc.mix * y).T @ dz
            g_w_c[1][...] += dz.sum()

            g_mix = dz[:, None] * w_c[None, :] * y
            g_y += dz[:, None] * w_c[None, :] * cc.mix
            g_a_sh = np.sum(g_mix * x_sh, axis=1)
            g_a_sp = np.sum(g_mix * cc.x_sp, axis=1)
            g_xsh += g_mix * cc.a_sh[:, None]
            g_xsp[channel] += g_mix * cc.a_sp[:, None]

        if not variant.uses_attention:
            continue

        if variant.uses_attention_loss:
            g_a_sh = g_a_sh + attn_scale * 2.0 * (cc.a_sh - t_sh)
            g_a_sp = g_a_sp + attn_scale * 2.0 * (cc.a_sp - t_sp)

        # a_sh = sigmoid(l_sh - l_sp), a_sp = 1 - a_sh
        g_delta = (g_a_sh - g_a_sp) * cc.a_sh * cc.a_sp
        g_logit = (g_delta / math.sqrt(params.d_prime))[:, None]
        g_q = g_logit * (cc.k_sh - cc.k_sp)
        g_k_sh = g_logit * cc.q
        g_k_sp = -g_logit * cc.q

        WQ, _ = params.query(channel)
        WK, _ = params.key(channel)
        g_WQ, g_bQ = grads.query(channel)
        g_WK, g_bK = grads.key(channel)

        g_zq = g_q * (cc.zq > 0)
        g_WQ += y.T @ g_zq
        g_bQ += g_zq.sum(axis=0)
        g_y += g_zq @ WQ.T

        g_zk_sh = g_k_sh * (cc.zk_sh > 0)
        g_zk_sp = g_k_sp * (cc.zk_sp > 0)
        g_WK += x_sh.T @ g_zk_sh + cc.x_sp.T @ g_zk_sp
        g_bK += g_zk_sh.sum(axis=0) + g_zk_sp.sum(axis=0)
        g_xsh += g_zk_sh @ WK.T
        g_xsp[channel] += g_zk_sp @ WK.T

    if variant.uses_classifier:
        targets = np.stack([batch.label_off, batch.label_on], axis=1)
        g_z3 = config.lambda_cls * (cache.o_hat - targets) / n
        grads.C3 += cache.h2.T @ g_z3
        grads.c3 += g_z3.sum(axis=0)
        g_z2 = (g_z3 @ params.C3.T) * (cache.z2 > 0)
        grads.C2 += cache.h1.T @ g_z2
        grads.c2 += g_z2.sum(axis=0)
        g_z1 = (g_z2 @ params.C2.T) * (cache.z1 > 0)
        grads.C1 += cache.inter.T @ g_z1
        grads.c1 += g_z1.sum(axis=0)
        g_inter = g_z1 @ params.C1.T
        d = params.Y.shape[1]
        g_xu = g_inter[:, :d]
        g_y += g_inter[:, d:]
        g_xsh += g_xu
        g_xsp[ChannelLabel.OFF] += g_xu
        g_xsp[ChannelLabel.ON] += g_xu

    np.add.at(grads.X_sh, cache.users, g_xsh)
    np.add.at(grads.X_off, cache.users, g_xsp[ChannelLabel.OFF])
    np.add.at(grads.X_on, cache.users, g_xsp[ChannelLabel.ON])
    np.add.at(grads.Y, cache.items, g_y)
    return grads


# ---------------------------------------------------------------------------
# ranking
# ---------------------------------------------------------------------------

class ModelScorer:
    """
    Scores many items for one (user, channel) at once.

    Returns pre-sigmoid logits; the sigmoid is strictly increasing so the
    ranking is the same. Item-side projections are computed once.

    Example:
        >>> scorer = ModelScorer(params, config)
        >>> logits = scorer(3, np.arange(params.n_items), ChannelLabel.ON)
    """

    def __init__(self, params: Parameters, config: ModelConfig):
        self.params = params
        self.config = config
        self._queries: Dict[ChannelLabel, np.ndarray] = {}
        if config.variant.uses_attention:
            for channel in CHANNELS:
                WQ, bQ = params.query(channel)
                self._queries[channel] = relu(params.Y @ WQ + bQ)

    def attention(self, user: int, channel: ChannelLabel) -> Tuple[np.ndarray, np.ndarray]:
        """``(a_sh, a_sp)`` of ``user`` in ``channel`` for every item."""
        n_items = self.params.n_items
        if not self.config.variant.uses_attention:
            return np.full(n_items, 0.5), np.full(n_items, 0.5)
        WK, bK = self.params.key(channel)
        k_sh = relu(self.params.X_sh[user] @ WK + bK)
        k_sp = relu(self.params.specific(channel)[user] @ WK + bK)
        q = self._queries[channel]
        scale = math.sqrt(self.params.d_prime)
        a_sh = sigmoid((q @ k_sh - q @ k_sp) / scale)
        return a_sh, 1.0 - a_sh

    def score_all(self, user: int, channel: ChannelLabel) -> np.ndarray:
        params = self.params
        x_sh = params.X_sh[user]
        x_sp = params.specific(channel)[user]
        w_c, b_c = params.head(channel)
        a_sh, a_sp = self.attention(user, channel)
        if self.config.variant.separated:
            return (
                a_sh * (params.Y @ (x_sh * params.w_sh)) + params.b_sh[0]
                + a_sp * (params.Y @ (x_sp * w_c)) + b_c[0]
            )
        return a_sh * (params.Y @ (x_sh * w_c)) + a_sp * (params.Y @ (x_sp * w_c)) + b_c[0]

    def __call__(self, user: int, items: np.ndarray, channel: ChannelLabel) -> np.ndarray:
        return self.score_all(user, channel)[np.asarray(items, dtype=np.int64)]
