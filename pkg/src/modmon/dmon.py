"""Deep modularity network: soft community assignments from a one-layer GCN.

The network maps (normalized adjacency, attributes) to a row-stochastic
assignment via ``softmax(selu(Â X W_conv + X W_skip) W_out)`` and is trained to
maximize spectral modularity plus a collapse penalty.
"""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, replace
from typing import Optional, Sequence

import numpy as np

from modmon.core import (
    AttributedSnapshot,
    SoftAssignment,
    degree_summary,
    modularity_soft,
    normalized_adjacency,
)
from modmon.errors import ConfigError, DimensionMismatch, EmptyGraph, NumericError
from modmon.numerics import autodiff as ad
from modmon.numerics.rng import RngStream

ACTIVATION = "selu"
PARAM_NAMES = ("w_conv", "w_skip", "w_out")


class Regularizer(str, enum.Enum):
    SRCO = "srco"
    CR = "cr"
    NONE = "none"


@dataclass(frozen=True)
class TrainConfig:
    n_clusters: int = 4
    hidden_dim: int = 64
    learning_rate: float = 1e-3
    epochs: int = 200
    regularizer: Regularizer = Regularizer.SRCO
    reg_weight: float = 1.0
    dropout: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "regularizer", Regularizer(self.regularizer))
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.epochs < 0:
            raise ConfigError("epochs must be nonnegative")
        if self.n_clusters < 2:
            raise ConfigError("n_clusters must be at least 2")
        if self.hidden_dim < 1:
            raise ConfigError("hidden_dim must be positive")
        if not 0 <= self.dropout < 1:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.reg_weight < 0:
            raise ConfigError("reg_weight must be nonnegative")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["regularizer"] = self.regularizer.value
        return out


@dataclass(frozen=True, eq=False)
class DmonModel:
    w_conv: np.ndarray
    w_skip: np.ndarray
    w_out: np.ndarray
    activation: str = ACTIVATION

    def __post_init__(self):
        for name in PARAM_NAMES:
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        s, h = self.w_conv.shape
        if self.w_skip.shape != (s, h) or self.w_out.shape[0] != h:
            raise DimensionMismatch("inconsistent weight shapes")
        if self.k < 2:
            raise DimensionMismatch("model needs at least two communities")
        if self.activation != ACTIVATION:
            raise ConfigError(f"unsupported activation {self.activation!r}")

    @property
    def attribute_dim(self) -> int:
        return self.w_conv.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.w_conv.shape[1]

    @property
    def k(self) -> int:
        return self.w_out.shape[1]

    def params(self) -> dict:
        return {name: np.array(getattr(self, name)) for name in PARAM_NAMES}

    @classmethod
    def from_params(cls, params: dict) -> "DmonModel":
        return cls(**{name: params[name] for name in PARAM_NAMES})

    @classmethod
    def zeros(cls, s: int, h: int, k: int) -> "DmonModel":
        return cls(np.zeros((s, h)), np.zeros((s, h)), np.zeros((h, k)))


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_model(attribute_dim: int, config: TrainConfig, rng: Optional[RngStream] = None) -> DmonModel:
    rng = rng or RngStream(config.seed).child("init")
    gen = rng.generator
    s, h, k = attribute_dim, config.hidden_dim, config.n_clusters
    return DmonModel(_glorot(gen, s, h), _glorot(gen, s, h), _glorot(gen, h, k))


class _Prepared:
    """Per-snapshot constants reused across training steps."""

    __slots__ = ("snapshot", "norm_adj", "attributes", "propagated", "degrees", "two_w")

    def __init__(self, snapshot: AttributedSnapshot):
        summary = degree_summary(snapshot)
        if not summary.total_weight > 0:
            raise EmptyGraph(f"snapshot t={snapshot.t} has no edges")
        self.snapshot = snapshot
        self.norm_adj = normalized_adjacency(snapshot)
        self.attributes = snapshot.attributes
        self.propagated = self.norm_adj @ self.attributes
        self.degrees = summary.degrees.reshape(1, -1)
        self.two_w = 2.0 * summary.total_weight


def _check_dims(model: DmonModel, snapshot: AttributedSnapshot):
    if snapshot.attribute_dim != model.attribute_dim:
        raise DimensionMismatch(
            f"snapshot has attribute dim {snapshot.attribute_dim}, model expects {model.attribute_dim}"
        )


def _assign(p, norm_adj, attributes, propagated):
    hidden = ad.selu(ad.matmul(propagated, p["w_conv"]) + ad.matmul(attributes, p["w_skip"]))
    return ad.softmax(ad.matmul(hidden, p["w_out"]), axis=1)


def _modularity_term(assign, adjacency, degrees, two_w):
    observed = ad.sum(assign * ad.matmul(adjacency, assign))
    pooled = ad.matmul(degrees, assign)
    return (observed - ad.sum(pooled * pooled) / two_w) / two_w


def srco_term(assign):
    n = assign.shape[0]
    return ad.norm(ad.sum(ad.sqrt(assign), axis=0)) / np.sqrt(n) - 1.0


def cr_term(assign):
    n, k = assign.shape
    return ad.norm(ad.sum(assign, axis=0)) * (np.sqrt(k) / n) - 1.0


_REGULARIZERS = {Regularizer.SRCO: srco_term, Regularizer.CR: cr_term}


def _loss_program(prep: _Prepared, config: TrainConfig, mask: Optional[np.ndarray] = None):
    attributes, propagated = prep.attributes, prep.propagated
    if mask is not None:
        attributes = attributes * mask
        propagated = prep.norm_adj @ attributes
    reg = _REGULARIZERS.get(config.regularizer)

    def program(p):
        assign = _assign(p, prep.norm_adj, attributes, propagated)
        loss = -_modularity_term(assign, prep.snapshot.adjacency, prep.degrees, prep.two_w)
        if reg is not None and config.reg_weight:
            loss = loss + config.reg_weight * reg(assign)
        return loss

    return program


def loss_program(snapshot: AttributedSnapshot, config: TrainConfig):
    """The full training loss as a program over the parameter dict (no dropout)."""
    return _loss_program(_Prepared(snapshot), config)


def forward(model: DmonModel, snapshot: AttributedSnapshot) -> SoftAssignment:
    _check_dims(model, snapshot)
    norm_adj = normalized_adjacency(snapshot)
    p = {name: ad.Tensor(v) for name, v in model.params().items()}
    assign = _assign(p, norm_adj, snapshot.attributes, norm_adj @ snapshot.attributes)
    return SoftAssignment(assign.value)


def collapse_regularizer(assignment: SoftAssignment) -> float:
    """(sqrt(k)/n) * ||column sums|| - 1."""
    return float(cr_term(ad.Tensor(assignment.matrix)).value)


def srco(assignment: SoftAssignment) -> float:
    """(1/sqrt(n)) * ||column sums of the elementwise square root|| - 1."""
    return float(srco_term(ad.Tensor(assignment.matrix)).value)


def dmon_loss(model: DmonModel, snapshot: AttributedSnapshot, config: TrainConfig) -> float:
    _check_dims(model, snapshot)
    return ad.evaluate(loss_program(snapshot, config), model.params())


def score(model: DmonModel, snapshot: AttributedSnapshot) -> float:
    """Soft modularity of the frozen model's assignment on ``snapshot``."""
    return modularity_soft(snapshot, forward(model, snapshot))


@dataclass
class _Adam:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, params: dict, grads: dict):
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for name, g in grads.items():
            m = self.m.get(name, 0.0) * self.beta1 + (1.0 - self.beta1) * g
            v = self.v.get(name, 0.0) * self.beta2 + (1.0 - self.beta2) * g * g
            self.m[name], self.v[name] = m, v
            params[name] = params[name] - self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def train_phase1(
    model: DmonModel,
    snapshots: Sequence[AttributedSnapshot],
    config: TrainConfig,
    rng: Optional[RngStream] = None,
):
    """One Adam step per snapshot, snapshots in temporal order, for each epoch.

    Returns the trained model and the mean loss of every epoch.
    """
    if not snapshots:
        raise ConfigError("training needs at least one snapshot")
    for snap in snapshots:
        _check_dims(model, snap)
    if config.epochs == 0:
        return model, []
    prepared = [_Prepared(snap) for snap in snapshots]
    plain = [_loss_program(prep, config) for prep in prepared]
    dropout_gen = (rng or RngStream(config.seed).child("dropout")).generator
    keep = 1.0 - config.dropout

    params = model.params()
    optimizer = _Adam(config.learning_rate)
    trace = []
    for _ in range(config.epochs):
        total = 0.0
        for prep, program in zip(prepared, plain):
            if config.dropout > 0:
                mask = (dropout_gen.random(prep.attributes.shape) < keep) / keep
                program = _loss_program(prep, config, mask)
            value, grads = ad.gradient(program, params)
            if not np.isfinite(value):
                raise NumericError(f"non-finite loss at snapshot t={prep.snapshot.t}")
            optimizer.step(params, grads)
            total += value
        trace.append(total / len(prepared))
    return replace(model, **params), trace
