"""Degree-corrected stochastic block model with Gaussian-mixture attributes.

Also holds the change injectors (split, merge, new community, attribute drift,
structural shift) and the two-phase scenario generator.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.sparse as sp

from modmon.core import AttributedSnapshot, DynamicNetwork
from modmon.errors import ConfigError, InvalidStep
from modmon.numerics.rng import RngStream, sample_bounded_power_law

CENTER_VARIANCE = 3.0
THETA_TOL = 1e-9


class Density(str, enum.Enum):
    # Poisson mean lambda * theta_u * theta_v times a block-size factor, so
    # lambda reads as an expected per-node degree contribution.
    PER_NODE_DEGREE = "per_node_degree"
    # Poisson mean lambda * theta_u * theta_v exactly; lambda is then the
    # expected total edge weight between two blocks.
    LITERAL = "literal"


class ChangeType(str, enum.Enum):
    NONE = "none"
    SPLIT = "split"
    MERGE = "merge"
    NEW_COMMUNITY = "new_community"
    ATTRIBUTE_DRIFT = "attribute_drift"
    STRUCTURAL_SHIFT = "structural_shift"


@dataclass(frozen=True, eq=False)
class DcsbmConfig:
    n: int = 1000
    k: int = 4
    community_sizes: Optional[tuple] = None
    lam: Optional[np.ndarray] = None
    theta_lower: float = 4.0
    theta_upper: float = 64.0
    theta_exponent: float = 2.0
    density: Density = Density.PER_NODE_DEGREE
    keep_self_loops: bool = False

    def __post_init__(self):
        if self.k < 1 or self.n < self.k:
            raise ConfigError(f"need 1 <= k <= n, got n={self.n}, k={self.k}")
        sizes = self.community_sizes
        if sizes is None:
            base, extra = divmod(self.n, self.k)
            sizes = tuple(base + (1 if r < extra else 0) for r in range(self.k))
        sizes = tuple(int(x) for x in sizes)
        if len(sizes) != self.k or sum(sizes) != self.n or min(sizes) < 1:
            raise ConfigError(f"community sizes {sizes} do not partition n={self.n} into k={self.k}")
        lam = block_matrix(self.k, 18.0, 2.0) if self.lam is None else np.array(self.lam, dtype=np.float64)
        if lam.shape != (self.k, self.k):
            raise ConfigError(f"lambda must be {self.k}x{self.k}")
        if not np.allclose(lam, lam.T, rtol=0, atol=1e-12) or lam.min() < 0:
            raise ConfigError("lambda must be symmetric and nonnegative")
        if not 0 < self.theta_lower < self.theta_upper:
            raise ConfigError("theta bounds must satisfy 0 < lower < upper")
        lam.setflags(write=False)
        object.__setattr__(self, "community_sizes", sizes)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "density", Density(self.density))

    def communities(self) -> np.ndarray:
        return np.repeat(np.arange(self.k), self.community_sizes)

    @classmethod
    def baseline(cls, n: int = 1000, k: int = 4, intra: float = 18.0, inter: float = 2.0, **kw):
        return cls(n=n, k=k, lam=block_matrix(k, intra, inter), **kw)


def block_matrix(k: int, intra: float, inter: float) -> np.ndarray:
    lam = np.full((k, k), float(inter))
    np.fill_diagonal(lam, float(intra))
    return lam


@dataclass(frozen=True, eq=False)
class ThetaVector:
    """Degree propensities normalized to sum to one inside every community."""

    theta: np.ndarray
    communities: np.ndarray

    def block_sums(self) -> np.ndarray:
        return np.bincount(self.communities, weights=self.theta)


def normalize_theta(raw: np.ndarray, communities: np.ndarray) -> ThetaVector:
    raw = np.asarray(raw, dtype=np.float64)
    communities = np.asarray(communities, dtype=np.int64)
    totals = np.bincount(communities, weights=raw)
    return ThetaVector(theta=raw / totals[communities], communities=communities.copy())


def sample_theta(config: DcsbmConfig, rng: RngStream) -> ThetaVector:
    raw = sample_bounded_power_law(
        config.theta_lower, config.theta_upper, config.theta_exponent, rng, size=config.n
    )
    return normalize_theta(raw, config.communities())


def _pair_scale(communities: np.ndarray, k: int, density: Density) -> np.ndarray:
    """Block-level multiplier applied on top of lambda * theta_u * theta_v."""
    if density is Density.LITERAL:
        return np.ones((k, k))
    sizes = np.bincount(communities, minlength=k).astype(np.float64)
    scale = (sizes[:, None] + sizes[None, :]) / 2.0
    np.fill_diagonal(scale, sizes)
    return scale


def sample_graph(
    theta: ThetaVector, config: DcsbmConfig, rng: RngStream, lam: Optional[np.ndarray] = None
) -> sp.csr_array:
    """Poisson edge weights with mean scale * lambda[c_u, c_v] * theta_u * theta_v.

    ``lam`` overrides ``config.lam`` (the block count may have changed).
    Self-pairs follow the doubled-Poisson convention (twice a Poisson draw
    with half the mean) and are dropped unless ``config.keep_self_loops``.
    """
    comm, th = theta.communities, theta.theta
    lam = np.asarray(config.lam if lam is None else lam, dtype=np.float64)
    k = lam.shape[0]
    rates = lam * _pair_scale(comm, k, config.density)
    n = th.size
    gen = rng.generator
    rows, cols = np.triu_indices(n, k=1)
    means = rates[comm[rows], comm[cols]] * th[rows] * th[cols]
    weights = gen.poisson(means)
    loops = 2 * gen.poisson(rates[comm, comm] * th * th / 2.0)
    keep = weights > 0
    rows, cols, weights = rows[keep], cols[keep], weights[keep].astype(np.float64)
    r = np.concatenate([rows, cols])
    c = np.concatenate([cols, rows])
    data = np.concatenate([weights, weights])
    if config.keep_self_loops:
        idx = np.flatnonzero(loops)
        r = np.concatenate([r, idx])
        c = np.concatenate([c, idx])
        data = np.concatenate([data, loops[idx].astype(np.float64)])
    adj = sp.csr_array((data, (r, c)), shape=(n, n))
    adj.sort_indices()
    return adj


@dataclass(frozen=True, eq=False)
class AttributeModel:
    centers: np.ndarray
    within_cluster_variance: float = 1.0

    @property
    def k(self) -> int:
        return self.centers.shape[0]

    @property
    def s(self) -> int:
        return self.centers.shape[1]


def _fresh_centers(rows: int, s: int, rng: RngStream) -> np.ndarray:
    return np.sqrt(CENTER_VARIANCE) * rng.generator.standard_normal((rows, s))


def sample_attribute_centers(k: int, s: int, rng: RngStream) -> AttributeModel:
    """Column j holds a draw from Normal(0, 3 I_k): one center coordinate per community."""
    if k < 1 or s < 1:
        raise ConfigError("need k >= 1 and s >= 1")
    columns = np.sqrt(CENTER_VARIANCE) * rng.generator.standard_normal((s, k))
    return AttributeModel(centers=np.ascontiguousarray(columns.T))


def sample_attributes(communities: np.ndarray, model: AttributeModel, rng: RngStream) -> np.ndarray:
    communities = np.asarray(communities, dtype=np.int64)
    if communities.size and communities.max() >= model.k:
        raise ConfigError("community id exceeds number of centers")
    noise = rng.generator.standard_normal((communities.size, model.s))
    return model.centers[communities] + np.sqrt(model.within_cluster_variance) * noise


@dataclass(frozen=True, eq=False)
class GeneratorState:
    """Everything a snapshot draw depends on.

    ``raw_theta`` keeps the unnormalized propensities so blocks can be
    renormalized after a split or merge.
    """

    communities: np.ndarray
    raw_theta: np.ndarray
    lam: np.ndarray
    attributes: AttributeModel

    @property
    def n(self) -> int:
        return self.communities.size

    @property
    def k(self) -> int:
        return self.lam.shape[0]

    @property
    def theta(self) -> ThetaVector:
        return normalize_theta(self.raw_theta, self.communities)


def _off_diagonal_mean(lam: np.ndarray) -> float:
    k = lam.shape[0]
    if k < 2:
        return 0.0
    return float((lam.sum() - np.trace(lam)) / (k * (k - 1)))


def _grow_lambda(lam: np.ndarray, diagonal: float) -> np.ndarray:
    """Append one block that keeps the intra/inter propensities of the others."""
    k = lam.shape[0]
    inter = _off_diagonal_mean(lam)
    grown = np.full((k + 1, k + 1), inter)
    grown[:k, :k] = lam
    grown[k, k] = diagonal
    return grown


def inject_split(state: GeneratorState, rng: RngStream) -> GeneratorState:
    """Split a random community into two halves, each with a fresh center.

    With an odd size the first half gets the extra node.
    """
    gen = rng.generator
    sizes = np.bincount(state.communities, minlength=state.k)
    eligible = np.flatnonzero(sizes >= 2)
    if eligible.size == 0:
        raise ConfigError("split needs a community with at least two nodes")
    target = int(eligible[gen.integers(eligible.size)])
    members = gen.permutation(np.flatnonzero(state.communities == target))
    first = (members.size + 1) // 2
    communities = state.communities.copy()
    communities[members[first:]] = state.k

    fresh = _fresh_centers(2, state.attributes.s, rng)
    centers = np.vstack([state.attributes.centers, fresh[1:]])
    centers[target] = fresh[0]
    lam = _grow_lambda(state.lam, state.lam[target, target])
    return replace(
        state,
        communities=communities,
        lam=lam,
        attributes=replace(state.attributes, centers=centers),
    )


def inject_merge(state: GeneratorState, rng: RngStream) -> GeneratorState:
    """Merge two random communities; the merged center is the average."""
    if state.k < 2:
        raise ConfigError("merge needs at least two communities")
    pair = np.sort(rng.generator.choice(state.k, size=2, replace=False))
    keep, drop = int(pair[0]), int(pair[1])
    centers = state.attributes.centers.copy()
    centers[keep] = (centers[keep] + centers[drop]) / 2.0
    centers = np.delete(centers, drop, axis=0)
    communities = state.communities.copy()
    communities[communities == drop] = keep
    communities[communities > drop] -= 1
    lam = np.delete(np.delete(state.lam, drop, axis=0), drop, axis=1)
    return replace(
        state,
        communities=communities,
        lam=lam,
        attributes=replace(state.attributes, centers=centers),
    )


def inject_new_community(
    state: GeneratorState, rng: RngStream, config: DcsbmConfig, fraction: float = 0.25
) -> GeneratorState:
    """Append round(fraction * n) nodes forming one new community."""
    added = int(round(fraction * state.n))
    if added < 1:
        raise ConfigError("new community would have no nodes")
    raw = sample_bounded_power_law(
        config.theta_lower, config.theta_upper, config.theta_exponent, rng, size=added
    )
    center = _fresh_centers(1, state.attributes.s, rng)
    diagonal = float(np.mean(np.diag(state.lam)))
    return replace(
        state,
        communities=np.concatenate([state.communities, np.full(added, state.k)]),
        raw_theta=np.concatenate([state.raw_theta, raw]),
        lam=_grow_lambda(state.lam, diagonal),
        attributes=replace(state.attributes, centers=np.vstack([state.attributes.centers, center])),
    )


def apply_attribute_drift(model: AttributeModel, rng: RngStream) -> AttributeModel:
    """Shift every center entry by an independent Uniform(0, 1) draw."""
    tau = rng.generator.random(model.centers.shape)
    return replace(model, centers=model.centers + tau)


def apply_structural_shift(lam: np.ndarray, step: int) -> np.ndarray:
    """Raise every off-diagonal entry by ``step`` and lower the diagonal by ``step``."""
    if step < 0:
        raise InvalidStep(f"step must be nonnegative, got {step}")
    lam = np.array(lam, dtype=np.float64)
    k = lam.shape[0]
    shifted = lam + step
    shifted[np.diag_indices(k)] = np.diag(lam) - step
    if shifted.min() < 0:
        raise InvalidStep(f"step {step} drives lambda negative")
    return shifted


@dataclass(frozen=True, eq=False)
class ScenarioSpec:
    base: DcsbmConfig = field(default_factory=DcsbmConfig.baseline)
    attribute_dim: int = 64
    phase1_len: int = 50
    phase2_len: int = 50
    change: ChangeType = ChangeType.NONE
    shift_step: int = 1
    drift_every: int = 1
    new_fraction: float = 0.25

    def __post_init__(self):
        object.__setattr__(self, "change", ChangeType(self.change))
        if self.attribute_dim < 1:
            raise ConfigError("attribute_dim must be positive")
        if self.phase1_len < 0 or self.phase2_len < 0:
            raise ConfigError("phase lengths must be nonnegative")
        if self.drift_every < 1:
            raise ConfigError("drift_every must be positive")
        if self.change is ChangeType.STRUCTURAL_SHIFT:
            apply_structural_shift(self.base.lam, self.shift_step)

    @property
    def changepoint(self) -> Optional[int]:
        return None if self.change is ChangeType.NONE else self.phase1_len


def initial_state(spec: ScenarioSpec, rng: RngStream) -> GeneratorState:
    config = spec.base
    raw = sample_bounded_power_law(
        config.theta_lower, config.theta_upper, config.theta_exponent, rng.child("theta"), size=config.n
    )
    return GeneratorState(
        communities=config.communities(),
        raw_theta=raw,
        lam=np.array(config.lam),
        attributes=sample_attribute_centers(config.k, spec.attribute_dim, rng.child("centers")),
    )


def draw_snapshot(state: GeneratorState, t: int, config: DcsbmConfig, rng: RngStream) -> AttributedSnapshot:
    adjacency = sample_graph(state.theta, config, rng.child("edges"), lam=state.lam)
    attributes = sample_attributes(state.communities, state.attributes, rng.child("attributes"))
    return AttributedSnapshot(t=t, adjacency=adjacency, attributes=attributes, labels=state.communities)


def generate_dynamic_network(spec: ScenarioSpec, rng: RngStream) -> DynamicNetwork:
    """Phase I snapshots from the base model, then the change, then Phase II.

    Parameters (propensities, centers) are drawn once; every snapshot redraws
    edges and attributes from its own substream, so Phase I is identical
    across change types for the same stream.
    """
    state = initial_state(spec, rng.child("params"))
    config = spec.base
    change_rng = rng.child("change")
    snapshots = [
        draw_snapshot(state, t, config, rng.child("snapshot", t)) for t in range(spec.phase1_len)
    ]

    change = spec.change
    if change is ChangeType.SPLIT:
        state = inject_split(state, change_rng)
    elif change is ChangeType.MERGE:
        state = inject_merge(state, change_rng)
    elif change is ChangeType.NEW_COMMUNITY:
        state = inject_new_community(state, change_rng, config, spec.new_fraction)
    elif change is ChangeType.STRUCTURAL_SHIFT:
        state = replace(state, lam=apply_structural_shift(state.lam, spec.shift_step))

    for i in range(spec.phase2_len):
        if change is ChangeType.ATTRIBUTE_DRIFT and i % spec.drift_every == 0:
            state = replace(state, attributes=apply_attribute_drift(state.attributes, change_rng.child("drift", i)))
        t = spec.phase1_len + i
        snapshots.append(draw_snapshot(state, t, config, rng.child("snapshot", t)))

    return DynamicNetwork(
        snapshots=tuple(snapshots),
        attribute_dim=spec.attribute_dim,
        changepoint=spec.changepoint,
        phase1_len=spec.phase1_len,
    )
