"""Graph snapshot containers and exact modularity arithmetic."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from modmon.errors import DimensionMismatch, EmptyGraph, InvalidSnapshot

SYMMETRY_TOL = 1e-12
ROW_SUM_TOL = 1e-9
ORACLE_TOL = 1e-10


def _as_csr(adjacency) -> sp.csr_array:
    if sp.issparse(adjacency):
        mat = sp.csr_array(adjacency, dtype=np.float64)
    else:
        dense = np.asarray(adjacency, dtype=np.float64)
        if dense.ndim != 2 or dense.shape[0] != dense.shape[1]:
            raise InvalidSnapshot(f"adjacency must be square, got shape {dense.shape}")
        mat = sp.csr_array(dense)
    mat.sum_duplicates()
    mat.eliminate_zeros()
    mat.sort_indices()
    return mat


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class AttributedSnapshot:
    """One timestamped graph with node attributes.

    ``adjacency`` is stored as a CSR matrix; dense input is converted. The
    diagonal is kept as given and counts once toward the degree.
    """

    t: int
    adjacency: sp.csr_array
    attributes: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        adj = _as_csr(self.adjacency)
        n = adj.shape[0]
        if adj.nnz and adj.data.min() < 0:
            raise InvalidSnapshot("adjacency has negative weights")
        asym = abs(adj - adj.T)
        if asym.nnz and asym.max() > SYMMETRY_TOL:
            raise InvalidSnapshot("adjacency is not symmetric")
        attrs = np.array(self.attributes, dtype=np.float64)
        if attrs.ndim == 1 and n == 0:
            attrs = attrs.reshape(0, 0)
        if attrs.ndim != 2 or attrs.shape[0] != n:
            raise DimensionMismatch(
                f"attributes have shape {attrs.shape}, expected {n} rows"
            )
        labels = None
        if self.labels is not None:
            labels = np.array(self.labels, dtype=np.int64)
            if labels.shape != (n,):
                raise DimensionMismatch(f"labels must have length {n}")
            if n and labels.min() < 0:
                raise InvalidSnapshot("labels must be nonnegative community ids")
            labels = _frozen(labels)
        object.__setattr__(self, "t", int(self.t))
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "attributes", _frozen(attrs))
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def attribute_dim(self) -> int:
        return self.attributes.shape[1]

    def dense_adjacency(self) -> np.ndarray:
        return self.adjacency.toarray()


@dataclass(frozen=True, eq=False)
class DynamicNetwork:
    """Ordered sequence of snapshots sharing one attribute dimension.

    ``changepoint`` is the index (into ``snapshots``) of the first
    post-change snapshot, or None. ``phase1_len`` splits the sequence into
    Phase I and Phase II; it defaults to the changepoint, or to the whole
    sequence when there is neither.
    """

    snapshots: tuple
    attribute_dim: int
    changepoint: Optional[int] = None
    phase1_len: Optional[int] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        snaps = tuple(self.snapshots)
        for prev, cur in zip(snaps, snaps[1:]):
            if cur.t <= prev.t:
                raise InvalidSnapshot(
                    f"timestamps must increase strictly ({prev.t} then {cur.t})"
                )
        for snap in snaps:
            if snap.attribute_dim != self.attribute_dim:
                raise DimensionMismatch(
                    f"snapshot t={snap.t} has attribute dim {snap.attribute_dim}, "
                    f"expected {self.attribute_dim}"
                )
        if self.changepoint is not None and not 0 <= self.changepoint <= len(snaps):
            raise InvalidSnapshot(f"changepoint {self.changepoint} out of range")
        cut = self.phase1_len
        if cut is None:
            cut = len(snaps) if self.changepoint is None else self.changepoint
        if not 0 <= cut <= len(snaps):
            raise InvalidSnapshot(f"phase1_len {cut} out of range")
        object.__setattr__(self, "snapshots", snaps)
        object.__setattr__(self, "phase1_len", int(cut))

    def __len__(self):
        return len(self.snapshots)

    def __iter__(self):
        return iter(self.snapshots)

    def __getitem__(self, idx):
        return self.snapshots[idx]

    @property
    def phase1(self) -> tuple:
        return self.snapshots[: self.phase1_len]

    @property
    def phase2(self) -> tuple:
        return self.snapshots[self.phase1_len :]


@dataclass(frozen=True, eq=False)
class SoftAssignment:
    """Row-stochastic n x k community membership matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=np.float64)
        if mat.ndim != 2 or mat.shape[1] < 2:
            raise DimensionMismatch(f"assignment must be n x k with k >= 2, got {mat.shape}")
        if mat.size and (mat.min() < 0 or mat.max() > 1):
            raise InvalidSnapshot("assignment entries must lie in [0, 1]")
        if mat.shape[0] and np.max(np.abs(mat.sum(axis=1) - 1.0)) > ROW_SUM_TOL:
            raise InvalidSnapshot("assignment rows must sum to 1")
        object.__setattr__(self, "matrix", _frozen(mat))

    @classmethod
    def from_labels(cls, labels: Sequence[int], k: Optional[int] = None) -> "SoftAssignment":
        labels = np.asarray(labels, dtype=np.int64)
        if k is None:
            k = max(int(labels.max()) + 1 if labels.size else 0, 2)
        onehot = np.zeros((labels.size, k))
        onehot[np.arange(labels.size), labels] = 1.0
        return cls(onehot)

    @classmethod
    def uniform(cls, n: int, k: int) -> "SoftAssignment":
        return cls(np.full((n, k), 1.0 / k))

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def k(self) -> int:
        return self.matrix.shape[1]

    def hard_labels(self) -> np.ndarray:
        return np.argmax(self.matrix, axis=1)


@dataclass(frozen=True)
class DegreeSummary:
    degrees: np.ndarray
    total_weight: float


def degree_summary(snapshot: AttributedSnapshot) -> DegreeSummary:
    degrees = np.asarray(snapshot.adjacency.sum(axis=1), dtype=np.float64).ravel()
    return DegreeSummary(degrees=_frozen(degrees), total_weight=float(degrees.sum()) / 2.0)


def normalized_adjacency(snapshot: AttributedSnapshot) -> sp.csr_array:
    """Symmetric degree normalization D^-1/2 A D^-1/2.

    Zero-degree nodes get all-zero rows and columns.
    """
    degrees = degree_summary(snapshot).degrees
    inv_sqrt = np.zeros_like(degrees)
    nz = degrees > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(degrees[nz])
    scale = sp.diags_array(inv_sqrt)
    return sp.csr_array(scale @ snapshot.adjacency @ scale)


def _require_edges(summary: DegreeSummary) -> float:
    w = summary.total_weight
    if not w > 0:
        raise EmptyGraph("modularity is undefined for a graph with no edge weight")
    return w


def modularity_pairwise(snapshot: AttributedSnapshot, labels: Sequence[int]) -> float:
    """Modularity of a hard labeling, summed over all ordered node pairs.

    Evaluated per community: sum of within-community weight minus the squared
    community degree total over 2w.
    """
    summary = degree_summary(snapshot)
    w = _require_edges(summary)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (snapshot.n,):
        raise DimensionMismatch(f"labels must have length {snapshot.n}")
    _, comm = np.unique(labels, return_inverse=True)
    coo = snapshot.adjacency.tocoo()
    same = comm[coo.row] == comm[coo.col]
    internal = float(coo.data[same].sum())
    degree_totals = np.bincount(comm, weights=summary.degrees)
    expected = float(degree_totals @ degree_totals) / (2.0 * w)
    return (internal - expected) / (2.0 * w)


def modularity_soft(snapshot: AttributedSnapshot, assignment) -> float:
    """Spectral modularity (1/2w) Tr(C^T B C) of a soft assignment.

    The degree outer product is never formed; its contribution is the squared
    norm of d^T C.
    """
    matrix = assignment.matrix if isinstance(assignment, SoftAssignment) else np.asarray(assignment)
    if matrix.shape[0] != snapshot.n:
        raise DimensionMismatch(
            f"assignment has {matrix.shape[0]} rows, snapshot has {snapshot.n} nodes"
        )
    summary = degree_summary(snapshot)
    w = _require_edges(summary)
    observed = float(np.sum(matrix * (snapshot.adjacency @ matrix)))
    pooled = summary.degrees @ matrix
    return (observed - float(pooled @ pooled) / (2.0 * w)) / (2.0 * w)


def modularity_hard(snapshot: AttributedSnapshot, assignment: SoftAssignment) -> float:
    """Modularity of the argmax projection of a soft assignment."""
    return modularity_pairwise(snapshot, assignment.hard_labels())
