import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modmon.core import (
    AttributedSnapshot,
    DynamicNetwork,
    SoftAssignment,
    degree_summary,
    modularity_hard,
    modularity_pairwise,
    modularity_soft,
    normalized_adjacency,
)
from modmon.errors import DimensionMismatch, EmptyGraph, InvalidSnapshot

from conftest import brute_force_modularity, dense_trace_modularity, random_graph, snapshot_from


def test_degree_summary_triangle(triangle):
    summary = degree_summary(triangle)
    np.testing.assert_array_equal(summary.degrees, [2, 2, 2])
    assert summary.total_weight == 3


def test_degree_summary_empty():
    summary = degree_summary(snapshot_from(np.zeros((4, 4))))
    np.testing.assert_array_equal(summary.degrees, [0, 0, 0, 0])
    assert summary.total_weight == 0


def test_degree_summary_weighted_edge():
    summary = degree_summary(snapshot_from(np.array([[0.0, 2.0], [2.0, 0.0]])))
    np.testing.assert_array_equal(summary.degrees, [2, 2])
    assert summary.total_weight == 2


def test_normalized_adjacency_triangle(triangle):
    norm = normalized_adjacency(triangle).toarray()
    np.testing.assert_allclose(norm, (np.ones((3, 3)) - np.eye(3)) / 2)


def test_normalized_adjacency_isolated_node():
    norm = normalized_adjacency(snapshot_from(np.zeros((1, 1)))).toarray()
    np.testing.assert_array_equal(norm, [[0.0]])


def test_normalized_adjacency_path():
    A = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=float)
    norm = normalized_adjacency(snapshot_from(A)).toarray()
    assert norm[0, 1] == pytest.approx(1 / np.sqrt(2))
    assert norm[1, 2] == pytest.approx(1 / np.sqrt(2))
    assert norm[0, 2] == 0


def test_normalized_adjacency_spectral_radius():
    rng = np.random.default_rng(1)
    for _ in range(20):
        A = random_graph(rng, int(rng.integers(2, 15)))
        A[0, :] = A[:, 0] = 0  # an isolate too
        norm = normalized_adjacency(snapshot_from(A)).toarray()
        np.testing.assert_allclose(norm, norm.T, atol=1e-15)
        assert np.max(np.abs(np.linalg.eigvalsh(norm))) <= 1 + 1e-12


def test_single_community_is_zero(triangle):
    assert modularity_pairwise(triangle, [0, 0, 0]) == pytest.approx(0, abs=1e-12)


def test_two_triangles(two_triangles):
    # each triangle: internal weight 6, degree total 6, 2w = 12 -> 2 * (6 - 3) / 12
    assert modularity_pairwise(two_triangles, two_triangles.labels) == pytest.approx(0.5, abs=1e-12)


def test_triangle_split_labeling_matches_brute_force(triangle):
    labels = [0, 0, 1]
    q = modularity_pairwise(triangle, labels)
    assert q < 0
    assert q == pytest.approx(brute_force_modularity(triangle.dense_adjacency(), labels), abs=1e-12)
    # internal 2 - (16 + 4)/6 over 6
    assert q == pytest.approx(-2 / 9, abs=1e-12)


def test_empty_graph_raises():
    snap = snapshot_from(np.zeros((3, 3)))
    with pytest.raises(EmptyGraph):
        modularity_pairwise(snap, [0, 1, 0])
    with pytest.raises(EmptyGraph):
        modularity_soft(snap, SoftAssignment.uniform(3, 2))


def test_soft_matches_pairwise_on_one_hot(two_triangles):
    labels = [0, 1, 0, 1, 1, 0]
    q_soft = modularity_soft(two_triangles, SoftAssignment.from_labels(labels))
    assert q_soft == pytest.approx(modularity_pairwise(two_triangles, labels), abs=1e-10)


def test_uniform_assignment_is_zero():
    rng = np.random.default_rng(2)
    for k in (2, 3, 5):
        snap = snapshot_from(random_graph(rng, 9))
        assert modularity_soft(snap, SoftAssignment.uniform(9, k)) == pytest.approx(0, abs=1e-12)


def test_soft_matches_dense_oracle():
    rng = np.random.default_rng(3)
    A = random_graph(rng, 8)
    C = rng.dirichlet(np.ones(3), size=8)
    snap = snapshot_from(A)
    assert modularity_soft(snap, SoftAssignment(C)) == pytest.approx(
        dense_trace_modularity(A, C), abs=1e-10
    )


def test_self_loops_keep_forms_equal():
    rng = np.random.default_rng(4)
    A = random_graph(rng, 7, self_loops=True)
    labels = rng.integers(0, 3, size=7)
    snap = snapshot_from(A)
    q = modularity_pairwise(snap, labels)
    assert q == pytest.approx(brute_force_modularity(A, labels), abs=1e-12)
    assert modularity_soft(snap, SoftAssignment.from_labels(labels, 3)) == pytest.approx(q, abs=1e-10)


def test_hard_modularity_uses_argmax(two_triangles):
    C = np.array([[0.9, 0.1]] * 3 + [[0.2, 0.8]] * 3)
    assert modularity_hard(two_triangles, SoftAssignment(C)) == pytest.approx(0.5)


graphs = st.integers(min_value=2, max_value=10).flatmap(
    lambda n: st.tuples(
        st.just(n),
        st.integers(min_value=0, max_value=2**32 - 1),
        st.lists(st.integers(0, 3), min_size=n, max_size=n),
    )
)


@settings(max_examples=60, deadline=None)
@given(graphs)
def test_modularity_properties(case):
    n, seed, labels = case
    rng = np.random.default_rng(seed)
    A = random_graph(rng, n, self_loops=bool(seed % 2))
    snap = snapshot_from(A)
    q = modularity_pairwise(snap, labels)
    assert -1 <= q <= 1
    assert q == pytest.approx(modularity_soft(snap, SoftAssignment.from_labels(labels, 4)), abs=1e-10)
    perm = rng.permutation(n)
    permuted = snapshot_from(A[np.ix_(perm, perm)])
    relabel = rng.permutation(4)
    plabels = relabel[np.asarray(labels)[perm]]
    assert modularity_pairwise(permuted, plabels) == pytest.approx(q, abs=1e-12)
    assert modularity_soft(permuted, SoftAssignment.from_labels(plabels, 4)) == pytest.approx(q, abs=1e-12)


def test_snapshot_validation():
    with pytest.raises(InvalidSnapshot):
        snapshot_from(np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(InvalidSnapshot):
        snapshot_from(np.array([[0.0, -1.0], [-1.0, 0.0]]))
    with pytest.raises(DimensionMismatch):
        AttributedSnapshot(0, np.zeros((3, 3)), np.zeros((2, 4)))
    snap = snapshot_from(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        snap.attributes[0, 0] = 1.0


def test_soft_assignment_validation():
    with pytest.raises(InvalidSnapshot):
        SoftAssignment(np.array([[0.5, 0.6]]))
    with pytest.raises(DimensionMismatch):
        SoftAssignment(np.ones((3, 1)))
    SoftAssignment(np.array([[0.5, 0.5 + 5e-10]]))


def test_dynamic_network_invariants():
    a = snapshot_from(np.zeros((2, 2)), s=3, t=0)
    b = snapshot_from(np.zeros((4, 4)), s=3, t=1)
    net = DynamicNetwork((a, b), attribute_dim=3, changepoint=1)
    assert net.phase1 == (a,) and net.phase2 == (b,)
    with pytest.raises(InvalidSnapshot):
        DynamicNetwork((b, a), attribute_dim=3)
    with pytest.raises(DimensionMismatch):
        DynamicNetwork((a, snapshot_from(np.zeros((2, 2)), s=2, t=5)), attribute_dim=3)
    no_change = DynamicNetwork((a, b), attribute_dim=3, phase1_len=1)
    assert no_change.changepoint is None and len(no_change.phase2) == 1
