import os

import numpy as np
import pytest

from modmon.core import AttributedSnapshot


def brute_force_modularity(adjacency, labels):
    """Double loop over every ordered node pair, self-pairs included."""
    A = np.asarray(adjacency, dtype=float)
    n = A.shape[0]
    d = A.sum(axis=1)
    two_w = d.sum()
    total = 0.0
    for u in range(n):
        for v in range(n):
            if labels[u] == labels[v]:
                total += A[u, v] - d[u] * d[v] / two_w
    return total / two_w


def dense_trace_modularity(adjacency, assignment):
    """(1/2w) Tr(C^T B C) with the modularity matrix B materialized."""
    A = np.asarray(adjacency, dtype=float)
    d = A.sum(axis=1)
    two_w = d.sum()
    B = A - np.outer(d, d) / two_w
    C = np.asarray(assignment, dtype=float)
    return np.trace(C.T @ B @ C) / two_w


def random_graph(rng, n, p=0.4, max_weight=3, self_loops=False):
    A = np.triu(rng.integers(1, max_weight + 1, size=(n, n)) * (rng.random((n, n)) < p), 1)
    A = (A + A.T).astype(float)
    if self_loops:
        A[np.diag_indices(n)] = rng.integers(0, max_weight + 1, size=n)
    if A.sum() == 0:
        A[0, 1] = A[1, 0] = 1.0
    return A


def snapshot_from(adjacency, s=2, t=0, labels=None, rng=None):
    n = np.asarray(adjacency).shape[0]
    rng = rng or np.random.default_rng(0)
    return AttributedSnapshot(t=t, adjacency=adjacency, attributes=rng.normal(size=(n, s)), labels=labels)


@pytest.fixture
def triangle():
    A = np.ones((3, 3)) - np.eye(3)
    return snapshot_from(A)


@pytest.fixture
def two_triangles():
    A = np.zeros((6, 6))
    for block in (range(3), range(3, 6)):
        for u in block:
            for v in block:
                if u != v:
                    A[u, v] = 1.0
    return snapshot_from(A, labels=[0, 0, 0, 1, 1, 1])


# Desk-scale settings shared by the slower integration tests.
DESK_TRAIN = dict(learning_rate=5e-3, epochs=100)


def desk_spec(change="none", **kw):
    from modmon.dcsbm import DcsbmConfig, ScenarioSpec

    kw.setdefault("attribute_dim", 16)
    kw.setdefault("phase1_len", 20)
    kw.setdefault("phase2_len", 20)
    return ScenarioSpec(base=DcsbmConfig.baseline(n=200, k=4), change=change, **kw)


# Acceptance reporting: tests marked ``criterion(name)`` get one pass/fail line
# in the terminal summary, with whatever they recorded under "measured".
_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion reported in the summary")


def pytest_collection_modifyitems(config, items):
    run_paper = os.environ.get("MODMON_PAPER_SCALE") == "1"
    skip_paper = pytest.mark.skip(reason="set MODMON_PAPER_SCALE=1 to run paper-scale studies")
    for item in items:
        marker = item.get_closest_marker("criterion")
        if marker is not None:
            item.user_properties.append(("criterion", marker.args[0]))
        if "paper_scale" in item.keywords and not run_paper:
            item.add_marker(skip_paper)


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    name = props.get("criterion")
    if name is None:
        return
    entry = _criteria.setdefault(report.nodeid, {"name": name, "outcome": None, "measured": None})
    if "measured" in props:
        entry["measured"] = props["measured"]
    if report.failed:
        entry["outcome"] = "FAIL"
    elif report.when == "call" and entry["outcome"] is None:
        entry["outcome"] = "SKIP" if report.skipped else "PASS"
    elif report.skipped and entry["outcome"] is None:
        entry["outcome"] = "SKIP"


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for entry in _criteria.values():
        line = f"{entry['outcome'] or 'FAIL':<5} {entry['name']}"
        if entry["measured"]:
            line += f"  [{entry['measured']}]"
        terminalreporter.write_line(line)
