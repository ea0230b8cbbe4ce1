import json
import re

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from modmon import io
from modmon.core import DynamicNetwork
from modmon.dcsbm import generate_dynamic_network
from modmon.dmon import TrainConfig, init_model
from modmon.errors import DimensionMismatch, ParseError, VersionMismatch
from modmon.harness import ExperimentMetrics
from modmon.numerics.rng import RngStream
from modmon.spm import EwmaChart, fit_phase1, monitor

from conftest import desk_spec, random_graph, snapshot_from


def assert_same_network(a, b):
    assert len(a) == len(b)
    assert (a.attribute_dim, a.changepoint, a.phase1_len) == (b.attribute_dim, b.changepoint, b.phase1_len)
    for x, y in zip(a, b):
        assert x.t == y.t
        np.testing.assert_array_equal(x.dense_adjacency(), y.dense_adjacency())
        np.testing.assert_array_equal(x.attributes, y.attributes)
        if x.labels is None:
            assert y.labels is None
        else:
            np.testing.assert_array_equal(x.labels, y.labels)


@pytest.fixture(scope="module")
def network():
    spec = desk_spec("split", attribute_dim=3, phase1_len=50, phase2_len=50)
    return generate_dynamic_network(spec, RngStream(0))


class TestNetworkFiles:
    def test_round_trip_100_snapshots(self, network, tmp_path):
        path = io.write_network(network, tmp_path / "net.ndjson")
        assert_same_network(network, io.read_network(path))

    def test_edges_listed_once(self, network, tmp_path):
        path = io.write_network(network, tmp_path / "net.ndjson")
        lines = path.read_text().splitlines()
        record = json.loads(lines[1])
        edges = [(u, v) for u, v, _ in record["edges"]]
        assert all(u <= v for u, v in edges) and len(set(edges)) == len(edges)
        assert len(edges) == network[0].adjacency.nnz // 2

    def test_header(self, network, tmp_path):
        path = io.write_network(network, tmp_path / "net.ndjson")
        header = json.loads(path.read_text().splitlines()[0])
        assert header["format"] == "modmon-network" and header["version"] == 1
        assert header["attribute_dim"] == 3 and header["changepoint"] == 50

    def test_truncated(self, network, tmp_path):
        path = io.write_network(network, tmp_path / "net.ndjson")
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:40]) + "\n")
        with pytest.raises(ParseError, match="line 41"):
            io.read_network(path)

    def test_torn_record(self, network, tmp_path):
        path = io.write_network(network, tmp_path / "net.ndjson")
        lines = path.read_text().splitlines()
        lines[5] = lines[5][: len(lines[5]) // 2]
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ParseError) as info:
            io.read_network(path)
        assert info.value.line == 6

    def test_empty_network(self, tmp_path):
        empty = DynamicNetwork((), attribute_dim=4)
        path = io.write_network(empty, tmp_path / "empty.ndjson")
        assert len(path.read_text().splitlines()) == 1
        back = io.read_network(path)
        assert len(back) == 0 and back.attribute_dim == 4

    def test_version_mismatch(self, tmp_path):
        path = io.write_network(DynamicNetwork((), attribute_dim=2), tmp_path / "v.ndjson")
        path.write_text(path.read_text().replace('"version":1', '"version":2'))
        with pytest.raises(VersionMismatch):
            io.read_network(path)

    def test_wrong_format(self, tmp_path):
        path = tmp_path / "x.ndjson"
        path.write_text('{"format": "other", "version": 1}\n')
        with pytest.raises(ParseError):
            io.read_network(path)

    @settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
    @given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 9), s=st.integers(1, 4), loops=st.booleans())
    def test_random_round_trip(self, tmp_path, seed, n, s, loops):
        rng = np.random.default_rng(seed)
        A = random_graph(rng, n, self_loops=loops) if n > 1 else np.array([[2.0 * loops]])
        A = A * rng.random() * 3.7  # non-integer weights
        snaps = (
            snapshot_from(A, s=s, t=0, rng=rng),
            snapshot_from(A, s=s, t=3, rng=rng, labels=rng.integers(0, 3, size=n)),
        )
        net = DynamicNetwork(snaps, attribute_dim=s, changepoint=1)
        path = io.write_network(net, tmp_path / f"r{seed}.ndjson")
        assert_same_network(net, io.read_network(path))


class TestAttributeMatrix:
    def test_zero_matrix(self, tmp_path):
        path = tmp_path / "z.txt"
        path.write_text("modmon-attributes 1 3 2\n0 0\n0 0\n0 0\n")
        np.testing.assert_array_equal(io.load_attribute_matrix(path, 3, 2), np.zeros((3, 2)))

    def test_missing_rows(self, tmp_path):
        path = io.write_attribute_matrix(np.ones((4, 64)), tmp_path / "m.txt")
        path.write_text(path.read_text().replace("modmon-attributes 1 4 64", "modmon-attributes 1 5 64"))
        with pytest.raises(DimensionMismatch):
            io.load_attribute_matrix(path, 5, 64)

    def test_expected_shape(self, tmp_path):
        path = io.write_attribute_matrix(np.ones((4, 3)), tmp_path / "m.txt")
        with pytest.raises(DimensionMismatch):
            io.load_attribute_matrix(path, 4, 2)

    def test_round_trip_full_precision(self, tmp_path):
        X = np.random.default_rng(0).normal(size=(7, 5)) * 10.0 ** np.arange(-3, 2)
        path = io.write_attribute_matrix(X, tmp_path / "m.txt")
        np.testing.assert_array_equal(io.load_attribute_matrix(path), X)

    def test_bad_value(self, tmp_path):
        path = tmp_path / "m.txt"
        path.write_text("modmon-attributes 1 2 1\n1.0\nabc\n")
        with pytest.raises(ParseError, match="line 3"):
            io.load_attribute_matrix(path)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        cfg = TrainConfig(n_clusters=3, hidden_dim=5, regularizer="cr", dropout=0.5, seed=9)
        model = init_model(4, cfg, RngStream(1))
        path = io.write_checkpoint(model, cfg, tmp_path / "ck.json", {"seed": 9})
        back, back_cfg, meta = io.read_checkpoint(path)
        assert back_cfg == cfg and meta == {"seed": 9}
        for name, value in model.params().items():
            np.testing.assert_array_equal(back.params()[name], value)

    def test_version_mismatch(self, tmp_path):
        cfg = TrainConfig(n_clusters=2, hidden_dim=2)
        path = io.write_checkpoint(init_model(2, cfg), cfg, tmp_path / "ck.json")
        doc = json.loads(path.read_text())
        doc["version"] = 99
        path.write_text(json.dumps(doc))
        with pytest.raises(VersionMismatch):
            io.read_checkpoint(path)


class TestCsv:
    def test_metrics_undefined_delay_is_empty(self, tmp_path):
        m = ExperimentMetrics(0.0, None, 0.0, ())
        path = io.write_metrics([("none", m)], tmp_path / "m.csv", base_seed=3)
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(io.METRIC_COLUMNS)
        assert lines[1] == "none,0,0.0,,0.0,3"

    def test_loss_trace(self, tmp_path):
        path = io.write_loss_trace([0.5, 0.25], tmp_path / "loss.csv")
        assert path.read_text() == "epoch,mean_loss\n1,0.5\n2,0.25\n"


class TestChart:
    def render(self, tmp_path, phase2):
        phase1 = np.array([0.50, 0.52, 0.49, 0.51, 0.50])
        chart = fit_phase1(phase1)
        result = monitor(chart, phase2)
        svg, csv_path = io.render_control_chart(result, chart, phase1, tmp_path / "c.svg", phase2)
        return result, svg, csv_path

    @staticmethod
    def alarm_markers(svg_text):
        block = re.search(r'<g id="alarms">(.*?)</g>\s*</g>', svg_text, re.S)
        if block is None:
            return 0
        return len(re.findall(r"<use ", block.group(1)))

    def test_no_alarms(self, tmp_path):
        _, svg, _ = self.render(tmp_path, [0.50, 0.51, 0.50])
        text = svg.read_text()
        assert 'id="alarms"' not in text and self.alarm_markers(text) == 0

    def test_one_marker_per_alarm(self, tmp_path):
        result, svg, _ = self.render(tmp_path, [0.5, 0.9, 0.9, 0.5, 0.5, 0.5, 0.5, 0.5])
        assert len(result.alarm_indices) >= 2
        assert self.alarm_markers(svg.read_text()) == len(result.alarm_indices)

    def test_companion_table(self, tmp_path):
        result, _, csv_path = self.render(tmp_path, [0.5, 0.9, 0.5])
        lines = csv_path.read_text().splitlines()
        assert lines[0] == ",".join(io.CHART_COLUMNS)
        assert len(lines) - 1 == 5 + 3
        p1, p2, back = io.read_chart_table(csv_path)
        assert back.alarm_indices == result.alarm_indices
        np.testing.assert_array_equal(back.z_series, result.z_series)

    def test_svg_is_reproducible(self, tmp_path):
        _, svg, _ = self.render(tmp_path, [0.5, 0.9, 0.5])
        first = svg.read_bytes()
        _, svg, _ = self.render(tmp_path, [0.5, 0.9, 0.5])
        assert svg.read_bytes() == first


def test_atomic_write_leaves_partial_on_failure(tmp_path):
    target = tmp_path / "out.txt"
    with pytest.raises(RuntimeError):
        with io.atomic_write(target) as fh:
            fh.write("half")
            raise RuntimeError("interrupted")
    assert not target.exists()
    assert (tmp_path / "out.txt.partial").exists()


def test_chart_from_ewma_chart_without_phase2_scores(tmp_path):
    chart = EwmaChart(0.2, 0.5, 0.01, 0.5)
    result = monitor(chart, [0.5, 0.6])
    _, csv_path = io.render_control_chart(result, chart, [0.5, 0.51], tmp_path / "c.svg")
    assert len(csv_path.read_text().splitlines()) == 1 + 2 + 2
