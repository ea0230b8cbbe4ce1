"""File formats: network streams, attribute matrices, checkpoints, metrics, charts.

Every writer goes through :func:`atomic_write`, so an interrupted run leaves at
most a ``.partial`` file behind. Floats are written with ``repr`` (shortest
round-trip form), which makes every text format lossless and locale-free.
"""

from __future__ import annotations

import contextlib
import csv
import json
import os
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from modmon.core import AttributedSnapshot, DynamicNetwork
from modmon.dmon import DmonModel, TrainConfig
from modmon.errors import DimensionMismatch, ParseError, VersionMismatch
from modmon.spm import EwmaChart, MonitorResult

FORMAT_VERSION = 1
NETWORK_FORMAT = "modmon-network"
CHECKPOINT_FORMAT = "modmon-checkpoint"
ATTRIBUTE_FORMAT = "modmon-attributes"

CHART_COLUMNS = ("phase", "step", "score", "ewma", "lower", "upper", "alarm")


@contextlib.contextmanager
def atomic_write(path, newline=None):
    """Write text to ``path + '.partial'`` and rename on success."""
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    partial = path.with_name(path.name + ".partial")
    with open(partial, "w", encoding="utf-8", newline=newline) as fh:
        yield fh
    os.replace(partial, path)


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def _check_version(record: dict, expected_format: str, line=None):
    if record.get("format") != expected_format:
        raise ParseError(f"not a {expected_format} file (format={record.get('format')!r})", line)
    if record.get("version") != FORMAT_VERSION:
        raise VersionMismatch(
            f"{expected_format} version {record.get('version')!r} is not supported "
            f"(expected {FORMAT_VERSION})"
        )


def snapshot_to_record(snapshot: AttributedSnapshot) -> dict:
    upper = sp.triu(snapshot.adjacency, format="coo")
    order = np.lexsort((upper.col, upper.row))
    edges = [
        [int(u), int(v), float(w)]
        for u, v, w in zip(upper.row[order], upper.col[order], upper.data[order])
    ]
    return {
        "t": snapshot.t,
        "n": snapshot.n,
        "edges": edges,
        "attributes": snapshot.attributes.tolist(),
        "labels": None if snapshot.labels is None else snapshot.labels.tolist(),
    }


def record_to_snapshot(record: dict, attribute_dim: int) -> AttributedSnapshot:
    n = int(record["n"])
    edges = record["edges"]
    if edges:
        u, v, w = (np.asarray(col) for col in zip(*edges))
        u, v, w = u.astype(np.int64), v.astype(np.int64), w.astype(np.float64)
        if (u > v).any():
            raise ValueError("edges must be listed with u <= v")
        off = u != v
        rows = np.concatenate([u, v[off]])
        cols = np.concatenate([v, u[off]])
        data = np.concatenate([w, w[off]])
    else:
        rows = cols = np.empty(0, dtype=np.int64)
        data = np.empty(0)
    adjacency = sp.csr_array((data, (rows, cols)), shape=(n, n))
    attributes = np.asarray(record["attributes"], dtype=np.float64).reshape(n, attribute_dim)
    return AttributedSnapshot(
        t=record["t"], adjacency=adjacency, attributes=attributes, labels=record.get("labels")
    )


def write_network(network: DynamicNetwork, path) -> Path:
    """Newline-delimited JSON: one header line, then one line per snapshot."""
    header = {
        "format": NETWORK_FORMAT,
        "version": FORMAT_VERSION,
        "attribute_dim": network.attribute_dim,
        "changepoint": network.changepoint,
        "phase1_len": network.phase1_len,
        "snapshots": len(network),
        "metadata": network.metadata,
    }
    with atomic_write(path) as fh:
        fh.write(_dumps(header) + "\n")
        for snap in network:
            fh.write(_dumps(snapshot_to_record(snap)) + "\n")
    return Path(path)


def read_network(path) -> DynamicNetwork:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError("file is empty, expected a header record", 1)
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed header: {exc.msg}", 1) from exc
    if not isinstance(header, dict):
        raise ParseError("header must be an object", 1)
    _check_version(header, NETWORK_FORMAT, 1)
    try:
        count = int(header["snapshots"])
        s = int(header["attribute_dim"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad header field: {exc}", 1) from exc
    body = lines[1:]
    if len(body) < count:
        raise ParseError(
            f"expected {count} snapshot records, file ends after {len(body)}", len(body) + 2
        )
    if len(body) > count:
        raise ParseError(f"unexpected record beyond the declared {count} snapshots", count + 2)
    snapshots = []
    for lineno, line in enumerate(body, start=2):
        try:
            snapshots.append(record_to_snapshot(json.loads(line), s))
        except json.JSONDecodeError as exc:
            raise ParseError(f"malformed snapshot record: {exc.msg}", lineno) from exc
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"invalid snapshot record: {exc}", lineno) from exc
    return DynamicNetwork(
        snapshots=tuple(snapshots),
        attribute_dim=s,
        changepoint=header.get("changepoint"),
        phase1_len=header.get("phase1_len"),
        metadata=header.get("metadata") or {},
    )


def write_attribute_matrix(matrix: np.ndarray, path) -> Path:
    """Header line ``modmon-attributes <version> <n> <s>``, then one row per line."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise DimensionMismatch("attribute matrix must be two-dimensional")
    n, s = matrix.shape
    with atomic_write(path) as fh:
        fh.write(f"{ATTRIBUTE_FORMAT} {FORMAT_VERSION} {n} {s}\n")
        for row in matrix:
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")
    return Path(path)


def load_attribute_matrix(path, expected_n: Optional[int] = None, expected_s: Optional[int] = None) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        lines = [line for line in fh.read().split("\n") if line.strip()]
    if not lines:
        raise ParseError("empty attribute file", 1)
    head = lines[0].split()
    if len(head) != 4 or head[0] != ATTRIBUTE_FORMAT:
        raise ParseError(f"expected header '{ATTRIBUTE_FORMAT} <version> <n> <s>'", 1)
    try:
        version, n, s = int(head[1]), int(head[2]), int(head[3])
    except ValueError as exc:
        raise ParseError(f"non-integer header field: {exc}", 1) from exc
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"attribute format version {version} is not supported")
    if (expected_n is not None and n != expected_n) or (expected_s is not None and s != expected_s):
        raise DimensionMismatch(f"file declares {n}x{s}, expected {expected_n}x{expected_s}")
    rows = lines[1:]
    if len(rows) != n:
        raise DimensionMismatch(f"file declares {n} rows but contains {len(rows)}")
    out = np.empty((n, s))
    for i, line in enumerate(rows):
        fields = line.split()
        if len(fields) != s:
            raise DimensionMismatch(f"line {i + 2}: expected {s} values, found {len(fields)}")
        try:
            out[i] = [float(x) for x in fields]
        except ValueError as exc:
            raise ParseError(str(exc), i + 2) from exc
    return out


def write_checkpoint(model: DmonModel, config: TrainConfig, path, metadata: Optional[dict] = None) -> Path:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": FORMAT_VERSION,
        "attribute_dim": model.attribute_dim,
        "hidden_dim": model.hidden_dim,
        "n_clusters": model.k,
        "activation": model.activation,
        "train_config": config.to_dict(),
        "metadata": metadata or {},
        "weights": {name: value.tolist() for name, value in model.params().items()},
    }
    with atomic_write(path) as fh:
        fh.write(json.dumps(doc, sort_keys=True, indent=1, allow_nan=False) + "\n")
    return Path(path)


def read_checkpoint(path):
    """Return ``(model, train_config, metadata)``."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed checkpoint: {exc.msg}", exc.lineno) from exc
    _check_version(doc, CHECKPOINT_FORMAT)
    try:
        weights = doc["weights"]
        s, h, k = doc["attribute_dim"], doc["hidden_dim"], doc["n_clusters"]
        model = DmonModel(
            w_conv=np.asarray(weights["w_conv"], dtype=np.float64).reshape(s, h),
            w_skip=np.asarray(weights["w_skip"], dtype=np.float64).reshape(s, h),
            w_out=np.asarray(weights["w_out"], dtype=np.float64).reshape(h, k),
            activation=doc["activation"],
        )
        config = TrainConfig(**doc["train_config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"invalid checkpoint: {exc}") from exc
    return model, config, doc.get("metadata", {})


def _csv_value(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return x


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    with atomic_write(path, newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_csv_value(x) for x in row])
    return Path(path)


def write_loss_trace(trace: Sequence[float], path) -> Path:
    return write_csv(path, ("epoch", "mean_loss"), ((i + 1, float(v)) for i, v in enumerate(trace)))


METRIC_COLUMNS = (
    "label",
    "replications",
    "detection_percentage",
    "conditional_expected_delay",
    "avg_pct_over_threshold",
    "base_seed",
)
RECORD_COLUMNS = (
    "label",
    "replication",
    "first_alarm",
    "n_alarms",
    "pct_over_threshold",
    "mu_hat",
    "sigma_hat",
)


def write_metrics(rows: Sequence[tuple], path, base_seed: int) -> Path:
    """``rows`` are ``(label, ExperimentMetrics)`` pairs. Undefined delay is left empty."""
    return write_csv(
        path,
        METRIC_COLUMNS,
        (
            (
                label,
                len(m.records),
                float(m.detection_percentage),
                None if m.conditional_expected_delay is None else float(m.conditional_expected_delay),
                float(m.avg_pct_over_threshold),
                base_seed,
            )
            for label, m in rows
        ),
    )


def write_records(rows: Sequence[tuple], path) -> Path:
    out = []
    for label, metrics in rows:
        for rec in metrics.records:
            res = rec.result
            out.append(
                (
                    label,
                    rec.replication_id,
                    res.first_alarm,
                    len(res.alarm_indices),
                    len(res.alarm_indices) / res.steps if res.steps else 0.0,
                    float(rec.chart.mu_hat),
                    float(rec.chart.sigma_hat),
                )
            )
    return write_csv(path, RECORD_COLUMNS, out)


def chart_table(result: MonitorResult, phase1_scores: Sequence[float], phase2_scores: Sequence[float]):
    rows = [("I", i + 1, float(s), None, None, None, 0) for i, s in enumerate(phase1_scores)]
    alarms = set(result.alarm_indices)
    for i, s in enumerate(phase2_scores):
        step = i + 1
        rows.append(
            (
                "II",
                step,
                float(s),
                float(result.z_series[i]),
                float(result.lower[i]),
                float(result.upper[i]),
                int(step in alarms),
            )
        )
    return rows


def read_chart_table(path):
    """Inverse of the companion CSV: ``(phase1_scores, phase2_scores, MonitorResult)``."""
    p1, p2, z, lo, hi, alarms = [], [], [], [], [], []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != CHART_COLUMNS:
            raise ParseError(f"unexpected chart table header {header}", 1)
        for lineno, row in enumerate(reader, start=2):
            try:
                phase, step, score = row[0], int(row[1]), float(row[2])
                if phase == "I":
                    p1.append(score)
                elif phase == "II":
                    p2.append(score)
                    z.append(float(row[3]))
                    lo.append(float(row[4]))
                    hi.append(float(row[5]))
                    if int(row[6]):
                        alarms.append(step)
                else:
                    raise ValueError(f"unknown phase {phase!r}")
            except (ValueError, IndexError) as exc:
                raise ParseError(str(exc), lineno) from exc
    result = MonitorResult(
        z_series=np.asarray(z),
        lower=np.asarray(lo),
        upper=np.asarray(hi),
        alarm_indices=tuple(alarms),
        first_alarm=alarms[0] if alarms else None,
    )
    return np.asarray(p1), np.asarray(p2), result


def render_control_chart(
    result: MonitorResult,
    chart: EwmaChart,
    phase1_scores: Sequence[float],
    path,
    phase2_scores: Optional[Sequence[float]] = None,
    title: Optional[str] = None,
):
    """Write an SVG control chart and a CSV of the plotted series next to it.

    Returns ``(svg_path, csv_path)``. Alarm markers live in the SVG group with
    id ``alarms``.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    path = Path(path)
    csv_path = path.with_suffix(".csv")
    phase1_scores = np.asarray(phase1_scores, dtype=np.float64)
    if phase2_scores is None:
        phase2_scores = np.full(result.steps, np.nan)
    write_csv(csv_path, CHART_COLUMNS, chart_table(result, phase1_scores, phase2_scores))

    m = phase1_scores.size
    x1 = np.arange(1, m + 1)
    x2 = m + np.arange(1, result.steps + 1)
    with matplotlib.rc_context({"svg.hashsalt": "modmon", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(8, 4))
        ax.plot(x1, phase1_scores, color="0.4", marker=".", lw=1, label="Phase I score")
        if result.steps:
            ax.plot(x2, result.z_series, color="tab:blue", marker=".", lw=1, label="EWMA")
            ax.plot(x2, result.upper, color="tab:red", ls="--", lw=1, label="control limits")
            ax.plot(x2, result.lower, color="tab:red", ls="--", lw=1)
        ax.axhline(chart.mu_hat, color="0.6", lw=0.8)
        ax.axvline(m + 0.5, color="k", ls=":", lw=1, label="changepoint")
        if result.alarm_indices:
            idx = np.asarray(result.alarm_indices) - 1
            ax.scatter(x2[idx], result.z_series[idx], color="tab:red", zorder=3,
                       label="alarm", gid="alarms")
        ax.set_xlabel("snapshot")
        ax.set_ylabel("modularity")
        ax.set_title(title or f"EWMA control chart (alpha = {chart.alpha:g})")
        ax.legend(loc="best", fontsize="small")
        fig.tight_layout()
        with atomic_write(path) as fh:
            fig.savefig(fh, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path, csv_path
