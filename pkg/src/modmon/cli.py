"""Command-line entry points.

Exit codes: 0 success, 1 usage or configuration error, 2 data error (missing or
malformed input), 3 numeric failure (empty graph, degenerate chart, ...).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from modmon import config as cfgmod
from modmon import dmon, harness, io, spm
from modmon.dcsbm import ChangeType, generate_dynamic_network
from modmon.errors import ConfigError, DataError, ModmonError
from modmon.numerics.rng import RngStream

log = logging.getLogger("modmon")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text):
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {exc}") from exc


def _ints(text):
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {exc}") from exc


def _global_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config file (flags override its values)")
    common.add_argument("--seed", type=int, help="random seed; overrides the config file")
    common.add_argument("--out", type=Path, help="output path or prefix")
    common.add_argument("--alpha", type=float, help="EWMA smoothing constant (default 0.2)")
    common.add_argument("--parallel", type=int, help="worker processes for simulate (default 1)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return common


def _train_flags(p):
    p.add_argument("--epochs", type=int, help="training epochs over Phase I")
    p.add_argument("--lr", type=float, help="Adam learning rate")
    p.add_argument("--clusters", type=int, help="number of communities k in the model")
    p.add_argument("--hidden", type=int, help="hidden width of the graph convolution")
    p.add_argument("--dropout", type=float, help="attribute dropout during training")
    p.add_argument("--regularizer", choices=[r.value for r in dmon.Regularizer],
                   help="collapse penalty added to the loss")


def _scenario_flags(p):
    p.add_argument("--change", choices=[c.value for c in ChangeType], help="injected change type")
    p.add_argument("--n", type=int, help="node count")
    p.add_argument("--k", type=int, help="ground-truth community count")
    p.add_argument("--attribute-dim", type=int, help="attribute dimension s")
    p.add_argument("--phase1", type=int, help="Phase I length")
    p.add_argument("--phase2", type=int, help="Phase II length")
    p.add_argument("--shift-step", type=int, help="Lambda shift for structural_shift")


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    parser = _Parser(prog="modmon", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", parents=[common], help="simulate one dynamic network")
    _scenario_flags(p)

    p = sub.add_parser("train", parents=[common], help="train on a network's Phase I")
    p.add_argument("network", type=Path)
    _train_flags(p)

    p = sub.add_parser("monitor", parents=[common], help="score, fit the chart, monitor Phase II")
    p.add_argument("network", type=Path)
    p.add_argument("checkpoint", type=Path)

    p = sub.add_parser("simulate", parents=[common], help="replicated experiment, grid or no-change study")
    _scenario_flags(p)
    _train_flags(p)
    p.add_argument("--replications", type=int, help="replications N")
    p.add_argument("--mode", choices=cfgmod.MODES, help="experiment kind")
    p.add_argument("--grid", action="store_true", help="shorthand for --mode grid")

    p = sub.add_parser("tune", parents=[common], help="holdout search over k, learning rate, dropout")
    p.add_argument("network", type=Path)
    _train_flags(p)
    p.add_argument("--grid-k", type=_ints, help="comma-separated k values")
    p.add_argument("--grid-lr", type=_floats, help="comma-separated learning rates")
    p.add_argument("--grid-dropout", type=_floats, help="comma-separated dropout rates")

    p = sub.add_parser("chart", parents=[common], help="re-render an SVG from monitor output")
    p.add_argument("prefix", type=Path, help="prefix given to 'monitor --out'")
    return parser


def _overrides(args) -> dict:
    get = lambda name: getattr(args, name, None)  # noqa: E731
    return {
        "scenario": {
            "change": get("change"),
            "n": get("n"),
            "k": get("k"),
            "attribute_dim": get("attribute_dim"),
            "phase1_len": get("phase1"),
            "phase2_len": get("phase2"),
            "shift_step": get("shift_step"),
        },
        "train": {
            "epochs": get("epochs"),
            "learning_rate": get("lr"),
            "n_clusters": get("clusters"),
            "hidden_dim": get("hidden"),
            "dropout": get("dropout"),
            "regularizer": get("regularizer"),
        },
        "monitor": {"alpha": get("alpha")},
        "experiment": {
            "replications": get("replications"),
            "parallel": get("parallel"),
            "mode": "grid" if get("grid") else get("mode"),
        },
        "tune": {
            "n_clusters": get("grid_k"),
            "learning_rate": get("grid_lr"),
            "dropout": get("grid_dropout"),
        },
    }


def _require_out(args) -> Path:
    if args.out is None:
        raise ConfigError(f"{args.command} needs --out")
    return args.out


def _sibling(path: Path, suffix: str) -> Path:
    return path.with_name(path.name + suffix)


def _read_network(path):
    if not Path(path).exists():
        raise DataError(f"network file not found: {path}")
    return io.read_network(path)


def cmd_generate(args, run: cfgmod.RunConfig) -> int:
    out = _require_out(args)
    seed = args.seed if args.seed is not None else run.base_seed
    network = generate_dynamic_network(run.scenario, RngStream(seed, 0).child("network"))
    spec = run.scenario
    network = replace(network, metadata={"seed": seed, "scenario": run.raw.get("scenario", {}),
                                         "change": spec.change.value})
    io.write_network(network, out)
    p1 = sorted({s.n for s in network.phase1})
    p2 = sorted({s.n for s in network.phase2})
    print(f"wrote {out}: {len(network)} snapshots, seed {seed}")
    print(f"  change: {spec.change.value}; changepoint: {network.changepoint}")
    print(f"  nodes per snapshot: Phase I {p1}, Phase II {p2}")
    return EXIT_OK


def cmd_train(args, run: cfgmod.RunConfig) -> int:
    out = _require_out(args)
    network = _read_network(args.network)
    train = run.train if args.seed is None else replace(run.train, seed=args.seed)
    rng = RngStream(train.seed)
    model = dmon.init_model(network.attribute_dim, train, rng.child("init"))
    model, trace = dmon.train_phase1(model, network.phase1, train, rng.child("dropout"))
    meta = {"seed": train.seed, "network": str(args.network), "phase1_len": network.phase1_len}
    io.write_checkpoint(model, train, out, meta)
    loss_path = out.with_name(out.stem + "_loss.csv")
    io.write_loss_trace(trace, loss_path)
    final = f"{trace[-1]:.6f}" if trace else "n/a"
    print(f"wrote {out} and {loss_path}: {train.epochs} epochs on {network.phase1_len} "
          f"Phase I snapshots, seed {train.seed}, final loss {final}")
    return EXIT_OK


def _summary(chart: spm.EwmaChart, result: spm.MonitorResult, extra: dict) -> dict:
    return {
        "alpha": chart.alpha,
        "mu_hat": chart.mu_hat,
        "sigma_hat": chart.sigma_hat,
        "z0": chart.z0,
        "first_alarm": result.first_alarm,
        "n_alarms": len(result.alarm_indices),
        "alarm_indices": list(result.alarm_indices),
        **extra,
    }


def cmd_monitor(args, run: cfgmod.RunConfig) -> int:
    prefix = _require_out(args)
    network = _read_network(args.network)
    if not Path(args.checkpoint).exists():
        raise DataError(f"checkpoint not found: {args.checkpoint}")
    model, train, meta = io.read_checkpoint(args.checkpoint)
    phase1 = np.array([dmon.score(model, snap) for snap in network.phase1])
    phase2 = np.array([dmon.score(model, snap) for snap in network.phase2])
    chart = spm.fit_phase1(phase1, run.alpha)
    result = spm.monitor(chart, phase2)
    svg, table = io.render_control_chart(result, chart, phase1, _sibling(prefix, ".svg"), phase2)
    summary = _summary(chart, result, {"seed": meta.get("seed"), "phase1_len": len(phase1),
                                       "phase2_len": len(phase2)})
    summary_path = _sibling(prefix, "_summary.json")
    with io.atomic_write(summary_path) as fh:
        fh.write(json.dumps(summary, sort_keys=True, indent=1) + "\n")
    print(f"alpha {chart.alpha:g}; Phase I mean {chart.mu_hat:.6f}, sd {chart.sigma_hat:.6f}")
    first = "none" if result.first_alarm is None else f"Phase II step {result.first_alarm}"
    print(f"alarms: {len(result.alarm_indices)} of {result.steps}; first alarm: {first}")
    print(f"wrote {svg}, {table}, {summary_path}")
    return EXIT_OK


def _format_metrics(label, m: harness.ExperimentMetrics) -> str:
    ced = "undefined" if m.conditional_expected_delay is None else f"{m.conditional_expected_delay:.3f}"
    return (f"{label:<18} {m.detection_percentage:>9.3f} {ced:>9} "
            f"{m.avg_pct_over_threshold:>9.3f}")


def cmd_simulate(args, run: cfgmod.RunConfig) -> int:
    out = _require_out(args)
    if args.seed is not None:
        run.base_seed = args.seed
    exp = run.experiment()
    if run.mode == "grid":
        base = replace(exp, scenario=replace(exp.scenario, change=ChangeType.NONE))
        rows = [(f"step_{step}", m) for step, m in harness.structural_grid(base, run.grid_steps)]
    elif run.mode == "no_change":
        rows = [("no_change", harness.no_change_experiment(exp))]
    else:
        rows = [(exp.scenario.change.value, harness.run_experiment(exp))]
    io.write_metrics(rows, out, run.base_seed)
    runs_path = out.with_name(out.stem + "_runs.csv")
    io.write_records(rows, runs_path)
    print(f"{'scenario':<18} {'detect':>9} {'CED':>9} {'over':>9}")
    for label, m in rows:
        print(_format_metrics(label, m))
    print(f"N = {exp.replications}, alpha = {exp.alpha:g}, base seed {run.base_seed}; "
          f"wrote {out} and {runs_path}")
    return EXIT_OK


def cmd_tune(args, run: cfgmod.RunConfig) -> int:
    prefix = _require_out(args)
    network = _read_network(args.network)
    base = run.train if args.seed is None else replace(run.train, seed=args.seed)
    res = harness.tune_hyperparameters(network.phase1, run.tune, base, run.alpha)
    for cfg, q in res.table:
        print(f"k={cfg.n_clusters:<3} lr={cfg.learning_rate:<8g} dropout={cfg.dropout:<4g} holdout Q={q:.6f}")
    best = res.config
    print(f"selected k={best.n_clusters}, lr={best.learning_rate:g}, dropout={best.dropout:g} "
          f"(holdout modularity {res.holdout_score:.6f})")
    config_path = _sibling(prefix, "_config.json")
    model_path = _sibling(prefix, "_model.json")
    doc = {
        "train": best.to_dict(),
        "holdout_modularity": res.holdout_score,
        "chart": {"alpha": res.chart.alpha, "mu_hat": res.chart.mu_hat, "sigma_hat": res.chart.sigma_hat},
        "grid": [dict(cfg.to_dict(), holdout_modularity=q) for cfg, q in res.table],
    }
    with io.atomic_write(config_path) as fh:
        fh.write(json.dumps(doc, sort_keys=True, indent=1) + "\n")
    io.write_checkpoint(res.model, best, model_path, {"seed": best.seed, "network": str(args.network)})
    print(f"wrote {config_path} and {model_path}")
    return EXIT_OK


def cmd_chart(args, run: cfgmod.RunConfig) -> int:
    prefix = args.prefix
    table = _sibling(prefix, ".csv")
    summary_path = _sibling(prefix, "_summary.json")
    for path in (table, summary_path):
        if not path.exists():
            raise DataError(f"missing monitor output: {path}")
    with open(summary_path, encoding="utf-8") as fh:
        summary = json.load(fh)
    chart = spm.EwmaChart(summary["alpha"], summary["mu_hat"], summary["sigma_hat"], summary["z0"])
    phase1, phase2, result = io.read_chart_table(table)
    out = args.out or _sibling(prefix, ".svg")
    if out.suffix != ".svg":
        out = _sibling(out, ".svg")
    svg, csv_path = io.render_control_chart(result, chart, phase1, out, phase2)
    print(f"wrote {svg} and {csv_path}")
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "monitor": cmd_monitor,
    "simulate": cmd_simulate,
    "tune": cmd_tune,
    "chart": cmd_chart,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        run = cfgmod.load(args.config, _overrides(args))
        return COMMANDS[args.command](args, run)
    except ModmonError as exc:
        print(f"modmon {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"modmon {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
