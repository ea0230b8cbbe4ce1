"""JSON run configuration with strict key checking.

A config file is a JSON object with up to five sections::

    {
      "scenario":   {"n": 200, "k": 4, "intra": 18, "inter": 2, "attribute_dim": 16,
                     "phase1_len": 20, "phase2_len": 20, "change": "split", ...},
      "train":      {"n_clusters": 4, "hidden_dim": 64, "learning_rate": 0.01,
                     "epochs": 30, "regularizer": "srco", "reg_weight": 1.0,
                     "dropout": 0.0, "seed": 0},
      "monitor":    {"alpha": 0.2},
      "experiment": {"replications": 20, "base_seed": 0, "parallel": 1,
                     "mode": "experiment", "grid_steps": [1, 2, 3, 4, 5, 6, 7, 8]},
      "tune":       {"n_clusters": [2, 4, 8, 16], "learning_rate": [0.01, 0.001],
                     "dropout": [0.0, 0.5]}
    }

Unknown sections or keys are rejected. Command-line flags are applied on top
of the file (flags win), and anything left unset takes the library default.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from modmon.dcsbm import ChangeType, DcsbmConfig, Density, ScenarioSpec, block_matrix
from modmon.dmon import Regularizer, TrainConfig
from modmon.errors import ConfigError
from modmon.harness import GRID_STEPS, ExperimentConfig, TuneGrid
from modmon.spm import DEFAULT_ALPHA

SCENARIO_KEYS = {
    "n", "k", "intra", "inter", "lam", "community_sizes", "theta_lower", "theta_upper",
    "theta_exponent", "density", "keep_self_loops", "attribute_dim", "phase1_len",
    "phase2_len", "change", "shift_step", "drift_every", "new_fraction",
}
TRAIN_KEYS = {f.name for f in fields(TrainConfig)}
MONITOR_KEYS = {"alpha"}
EXPERIMENT_KEYS = {"replications", "base_seed", "parallel", "mode", "grid_steps"}
TUNE_KEYS = {"n_clusters", "learning_rate", "dropout"}
SECTIONS = {
    "scenario": SCENARIO_KEYS,
    "train": TRAIN_KEYS,
    "monitor": MONITOR_KEYS,
    "experiment": EXPERIMENT_KEYS,
    "tune": TUNE_KEYS,
}
MODES = ("experiment", "grid", "no_change")


@dataclass
class RunConfig:
    scenario: ScenarioSpec
    train: TrainConfig
    alpha: float = DEFAULT_ALPHA
    replications: int = 100
    base_seed: int = 0
    parallel: int = 1
    mode: str = "experiment"
    grid_steps: tuple = GRID_STEPS
    tune: TuneGrid = field(default_factory=TuneGrid)
    raw: dict = field(default_factory=dict)

    def experiment(self) -> ExperimentConfig:
        return ExperimentConfig(
            scenario=self.scenario,
            replications=self.replications,
            alpha=self.alpha,
            train=self.train,
            base_seed=self.base_seed,
            parallel=self.parallel,
        )


def read_config_file(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    validate_keys(raw)
    return raw


def validate_keys(raw: dict):
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    for section, body in raw.items():
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section {section!r}")
        if not isinstance(body, dict):
            raise ConfigError(f"section {section!r} must be an object")
        unknown = set(body) - SECTIONS[section]
        if unknown:
            raise ConfigError(f"unknown key(s) in {section!r}: {', '.join(sorted(unknown))}")


def merge(raw: dict, overrides: dict) -> dict:
    """Overlay ``{section: {key: value}}``; None values are ignored."""
    out = {section: dict(body) for section, body in raw.items()}
    for section, body in overrides.items():
        for key, value in body.items():
            if value is not None:
                out.setdefault(section, {})[key] = value
    validate_keys(out)
    return out


def _scenario(body: dict) -> ScenarioSpec:
    body = dict(body)
    n = int(body.pop("n", 1000))
    k = int(body.pop("k", 4))
    intra = float(body.pop("intra", 18.0))
    inter = float(body.pop("inter", 2.0))
    lam = body.pop("lam", None)
    lam = block_matrix(k, intra, inter) if lam is None else np.asarray(lam, dtype=np.float64)
    sizes = body.pop("community_sizes", None)
    base_kw = {key: body.pop(key) for key in ("theta_lower", "theta_upper", "theta_exponent",
                                              "keep_self_loops") if key in body}
    if "density" in body:
        base_kw["density"] = Density(body.pop("density"))
    base = DcsbmConfig(n=n, k=k, community_sizes=None if sizes is None else tuple(sizes), lam=lam, **base_kw)
    if "change" in body:
        body["change"] = ChangeType(body["change"])
    return ScenarioSpec(
        base=base,
        attribute_dim=int(body.pop("attribute_dim", 64)),
        phase1_len=int(body.pop("phase1_len", 50)),
        phase2_len=int(body.pop("phase2_len", 50)),
        **body,
    )


def build(raw: dict) -> RunConfig:
    validate_keys(raw)
    try:
        scenario = _scenario(raw.get("scenario", {}))
        train_body = dict(raw.get("train", {}))
        if "regularizer" in train_body:
            train_body["regularizer"] = Regularizer(train_body["regularizer"])
        train = TrainConfig(**train_body)
        exp = raw.get("experiment", {})
        mode = exp.get("mode", "experiment")
        if mode not in MODES:
            raise ConfigError(f"experiment mode must be one of {MODES}, got {mode!r}")
        tune_body = {key: tuple(value) for key, value in raw.get("tune", {}).items()}
        cfg = RunConfig(
            scenario=scenario,
            train=train,
            alpha=float(raw.get("monitor", {}).get("alpha", DEFAULT_ALPHA)),
            replications=int(exp.get("replications", 100)),
            base_seed=int(exp.get("base_seed", 0)),
            parallel=int(exp.get("parallel", 1)),
            mode=mode,
            grid_steps=tuple(int(s) for s in exp.get("grid_steps", GRID_STEPS)),
            tune=TuneGrid(**tune_body),
            raw=raw,
        )
        cfg.experiment()
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load(path: Optional[Path] = None, overrides: Optional[dict] = None) -> RunConfig:
    raw = read_config_file(path) if path is not None else {}
    return build(merge(raw, overrides or {}))
