"""Experiment configuration as flat ``key = value`` text.

Every key is a field of :class:`ExperimentConfig`; its type comes from the
field annotation and its documentation from ``FIELD_DOCS``.  Unknown keys
are rejected.  Tuples are written comma-separated.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .net import NetworkConfig


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    # network and optimiser
    input_dim: int = 2
    hidden_dims: tuple = (64,)
    num_classes: int = 3
    embedding: str = "rbf"
    activation: str = "relu"
    rbf_width: float = 4.0
    seed: int = 0
    learning_rate: float = 0.004
    momentum: float = 0.9
    batch_size: int = 128
    epochs: int = 300
    lambda_reg: float = 1.0
    lambda_kl_max: float = 0.05
    kl_warmup_fraction: float = 0.5
    # data
    dataset: str = "generated"
    samples_per_class: int = 500
    train_fraction: float = 0.8
    probe_radius: float = 30.0
    probe_count: int = 500
    output_dir: str = "runs/default"
    # evaluation
    belief_threshold: float = 0.5
    fgsm_epsilons: tuple = (0.0, 0.25, 0.5, 1.0, 2.0, 4.0)
    grid_min: float = -20.0
    grid_max: float = 20.0
    grid_resolution: int = 200

    def network(self) -> NetworkConfig:
        names = {f.name for f in fields(NetworkConfig)}
        return NetworkConfig(**{k: v for k, v in dataclasses.asdict(self).items() if k in names})

    def validate(self) -> "ExperimentConfig":
        try:
            self.network()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.dataset != "generated" and not Path(self.dataset).is_file():
            raise ConfigError(f"dataset file {self.dataset!r} does not exist")
        if self.samples_per_class < 1:
            raise ConfigError("samples_per_class must be >= 1")
        if not 0.0 < self.train_fraction <= 1.0:
            raise ConfigError("train_fraction must lie in (0, 1]")
        if not 0.0 <= self.belief_threshold <= 1.0:
            raise ConfigError("belief_threshold must lie in [0, 1]")
        if any(e < 0 for e in self.fgsm_epsilons):
            raise ConfigError("fgsm_epsilons must be >= 0")
        if self.grid_resolution < 2 or not self.grid_min < self.grid_max:
            raise ConfigError("grid needs resolution >= 2 and grid_min < grid_max")
        if self.probe_count < 0:
            raise ConfigError("probe_count must be >= 0")
        return self


FIELD_DOCS = {
    "input_dim": "number of input features",
    "hidden_dims": "hidden layer widths; the rbf embedding takes one entry (its unit count)",
    "num_classes": "number of known classes K",
    "embedding": "feature embedding: rbf or mlp",
    "activation": "mlp activation: relu or tanh",
    "rbf_width": "initial length scale of every rbf unit",
    "seed": "seed for data generation, splitting, initialisation and shuffling",
    "learning_rate": "SGD step size",
    "momentum": "SGD momentum coefficient",
    "batch_size": "minibatch size",
    "epochs": "passes over the training set",
    "lambda_reg": "weight of the plausibility regulariser (0 disables it)",
    "lambda_kl_max": "final weight of the KL term",
    "kl_warmup_fraction": "fraction of training over which the KL weight ramps up linearly",
    "dataset": "'generated' or a path to a delimited dataset file",
    "samples_per_class": "generated samples per class",
    "train_fraction": "share of the data used for training",
    "probe_radius": "radius of the far-field open-set probe circle",
    "probe_count": "number of far-field probes",
    "output_dir": "where every command reads and writes its files",
    "belief_threshold": "set-belief threshold for flexible prediction",
    "fgsm_epsilons": "perturbation sizes for the attack sweep",
    "grid_min": "lower bound of both grid axes",
    "grid_max": "upper bound of both grid axes",
    "grid_resolution": "grid points per axis",
}

_TUPLE_ITEM = {"hidden_dims": int, "fgsm_epsilons": float}


def parse_value(key: str, text: str):
    field = {f.name: f for f in fields(ExperimentConfig)}.get(key)
    if field is None:
        raise ConfigError(f"unknown configuration key {key!r}")
    text = text.strip()
    try:
        if key in _TUPLE_ITEM:
            return tuple(_TUPLE_ITEM[key](v) for v in text.split(",") if v.strip())
        kind = {"int": int, "float": float, "str": str}[field.type]
        return kind(text)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {text!r} ({exc})") from exc


def format_value(value) -> str:
    if isinstance(value, tuple):
        return ",".join(format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config_text(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    cfg = dataclasses.replace(base) if base is not None else ExperimentConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        setattr(cfg, key, parse_value(key, value))
    return cfg


def load_config(path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    return parse_config_text(Path(path).read_text(), base)


def dump_config(cfg: ExperimentConfig) -> str:
    lines = []
    for f in fields(cfg):
        lines.append(f"# {FIELD_DOCS[f.name]}")
        lines.append(f"{f.name} = {format_value(getattr(cfg, f.name))}")
    return "\n".join(lines) + "\n"
