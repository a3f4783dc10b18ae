"""``flexrec`` command line: gen, train, eval, grid, attack, predict.

Every subcommand reads and writes inside one output directory.  Settings are
resolved as command-line flag > ``FLEXREC_OUTPUT_DIR`` (output directory
only) > ``--config`` file > built-in default.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__, decision, evaluation, net, sl_core, synth
from .config import FIELD_DOCS, ConfigError, ExperimentConfig, load_config, parse_value

log = logging.getLogger("flexrec")

OUTPUT_ENV = "FLEXREC_OUTPUT_DIR"

# which config keys each subcommand exposes as flags
_NET_KEYS = [f.name for f in fields(net.NetworkConfig)]
_KEYS = {
    "gen": ["seed", "dataset", "samples_per_class", "train_fraction", "probe_radius", "probe_count"],
    "train": _NET_KEYS,
    "eval": ["belief_threshold"],
    "grid": ["grid_min", "grid_max", "grid_resolution"],
    "attack": ["fgsm_epsilons"],
    "predict": ["belief_threshold"],
}

_HELP = {
    "gen": "write train.csv, test.csv and probes.csv",
    "train": "train a model on train.csv; writes model.json and train_log.csv",
    "eval": "closed-set, confusion and open-set report; writes report.kv and sweep.csv",
    "grid": "belief, confusion and ignorance maps over a 2-D grid",
    "attack": "FGSM robustness sweep; writes attack.csv",
    "predict": "flexible predictive sets for a features file; writes predictions.csv",
}


def _fmt(x) -> str:
    return evaluation.fmt(x)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flexrec", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ["gen", "train", "eval", "grid", "attack", "predict"]:
        p = sub.add_parser(name, help=_HELP[name], description=_HELP[name])
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--output-dir", dest="output_dir", help=FIELD_DOCS["output_dir"])
        p.add_argument("-v", "--verbose", action="store_true")
        for key in _KEYS[name]:
            p.add_argument("--" + key.replace("_", "-"), dest=key, metavar="VALUE", help=FIELD_DOCS[key])
        if name in ("eval", "grid", "attack", "predict"):
            p.add_argument("--model", help="model file (default: OUTPUT_DIR/model.json)")
        if name in ("train", "eval", "attack"):
            p.add_argument("--data", help="labelled dataset (default: train.csv for train, test.csv otherwise)")
        if name == "eval":
            p.add_argument("--probes", help="open-set probe features (default: OUTPUT_DIR/probes.csv if present)")
        if name == "predict":
            p.add_argument("--features", required=True, help="features file, with or without a label column")
    return parser


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    env_dir = os.environ.get(OUTPUT_ENV)
    if env_dir:
        cfg.output_dir = env_dir
    if args.output_dir:
        cfg.output_dir = args.output_dir
    for key in _KEYS[args.command]:
        raw = getattr(args, key, None)
        if raw is not None:
            setattr(cfg, key, parse_value(key, raw))
    return cfg.validate()


def _out(cfg: ExperimentConfig) -> Path:
    path = Path(cfg.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _model_path(args, out: Path) -> Path:
    return Path(args.model) if args.model else out / "model.json"


def _write_rows(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def cmd_gen(cfg: ExperimentConfig, args) -> int:
    out = _out(cfg)
    if cfg.dataset == "generated":
        data = synth.gen_gaussian_triplet(cfg.seed, cfg.samples_per_class)
    else:
        data = synth.load_dataset(cfg.dataset)
        if not data.metadata.get("has_labels", True):
            raise ConfigError(f"dataset {cfg.dataset} has no label column")
    train, test = synth.train_test_split(data, cfg.train_fraction, cfg.seed)
    for part, split in (("train", train), ("test", test)):
        split.metadata.update(split=part, train_fraction=cfg.train_fraction)
    synth.save_dataset(train, out / "train.csv")
    synth.save_dataset(test, out / "test.csv")
    if len(test) == 0:
        log.warning("train_fraction %s leaves the test split empty", cfg.train_fraction)
    n_probes = 0
    if cfg.probe_count and data.num_features == 2:
        means = np.array([data.features[data.labels == c].mean(axis=0) for c in np.unique(data.labels)])
        if cfg.dataset == "generated":
            means = synth.triangle_means()
        probes = synth.far_field_probes(means, cfg.probe_radius, cfg.probe_count, cfg.seed + 1)
        synth.save_features(probes, out / "probes.csv")
        n_probes = len(probes)
    print(f"wrote {len(train)} train, {len(test)} test and {n_probes} probe rows to {out}")
    return 0


def cmd_train(cfg: ExperimentConfig, args) -> int:
    out = _out(cfg)
    data = synth.load_dataset(args.data or out / "train.csv")
    netcfg = cfg.network()
    if data.num_features != netcfg.input_dim:
        raise net.DimensionMismatchError(
            f"dataset has {data.num_features} features, input_dim is {netcfg.input_dim}")
    state = net.train(netcfg, data.features, data.labels,
                      progress=lambda r: log.info("epoch %d total %.6g acc %.4f",
                                                  r["epoch"], r["total"], r["train_accuracy"]))
    net.save_model(state, out / "model.json")
    cols = ["epoch", "lambda_kl", "lambda_reg", "edl", "reg", "kl", "total", "train_accuracy"]
    _write_rows(out / "train_log.csv", ["variant"] + cols,
                ([netcfg.variant] + [r[c] for c in cols] for r in state.history))
    final = state.history[-1]["train_accuracy"] if state.history else net.accuracy(state, data.features, data.labels)
    print(f"variant {netcfg.variant}: {state.epoch} epochs, train accuracy {_fmt(final)}")
    return 0


def cmd_eval(cfg: ExperimentConfig, args) -> int:
    out = _out(cfg)
    state = net.load_model(_model_path(args, out))
    data = synth.load_dataset(args.data or out / "test.csv")
    if len(data) == 0:
        raise ValueError("evaluation dataset is empty")
    probes_path = Path(args.probes) if args.probes else out / "probes.csv"
    probes = None
    if probes_path.is_file():
        probes = synth.load_dataset(probes_path).features
    else:
        print(f"notice: no probes at {probes_path}; open-set section skipped", file=sys.stderr)
    report, curve = evaluation.evaluate(state, data, probes, cfg.belief_threshold)
    evaluation.write_kv(report, out / "report.kv")
    _write_rows(out / "sweep.csv", ["cutoff", "avg_predictions", "precision", "recall", "precision_defined"],
                ((p.cutoff, p.avg_predictions, p.precision, p.recall, int(p.precision_defined)) for p in curve))
    for key, value in report.items():
        print(f"{key:28s} {_fmt(value)}")
    return 0


def cmd_grid(cfg: ExperimentConfig, args) -> int:
    out = _out(cfg)
    state = net.load_model(_model_path(args, out))
    if state.config.input_dim != 2:
        raise net.DimensionMismatchError("grid maps need a model with 2-D inputs")
    bounds = ((cfg.grid_min, cfg.grid_max),) * 2
    points = synth.grid_points(bounds, cfg.grid_resolution)
    maps = evaluation.grid_maps(state, points)
    names = {"confusion": "grid_confusion.csv", "ignorance": "grid_ignorance.csv"}
    for key, values in maps.items():
        path = out / names.get(key, f"grid_{key}.csv")
        _write_rows(path, ["x", "y", "value"], zip(points[:, 0], points[:, 1], values))
    print(f"wrote {len(maps)} maps of {len(points)} cells to {out}")
    return 0


def cmd_attack(cfg: ExperimentConfig, args) -> int:
    out = _out(cfg)
    state = net.load_model(_model_path(args, out))
    data = synth.load_dataset(args.data or out / "test.csv")
    rows = evaluation.attack_table(state, data, cfg.fgsm_epsilons)
    _write_rows(out / "attack.csv", ["epsilon", "top1", "top2"], rows)
    for eps, t1, t2 in rows:
        print(f"eps {_fmt(eps):>8s}  top1 {_fmt(t1):>14s}  top2 {_fmt(t2):>14s}")
    return 0


def cmd_predict(cfg: ExperimentConfig, args) -> int:
    out = _out(cfg)
    state = net.load_model(_model_path(args, out))
    x = synth.load_dataset(args.features).features
    pl = net.forward(state, x)
    counts = {m.value: 0 for m in decision.Mode}
    with (out / "predictions.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mode", "classes", "beliefs", "ignorance", "confusion"])
        for row in pl:
            op = sl_core.hyper_opinion(row)
            ps = decision.predict_flexible(op, cfg.belief_threshold)
            counts[ps.mode.value] += 1
            w.writerow([ps.mode.value, " ".join(str(c) for c in ps.classes),
                        " ".join(_fmt(op.beliefs[c]) for c in ps.classes),
                        _fmt(op.ignorance), _fmt(op.total_confusion)])
    print(" ".join(f"{k}={v}" for k, v in counts.items()))
    return 0


COMMANDS = {
    "gen": cmd_gen, "train": cmd_train, "eval": cmd_eval,
    "grid": cmd_grid, "attack": cmd_attack, "predict": cmd_predict,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, net.DivergedTrainingError, net.DimensionMismatchError,
            net.ModelFormatError, OSError, ValueError) as exc:
        print(f"flexrec {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

