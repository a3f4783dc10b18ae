"""Evaluation protocols shared by the CLI and the acceptance tests."""

from __future__ import annotations

from collections import Counter

import numpy as np

from . import decision, kernels, metrics, net, synth


def fmt(x) -> str:
    """12 significant digits for floats, plain text otherwise."""
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".12g")
    return str(x)


def opinion_arrays(state, features):
    """Plausibilities plus batch beliefs, ignorance and confusion."""
    pl = net.forward(state, np.atleast_2d(features))
    beliefs, ign, unc = kernels.opinion_batch(pl)
    return pl, beliefs, ign, np.maximum(unc - ign, 0.0)


def closed_set_report(state, data: synth.LabeledDataset, belief_threshold: float):
    pl = net.forward(state, data.features)
    preds = np.argmax(pl, axis=1)
    opinions = decision.opinions_from_pl(pl)
    report = {
        "n_closed": len(data),
        "accuracy": net.accuracy(state, data.features, data.labels, top=1),
        "top2_accuracy": net.accuracy(state, data.features, data.labels, top=2),
    }
    wrong = np.flatnonzero(preds != data.labels)
    report["n_misclassified"] = int(wrong.size)
    curve = []
    if wrong.size:
        wrong_ops = [opinions[i] for i in wrong]
        try:
            report["weighted_confusion_auroc"] = metrics.weighted_confusion_auroc(
                wrong_ops, preds[wrong], data.labels[wrong])
        except metrics.UndefinedMetricError as exc:
            report["weighted_confusion_auroc"] = f"undefined ({exc})"
        curve = decision.ranking_sweep(wrong_ops, preds[wrong], data.labels[wrong])
        at_one = next(p for p in curve if p.avg_predictions >= 1.0)
        report["sweep_precision_at_1"] = at_one.precision
        report["sweep_recall_at_1"] = at_one.recall
        report["sweep_recall_final"] = curve[-1].recall

    sets = [decision.predict_flexible(op, belief_threshold) for op in opinions]
    modes = Counter(s.mode.value for s in sets)
    accepted = [(s, t) for s, t in zip(sets, data.labels) if s.mode is not decision.Mode.REJECTED]
    report["flex_threshold"] = belief_threshold
    for m in decision.Mode:
        report[f"flex_{m.value}_fraction"] = modes.get(m.value, 0) / len(sets) if sets else 0.0
    report["flex_mean_set_size"] = float(np.mean([len(s) for s, _ in accepted])) if accepted else 0.0
    report["flex_coverage"] = (sum(int(t) in s for s, t in accepted) / len(accepted)) if accepted else 0.0
    return report, curve


def open_set_report(state, closed: synth.LabeledDataset, probes: np.ndarray, k: int):
    """Ignorance as the open-set score; threshold at 95% closed-set acceptance."""
    _, _, ign_closed, _ = opinion_arrays(state, closed.features)
    pl_probe, _, ign_open, _ = opinion_arrays(state, probes)
    scores = np.r_[ign_closed, ign_open]
    is_open = np.r_[np.zeros(len(ign_closed), bool), np.ones(len(ign_open), bool)]
    data = metrics.ScoredBinary(scores, is_open)
    thr = metrics.tpr95_threshold(ign_closed)
    pred_closed = np.where(ign_closed <= thr, np.argmax(net.forward(state, closed.features), axis=1), k)
    pred_open = np.where(ign_open <= thr, np.argmax(pl_probe, axis=1), k)
    return {
        "n_open": len(probes),
        "openset_auroc": metrics.auroc(data),
        "aupr_open": metrics.aupr(data, "open"),
        "aupr_closed": metrics.aupr(data, "closed"),
        "ignorance_threshold": thr,
        "closed_accept_rate": float(np.mean(ign_closed <= thr)),
        "open_reject_rate": float(np.mean(ign_open > thr)),
        "macro_f1_open": metrics.macro_f1_open(
            np.r_[pred_closed, pred_open], np.r_[closed.labels, np.full(len(probes), k)], k),
        "mean_ignorance_closed": float(ign_closed.mean()),
        "mean_ignorance_open": float(ign_open.mean()),
    }


def evaluate(state, closed: synth.LabeledDataset, probes, belief_threshold: float = 0.5):
    """Full report dict (ordered) and the ranking-sweep curve."""
    report = {"variant": state.config.variant, "embedding": state.config.embedding}
    closed_part, curve = closed_set_report(state, closed, belief_threshold)
    report.update(closed_part)
    if probes is not None and len(probes):
        report.update(open_set_report(state, closed, probes, state.config.num_classes))
    else:
        report["open_set"] = "skipped (no probes)"
    return report, curve


def attack_table(state, data: synth.LabeledDataset, epsilons):
    """(epsilon, top-1, top-2) rows, ranking classes by plausibility."""
    rows = []
    for eps in epsilons:
        x = net.fgsm_attack(state, data.features, data.labels, eps)
        rows.append((float(eps),
                     net.accuracy(state, x, data.labels, top=1),
                     net.accuracy(state, x, data.labels, top=2)))
    return rows


def grid_maps(state, points: np.ndarray) -> dict:
    """Per-point beliefs b_0..b_{K-1}, total confusion and ignorance."""
    if state.config.input_dim != 2:
        raise net.DimensionMismatchError("grid maps need a model with 2-D inputs")
    _, beliefs, ign, conf = opinion_arrays(state, points)
    maps = {f"b{i}": beliefs[:, i] for i in range(beliefs.shape[1])}
    maps["confusion"] = conf
    maps["ignorance"] = ign
    return maps


def write_kv(report: dict, path) -> None:
    with open(path, "w") as fh:
        for key, value in report.items():
            fh.write(f"{key} = {fmt(value)}\n")


def read_kv(path) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            if "=" in line:
                k, v = line.split("=", 1)
                out[k.strip()] = v.strip()
    return out
