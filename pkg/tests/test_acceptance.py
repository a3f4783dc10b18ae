"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v``; the verdict lines are
written straight to the terminal even when output capture is on.
"""

import csv
import math
import time

import numpy as np
import pytest

from flexrec import cli, decision, evaluation, metrics, net, sl_core, synth
from flexrec.loss import DirichletParams, LossWeights, edl_loss, kl_uniform_dirichlet, loss_gradient, total_loss

from .oracles import dirichlet_kl_monte_carlo, hand_f1, pair_count_auroc, threshold_sweep_ap


@pytest.fixture
def verdict(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} -- {detail}")
        assert ok, detail
    return emit


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def _pipeline(out, *extra):
    timings = {}
    for cmd in ("gen", "train", "eval", "grid", "attack"):
        t0 = time.perf_counter()
        flags = list(extra) if cmd == "train" else []
        assert cli.main([cmd, "--output-dir", str(out), *flags]) == 0, cmd
        timings[cmd] = time.perf_counter() - t0
    return timings


@pytest.fixture(scope="module")
def run_a(tmp_path_factory):
    out = tmp_path_factory.mktemp("accept_a")
    return out, _pipeline(out)


@pytest.fixture(scope="module")
def run_b(tmp_path_factory):
    out = tmp_path_factory.mktemp("accept_b")
    return out, _pipeline(out)


def _oracle_table(pl):
    """Mass of every bit-pattern subset, built by multiplying unsorted factors."""
    k = len(pl)
    bits = (np.arange(1 << k)[:, None] >> np.arange(k)) & 1
    return np.prod(np.where(bits == 1, pl, 1.0 - pl), axis=1), bits


def test_criterion_1_combination_rule(verdict):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = {"mass": 0.0, "sum": 0.0, "split": 0.0}
    for k in range(2, 13):
        for _ in range(1000):
            pl = rng.uniform(0.0, 1.0, k)
            oracle, bits = _oracle_table(pl)
            size = bits.sum(axis=1)
            table = sl_core.mass_table(pl)
            worst["mass"] = max(worst["mass"], float(np.max(np.abs(table - oracle))))
            worst["sum"] = max(worst["sum"], abs(math.fsum(table) - 1.0))
            masks = rng.integers(0, 1 << k, 3)
            for m in masks:
                worst["mass"] = max(worst["mass"], abs(sl_core.subset_mass(pl, int(m)) - oracle[m]))
            op = sl_core.hyper_opinion(pl)
            singles = oracle[1 << np.arange(k)]
            multi = size >= 2
            checks = [
                np.max(np.abs(np.array(op.beliefs) - singles)),
                abs(op.ignorance - oracle[0]),
                abs(op.total_confusion - oracle[multi].sum()),
            ]
            for i in range(k):
                ci = sl_core.class_related_confusion(pl, i)
                checks.append(abs(ci - oracle[multi & (bits[:, i] == 1)].sum()))
                worst["split"] = max(worst["split"], abs(op.beliefs[i] + ci - pl[i]))
            i, j = rng.choice(k, 2, replace=False)
            checks.append(abs(sl_core.pairwise_confusion(pl, i, j) - oracle[(1 << i) | (1 << j)]))
            worst["mass"] = max(worst["mass"], float(max(checks)))
    elapsed = time.perf_counter() - t0
    ok = worst["mass"] < 1e-12 and worst["sum"] <= 1e-9 and worst["split"] <= 1e-12 and elapsed < 30
    verdict(1, "combination rule vs 2^K enumeration, K=2..12 x 1000", ok,
            f"max |diff| {worst['mass']:.2e}, max |sum-1| {worst['sum']:.2e}, "
            f"max |b+C-pl| {worst['split']:.2e}, {elapsed:.1f}s (< 30s)")


def test_criterion_2_loss_stack(verdict):
    rng = np.random.default_rng(77)
    w = LossWeights(1.0, 0.05, 0.5)
    h = 1e-4
    worst = 0.0
    for k in (2, 3, 5):
        for _ in range(100):
            pl = rng.uniform(0.05, 0.95, k)
            t = int(rng.integers(k))
            frac = float(rng.uniform())
            i_hat = sl_core.ignorance(pl)
            g = np.array(loss_gradient(pl, t, w, frac))
            fd = np.empty(k)
            for i in range(k):
                up, dn = pl.copy(), pl.copy()
                up[i] += h
                dn[i] -= h
                fd[i] = (total_loss(up, t, w, frac, i_hat).total - total_loss(dn, t, w, frac, i_hat).total) / (2 * h)
            worst = max(worst, float(np.max(np.abs(g - fd) / np.maximum(np.abs(fd), 1e-6))))
    kl_err = 0.0
    for alpha in [(2.0, 1.0), (3.0, 1.5), (1.0, 1.75, 1.0), (2.5, 1.0, 4.0)]:
        est, _ = dirichlet_kl_monte_carlo(alpha, 400_000, seed=5)
        closed = kl_uniform_dirichlet(DirichletParams(alpha))
        kl_err = max(kl_err, abs(closed - est) / closed)
    edl = edl_loss(DirichletParams((4.75, 1.75, 1.0)), 0)
    edl_err = abs(edl - (math.log(7.5) - math.log(4.75)))
    ok = worst < 1e-3 and kl_err < 0.02 and edl_err < 1e-10
    verdict(2, "loss gradients, KL closed form, EDL example", ok,
            f"max FD rel err {worst:.2e} (< 1e-3), KL vs MC {100 * kl_err:.2f}% (< 2%), "
            f"EDL {edl:.10f} err {edl_err:.1e}")


def test_criterion_3_synthetic_experiment(verdict, run_a):
    out, timings = run_a
    runtime = timings["gen"] + timings["train"] + timings["eval"]
    bayes, se = synth.bayes_accuracy_oracle(100_000, seed=0)
    rep = evaluation.read_kv(out / "report.kv")
    acc = float(rep["accuracy"])

    cells = {name: np.array([[float(r["x"]), float(r["y"]), float(r["value"])] for r in _rows(out / name)])
             for name in ("grid_ignorance.csv", "grid_confusion.csv")}
    ign = cells["grid_ignorance.csv"]
    means = synth.triangle_means()
    dist = np.min(np.linalg.norm(ign[:, None, :2] - means[None], axis=2), axis=1)
    far, near = ign[dist > 20, 2].mean(), ign[dist < 2, 2].mean()

    state = net.load_model(out / "model.json")
    mids = np.array([(means[a] + means[b]) / 2 for a, b in ((0, 1), (0, 2), (1, 2))])
    conf = lambda x: np.array([sl_core.hyper_opinion(p).total_confusion for p in net.forward(state, x)])
    c_mid, c_mean = conf(mids).mean(), conf(means).mean()

    ok = abs(acc - bayes) <= 0.05 and runtime < 120 and far > near and c_mid > c_mean
    verdict(3, "synthetic three-Gaussian experiment", ok,
            f"test acc {acc:.4f} vs Bayes {bayes:.4f}+-{se:.4f} (gap {abs(acc - bayes):.4f} <= 0.05), "
            f"runtime {runtime:.1f}s (< 120s), ignorance far {far:.4f} > near {near:.4f}, "
            f"confusion midpoints {c_mid:.4f} > means {c_mean:.4f}")


def test_criterion_4_metric_oracles(verdict):
    rng = np.random.default_rng(4)
    auroc_exact = aupr_err = f1_err = 0.0
    auroc_ok = True
    for _ in range(100):
        n = int(rng.integers(2, 80))
        s = rng.integers(0, 10, n) / 3.0
        p = rng.uniform(size=n) < 0.5
        p[0], p[1] = True, False
        data = metrics.ScoredBinary(s, p)
        auroc_ok &= metrics.auroc(data) == pair_count_auroc(s, p)
        aupr_err = max(aupr_err, abs(metrics.aupr(data) - threshold_sweep_ap(s, p)))
        k = int(rng.integers(2, 6))
        pr, tr = rng.integers(0, k + 1, 50), rng.integers(0, k + 1, 50)
        f1_err = max(f1_err, abs(metrics.macro_f1_open(pr, tr, k) - hand_f1(pr.tolist(), tr.tolist(), range(k + 1))))
    accept = min(float(np.mean(x <= metrics.tpr95_threshold(x)))
                 for x in (rng.normal(size=n) for n in (20, 37, 100, 1000, 4321)))
    ok = auroc_ok and aupr_err <= 1e-12 and f1_err <= 1e-12 and accept >= 0.95
    verdict(4, "metric oracles", ok,
            f"AUROC exact on 100: {auroc_ok}, AUPR max err {aupr_err:.1e}, "
            f"macro-F1 max err {f1_err:.1e}, tpr95 min acceptance {accept:.4f}")


def test_criterion_5_confusion_and_open_set(verdict, run_a):
    out, _ = run_a
    rep = evaluation.read_kv(out / "report.kv")
    wauroc = float(rep["weighted_confusion_auroc"])
    open_auroc = float(rep["openset_auroc"])
    recall = [float(r["recall"]) for r in _rows(out / "sweep.csv")]
    monotone = all(b >= a for a, b in zip(recall, recall[1:]))
    ok = wauroc >= 0.6 and wauroc > 0.5 and open_auroc > 0.9 and monotone and recall[-1] == 1.0
    verdict(5, "confusion ranking and open-set detection", ok,
            f"weighted confusion AUROC {wauroc:.4f} (>= 0.6), open-set AUROC {open_auroc:.4f} (> 0.9), "
            f"sweep recall monotone {monotone}, final {recall[-1]}")


def test_criterion_6_robustness_sweep(verdict, run_a):
    out, _ = run_a
    table = _rows(out / "attack.csv")
    rep = evaluation.read_kv(out / "report.kv")
    t1 = [float(r["top1"]) for r in table]
    t2 = [float(r["top2"]) for r in table]
    eps = [float(r["epsilon"]) for r in table]
    ok = (eps[0] == 0.0 and table[0]["top1"] == rep["accuracy"]
          and all(b >= a for a, b in zip(t1, t2)) and t1[int(np.argmax(eps))] <= t1[0])
    verdict(6, "FGSM robustness sweep", ok,
            "eps/top1/top2: " + ", ".join(f"{e:g}:{a:.3f}/{b:.3f}" for e, a, b in zip(eps, t1, t2)))


def test_criterion_7_ablation(verdict, tmp_path):
    labels = {}
    for lam in (0, 1):
        out = tmp_path / f"lam{lam}"
        assert cli.main(["gen", "--output-dir", str(out)]) == 0
        code = cli.main(["train", "--output-dir", str(out), "--lambda-reg", str(lam)])
        code |= cli.main(["eval", "--output-dir", str(out)])
        log = _rows(out / "train_log.csv")
        labels[lam] = (code, evaluation.read_kv(out / "report.kv")["variant"], len(log), log[-1]["variant"])
    ok = (all(v[0] == 0 and v[2] == 300 for v in labels.values())
          and labels[0][1] == labels[0][3] == "no-reg" and labels[1][1] == labels[1][3] == "reg")
    verdict(7, "regulariser ablation", ok,
            f"lambda_reg=0 -> '{labels[0][1]}' ({labels[0][2]} epochs), "
            f"lambda_reg=1 -> '{labels[1][1]}' ({labels[1][2]} epochs)")


def test_criterion_8_determinism(verdict, run_a, run_b):
    (a, _), (b, _) = run_a, run_b
    names = ["train.csv", "test.csv", "probes.csv", "model.json", "train_log.csv", "report.kv",
             "sweep.csv", "attack.csv", "grid_ignorance.csv"]
    same = {n: (a / n).read_bytes() == (b / n).read_bytes() for n in names}
    ok = all(same.values())
    verdict(8, "byte-identical reruns", ok,
            "identical: " + ", ".join(n for n, s in same.items() if s)
            + ("" if ok else "; differ: " + ", ".join(n for n, s in same.items() if not s)))


def test_flexible_prediction_examples(run_a):
    """Pipeline checks on predict: far probes vs class means."""
    out, _ = run_a
    state = net.load_model(out / "model.json")
    probes = synth.load_dataset(out / "probes.csv").features
    modes = lambda x, t: [decision.predict_flexible(sl_core.hyper_opinion(p), t).mode.value
                          for p in net.forward(state, x)]
    assert modes(synth.triangle_means(), 0.5).count("single") >= 2
    # far from the data pl -> 0.5, so I -> 0.5**3 and only thresholds above 1 - I reject
    assert modes(probes, 0.9).count("rejected") > 0.9 * len(probes)
    assert "rejected" not in modes(probes, 0.0)
