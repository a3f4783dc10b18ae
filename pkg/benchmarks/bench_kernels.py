"""Compare the compiled and numpy evidential kernels.

    python benchmarks/bench_kernels.py [--repeat 5] [--train]

Prints per-call timings of ``loss_grad_batch`` and ``opinion_batch`` for a
few batch shapes, and (with ``--train``) the wall time of one default
training run under each backend in a fresh interpreter.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from flexrec import kernels

TRAIN_SNIPPET = """
import time
from flexrec import kernels, net, synth
d = synth.gen_gaussian_triplet(0)
tr, _ = synth.train_test_split(d, 0.8, 0)
t0 = time.perf_counter()
net.train(net.NetworkConfig(), tr.features, tr.labels)
print(kernels.BACKEND, time.perf_counter() - t0)
"""


def bench_kernels(repeat: int):
    rng = np.random.default_rng(0)
    backends = ["python"]
    try:
        kernels.get_backend("cython")
        backends.append("cython")
    except ImportError:
        print("compiled kernels unavailable; timing the numpy fallback only")
    print(f"{'kernel':16s} {'N':>6s} {'K':>3s} " + " ".join(f"{b:>12s}" for b in backends) + "   speedup")
    for n, k in [(128, 3), (1024, 3), (1024, 10), (8192, 5)]:
        pl = rng.uniform(0.05, 0.95, (n, k))
        labels = rng.integers(0, k, n)
        for name, call in [
            ("loss_grad_batch", lambda b: kernels.loss_grad_batch(pl, labels, 1.0, 0.05, backend=b)),
            ("opinion_batch", lambda b: kernels.opinion_batch(pl, backend=b)),
        ]:
            times = []
            for b in backends:
                number = max(1, 20000 // n)
                best = min(timeit.repeat(lambda: call(b), number=number, repeat=repeat)) / number
                times.append(best)
            speed = f"{times[0] / times[-1]:8.1f}x" if len(times) > 1 else ""
            print(f"{name:16s} {n:6d} {k:3d} " + " ".join(f"{t * 1e6:10.1f}us" for t in times) + "  " + speed)


def bench_training():
    for backend in ("python", "cython"):
        env = dict(os.environ, FLEXREC_BACKEND=backend)
        res = subprocess.run([sys.executable, "-c", TRAIN_SNIPPET], env=env, capture_output=True, text=True)
        if res.returncode:
            print(f"training with {backend}: failed\n{res.stderr}")
            continue
        used, secs = res.stdout.split()
        print(f"default training run, backend={used}: {float(secs):.2f}s")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--train", action="store_true", help="also time a full training run per backend")
    args = ap.parse_args()
    bench_kernels(args.repeat)
    if args.train:
        bench_training()


if __name__ == "__main__":
    main()
