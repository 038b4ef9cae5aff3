"""Compare the numpy and numba kernel lanes.

Per-kernel micro timings run both backend modules in-process on the
same inputs. The end-to-end comparison spawns a child interpreter per
lane because TRIVQA_KERNELS is read once at import time.

Usage:
    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --batch 1024 --repeats 500
    python3 benchmarks/bench_kernels.py --skip-train
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from trivqa.kernels import numpy_backend

try:
    from trivqa.kernels import numba_backend
except ImportError:
    numba_backend = None


def build_cases(batch, rng):
    wide = rng.standard_normal((batch, 64))
    logits = rng.standard_normal((batch, 4))
    labels = rng.integers(0, 4, size=batch)
    target = numpy_backend.softmax_rows_fwd(rng.standard_normal((batch, 4)))
    probs = numpy_backend.softmax_rows_fwd(logits)
    feat_a = rng.standard_normal((batch, 24))
    feat_b = rng.standard_normal((batch, 24))
    grad = rng.standard_normal((batch, 64))
    vec = rng.standard_normal(64)
    param = rng.standard_normal((64, 64))
    pgrad = rng.standard_normal((64, 64))
    vel = np.zeros((64, 64))
    return [
        ("relu_fwd", (wide,)),
        ("relu_bwd", (wide, grad)),
        ("softmax_rows_fwd", (logits,)),
        ("softmax_rows_bwd", (probs, rng.standard_normal((batch, 4)))),
        ("ce_fwd", (logits, labels)),
        ("ce_bwd", (probs, labels, 1.0 / batch)),
        ("soft_ce_fwd", (logits, target)),
        ("soft_ce_bwd", (probs, target, 1.0 / batch)),
        ("sq_diff_sum", (feat_a, feat_b)),
        ("sq_diff_bwd", (feat_a, feat_b, 0.5)),
        ("add_rowvec", (wide, vec)),
        ("sum_rows", (grad,)),
        ("sgd_update", (param, pgrad, vel, 0.001, 0.9)),
    ]


def best_time(fn, args, repeats, trials=5):
    best = float("inf")
    for _ in range(trials):
        t0 = time.perf_counter()
        for _ in range(repeats):
            fn(*args)
        best = min(best, (time.perf_counter() - t0) / repeats)
    return best


def micro(batch, repeats):
    rng = np.random.default_rng(0)
    cases = build_cases(batch, rng)
    if numba_backend is not None:
        # first call per kernel compiles (or loads the on-disk cache)
        for name, args in cases:
            getattr(numba_backend, name)(*args)
    print(f"batch={batch} repeats={repeats} (best of 5 trials, us per call)")
    header = f"{'kernel':<18} {'numpy':>10} {'numba':>10} {'ratio':>7}"
    print(header)
    print("-" * len(header))
    for name, args in cases:
        t_np = best_time(getattr(numpy_backend, name), args, repeats)
        if numba_backend is None:
            print(f"{name:<18} {t_np * 1e6:>10.2f} {'n/a':>10} {'n/a':>7}")
            continue
        t_nb = best_time(getattr(numba_backend, name), args, repeats)
        print(
            f"{name:<18} {t_np * 1e6:>10.2f} {t_nb * 1e6:>10.2f} "
            f"{t_np / t_nb:>7.2f}"
        )


TRAIN_CHILD = """
import tempfile, time
from trivqa.config import build_run_config
from trivqa.train import run_training
from trivqa.kernels import BACKEND

raw = {
    "dataset": {"n": 1500},
    "train": {"epochs": 8},
}
rc = build_run_config(raw, out_override=tempfile.mkdtemp())
t0 = time.perf_counter()
run_training(rc)
print(f"{BACKEND} {time.perf_counter() - t0:.2f}")
"""


def end_to_end():
    print()
    print("end-to-end training, 1500 samples x 8 epochs (seconds per lane)")
    lanes = ["numpy"] + (["numba"] if numba_backend is not None else [])
    for lane in lanes:
        env = dict(os.environ, TRIVQA_KERNELS=lane)
        out = subprocess.run(
            [sys.executable, "-c", TRAIN_CHILD],
            env=env,
            capture_output=True,
            text=True,
        )
        if out.returncode != 0:
            print(f"  {lane}: FAILED\n{out.stderr}")
            continue
        backend, seconds = out.stdout.split()
        assert backend == lane
        print(f"  {lane}: {seconds}s")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=256)
    ap.add_argument("--repeats", type=int, default=200)
    ap.add_argument("--skip-train", action="store_true")
    args = ap.parse_args(argv)
    if numba_backend is None:
        print("numba backend not importable; timing the numpy lane only")
    micro(args.batch, args.repeats)
    if not args.skip_train:
        end_to_end()


if __name__ == "__main__":
    main()
