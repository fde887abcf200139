"""Compare the compiled and numpy kernel backends.

Two parts: the individual kernels on a synthetic chain-shaped transition
block at several sizes, and whole forward passes of the learning
algorithms over a union of two DM models, where the active support
grows by two states per round.

    python benchmarks/bench_kernels.py [--sizes 100 1000 20000] [--horizon 3000]
"""

import argparse
import time
import timeit

import numpy as np

from fixshare import _kernels
from fixshare.constructions import build_bayes_union, build_dm, build_fs_learning
from fixshare.datagen import GaussianAdvice, random_drift_data
from fixshare.ehmm import iter_forward


def _chain_block(n, rng):
    act = np.arange(n, dtype=np.int64)
    lw = -10.0 * rng.random(n)
    start = np.arange(0, 2 * n, 2, dtype=np.int64)
    length = np.full(n, 2, dtype=np.int64)
    col = np.empty(2 * n, dtype=np.int64)
    col[0::2], col[1::2] = act, act + 1
    logp = np.log(np.tile([0.9, 0.1], n))
    scratch = np.full(n + 2, -1, dtype=np.int64)
    return act, lw, start, length, col, logp, scratch


def bench_kernels(sizes, repeat):
    rng = np.random.default_rng(0)
    rows = []
    for n in sizes:
        act, lw, start, length, col, logp, scratch = _chain_block(n, rng)
        cases = {
            "propagate": lambda k: k.propagate(act, lw, start, length, col, logp, scratch),
            "mix": lambda k: k.mix(act, lw, -0.01, act, lw, -4.6, scratch),
            "normalize": lambda k: k.normalize(lw),
            "loss_update": lambda k: k.loss_update(lw, lw),
            "segment_lse": lambda k: k.segment_lse(logp, np.arange(0, 2 * n + 1, 2, dtype=np.int64)),
        }
        for name, fn in cases.items():
            cost = {}
            for backend in _kernels.available():
                kern = _kernels.BACKENDS[backend]
                number = max(1, 20000 // n)
                best = min(timeit.repeat(lambda: fn(kern), number=number, repeat=repeat))
                cost[backend] = best / number * 1e6
            rows.append((name, n, cost))
    return rows


def bench_runs(horizon):
    x = random_drift_data(horizon, seed=1)
    union = build_bayes_union(None, [build_dm(0.1), build_dm(0.3)])
    rows = []
    for mode in ("freezing", "sleeping"):
        cost = {}
        for backend in _kernels.available():
            previous = _kernels.use(backend)
            try:
                model, op = build_fs_learning(mode, 0.01, union)
                t0 = time.perf_counter()
                for _ in iter_forward(model, op, GaussianAdvice(), x):
                    pass
                cost[backend] = time.perf_counter() - t0
            finally:
                _kernels.use(previous)
        rows.append((f"FS^{mode[:2]} DM union", horizon, cost))
    return rows


def _report(title, rows, unit):
    backends = _kernels.available()
    print(title)
    print(f"  {'case':<22}{'size':>8}" + "".join(f"{b:>14}" for b in backends) + f"{'speedup':>10}")
    for name, n, cost in rows:
        line = f"  {name:<22}{n:>8}" + "".join(f"{cost[b]:>11.2f} {unit}" for b in backends)
        if "compiled" in cost:
            line += f"{cost['python'] / cost['compiled']:>9.2f}x"
        print(line)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[10, 100, 1000, 20000])
    ap.add_argument("--horizon", type=int, default=3000, help="rounds per full run")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if "compiled" not in _kernels.available():
        print("compiled extension not built; timing the numpy backend only")
    _report("kernels (best of repeats, per call)", bench_kernels(args.sizes, args.repeat), "us")
    _report("forward passes (wall time)", bench_runs(args.horizon), "s ")


if __name__ == "__main__":
    main()
