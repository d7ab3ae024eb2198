"""Compare the numba and numpy kernel backends.

    python benchmarks/bench_kernels.py            # per-kernel timings
    python benchmarks/bench_kernels.py --train    # also time training steps end to end

The per-kernel table calls both backends in one process through the
``backend=`` argument. The end-to-end check runs a short training job in a
subprocess per value of ``DQTRADER_NUMBA``.
"""
import argparse
import os
import subprocess
import sys
import textwrap
import timeit

import numpy as np

from dqtrader import kernels
from dqtrader._accel import NUMBA_AVAILABLE


def cases(rng):
    cap = 4096
    tree = np.zeros(2 * cap - 1)
    kernels.sumtree_update(tree, cap, np.arange(cap), rng.random(cap), backend="numpy")
    leaves = rng.integers(0, cap, 16)
    prios = rng.random(16)
    queries = rng.random(16) * tree[0]

    n = 5000
    o = 100 + rng.random(n)
    c = 100 + rng.random(n)
    h = np.maximum(o, c) + rng.random(n)
    l = np.minimum(o, c) - rng.random(n)
    po, pc = np.roll(o, 1), np.roll(c, 1)
    thr = np.array([0.05, 0.6, 0.3])

    shape = (128, 256)
    p, g = rng.standard_normal(shape), rng.standard_normal(shape)
    m, v = np.zeros(shape), np.zeros(shape)

    return {
        "sumtree_update (16 of 4096 leaves)":
            lambda b: kernels.sumtree_update(tree, cap, leaves, prios, backend=b),
        "sumtree_find (16 queries)":
            lambda b: kernels.sumtree_find(tree, cap, queries, backend=b),
        "candle_ratios (5000 candles)":
            lambda b: kernels.candle_ratios(o, h, l, c, backend=b),
        "candle_patterns (5000 candles)":
            lambda b: kernels.candle_patterns(o, h, l, c, po, pc, thr, backend=b),
        "adam_update (128x256)":
            lambda b: kernels.adam_update(p, g, m, v, 1e-3, 0.9, 0.999, 0.1, 0.001, 1e-8, 1e-4, backend=b),
    }


def per_kernel(repeat):
    rng = np.random.default_rng(0)
    backends = ["numpy"] + (["numba"] if NUMBA_AVAILABLE else [])
    print(f"{'kernel':38s}" + "".join(f"{b + ' (us)':>14s}" for b in backends) + f"{'speedup':>10s}")
    for name, fn in cases(rng).items():
        times = []
        for b in backends:
            fn(b)   # warm up / compile
            number = 50
            best = min(timeit.repeat(lambda: fn(b), number=number, repeat=repeat)) / number
            times.append(best * 1e6)
        speed = f"{times[0] / times[1]:9.1f}x" if len(times) == 2 else ""
        print(f"{name:38s}" + "".join(f"{t:14.1f}" for t in times) + speed)


TRAIN_SNIPPET = textwrap.dedent("""
    import time, numpy as np
    from dqtrader import TrainConfig, train
    from dqtrader.market_data import MarketSeries
    import datetime as dt
    rng = np.random.default_rng(0)
    c = 100 * np.cumprod(np.exp(rng.normal(0, 0.02, 160)))
    o = np.concatenate([[100.0], c[:-1]])
    d = [dt.date(2020, 1, 1) + dt.timedelta(days=i) for i in range(160)]
    s = MarketSeries('B', d, o, np.maximum(o, c) * 1.01, np.minimum(o, c) * 0.99, c, 120)
    train(s, TrainConfig(episodes=1, seed=0))          # warm up
    t = time.perf_counter()
    _, log = train(s, TrainConfig(episodes=3, seed=0))
    print((time.perf_counter() - t) / len(log.losses) * 1e3)
""")


def end_to_end():
    print("\nms per gradient step, default network, 3 episodes:")
    for flag in ("0", "1"):
        env = dict(os.environ, DQTRADER_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", TRAIN_SNIPPET], env=env,
                             capture_output=True, text=True, check=True).stdout.strip()
        print(f"  DQTRADER_NUMBA={flag}: {float(out):.2f}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--train", action="store_true")
    args = ap.parse_args()
    per_kernel(args.repeat)
    if args.train:
        end_to_end()
