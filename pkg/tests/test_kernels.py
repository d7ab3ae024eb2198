"""The numba kernels and their numpy twins must agree bit for bit."""
import os
import subprocess
import sys

import numpy as np
import pytest

from dqtrader import _accel, kernels

pytestmark = pytest.mark.skipif(not _accel.NUMBA_AVAILABLE, reason="numba not importable")


@pytest.mark.parametrize("flag,expected", [("0", "numpy"), ("1", "numba")])
def test_env_flag_selects_backend(flag, expected):
    env = dict(os.environ, DQTRADER_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", "from dqtrader import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == expected


def test_sumtree_update_and_find_agree(rng):
    cap = 64
    trees = {b: np.zeros(2 * cap - 1) for b in ("numpy", "numba")}
    for _ in range(50):
        leaves = rng.integers(0, cap, size=rng.integers(1, 20))
        values = rng.random(len(leaves)) * rng.choice([1e-3, 1.0, 50.0])
        for b, t in trees.items():
            kernels.sumtree_update(t, cap, leaves, values, backend=b)
        assert np.array_equal(trees["numpy"], trees["numba"])
    q = rng.random(1000) * trees["numpy"][0]
    assert np.array_equal(kernels.sumtree_find(trees["numpy"], cap, q, backend="numpy"),
                          kernels.sumtree_find(trees["numba"], cap, q, backend="numba"))


def test_duplicate_leaves_last_write_wins():
    for b in ("numpy", "numba"):
        t = np.zeros(7)
        kernels.sumtree_update(t, 4, [2, 2, 2], [1.0, 5.0, 3.0], backend=b)
        assert t[5] == 3.0 and t[0] == 3.0


def test_candle_kernels_agree(rng):
    n = 500
    o = 100 + rng.normal(0, 2, n)
    c = 100 + rng.normal(0, 2, n)
    h = np.maximum(o, c) + rng.exponential(1, n) * (rng.random(n) > 0.1)
    l = np.minimum(o, c) - rng.exponential(1, n) * (rng.random(n) > 0.1)
    po, pc = np.roll(o, 1), np.roll(c, 1)
    th = np.array([0.05, 0.6, 0.3])
    assert np.array_equal(kernels.candle_ratios(o, h, l, c, backend="numpy"),
                          kernels.candle_ratios(o, h, l, c, backend="numba"))
    a = kernels.candle_patterns(o, h, l, c, po, pc, th, backend="numpy")
    b = kernels.candle_patterns(o, h, l, c, po, pc, th, backend="numba")
    assert np.array_equal(a, b)
    assert a.sum() > 0


def test_adam_update_agrees(rng):
    out = []
    for b in ("numpy", "numba"):
        r = np.random.default_rng(3)
        p = r.standard_normal((7, 5))
        m, v = np.zeros_like(p), np.zeros_like(p)
        for t in range(1, 30):
            g = r.standard_normal(p.shape)
            kernels.adam_update(p, g, m, v, 1e-2, 0.9, 0.999, 1 - 0.9 ** t, 1 - 0.999 ** t,
                                1e-8, 1e-3, backend=b)
        out.append((p, m, v))
    for x, y in zip(*out):
        assert np.array_equal(x, y)
