"""Hot inner loops: SumTree maintenance/descent and per-candle feature rules.

Every kernel exists twice: a scalar-loop version compiled with numba and a
vectorised numpy version. Both produce bit-identical output; which one is bound
to the public name depends on ``DQTRADER_NUMBA`` (see ``_accel``).
"""
import numpy as np

from ._accel import USE_NUMBA, njit

# Column order of the pattern bit vector.
PATTERN_NAMES = (
    "doji",
    "hammer",
    "inverted_hammer",
    "shooting_star",
    "bullish_engulfing",
    "bearish_engulfing",
    "bullish_harami",
    "bearish_harami",
)
N_PATTERNS = len(PATTERN_NAMES)


# --------------------------------------------------------------------------
# SumTree. Layout: 2*capacity - 1 nodes, leaf i at capacity - 1 + i,
# children of node n at 2n + 1 and 2n + 2.


def _sumtree_update_py(tree, capacity, leaves, values):
    leaves = np.asarray(leaves, dtype=np.int64)
    values = np.asarray(values, dtype=np.float64)
    # duplicates: the last write wins, as in the sequential kernel
    rev_unique, rev_pos = np.unique(leaves[::-1], return_index=True)
    last = len(leaves) - 1 - rev_pos
    nodes = rev_unique + capacity - 1
    tree[nodes] = values[last]
    while nodes.size and nodes[0] > 0:
        nodes = np.unique((nodes - 1) // 2)
        tree[nodes] = tree[2 * nodes + 1] + tree[2 * nodes + 2]


@njit
def _sumtree_update_nb(tree, capacity, leaves, values):
    for k in range(leaves.shape[0]):
        node = leaves[k] + capacity - 1
        tree[node] = values[k]
        while node > 0:
            node = (node - 1) // 2
            tree[node] = tree[2 * node + 1] + tree[2 * node + 2]


def _sumtree_find_py(tree, capacity, queries):
    queries = np.asarray(queries, dtype=np.float64)
    node = np.zeros(queries.shape[0], dtype=np.int64)
    base = np.zeros(queries.shape[0], dtype=np.float64)
    while node.size and node[0] < capacity - 1:
        left = 2 * node + 1
        bound = base + tree[left]
        go_left = queries < bound
        base = np.where(go_left, base, bound)
        node = np.where(go_left, left, left + 1)
    return node - (capacity - 1)


@njit
def _sumtree_find_nb(tree, capacity, queries):
    out = np.empty(queries.shape[0], dtype=np.int64)
    for k in range(queries.shape[0]):
        q = queries[k]
        node = 0
        base = 0.0
        while node < capacity - 1:
            left = 2 * node + 1
            bound = base + tree[left]
            if q < bound:
                node = left
            else:
                base = bound
                node = left + 1
        out[k] = node - (capacity - 1)
    return out


# --------------------------------------------------------------------------
# Candle shape ratios and the 8-rule pattern catalog.
# thresholds = [doji_body, long_shadow, small_body]


def _candle_ratios_py(o, h, l, c):
    rng = h - l
    flat = rng <= 0.0
    safe = np.where(flat, 1.0, rng)
    upper = np.where(flat, 0.0, (h - np.maximum(c, o)) / safe)
    lower = np.where(flat, 0.0, (np.minimum(c, o) - l) / safe)
    body = np.where(flat, 0.0, np.abs(c - o) / safe)
    return np.stack([upper, lower, body], axis=1)


@njit
def _candle_ratios_nb(o, h, l, c):
    n = o.shape[0]
    out = np.zeros((n, 3))
    for i in range(n):
        rng = h[i] - l[i]
        if rng <= 0.0:
            continue
        out[i, 0] = (h[i] - max(c[i], o[i])) / rng
        out[i, 1] = (min(c[i], o[i]) - l[i]) / rng
        out[i, 2] = abs(c[i] - o[i]) / rng
    return out


def _candle_patterns_py(o, h, l, c, po, pc, thresholds):
    doji_body, long_shadow, small_body = thresholds[0], thresholds[1], thresholds[2]
    r = _candle_ratios_py(o, h, l, c)
    upper, lower, body = r[:, 0], r[:, 1], r[:, 2]
    ranged = h > l
    bull, bear = c > o, c < o
    pbull, pbear = pc > po, pc < po
    hammer_shape = ranged & (lower > long_shadow) & (body < small_body)
    star_shape = ranged & (upper > long_shadow) & (body < small_body)
    bits = np.stack(
        [
            ranged & (body < doji_body),
            hammer_shape,
            star_shape & pbear,
            star_shape & pbull,
            pbear & bull & (o <= pc) & (c >= po) & ((c - o) > (po - pc)),
            pbull & bear & (o >= pc) & (c <= po) & ((o - c) > (pc - po)),
            pbear & bull & (o > pc) & (c < po),
            pbull & bear & (o < pc) & (c > po),
        ],
        axis=1,
    )
    return bits.astype(np.uint8)


@njit
def _candle_patterns_nb(o, h, l, c, po, pc, thresholds):
    doji_body, long_shadow, small_body = thresholds[0], thresholds[1], thresholds[2]
    n = o.shape[0]
    r = _candle_ratios_nb(o, h, l, c)
    out = np.zeros((n, 8), dtype=np.uint8)
    for i in range(n):
        upper, lower, body = r[i, 0], r[i, 1], r[i, 2]
        ranged = h[i] > l[i]
        bull, bear = c[i] > o[i], c[i] < o[i]
        pbull, pbear = pc[i] > po[i], pc[i] < po[i]
        hammer_shape = ranged and lower > long_shadow and body < small_body
        star_shape = ranged and upper > long_shadow and body < small_body
        out[i, 0] = ranged and body < doji_body
        out[i, 1] = hammer_shape
        out[i, 2] = star_shape and pbear
        out[i, 3] = star_shape and pbull
        out[i, 4] = (pbear and bull and o[i] <= pc[i] and c[i] >= po[i]
                     and (c[i] - o[i]) > (po[i] - pc[i]))
        out[i, 5] = (pbull and bear and o[i] >= pc[i] and c[i] <= po[i]
                     and (o[i] - c[i]) > (pc[i] - po[i]))
        out[i, 6] = pbear and bull and o[i] > pc[i] and c[i] < po[i]
        out[i, 7] = pbull and bear and o[i] < pc[i] and c[i] > po[i]
    return out


# --------------------------------------------------------------------------
# Adam moment update with L2 folded into the gradient. Arrays are updated in
# place; ``c1``/``c2`` are the bias-correction denominators for this step.


def _adam_update_py(p, g, m, v, lr, b1, b2, c1, c2, eps, l2):
    g = g + l2 * p
    m *= b1
    m += (1.0 - b1) * g
    v *= b2
    v += (1.0 - b2) * (g * g)
    p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


@njit
def _adam_update_nb(p, g, m, v, lr, b1, b2, c1, c2, eps, l2):
    for i in range(p.size):
        gi = g.flat[i] + l2 * p.flat[i]
        mi = m.flat[i] * b1
        mi = mi + (1.0 - b1) * gi
        vi = v.flat[i] * b2
        vi = vi + (1.0 - b2) * (gi * gi)
        m.flat[i] = mi
        v.flat[i] = vi
        p.flat[i] = p.flat[i] - lr * (mi / c1) / (np.sqrt(vi / c2) + eps)


_IMPLS = {
    "numpy": {
        "sumtree_update": _sumtree_update_py,
        "sumtree_find": _sumtree_find_py,
        "candle_ratios": _candle_ratios_py,
        "candle_patterns": _candle_patterns_py,
        "adam_update": _adam_update_py,
    },
    "numba": {
        "sumtree_update": _sumtree_update_nb,
        "sumtree_find": _sumtree_find_nb,
        "candle_ratios": _candle_ratios_nb,
        "candle_patterns": _candle_patterns_nb,
        "adam_update": _adam_update_nb,
    },
}

BACKEND = "numba" if USE_NUMBA else "numpy"


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def sumtree_update(tree, capacity, leaves, values, backend=None):
    """Set leaf priorities and recompute every affected ancestor in place."""
    fn = _IMPLS[backend or BACKEND]["sumtree_update"]
    fn(tree, int(capacity), np.ascontiguousarray(leaves, dtype=np.int64), _f64(values))


def sumtree_find(tree, capacity, queries, backend=None):
    """Leaf index whose cumulative-priority interval [lo, hi) contains each query."""
    fn = _IMPLS[backend or BACKEND]["sumtree_find"]
    return fn(tree, int(capacity), _f64(queries))


def candle_ratios(o, h, l, c, backend=None):
    """(upper, lower, body) shape ratios, one row per candle; flat bars give zeros."""
    fn = _IMPLS[backend or BACKEND]["candle_ratios"]
    return fn(_f64(o), _f64(h), _f64(l), _f64(c))


def candle_patterns(o, h, l, c, po, pc, thresholds, backend=None):
    fn = _IMPLS[backend or BACKEND]["candle_patterns"]
    return fn(_f64(o), _f64(h), _f64(l), _f64(c), _f64(po), _f64(pc), _f64(thresholds))


def adam_update(p, g, m, v, lr, b1, b2, c1, c2, eps, l2, backend=None):
    """One in-place Adam step on contiguous float64 arrays of equal shape."""
    fn = _IMPLS[backend or BACKEND]["adam_update"]
    fn(p, g, m, v, float(lr), float(b1), float(b2), float(c1), float(c2), float(eps), float(l2))
