"""Proportional prioritized experience replay on a SumTree."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool

    def __post_init__(self):
        s = np.asarray(getattr(self.state, "values", self.state), dtype=np.float64)
        ns = np.asarray(getattr(self.next_state, "values", self.next_state), dtype=np.float64)
        if s.shape != ns.shape:
            raise ValueError(f"state {s.shape} and next_state {ns.shape} differ in shape")
        object.__setattr__(self, "state", s)
        object.__setattr__(self, "next_state", ns)


def _next_pow2(n: int) -> int:
    p = 1
    while p < n:
        p <<= 1
    return p


class SumTree:
    """Binary tree of prefix sums over a power-of-two number of leaves.

    Internal nodes are always recomputed as the sum of their children, so the
    tree never drifts from its leaves.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = _next_pow2(int(capacity))
        self.nodes = np.zeros(2 * self.capacity - 1)

    @property
    def total(self) -> float:
        return float(self.nodes[0])

    @property
    def leaves(self) -> np.ndarray:
        return self.nodes[self.capacity - 1:]

    def update(self, leaves, values) -> None:
        values = np.asarray(values, dtype=np.float64)
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ValueError("priorities must be finite and non-negative")
        kernels.sumtree_update(self.nodes, self.capacity, np.atleast_1d(leaves),
                               np.atleast_1d(values))

    def find(self, queries) -> np.ndarray:
        """Leaf whose interval [cum_{i-1}, cum_i) contains each query value."""
        return kernels.sumtree_find(self.nodes, self.capacity, np.atleast_1d(queries))

    def check(self, tol: float = 1e-9) -> bool:
        """Verify every internal node against the sum of its children."""
        inner = np.arange(self.capacity - 1)
        diff = self.nodes[inner] - (self.nodes[2 * inner + 1] + self.nodes[2 * inner + 2])
        return bool(np.all(np.abs(diff) <= tol))


@dataclass
class SampleBatch:
    indices: np.ndarray
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminals: np.ndarray
    is_weights: np.ndarray
    probabilities: np.ndarray

    def __len__(self):
        return len(self.indices)

    @property
    def transitions(self) -> list:
        return [Transition(s, int(a), float(r), ns, bool(d)) for s, a, r, ns, d in
                zip(self.states, self.actions, self.rewards, self.next_states, self.terminals)]


class PrioritizedReplay:
    """Ring buffer of transitions sampled in proportion to their priority.

    New transitions enter at the current maximum leaf priority (1.0 when the
    buffer is empty). Sampling is stratified: the priority mass is cut into
    ``batch`` equal segments and one point is drawn uniformly from each.
    """

    def __init__(self, capacity: int, state_dim: int):
        self.capacity = int(capacity)
        self.tree = SumTree(self.capacity)
        self.states = np.zeros((self.capacity, state_dim))
        self.next_states = np.zeros((self.capacity, state_dim))
        self.actions = np.zeros(self.capacity, dtype=np.int64)
        self.rewards = np.zeros(self.capacity)
        self.terminals = np.zeros(self.capacity, dtype=bool)
        self.cursor = 0
        self.count = 0
        # bumped on every overwrite so stale sample indices can be detected
        self._generation = np.zeros(self.capacity, dtype=np.int64)
        self._last_sample: Optional[tuple] = None

    def __len__(self):
        return self.count

    def max_priority(self) -> float:
        if self.count == 0:
            return 1.0
        return float(self.tree.leaves[:self.count].max())

    def push(self, t: Transition) -> int:
        i = self.cursor
        priority = self.max_priority()
        self.states[i] = t.state
        self.next_states[i] = t.next_state
        self.actions[i] = int(t.action)
        self.rewards[i] = float(t.reward)
        self.terminals[i] = bool(t.terminal)
        self._generation[i] += 1
        self.tree.update(i, priority)
        self.cursor = (i + 1) % self.capacity
        self.count = min(self.count + 1, self.capacity)
        return i

    def sample(self, batch: int, beta: float, rng: np.random.Generator) -> SampleBatch:
        if batch < 1:
            raise ValueError("batch must be positive")
        if self.count < batch:
            raise ValueError(f"not enough transitions: have {self.count}, need {batch}")
        if not 0.0 <= beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")
        total = self.tree.total
        seg = total / batch
        queries = (np.arange(batch) + rng.random(batch)) * seg
        queries = np.minimum(queries, np.nextafter(total, 0.0))
        idx = self.tree.find(queries)
        leaves = self.tree.leaves
        # rounding at segment edges can land on an empty leaf; fall back to the
        # nearest populated leaf on the left
        bad = (idx >= self.count) | (leaves[np.minimum(idx, self.capacity - 1)] <= 0)
        if np.any(bad):
            positive = np.flatnonzero(leaves[:self.count] > 0)
            for k in np.flatnonzero(bad):
                j = np.searchsorted(positive, min(idx[k], self.count - 1), side="right") - 1
                idx[k] = positive[max(j, 0)]
        probs = leaves[idx] / total
        w = (self.count * probs) ** (-beta)
        w = w / w.max()
        self._last_sample = (idx.copy(), self._generation[idx].copy())
        return SampleBatch(idx, self.states[idx].copy(), self.actions[idx].copy(),
                           self.rewards[idx].copy(), self.next_states[idx].copy(),
                           self.terminals[idx].copy(), w, probs)

    def update_priorities(self, indices, td_errors, alpha: float = 0.6, eps: float = 1e-5) -> None:
        """Set each sampled leaf to ``(|td| + eps) ** alpha``."""
        indices = np.asarray(indices, dtype=np.int64)
        td = np.asarray(td_errors, dtype=np.float64)
        if indices.shape != td.shape:
            raise ValueError("indices and td_errors differ in length")
        if np.any(indices < 0) or np.any(indices >= self.count):
            raise IndexError(f"priority index out of range [0, {self.count})")
        if self._last_sample is not None:
            sampled, gens = self._last_sample
            lookup = dict(zip(sampled.tolist(), gens.tolist()))
            for i in indices.tolist():
                if i in lookup and self._generation[i] != lookup[i]:
                    raise IndexError(f"stale index {i}: slot overwritten since sampling")
        self.tree.update(indices, (np.abs(td) + eps) ** alpha)


def beta_schedule(step: int, total_steps: int, start: float = 0.4, end: float = 1.0) -> float:
    """Linear anneal of the importance-sampling exponent."""
    if total_steps <= 0:
        return end
    frac = min(max(step / total_steps, 0.0), 1.0)
    return start + (end - start) * frac
