"""A small reverse-mode autodiff engine over float64 numpy arrays.

Only the operations the Q-network needs are provided. Operations take an
optional :class:`Tape`; when one is given the op is recorded and
``tape.backward(out)`` accumulates gradients into every tensor created with
``requires_grad=True``.
"""
from __future__ import annotations

import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import kernels


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "has_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str = "", copy: bool = True):
        self.data = np.array(data, dtype=np.float64) if copy else np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self.has_grad = False
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def zero_grad(self):
        if self.grad is not None:
            self.grad.fill(0.0)
        self.has_grad = False

    def _accumulate(self, g):
        if self.requires_grad:
            self.grad += g
            self.has_grad = True

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass
class _Node:
    op: str
    inputs: tuple
    output: Tensor
    backward: Callable


class Tape:
    """Records operations in execution order and replays them backwards once."""

    def __init__(self):
        self.nodes: list = []
        self.consumed = False

    def record(self, op, inputs, output, backward):
        if self.consumed:
            raise RuntimeError("tape already consumed by backward(); run a new forward pass")
        self.nodes.append(_Node(op, tuple(inputs), output, backward))

    def backward(self, out: Tensor, grad=None):
        if self.consumed:
            raise RuntimeError("backward() called twice on the same tape")
        self.consumed = True
        grads = {id(out): np.ones_like(out.data) if grad is None else np.asarray(grad, float)}
        for node in reversed(self.nodes):
            g = grads.pop(id(node.output), None)
            if g is None:
                continue
            for t, gi in zip(node.inputs, node.backward(g)):
                if gi is None:
                    continue
                t._accumulate(gi)
                if id(t) in grads:
                    grads[id(t)] = grads[id(t)] + gi
                else:
                    grads[id(t)] = gi


def _rec(tape, op, inputs, out, backward):
    if tape is not None:
        tape.record(op, inputs, out, backward)
    return out


# --------------------------------------------------------------------------
# Operations


def affine(x: Tensor, W: Tensor, b: Tensor, tape: Optional[Tape] = None) -> Tensor:
    """``x @ W + b`` with the bias broadcast over the batch."""
    if x.data.ndim != 2 or W.data.ndim != 2 or b.data.ndim != 1:
        raise ValueError("affine expects x[B,I], W[I,O], b[O]")
    if x.shape[1] != W.shape[0] or W.shape[1] != b.shape[0]:
        raise ValueError(f"shape mismatch: x{x.shape} W{W.shape} b{b.shape}")
    out = Tensor(x.data @ W.data + b.data, copy=False)

    def backward(g):
        return g @ W.data.T, x.data.T @ g, g.sum(axis=0)

    return _rec(tape, "affine", (x, W, b), out, backward)


def noisy_weight(mu: Tensor, sigma: Tensor, eps: np.ndarray,
                 tape: Optional[Tape] = None) -> Tensor:
    """Effective noisy parameter ``mu + sigma * eps``; ``eps`` is a constant."""
    if mu.shape != sigma.shape or mu.shape != np.shape(eps):
        raise ValueError("noisy_weight shapes must agree")
    out = Tensor(mu.data + sigma.data * eps, copy=False)
    return _rec(tape, "noisy_weight", (mu, sigma), out, lambda g: (g, g * eps))


def relu(x: Tensor, tape: Optional[Tape] = None) -> Tensor:
    mask = x.data > 0
    out = Tensor(np.where(mask, x.data, 0.0), copy=False)
    return _rec(tape, "relu", (x,), out, lambda g: (g * mask,))


@dataclass
class BatchNormStats:
    """Running statistics of one batch-norm layer."""

    mean: np.ndarray
    var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5

    @classmethod
    def fresh(cls, features: int, momentum=0.1, eps=1e-5):
        return cls(np.zeros(features), np.ones(features), momentum, eps)


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, stats: BatchNormStats,
               train: bool, tape: Optional[Tape] = None) -> Tensor:
    """Normalise each feature column, then scale by ``gamma`` and shift by ``beta``.

    In train mode batch statistics are used (population variance) and the
    running statistics move toward them by ``stats.momentum``. In eval mode the
    running statistics are used and ``B = 1`` is allowed.
    """
    B = x.shape[0]
    if x.data.ndim != 2 or x.shape[1] != gamma.shape[0]:
        raise ValueError(f"batch_norm: x{x.shape} does not match {gamma.shape[0]} features")
    if train:
        if B < 2:
            raise ValueError("batch_norm in train mode needs a batch of at least 2")
        mean = x.data.mean(axis=0)
        var = x.data.var(axis=0)
        m = stats.momentum
        stats.mean = (1.0 - m) * stats.mean + m * mean
        stats.var = (1.0 - m) * stats.var + m * var
    else:
        mean, var = stats.mean, stats.var
    inv_std = 1.0 / np.sqrt(var + stats.eps)
    xhat = (x.data - mean) * inv_std
    out = Tensor(xhat * gamma.data + beta.data, copy=False)

    def backward(g):
        dgamma = (g * xhat).sum(axis=0)
        dbeta = g.sum(axis=0)
        dxhat = g * gamma.data
        if train:
            dx = inv_std / B * (B * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
        else:
            dx = dxhat * inv_std
        return dx, dgamma, dbeta

    return _rec(tape, "batch_norm", (x, gamma, beta), out, backward)


def dueling(value: Tensor, advantage: Tensor, tape: Optional[Tape] = None) -> Tensor:
    """``Q = V + A - mean_a A`` for value[B,1] and advantage[B,A]."""
    if value.shape[1] != 1 or value.shape[0] != advantage.shape[0]:
        raise ValueError("dueling expects value[B,1] and advantage[B,A]")
    adv = advantage.data
    out = Tensor(value.data + (adv - adv.mean(axis=1, keepdims=True)), copy=False)

    def backward(g):
        return g.sum(axis=1, keepdims=True), g - g.mean(axis=1, keepdims=True)

    return _rec(tape, "dueling", (value, advantage), out, backward)


def gather(q: Tensor, actions, tape: Optional[Tape] = None) -> Tensor:
    """Pick ``q[i, actions[i]]`` for each row."""
    actions = np.asarray(actions, dtype=np.int64)
    rows = np.arange(q.shape[0])
    out = Tensor(q.data[rows, actions], copy=False)

    def backward(g):
        dq = np.zeros_like(q.data)
        dq[rows, actions] = g
        return (dq,)

    return _rec(tape, "gather", (q,), out, backward)


def huber(delta):
    a = np.abs(delta)
    return np.where(a < 1.0, 0.5 * delta * delta, a - 0.5)


def smooth_l1(pred: Tensor, target, weights=None, reduction: str = "mean",
              tape: Optional[Tape] = None) -> Tensor:
    """Importance-weighted Huber loss with unit transition point.

    ``reduction="mean"`` divides the weighted sum by the batch size (not by the
    weight total), so the loss is linear in the weights in both modes. The
    target is a constant.
    """
    target = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=np.float64)
    w = np.ones_like(pred.data) if weights is None else np.asarray(
        weights.data if isinstance(weights, Tensor) else weights, dtype=np.float64)
    if pred.shape != target.shape or pred.shape != w.shape:
        raise ValueError(f"smooth_l1 shape mismatch: {pred.shape} {target.shape} {w.shape}")
    if reduction not in ("mean", "sum"):
        raise ValueError("reduction must be 'mean' or 'sum'")
    delta = pred.data - target
    scale = 1.0 / pred.shape[0] if reduction == "mean" else 1.0
    out = Tensor(np.sum(w * huber(delta)) * scale, copy=False)

    def backward(g):
        return (g * scale * w * np.clip(delta, -1.0, 1.0),)

    return _rec(tape, "smooth_l1", (pred,), out, backward)


def l2_penalty(params, lam: float, tape: Optional[Tape] = None) -> Tensor:
    """``0.5 * lam * sum ||p||^2``; its gradient ``lam * p`` is what :class:`Adam` adds."""
    params = list(params)
    out = Tensor(0.5 * lam * sum(float(np.vdot(p.data, p.data)) for p in params))
    return _rec(tape, "l2_penalty", params, out,
                lambda g: tuple(g * lam * p.data for p in params))


# --------------------------------------------------------------------------
# Optimizer


@dataclass
class Adam:
    """Adaptive-moment optimizer with L2 folded into the gradient.

    Each step uses ``g + l2 * theta`` as the gradient, so the implied penalty is
    ``0.5 * l2 * ||theta||^2`` (see :func:`l2_penalty`).
    """

    params: list
    lr: float = 1e-3
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    l2: float = 0.0
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def __post_init__(self):
        self.params = list(self.params)
        if not self.m:
            self.m = [np.zeros_like(p.data) for p in self.params]
            self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        if not any(p.has_grad for p in self.params):
            raise RuntimeError("optimizer step before any backward pass")
        self.t += 1
        b1, b2 = self.betas
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            kernels.adam_update(p.data, p.grad, m, v, self.lr, b1, b2, c1, c2, self.eps, self.l2)
        self.zero_grad()


# --------------------------------------------------------------------------
# Checkpoints
#
# header: magic b"DQTC", u32 version, u32 tensor count
# tensor: u32 name length, utf-8 name, u32 rank, rank x u64 dims, float64 LE data

CHECKPOINT_MAGIC = b"DQTC"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, tensors) -> None:
    """Write an ordered ``name -> array`` mapping in the flat binary format."""
    items = list(tensors.items())
    parts = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(items))]
    for name, arr in items:
        arr = np.asarray(arr, dtype="<f8")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(np.ascontiguousarray(arr).tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_checkpoint(path) -> "OrderedDict[str, np.ndarray]":
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint (bad magic)")
    version, count = struct.unpack_from("<II", buf, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    pos = 12
    out = OrderedDict()
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        name = buf[pos:pos + nlen].decode("utf-8")
        pos += nlen
        (rank,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        dims = struct.unpack_from(f"<{rank}Q", buf, pos)
        pos += 8 * rank
        size = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(buf, dtype="<f8", count=size, offset=pos).reshape(dims)
        pos += 8 * size
        out[name] = arr.astype(np.float64)
    if pos != len(buf):
        raise ValueError(f"{path}: {len(buf) - pos} trailing bytes")
    return out
