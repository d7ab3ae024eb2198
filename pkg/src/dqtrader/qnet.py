"""Noisy dueling Q-network over the three trading actions."""
from __future__ import annotations

import enum
from collections import OrderedDict
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad


class Action(enum.IntEnum):
    BUY = 0
    HOLD = 1
    SELL = 2


N_ACTIONS = len(Action)
DEFAULT_HIDDEN = (128, 256)
DEFAULT_SIGMA_INIT = 0.5


def _scale_noise(x):
    return np.sign(x) * np.sqrt(np.abs(x))


class NoisyLinear:
    """Affine layer with factorised Gaussian weight noise.

    Effective weight ``mu_w + sigma_w * outer(f(eps_in), f(eps_out))`` with
    ``f(x) = sign(x) sqrt(|x|)``; the bias uses ``f(eps_out)``.
    """

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator,
                 sigma_init: float = DEFAULT_SIGMA_INIT, prefix: str = ""):
        bound = 1.0 / np.sqrt(n_in)
        self.n_in, self.n_out = n_in, n_out
        self.mu_w = ad.Tensor(rng.uniform(-bound, bound, (n_in, n_out)), True, prefix + "mu_w")
        self.sigma_w = ad.Tensor(np.full((n_in, n_out), sigma_init * bound), True, prefix + "sigma_w")
        self.mu_b = ad.Tensor(rng.uniform(-bound, bound, n_out), True, prefix + "mu_b")
        self.sigma_b = ad.Tensor(np.full(n_out, sigma_init * bound), True, prefix + "sigma_b")
        self.eps_in = np.zeros(n_in)
        self.eps_out = np.zeros(n_out)

    def params(self):
        return [self.mu_w, self.sigma_w, self.mu_b, self.sigma_b]

    def resample(self, rng: np.random.Generator):
        self.eps_in = rng.standard_normal(self.n_in)
        self.eps_out = rng.standard_normal(self.n_out)

    def weight_noise(self) -> np.ndarray:
        return np.outer(_scale_noise(self.eps_in), _scale_noise(self.eps_out))

    def effective_weight(self) -> np.ndarray:
        return self.mu_w.data + self.sigma_w.data * self.weight_noise()

    def __call__(self, x, noisy=True, tape=None):
        if noisy:
            W = ad.noisy_weight(self.mu_w, self.sigma_w, self.weight_noise(), tape)
            b = ad.noisy_weight(self.mu_b, self.sigma_b, _scale_noise(self.eps_out), tape)
        else:
            W, b = self.mu_w, self.mu_b
        return ad.affine(x, W, b, tape)


class BatchNorm:
    def __init__(self, features: int, prefix: str = ""):
        self.gamma = ad.Tensor(np.ones(features), True, prefix + "gamma")
        self.beta = ad.Tensor(np.zeros(features), True, prefix + "beta")
        self.stats = ad.BatchNormStats.fresh(features)
        self.prefix = prefix

    def params(self):
        return [self.gamma, self.beta]

    def __call__(self, x, train, tape=None):
        return ad.batch_norm(x, self.gamma, self.beta, self.stats, train, tape)


class QNetwork:
    """Trunk of noisy layers (each followed by batch norm and ReLU) feeding
    separate value and advantage heads.

    This object is the parameter set: ``state_dict`` lists every learnable
    tensor and the batch-norm running statistics in a fixed order.
    """

    def __init__(self, input_dim: int, hidden: Sequence[int] = DEFAULT_HIDDEN, seed: int = 0,
                 sigma_init: float = DEFAULT_SIGMA_INIT, n_actions: int = N_ACTIONS):
        hidden = tuple(int(h) for h in hidden)
        if not hidden:
            raise ValueError("hidden must list at least one layer width")
        if input_dim < 1 or min(hidden) < 1:
            raise ValueError("layer widths must be positive")
        rng = np.random.default_rng(seed)
        self.input_dim, self.hidden, self.sigma_init = int(input_dim), hidden, sigma_init
        self.n_actions = n_actions
        self.trunk = []
        width = self.input_dim
        for i, h in enumerate(hidden):
            self.trunk.append((NoisyLinear(width, h, rng, sigma_init, f"trunk{i}."),
                               BatchNorm(h, f"bn{i}.")))
            width = h
        self.value = NoisyLinear(width, 1, rng, sigma_init, "value.")
        self.advantage = NoisyLinear(width, n_actions, rng, sigma_init, "advantage.")

    @property
    def noisy_layers(self):
        return [lin for lin, _ in self.trunk] + [self.value, self.advantage]

    def parameters(self) -> list:
        out = []
        for lin, bn in self.trunk:
            out += lin.params() + bn.params()
        return out + self.value.params() + self.advantage.params()

    def resample_noise(self, rng: np.random.Generator) -> None:
        for layer in self.noisy_layers:
            layer.resample(rng)

    def clear_noise(self) -> None:
        for layer in self.noisy_layers:
            layer.eps_in = np.zeros(layer.n_in)
            layer.eps_out = np.zeros(layer.n_out)

    def forward(self, states, train: bool = False, noisy: bool = True,
                tape: Optional[ad.Tape] = None):
        """Return ``(Q, V, A)`` tensors; ``A`` is the raw, un-centred advantage."""
        x = ad.as_tensor(np.atleast_2d(np.asarray(
            states.data if isinstance(states, ad.Tensor) else states, dtype=np.float64)))
        if x.shape[1] != self.input_dim:
            raise ValueError(f"state dimension {x.shape[1]} != network input {self.input_dim}")
        for lin, bn in self.trunk:
            x = ad.relu(bn(lin(x, noisy, tape), train, tape), tape)
        v = self.value(x, noisy, tape)
        a = self.advantage(x, noisy, tape)
        return ad.dueling(v, a, tape), v, a

    def q_values(self, states, train: bool = False, noisy: bool = True) -> np.ndarray:
        return self.forward(states, train=train, noisy=noisy)[0].data

    # -- parameter-set plumbing -------------------------------------------

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        out = OrderedDict()
        for p in self.parameters():
            out[p.name] = p.data
        for i, (_, bn) in enumerate(self.trunk):
            out[f"bn{i}.running_mean"] = bn.stats.mean
            out[f"bn{i}.running_var"] = bn.stats.var
        return out

    def load_state_dict(self, state) -> None:
        own = self.state_dict()
        missing = [k for k in own if k not in state]
        if missing:
            raise ValueError(f"missing tensors: {missing}")
        for k, v in own.items():
            if np.shape(state[k]) != v.shape:
                raise ValueError(f"{k}: shape {np.shape(state[k])} != {v.shape}")
        for p in self.parameters():
            p.data[...] = state[p.name]
        for i, (_, bn) in enumerate(self.trunk):
            bn.stats.mean = np.array(state[f"bn{i}.running_mean"], dtype=np.float64)
            bn.stats.var = np.array(state[f"bn{i}.running_var"], dtype=np.float64)

    def copy_from(self, other: "QNetwork") -> None:
        """Wholesale parameter copy (target sync). Noise draws are not copied."""
        if self.input_dim != other.input_dim or self.hidden != other.hidden:
            raise ValueError("network topologies differ")
        self.load_state_dict(other.state_dict())

    def clone(self) -> "QNetwork":
        net = QNetwork(self.input_dim, self.hidden, 0, self.sigma_init, self.n_actions)
        net.copy_from(self)
        return net

    def save(self, path, meta: Optional[dict] = None) -> None:
        tensors = OrderedDict()
        for k, v in (meta or {}).items():
            if isinstance(v, str):
                # text metadata rides in the tensor name
                tensors[f"meta.{k}:{v}"] = np.float64(0.0)
            else:
                tensors[f"meta.{k}"] = np.asarray(v, dtype=np.float64)
        tensors["meta.input_dim"] = np.float64(self.input_dim)
        tensors["meta.hidden"] = np.asarray(self.hidden, dtype=np.float64)
        tensors["meta.sigma_init"] = np.float64(self.sigma_init)
        tensors.update(self.state_dict())
        ad.save_checkpoint(path, tensors)

    @classmethod
    def load(cls, path) -> "QNetwork":
        tensors = ad.load_checkpoint(path)
        net = cls(int(tensors["meta.input_dim"]),
                  tuple(int(h) for h in tensors["meta.hidden"]),
                  0, float(tensors["meta.sigma_init"]))
        net.load_state_dict(tensors)
        return net


def build_network(input_dim: int, hidden: Sequence[int] = DEFAULT_HIDDEN, seed: int = 0,
                  sigma_init: float = DEFAULT_SIGMA_INIT) -> QNetwork:
    return QNetwork(input_dim, hidden, seed, sigma_init)


def resample_noise(net: QNetwork, rng: np.random.Generator) -> None:
    net.resample_noise(rng)


def q_values(net: QNetwork, states, mode: str = "eval", noisy: bool = True) -> np.ndarray:
    if mode not in ("train", "eval"):
        raise ValueError("mode must be 'train' or 'eval'")
    return net.q_values(states, train=mode == "train", noisy=noisy)


def argmax_action(q) -> Action:
    # np.argmax returns the first maximum: ties resolve BUY < HOLD < SELL
    return Action(int(np.argmax(q)))


def greedy_action(net: QNetwork, state, noisy: bool = True) -> Action:
    values = getattr(state, "values", state)
    return argmax_action(net.q_values(values, train=False, noisy=noisy)[0])


def softmax(q) -> np.ndarray:
    """Action probabilities for reporting; never used in targets."""
    q = np.asarray(q, dtype=np.float64)
    z = np.exp(q - q.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)
