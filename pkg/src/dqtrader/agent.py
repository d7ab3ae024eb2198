"""Training loop: noisy exploration, prioritized replay, Double-DQN targets,
weighted smooth-L1 loss with L2 regularisation, periodic target sync."""
from __future__ import annotations

import io
import logging
import time
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from . import autodiff as ad
from .env import EnvConfig, Rollout, TradingEnv, run_policy
from .market_data import MarketSeries
from .metrics import BacktestReport, compute_report
from .qnet import DEFAULT_HIDDEN, N_ACTIONS, Action, QNetwork, argmax_action
from .replay import PrioritizedReplay, Transition, beta_schedule

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    episodes: int = 50
    gamma: float = 0.9
    batch_size: int = 16
    replay_capacity: int = 4096
    sync_every: int = 256
    l2: float = 1e-4
    lr: float = 1e-3
    alpha: float = 0.6
    beta_start: float = 0.4
    beta_end: float = 1.0
    per_eps: float = 1e-5
    hidden: tuple = DEFAULT_HIDDEN
    sigma_init: float = 0.5
    noisy: bool = True
    double: bool = True
    epsilon_floor: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        for name, message in self.problems():
            raise ValueError(f"{name}: {message}")

    def problems(self) -> list:
        """``(field, message)`` for every violated invariant."""
        checks = [
            ("gamma", 0.0 <= self.gamma < 1.0, "discount out of [0,1)"),
            ("episodes", self.episodes >= 0, "must be non-negative"),
            ("batch_size", self.batch_size >= 2,
             "must be at least 2 (batch norm needs batch statistics)"),
            ("batch_size", self.batch_size <= self.replay_capacity, "exceeds replay_capacity"),
            ("sync_every", self.sync_every >= 1, "must be at least 1"),
            ("l2", self.l2 >= 0, "must be non-negative"),
            ("lr", self.lr > 0, "must be positive"),
            ("alpha", self.alpha >= 0, "must be non-negative"),
            ("beta_start", 0.0 <= self.beta_start <= 1.0, "must lie in [0, 1]"),
            ("beta_end", 0.0 <= self.beta_end <= 1.0, "must lie in [0, 1]"),
            ("per_eps", self.per_eps > 0, "must be positive"),
            ("hidden", bool(self.hidden) and min(self.hidden) >= 1,
             "must list positive layer widths"),
            ("sigma_init", self.sigma_init >= 0, "must be non-negative"),
            ("epsilon_floor", 0.0 <= self.epsilon_floor <= 1.0, "must lie in [0, 1]"),
        ]
        return [(name, message) for name, ok, message in checks if not ok]


@dataclass
class TrainLog:
    losses: list = field(default_factory=list)
    l2_terms: list = field(default_factory=list)
    mean_td: list = field(default_factory=list)
    episode_rewards: list = field(default_factory=list)
    sync_steps: list = field(default_factory=list)
    wall_clock: float = 0.0

    @property
    def total_losses(self) -> list:
        return [a + b for a, b in zip(self.losses, self.l2_terms)]

    def to_csv(self) -> str:
        """Per-gradient-step rows, then per-episode rows; timing is left out
        so that identical runs serialise identically."""
        buf = io.StringIO()
        buf.write("step,huber_loss,l2_term,mean_abs_td\n")
        for i, (a, b, c) in enumerate(zip(self.losses, self.l2_terms, self.mean_td)):
            buf.write(f"{i},{a!r},{b!r},{c!r}\n")
        buf.write("episode,cumulative_reward\n")
        for i, r in enumerate(self.episode_rewards):
            buf.write(f"{i},{r!r}\n")
        buf.write("sync_steps," + " ".join(str(s) for s in self.sync_steps) + "\n")
        return buf.getvalue()


# --------------------------------------------------------------------------
# Targets


def _eval_q(net: QNetwork, states) -> np.ndarray:
    return net.q_values(states, train=False, noisy=False)


def double_dqn_targets(rewards, next_states, terminals, policy: QNetwork,
                       target: QNetwork, gamma: float) -> np.ndarray:
    """Policy net picks the next action, target net scores it; both noise-free."""
    if policy.input_dim != target.input_dim or policy.hidden != target.hidden:
        raise ValueError("policy and target networks differ in topology")
    rewards = np.asarray(rewards, dtype=np.float64)
    terminals = np.asarray(terminals, dtype=bool)
    a_star = np.argmax(_eval_q(policy, next_states), axis=1)
    q_next = _eval_q(target, next_states)[np.arange(len(rewards)), a_star]
    return np.where(terminals, rewards, rewards + gamma * q_next)


def max_q_targets(rewards, next_states, terminals, net: QNetwork, gamma: float) -> np.ndarray:
    """Single-estimator target ``r + gamma * max_a Q(next, a)``."""
    rewards = np.asarray(rewards, dtype=np.float64)
    terminals = np.asarray(terminals, dtype=bool)
    q_next = _eval_q(net, next_states).max(axis=1)
    return np.where(terminals, rewards, rewards + gamma * q_next)


def double_dqn_target(r: float, next_state, done: bool, policy: QNetwork,
                      target: QNetwork, gamma: float) -> float:
    values = getattr(next_state, "values", next_state)
    return float(double_dqn_targets([r], np.atleast_2d(values), [done], policy, target, gamma)[0])


# --------------------------------------------------------------------------
# Agent


class DQNAgent:
    """Policy/target pair, optimizer and replay memory for one training run.

    Environment-agnostic: feed it states, transitions and call :meth:`learn`.
    """

    def __init__(self, state_dim: int, cfg: TrainConfig = TrainConfig(),
                 beta_steps: int = 0):
        self.cfg = cfg
        seeds = np.random.SeedSequence(cfg.seed).spawn(5)
        init_seed = int(seeds[0].generate_state(1)[0])
        self.policy_noise = np.random.default_rng(seeds[1])
        self.target_noise = np.random.default_rng(seeds[2])
        self.sample_rng = np.random.default_rng(seeds[3])
        self.explore_rng = np.random.default_rng(seeds[4])
        sigma = cfg.sigma_init if cfg.noisy else 0.0
        self.policy = QNetwork(state_dim, cfg.hidden, init_seed, sigma)
        self.target = self.policy.clone()
        self.optimizer = ad.Adam(self.policy.parameters(), lr=cfg.lr, l2=cfg.l2)
        self.buffer = PrioritizedReplay(cfg.replay_capacity, state_dim)
        self.beta_steps = beta_steps
        self.env_steps = 0
        self.grad_steps = 0
        self.log = TrainLog()

    def _resample(self):
        if self.cfg.noisy:
            self.policy.resample_noise(self.policy_noise)
            self.target.resample_noise(self.target_noise)

    def act(self, state) -> Action:
        values = getattr(state, "values", state)
        if self.cfg.epsilon_floor > 0 and self.explore_rng.random() < self.cfg.epsilon_floor:
            return Action(int(self.explore_rng.integers(N_ACTIONS)))
        if self.cfg.noisy:
            self.policy.resample_noise(self.policy_noise)
        q = self.policy.q_values(values, train=False, noisy=self.cfg.noisy)[0]
        return argmax_action(q)

    def remember(self, transition: Transition) -> None:
        self.buffer.push(transition)

    def targets(self, rewards, next_states, terminals) -> np.ndarray:
        if self.cfg.double:
            return double_dqn_targets(rewards, next_states, terminals,
                                      self.policy, self.target, self.cfg.gamma)
        return max_q_targets(rewards, next_states, terminals, self.target, self.cfg.gamma)

    def l2_term(self) -> float:
        if self.cfg.l2 == 0:
            return 0.0
        return float(ad.l2_penalty(self.policy.parameters(), self.cfg.l2).data)

    def learn(self) -> Optional[dict]:
        """One prioritized gradient step; ``None`` while the buffer is too small."""
        cfg = self.cfg
        if len(self.buffer) < cfg.batch_size:
            return None
        beta = beta_schedule(self.grad_steps, self.beta_steps, cfg.beta_start, cfg.beta_end)
        batch = self.buffer.sample(cfg.batch_size, beta, self.sample_rng)
        self._resample()
        y = self.targets(batch.rewards, batch.next_states, batch.terminals)

        tape = ad.Tape()
        q, _, _ = self.policy.forward(batch.states, train=True, noisy=cfg.noisy, tape=tape)
        q_sa = ad.gather(q, batch.actions, tape)
        loss = ad.smooth_l1(q_sa, y, batch.is_weights, tape=tape)
        l2_term = self.l2_term()
        tape.backward(loss)
        self.optimizer.step()

        td = y - q_sa.data
        self.buffer.update_priorities(batch.indices, td, cfg.alpha, cfg.per_eps)
        self.grad_steps += 1
        info = {"loss": float(loss.data), "l2": l2_term, "mean_td": float(np.mean(np.abs(td)))}
        self.log.losses.append(info["loss"])
        self.log.l2_terms.append(l2_term)
        self.log.mean_td.append(info["mean_td"])
        return info

    def end_step(self) -> None:
        """Count an environment step; every ``sync_every`` steps copy policy to target."""
        self.env_steps += 1
        if self.env_steps % self.cfg.sync_every == 0:
            self.target.copy_from(self.policy)
            self._resample()
            self.log.sync_steps.append(self.env_steps)


def episode_length(series: MarketSeries, env_config: EnvConfig, segment: str = "train") -> int:
    start, end = series.segment_bounds(segment)
    return max(end - (start + env_config.window - 1) - 1, 0)


def train(series: MarketSeries, cfg: TrainConfig = TrainConfig(),
          env_config: EnvConfig = EnvConfig()) -> tuple:
    """Run ``cfg.episodes`` passes over the train segment; return ``(policy_net, log)``."""
    started = time.perf_counter()
    env = TradingEnv(series, env_config)
    steps = episode_length(series, env_config)
    agent = DQNAgent(env.state_dim, cfg, beta_steps=cfg.episodes * steps)
    for episode in range(cfg.episodes):
        state = env.reset("train")
        done, total = False, 0.0
        while not done:
            action = agent.act(state)
            next_state, reward, done = env.step(action)
            agent.remember(Transition(state.values, int(action), reward, next_state.values, done))
            agent.learn()
            agent.end_step()
            total += reward
            state = next_state
        agent.log.episode_rewards.append(total)
        log.debug("episode %d reward %.4f", episode, total)
    agent.log.wall_clock = time.perf_counter() - started
    return agent.policy, agent.log


def backtest(policy, series: MarketSeries, env_config: EnvConfig = EnvConfig(),
             segment: str = "test") -> tuple:
    """Greedy rollout plus metrics; returns ``(report, rollout)``."""
    rollout: Rollout = run_policy(TradingEnv(series, env_config), policy, segment)
    return compute_report(rollout.equity_curve, env_config.initial_cash), rollout


def evaluate(net, series: MarketSeries, env_config: EnvConfig = EnvConfig()) -> BacktestReport:
    return backtest(net, series, env_config, "test")[0]


def config_fields() -> list:
    return [f.name for f in fields(TrainConfig)]
