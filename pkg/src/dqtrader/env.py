"""Single-asset long/flat trading environment."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .market_data import MarketSeries, Representation, StateVector, encode_all
from .qnet import Action, QNetwork, argmax_action


class Position(enum.IntEnum):
    FLAT = 0
    LONG = 1


@dataclass(frozen=True)
class EnvConfig:
    initial_cash: float = 1000.0
    transaction_cost_rate: float = 0.0
    representation: Representation = Representation.WINDOWED
    window: int = 3

    def __post_init__(self):
        object.__setattr__(self, "representation", Representation.parse(self.representation))
        if not 0.0 <= self.transaction_cost_rate < 1.0:
            raise ValueError("transaction_cost_rate must lie in [0, 1)")
        if not self.initial_cash > 0:
            raise ValueError("initial_cash must be positive")
        if self.window < 1:
            raise ValueError("window must be positive")


@dataclass
class PortfolioState:
    cash: float
    units: float = 0.0
    equity_curve: list = field(default_factory=list)

    @property
    def position(self) -> Position:
        return Position.LONG if self.units > 0 else Position.FLAT

    def value(self, price: float) -> float:
        return self.cash + self.units * price


class EpisodeDone(RuntimeError):
    pass


class TradingEnv:
    """Steps a long/flat agent through one segment of a :class:`MarketSeries`.

    A decision taken on candle ``t`` executes at the open of ``t + 1``; the
    reward is the close-to-close percent move over that day for the position
    held after the action, minus the percent cost of any trade. The episode
    ends once the cursor reaches the last candle of the segment.
    """

    def __init__(self, series: MarketSeries, config: EnvConfig = EnvConfig()):
        self.series = series
        self.config = config
        self._states = encode_all(series, config.representation, config.window)
        self.segment = None
        self.t = None
        self.end = None
        self.done = True
        self.portfolio = None

    @property
    def state_dim(self) -> int:
        return self._states.shape[1]

    def state(self, t: int) -> StateVector:
        values = self._states[t].copy()
        values.setflags(write=False)
        return StateVector(self.config.representation, values)

    def first_index(self, segment: str) -> int:
        start, _ = self.series.segment_bounds(segment)
        return start + self.config.window - 1

    def reset(self, segment: str = "train") -> StateVector:
        start, end = self.series.segment_bounds(segment)
        if end - start < self.config.window + 1:
            raise ValueError(
                f"{segment} segment has {end - start} candles; window {self.config.window} "
                "needs at least window + 1"
            )
        self.segment, self.end = segment, end
        self.t = start + self.config.window - 1
        self.done = False
        self.portfolio = PortfolioState(cash=float(self.config.initial_cash))
        self.portfolio.equity_curve.append(self.portfolio.value(self.series.close[self.t]))
        return self.state(self.t)

    @property
    def position(self) -> Position:
        return self.portfolio.position

    def step(self, action) -> tuple:
        """Apply ``action`` and return ``(next_state, reward, done)``."""
        if self.done:
            raise EpisodeDone("step() called on a finished episode; call reset()")
        action = Action(int(action))
        s, pf, cost = self.series, self.portfolio, self.config.transaction_cost_rate
        t = self.t
        price = s.open[t + 1]
        before = pf.position
        if action is Action.BUY and before is Position.FLAT:
            pf.units = pf.cash * (1.0 - cost) / price
            pf.cash = 0.0
        elif action is Action.SELL and before is Position.LONG:
            pf.cash = pf.units * price * (1.0 - cost)
            pf.units = 0.0
        pos = int(pf.position)
        moved = abs(pos - int(before))
        reward = 100.0 * pos * (s.close[t + 1] - s.close[t]) / s.close[t] - 100.0 * cost * moved
        self.t = t + 1
        pf.equity_curve.append(pf.value(s.close[self.t]))
        self.done = self.t >= self.end - 1
        return self.state(self.t), float(reward), self.done


Policy = Union[QNetwork, Callable[[StateVector], int]]


@dataclass
class Rollout:
    dates: list
    equity_curve: np.ndarray
    daily_returns: np.ndarray
    actions: list
    positions: list

    def action_rows(self) -> list:
        """``(date, action, position, portfolio_value)`` rows, one per equity point."""
        return [(d, Action(a).name, Position(p).name, v) for d, a, p, v in
                zip(self.dates, self.actions, self.positions, self.equity_curve)]


def run_policy(env: TradingEnv, policy: Policy, segment: str = "test") -> Rollout:
    """Greedy rollout with noise off.

    Row ``k`` of the result describes candle ``t0 + k``: the position held at
    its close, the portfolio value at its close and the action decided on it.
    The final candle admits no decision and is logged as HOLD.
    """
    if isinstance(policy, QNetwork):
        net = policy

        def policy(state):
            return argmax_action(net.q_values(state.values, train=False, noisy=False)[0])

    state = env.reset(segment)
    dates, actions, positions = [], [], []
    done = False
    while not done:
        a = Action(int(policy(state)))
        dates.append(env.series.dates[env.t])
        positions.append(int(env.position))
        actions.append(int(a))
        state, _, done = env.step(a)
    dates.append(env.series.dates[env.t])
    positions.append(int(env.position))
    actions.append(int(Action.HOLD))
    curve = np.array(env.portfolio.equity_curve)
    returns = 100.0 * (curve[1:] / curve[:-1] - 1.0)
    return Rollout(dates, curve, returns, actions, positions)


def always(action: Action) -> Callable:
    return lambda state: action
