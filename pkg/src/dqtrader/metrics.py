"""Profitability and risk metrics of an equity curve."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .env import EnvConfig, TradingEnv, always, run_policy
from .qnet import Action

TRADING_DAYS = 252

# (attribute, column title) in the order of the published result tables
TABLE_COLUMNS = (
    ("arithmetic_return", "Arithmetic Return"),
    ("avg_daily_return", "Average Daily Return"),
    ("daily_return_variance", "Daily Return Variance"),
    ("time_weighted_return", "Time Weighted Return"),
    ("total_return", "Total Return (%)"),
    ("sharpe", "Sharpe Ratio"),
    ("volatility", "Volatility"),
    ("initial_investment", "Initial Investment"),
    ("final_value", "Final Portfolio Value"),
)
SCALAR_FIELDS = tuple(name for name, _ in TABLE_COLUMNS) + ("var_95",)


@dataclass
class BacktestReport:
    arithmetic_return: float
    avg_daily_return: float
    daily_return_variance: float
    time_weighted_return: float
    total_return: float
    sharpe: float
    var_95: float
    volatility: float
    initial_investment: float
    final_value: float
    equity_curve: np.ndarray = field(repr=False)
    daily_returns: np.ndarray = field(repr=False)

    def scalars(self) -> dict:
        return {name: float(getattr(self, name)) for name in SCALAR_FIELDS}

    def to_text(self, extra: dict = None) -> str:
        """``key: value`` lines; floats use their shortest round-trip repr."""
        lines = [f"{k}: {v}" for k, v in (extra or {}).items()]
        lines += [f"{k}: {v!r}" for k, v in self.scalars().items()]
        lines.append(f"days: {len(self.daily_returns)}")
        return "\n".join(lines) + "\n"

    def table_row(self) -> list:
        return [float(getattr(self, name)) for name, _ in TABLE_COLUMNS]


def compute_report(equity, initial: float = None) -> BacktestReport:
    """Metrics of a per-day portfolio value series.

    Daily returns are simple percent changes. ``initial`` defaults to the
    first equity value.
    """
    v = np.asarray(equity, dtype=np.float64)
    if v.ndim != 1 or v.size < 2:
        raise ValueError("equity curve needs at least two points")
    if np.any(~np.isfinite(v)) or np.any(v <= 0):
        raise ValueError("equity values must be finite and positive")
    initial = float(v[0]) if initial is None else float(initial)
    r = 100.0 * (v[1:] / v[:-1] - 1.0)
    n = r.size
    mean = float(r.mean())
    var = float(r.var())
    std = float(np.sqrt(var))
    # equal returns can carry rounding noise; treat that spread as zero
    if std <= 1e-12 * max(1.0, float(np.abs(r).max())):
        var = std = 0.0
    growth = v[-1] / v[0]
    return BacktestReport(
        arithmetic_return=float(r.sum()),
        avg_daily_return=mean,
        daily_return_variance=var,
        time_weighted_return=float(growth ** (1.0 / n) - 1.0),
        total_return=float(100.0 * (v[-1] / initial - 1.0)),
        sharpe=mean / std if std > 0 else 0.0,
        var_95=float(-np.percentile(r, 5)),
        volatility=std * np.sqrt(TRADING_DAYS),
        initial_investment=initial,
        final_value=float(v[-1]),
        equity_curve=v,
        daily_returns=r,
    )


def buy_and_hold_report(series, segment: str = "test", initial: float = 1000.0,
                        env_config=None) -> BacktestReport:
    """Buy on the first decision candle of the segment and hold to its end.

    Runs through :class:`~dqtrader.env.TradingEnv` with an always-BUY policy,
    so the baseline shares the agent's execution convention exactly.
    """
    if env_config is None:
        env_config = EnvConfig(initial_cash=initial)
    elif env_config.initial_cash != initial:
        env_config = replace(env_config, initial_cash=initial)
    rollout = run_policy(TradingEnv(series, env_config), always(Action.BUY), segment)
    return compute_report(rollout.equity_curve, initial)
