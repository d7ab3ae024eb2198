"""Enhanced DQN trader: noisy dueling Q-network, prioritized replay, Double
targets and L2-regularised smooth-L1 training on daily OHLC data."""
from .agent import TrainConfig, TrainLog, backtest, double_dqn_target, evaluate, train
from .env import EnvConfig, TradingEnv, run_policy
from .market_data import MarketSeries, Representation, encode_state, load_series
from .metrics import BacktestReport, buy_and_hold_report, compute_report
from .qnet import Action, QNetwork, build_network, greedy_action

__version__ = "0.1.0"
