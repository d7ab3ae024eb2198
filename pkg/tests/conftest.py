import datetime as dt

import numpy as np
import pytest

from dqtrader.market_data import MarketSeries


def make_series(closes, split_index, opens=None, symbol="SYN", start=dt.date(2020, 1, 1),
                wick=0.0):
    """Series with open = previous close unless given; optional symmetric wicks."""
    closes = np.asarray(closes, dtype=float)
    if opens is None:
        opens = np.concatenate([[closes[0]], closes[:-1]])
    opens = np.asarray(opens, dtype=float)
    hi = np.maximum(opens, closes) * (1 + wick)
    lo = np.minimum(opens, closes) * (1 - wick)
    dates = [start + dt.timedelta(days=i) for i in range(len(closes))]
    return MarketSeries(symbol, dates, opens, hi, lo, closes, split_index)


def random_series(rng, n=120, split=80, vol=0.02):
    steps = np.exp(rng.normal(0.0, vol, n))
    closes = 100 * np.cumprod(steps)
    opens = np.concatenate([[100.0], closes[:-1]]) * np.exp(rng.normal(0, vol / 4, n))
    return make_series(closes, split, opens=opens, wick=0.01)


def write_csv(path, rows, header=True):
    lines = ["date,open,high,low,close,volume"] if header else []
    lines += [",".join(str(x) for x in r) for r in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def daily_rows(start, end, price=100.0):
    d, rows = start, []
    while d <= end:
        rows.append((d.isoformat(), price, price * 1.01, price * 0.99, price, 1000))
        d += dt.timedelta(days=1)
    return rows


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
