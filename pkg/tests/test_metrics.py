import math
import os
import statistics

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dqtrader.market_data import load_series
from dqtrader.metrics import TABLE_COLUMNS, buy_and_hold_report, compute_report

from conftest import make_series
from published_tables import ROWS


def percentile_linear(xs, q):
    xs = sorted(xs)
    pos = (len(xs) - 1) * q / 100
    lo = math.floor(pos)
    hi = min(lo + 1, len(xs) - 1)
    return xs[lo] + (xs[hi] - xs[lo]) * (pos - lo)


def test_total_return_example():
    assert compute_report([1000.0, 9525.5]).total_return == pytest.approx(852.55)


def test_constant_curve():
    r = compute_report([500.0] * 10)
    for name in ("arithmetic_return", "avg_daily_return", "daily_return_variance",
                 "time_weighted_return", "total_return", "sharpe", "var_95", "volatility"):
        assert getattr(r, name) == 0.0, name


def test_three_point_curve_by_hand():
    r = compute_report([1000.0, 1100.0, 990.0])
    np.testing.assert_allclose(r.daily_returns, [10.0, -10.0], atol=1e-12)
    assert r.arithmetic_return == pytest.approx(0.0, abs=1e-12)
    assert r.total_return == pytest.approx(-1.0, abs=1e-12)
    assert r.avg_daily_return == pytest.approx(0.0, abs=1e-12)
    assert r.daily_return_variance == pytest.approx(100.0, rel=1e-12)
    assert r.volatility == pytest.approx(10 * math.sqrt(252))


def test_against_stdlib_oracle(rng):
    v = 1000 * np.cumprod(np.exp(rng.normal(0, 0.02, 300)))
    v = np.concatenate([[1000.0], v])
    rep = compute_report(v)
    r = [100 * (b / a - 1) for a, b in zip(v[:-1], v[1:])]
    mean, var = statistics.fmean(r), statistics.pvariance(r)
    assert rep.avg_daily_return == pytest.approx(mean, rel=1e-12)
    assert rep.daily_return_variance == pytest.approx(var, rel=1e-10)
    assert rep.sharpe == pytest.approx(mean / math.sqrt(var), rel=1e-10)
    assert rep.var_95 == pytest.approx(-percentile_linear(r, 5), rel=1e-12)
    assert rep.time_weighted_return == pytest.approx((v[-1] / v[0]) ** (1 / 300) - 1, rel=1e-10)


def test_invalid_curves():
    with pytest.raises(ValueError):
        compute_report([1000.0])
    with pytest.raises(ValueError):
        compute_report([1000.0, 0.0])
    with pytest.raises(ValueError):
        compute_report([1000.0, float("nan")])


curves = st.lists(st.floats(0.5, 2.0), min_size=1, max_size=60).map(
    lambda g: np.concatenate([[1000.0], 1000.0 * np.cumprod(g)]))


@settings(max_examples=200, deadline=None)
@given(curves, st.floats(1e-3, 1e3))
def test_invariants(v, k):
    rep = compute_report(v)
    assert rep.total_return == pytest.approx(100 * (rep.final_value / rep.initial_investment - 1), abs=1e-9)
    assert rep.daily_return_variance >= 0 and rep.volatility >= 0
    assert np.prod(1 + rep.daily_returns / 100) * v[0] == pytest.approx(v[-1], rel=1e-6)
    n = len(rep.daily_returns)
    assert (1 + rep.time_weighted_return) ** n == pytest.approx(v[-1] / v[0], rel=1e-9)
    std = math.sqrt(rep.daily_return_variance)
    if std > 0:
        assert rep.sharpe * std == pytest.approx(rep.avg_daily_return, abs=1e-9)
    scaled = compute_report(v * k)
    for name in ("arithmetic_return", "avg_daily_return", "daily_return_variance",
                 "time_weighted_return", "total_return", "sharpe", "var_95", "volatility"):
        assert getattr(scaled, name) == pytest.approx(getattr(rep, name), rel=1e-9, abs=1e-9)


@pytest.mark.parametrize("asset,agent,printed,initial,final", ROWS)
def test_published_total_return_convention(asset, agent, printed, initial, final):
    rep = compute_report([initial, final], initial)
    assert abs(rep.total_return - printed) <= 1.0


def test_buy_and_hold_examples():
    flat = make_series([100.0] * 20, 10)
    assert buy_and_hold_report(flat).total_return == 0.0
    closes = [100.0] * 10 + list(np.linspace(100, 200, 10))
    # entry at the open after the first decision candle, exit at the last close
    up = make_series(closes, 10, opens=[100.0] * 12 + closes[11:-1])
    rep = buy_and_hold_report(up, env_config=None)
    t0 = 10 + 2
    assert rep.total_return == pytest.approx(100 * (200 / up.open[t0 + 1] - 1))
    doubling = make_series([50.0] * 13 + [100.0] * 7, 10, opens=[50.0] * 13 + [50.0] + [100.0] * 6)
    assert buy_and_hold_report(doubling).total_return == pytest.approx(100.0)


def test_table_row_layout():
    rep = compute_report([1000.0, 1100.0, 990.0])
    row = rep.table_row()
    assert len(row) == len(TABLE_COLUMNS) == 9
    assert row[-2:] == [1000.0, 990.0]
    text = rep.to_text({"asset": "X"})
    assert text.startswith("asset: X\n") and "total_return: " in text


GOOGL = os.environ.get("DQTRADER_GOOGL_CSV")


@pytest.mark.skipif(not GOOGL, reason="set DQTRADER_GOOGL_CSV to a GOOGL daily OHLC file")
def test_googl_buy_and_hold_band():
    series = load_series(GOOGL, os.environ.get("DQTRADER_GOOGL_SPLIT", "2018-01-01"))
    assert abs(buy_and_hold_report(series).total_return - 47) <= 10
