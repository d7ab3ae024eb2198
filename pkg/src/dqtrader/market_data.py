"""Daily OHLC ingestion, train/test splitting and state encodings."""
from __future__ import annotations

import csv
import datetime as dt
import enum
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import kernels


class DataError(ValueError):
    """Raised for unreadable, malformed or inconsistent market data."""


class Representation(str, enum.Enum):
    PATTERN = "pattern"
    VANILLA = "vanilla"
    CANDLE_REP = "candlerep"
    WINDOWED = "windowed"

    @classmethod
    def parse(cls, value) -> "Representation":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "").replace("_", "")
        for member in cls:
            if member.value == key:
                return member
        raise ValueError(f"unknown representation {value!r}")


@dataclass(frozen=True)
class PatternThresholds:
    """Ratio thresholds of the candlestick catalog (fractions of the bar range)."""

    doji_body: float = 0.05
    long_shadow: float = 0.6
    small_body: float = 0.3

    def as_array(self) -> np.ndarray:
        return np.array([self.doji_body, self.long_shadow, self.small_body])


DEFAULT_THRESHOLDS = PatternThresholds()


@dataclass(frozen=True)
class Candle:
    timestamp: dt.date
    open: float
    high: float
    low: float
    close: float
    volume: Optional[float] = None

    def __post_init__(self):
        problem = candle_problem(self.open, self.high, self.low, self.close, self.volume)
        if problem:
            raise DataError(problem)

    @property
    def bullish(self) -> bool:
        return self.close > self.open


def candle_problem(o, h, l, c, volume=None) -> Optional[str]:
    """Return a description of the first violated candle invariant, or None."""
    if not all(np.isfinite(v) for v in (o, h, l, c)):
        return "non-finite price"
    if min(o, h, l, c) <= 0:
        return "prices must be strictly positive"
    if h < l:
        return f"high {h} < low {l}"
    if l > min(o, c):
        return f"low {l} above min(open, close)"
    if h < max(o, c):
        return f"high {h} below max(open, close)"
    if volume is not None and not volume >= 0:
        return "volume must be non-negative"
    return None


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class MarketSeries:
    """An ordered daily OHLC series with a train/test split point.

    Prices live in read-only numpy arrays; ``candle(i)`` materialises a
    :class:`Candle` on demand.
    """

    symbol: str
    dates: tuple
    open: np.ndarray
    high: np.ndarray
    low: np.ndarray
    close: np.ndarray
    split_index: int
    volume: Optional[np.ndarray] = None
    # original text rows (without line terminators), kept for lossless saving
    source_rows: Optional[tuple] = field(default=None, compare=False, repr=False)
    source_header: Optional[str] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        n = len(self.dates)
        for name in ("open", "high", "low", "close"):
            arr = _frozen(getattr(self, name))
            if arr.shape != (n,):
                raise DataError(f"{name} has shape {arr.shape}, expected ({n},)")
            object.__setattr__(self, name, arr)
        if self.volume is not None:
            object.__setattr__(self, "volume", _frozen(self.volume))
        object.__setattr__(self, "dates", tuple(self.dates))
        for i in range(1, n):
            if not self.dates[i] > self.dates[i - 1]:
                raise DataError(f"timestamps not strictly increasing at position {i}")
        if not 0 < self.split_index < n:
            raise DataError(
                f"empty segment: split index {self.split_index} leaves a train or test "
                f"segment empty ({n} candles)"
            )

    @classmethod
    def from_candles(cls, symbol: str, candles: Sequence[Candle], split_index: int):
        vols = [c.volume for c in candles]
        volume = None if any(v is None for v in vols) else vols
        return cls(
            symbol=symbol,
            dates=tuple(c.timestamp for c in candles),
            open=[c.open for c in candles],
            high=[c.high for c in candles],
            low=[c.low for c in candles],
            close=[c.close for c in candles],
            split_index=split_index,
            volume=volume,
        )

    def __len__(self):
        return len(self.dates)

    def candle(self, i: int) -> Candle:
        if not -len(self) <= i < len(self):
            raise IndexError(f"candle index {i} out of range")
        vol = None if self.volume is None else float(self.volume[i])
        return Candle(self.dates[i], float(self.open[i]), float(self.high[i]),
                      float(self.low[i]), float(self.close[i]), vol)

    @property
    def candles(self) -> list:
        return [self.candle(i) for i in range(len(self))]

    def segment_bounds(self, segment: str) -> tuple:
        """Half-open index range [start, end) of the ``train`` or ``test`` segment."""
        if segment == "train":
            return 0, self.split_index
        if segment == "test":
            return self.split_index, len(self)
        raise ValueError(f"segment must be 'train' or 'test', got {segment!r}")


# --------------------------------------------------------------------------
# File I/O


def _parse_date(text: str) -> dt.date:
    return dt.date.fromisoformat(text.strip()[:10])


def load_series(path, split_date, symbol: Optional[str] = None) -> MarketSeries:
    """Read ``date,open,high,low,close[,volume]`` rows and split at ``split_date``.

    A header row is detected when the first field of the first line is not an
    ISO date. The split index is the first candle dated on or after
    ``split_date``; the split date must fall strictly after the first candle
    and no later than the last one.
    """
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise DataError(f"{path}: no such file")
    if isinstance(split_date, str):
        split_date = _parse_date(split_date)
    if isinstance(split_date, dt.datetime):
        split_date = split_date.date()

    with open(path, newline="") as fh:
        text = fh.read()
    lines = text.splitlines()
    header = None
    rows, candles = [], []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        fields = next(csv.reader([line]))
        if lineno == 1 and header is None:
            try:
                _parse_date(fields[0])
            except ValueError:
                header = line
                continue
        if len(fields) not in (5, 6):
            raise DataError(f"{path}:{lineno}: expected 5 or 6 fields, got {len(fields)}")
        try:
            date = _parse_date(fields[0])
            o, h, l, c = (float(f) for f in fields[1:5])
            vol = float(fields[5]) if len(fields) == 6 and fields[5].strip() else None
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: malformed row: {exc}") from None
        problem = candle_problem(o, h, l, c, vol)
        if problem:
            raise DataError(f"{path}:{lineno}: rejected row: {problem}")
        if candles and date <= candles[-1].timestamp:
            raise DataError(f"{path}:{lineno}: date {date} not after {candles[-1].timestamp}")
        candles.append(Candle(date, o, h, l, c, vol))
        rows.append(line)

    if len(candles) < 2:
        raise DataError(f"{path}: empty segment: need at least two candles, got {len(candles)}")
    first, last = candles[0].timestamp, candles[-1].timestamp
    if not first < split_date <= last:
        raise DataError(f"{path}: split date {split_date} outside ({first}, {last}]")
    split_index = next(i for i, c in enumerate(candles) if c.timestamp >= split_date)

    series = MarketSeries.from_candles(
        symbol or os.path.splitext(os.path.basename(path))[0], candles, split_index
    )
    object.__setattr__(series, "source_rows", tuple(rows))
    object.__setattr__(series, "source_header", header)
    return series


def save_series(series: MarketSeries, path) -> None:
    """Write the series back out; rows read from a file are reproduced verbatim."""
    with open(path, "w", newline="") as fh:
        if series.source_rows is not None:
            if series.source_header is not None:
                fh.write(series.source_header + "\n")
            for row in series.source_rows:
                fh.write(row + "\n")
            return
        fh.write("date,open,high,low,close" + (",volume" if series.volume is not None else "") + "\n")
        for i in range(len(series)):
            vals = [series.open[i], series.high[i], series.low[i], series.close[i]]
            if series.volume is not None:
                vals.append(series.volume[i])
            fh.write(series.dates[i].isoformat() + "," + ",".join(repr(float(v)) for v in vals) + "\n")


# --------------------------------------------------------------------------
# Features


def candle_ratios(c: Candle) -> tuple:
    """Upper-shadow, lower-shadow and body fractions of the bar's range."""
    r = kernels.candle_ratios([c.open], [c.high], [c.low], [c.close])[0]
    return float(r[0]), float(r[1]), float(r[2])


def match_patterns(c: Candle, prev: Candle,
                   thresholds: PatternThresholds = DEFAULT_THRESHOLDS) -> np.ndarray:
    """Catalog bit vector (see ``kernels.PATTERN_NAMES``) for ``c`` given the bar before it."""
    return kernels.candle_patterns(
        [c.open], [c.high], [c.low], [c.close], [prev.open], [prev.close],
        thresholds.as_array(),
    )[0]


def state_dim(repr_kind, window: int = 3) -> int:
    repr_kind = Representation.parse(repr_kind)
    return {
        Representation.PATTERN: kernels.N_PATTERNS,
        Representation.VANILLA: 4,
        Representation.CANDLE_REP: 4,
        Representation.WINDOWED: 4 * window,
    }[repr_kind]


@dataclass(frozen=True)
class StateVector:
    representation: Representation
    values: np.ndarray

    @property
    def dimension(self) -> int:
        return int(self.values.shape[0])


def _normalizers(series: MarketSeries) -> np.ndarray:
    norm = np.empty(len(series))
    norm[0] = series.open[0]
    norm[1:] = series.close[:-1]
    return norm


def encode_all(series: MarketSeries, repr_kind, window: int = 3,
               thresholds: PatternThresholds = DEFAULT_THRESHOLDS) -> np.ndarray:
    """Encode every index at once; rows with too little history are NaN.

    Row ``t`` equals ``encode_state(series, t, ...).values``.
    """
    repr_kind = Representation.parse(repr_kind)
    o, h, l, c = series.open, series.high, series.low, series.close
    n = len(series)
    norm = _normalizers(series)
    if repr_kind is Representation.PATTERN:
        po = np.concatenate([o[:1], o[:-1]])
        pc = np.concatenate([c[:1], c[:-1]])
        return kernels.candle_patterns(o, h, l, c, po, pc, thresholds.as_array()).astype(np.float64)
    if repr_kind is Representation.CANDLE_REP:
        ratios = kernels.candle_ratios(o, h, l, c)
        return np.column_stack([ratios, (c >= o).astype(np.float64)])
    quads = np.column_stack([o, h, l, c])
    if repr_kind is Representation.VANILLA:
        return quads / norm[:, None]
    if window < 1:
        raise ValueError("window must be positive")
    out = np.full((n, 4 * window), np.nan)
    for t in range(window - 1, n):
        out[t] = (quads[t - window + 1:t + 1] / norm[t]).ravel()
    return out


def encode_state(series: MarketSeries, t: int, repr_kind, window: int = 3,
                 thresholds: PatternThresholds = DEFAULT_THRESHOLDS) -> StateVector:
    """Agent-facing encoding of candle ``t``.

    Prices are scaled by the previous candle's close (the first candle by its
    own open). Windowed states stack the last ``window`` candles oldest first,
    all scaled by the same normalizer.
    """
    repr_kind = Representation.parse(repr_kind)
    n = len(series)
    lo = window - 1 if repr_kind is Representation.WINDOWED else 0
    if not lo <= t < n:
        raise IndexError(f"state index {t} out of range [{lo}, {n})")
    o, h, l, c = series.open, series.high, series.low, series.close
    norm = series.close[t - 1] if t > 0 else series.open[0]
    if repr_kind is Representation.PATTERN:
        p = max(t - 1, 0)
        bits = kernels.candle_patterns(o[t:t + 1], h[t:t + 1], l[t:t + 1], c[t:t + 1],
                                       o[p:p + 1], c[p:p + 1], thresholds.as_array())[0]
        values = bits.astype(np.float64)
    elif repr_kind is Representation.CANDLE_REP:
        r = kernels.candle_ratios(o[t:t + 1], h[t:t + 1], l[t:t + 1], c[t:t + 1])[0]
        values = np.array([r[0], r[1], r[2], 1.0 if c[t] >= o[t] else 0.0])
    elif repr_kind is Representation.VANILLA:
        values = np.array([o[t], h[t], l[t], c[t]]) / norm
    else:
        sl = slice(t - window + 1, t + 1)
        values = (np.column_stack([o[sl], h[sl], l[sl], c[sl]]) / norm).ravel()
    values.setflags(write=False)
    return StateVector(repr_kind, values)
