"""Intraday bar ingestion: five-minute log-price grids and excess-return panels."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import date as Date
from datetime import datetime, time, timedelta
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from momentrisk._parallel import parallel_map
from momentrisk.errors import BadRecord, DataError, MissingRate, NoData

log = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
PERIODS_PER_YEAR = {"daily": 252, "weekly": 52}


@dataclass(frozen=True)
class Session:
    """Trading session window split into ``K`` equal intervals."""

    open: time = time(9, 30)
    close: time = time(16, 0)
    K: int = 78
    # a day whose first (last) bar is further than this from the open (close)
    # is flagged as a short session
    max_edge_gap: timedelta = timedelta(minutes=30)

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be positive")
        if self.length <= timedelta(0):
            raise ValueError("session close must be after open")

    @property
    def length(self) -> timedelta:
        return datetime.combine(Date.min, self.close) - datetime.combine(Date.min, self.open)

    @property
    def interval(self) -> timedelta:
        return self.length / self.K

    def boundaries(self, day) -> np.ndarray:
        """The K+1 slot boundaries of ``day`` as datetime64[ns]."""
        start = np.datetime64(datetime.combine(pd.Timestamp(day).date(), self.open), "ns")
        step = np.timedelta64(int(self.interval.total_seconds() * 1e9), "ns")
        return start + step * np.arange(self.K + 1)


@dataclass(frozen=True)
class BarRecord:
    timestamp: datetime
    symbol: str
    price: float


@dataclass
class IntradayGrid:
    symbol: str
    date: Date
    log_prices: np.ndarray
    short_session: bool = False

    @property
    def returns(self) -> np.ndarray:
        return np.diff(self.log_prices)

    @property
    def K(self) -> int:
        return len(self.log_prices) - 1

    @property
    def open_price(self) -> float:
        return float(np.exp(self.log_prices[0]))

    @property
    def close_price(self) -> float:
        return float(np.exp(self.log_prices[-1]))


@dataclass
class RiskFreeCurve:
    """Annualized short rate (decimal, e.g. 0.0252 for 2.52%) per calendar date."""

    annualized_rate: pd.Series

    def __post_init__(self):
        s = self.annualized_rate.copy()
        s.index = pd.DatetimeIndex(s.index).normalize()
        self.annualized_rate = s.sort_index()

    @property
    def dates(self) -> pd.DatetimeIndex:
        return self.annualized_rate.index

    @classmethod
    def constant(cls, dates, rate: float = 0.0) -> "RiskFreeCurve":
        return cls(pd.Series(float(rate), index=pd.DatetimeIndex(dates)))

    def per_period_rate(self, day, frequency: str = "daily") -> float:
        key = pd.Timestamp(day).normalize()
        try:
            annual = self.annualized_rate.loc[key]
        except KeyError:
            raise MissingRate(f"no risk-free rate for {key.date()}") from None
        return float(annual) / PERIODS_PER_YEAR[frequency]

    def per_period_series(self, dates, frequency: str = "daily") -> np.ndarray:
        idx = pd.DatetimeIndex(dates).normalize()
        missing = idx.difference(self.dates)
        if len(missing):
            raise MissingRate(f"no risk-free rate for {missing[0].date()} ({len(missing)} dates)")
        return self.annualized_rate.reindex(idx).to_numpy(float) / PERIODS_PER_YEAR[frequency]


@dataclass
class ReturnPanel:
    """Excess log returns, rows are periods and columns are assets. NaN marks missing."""

    frequency: str
    excess_returns: pd.DataFrame

    @property
    def dates(self) -> pd.DatetimeIndex:
        return self.excess_returns.index

    @property
    def assets(self) -> list[str]:
        return list(self.excess_returns.columns)

    def to_long(self) -> pd.DataFrame:
        df = self.excess_returns.copy()
        df.index.name = "date"
        df.columns.name = "asset"
        out = df.stack(future_stack=True).rename("excess_return").reset_index()
        return out.dropna(subset=["excess_return"])


@dataclass
class GridSet:
    """All grids of a bar file stacked as ``log_prices[asset, day, slot]``."""

    dates: pd.DatetimeIndex
    symbols: list[str]
    log_prices: np.ndarray
    short_session: np.ndarray = field(default=None)

    @property
    def returns(self) -> np.ndarray:
        return np.diff(self.log_prices, axis=-1)

    def symbol_index(self, symbol: str) -> int:
        try:
            return self.symbols.index(symbol)
        except ValueError:
            raise DataError(f"symbol {symbol!r} not present in bar data") from None


def _grid_from_arrays(times: np.ndarray, prices: np.ndarray, day, symbol: str,
                      session: Session) -> IntradayGrid:
    if len(times) == 0:
        raise NoData(f"no bars for {symbol} on {day}")
    bad = np.flatnonzero(~(prices > 0))
    if len(bad):
        ts = pd.Timestamp(times[bad[0]])
        raise BadRecord(f"non-positive price {prices[bad[0]]} for {symbol} at {ts.isoformat()}", ts)
    if np.any(np.diff(times) < np.timedelta64(0, "ns")):
        order = np.argsort(times, kind="stable")
        times, prices = times[order], prices[order]
    edges = session.boundaries(day)
    idx = np.searchsorted(times, edges, side="right") - 1
    # slots before the first bar take the first bar's price
    idx = np.maximum(idx, 0)
    gap = np.timedelta64(int(session.max_edge_gap.total_seconds() * 1e9), "ns")
    short = bool(times[0] > edges[0] + gap or times[-1] < edges[-1] - gap)
    return IntradayGrid(symbol, pd.Timestamp(day).date(), np.log(prices[idx]), short)


def build_five_minute_grid(bars: Sequence[BarRecord], session: Session | None = None,
                           K: int | None = None) -> IntradayGrid:
    """Build the grid of last-observed log prices for one symbol and day.

    Slot ``j`` holds the last price recorded at or before ``open + j * interval``.
    """
    if not bars:
        raise NoData("empty bar sequence")
    session = session or Session()
    if K is not None and K != session.K:
        session = Session(session.open, session.close, K, session.max_edge_gap)
    times = np.array([np.datetime64(pd.Timestamp(b.timestamp), "ns") for b in bars])
    prices = np.array([b.price for b in bars], dtype=float)
    symbol = bars[0].symbol
    return _grid_from_arrays(times, prices, pd.Timestamp(bars[0].timestamp).normalize(), symbol, session)


def period_excess_return(grid: IntradayGrid, rf: RiskFreeCurve, frequency: str = "daily") -> float:
    """Open-to-close log return of the grid less the per-period risk-free rate."""
    rate = rf.per_period_rate(grid.date, frequency)
    return float(grid.log_prices[-1] - grid.log_prices[0]) - rate


def weekly_anchor_positions(dates: pd.DatetimeIndex, anchor_weekday: int = 0,
                            days: int = 5) -> np.ndarray:
    """Row positions of week anchors that have ``days`` trailing rows available."""
    dates = pd.DatetimeIndex(dates)
    pos = np.flatnonzero(dates.weekday == anchor_weekday)
    return pos[pos >= days - 1]


def trailing_blocks(values: np.ndarray, positions: np.ndarray, days: int = 5) -> np.ndarray:
    """Stack the ``days`` trailing rows ending at each position: shape (anchors, days, ...)."""
    offsets = np.arange(-(days - 1), 1)
    return values[positions[:, None] + offsets[None, :]]


def aggregate_weekly_returns(daily: ReturnPanel, anchor_weekday: int = 0, days: int = 5) -> ReturnPanel:
    """Sum the trailing ``days`` daily excess returns at each weekly anchor.

    Anchors lacking a full trailing block at the start of the sample are dropped.
    A week with any missing day is NaN for that asset.
    """
    if daily.frequency != "daily":
        raise DataError("weekly aggregation needs a daily panel")
    pos = weekly_anchor_positions(daily.dates, anchor_weekday, days)
    if len(pos) == 0:
        raise NoData("daily panel does not span a full week")
    blocks = trailing_blocks(daily.excess_returns.to_numpy(float), pos, days)
    weekly = blocks.sum(axis=1)
    frame = pd.DataFrame(weekly, index=daily.dates[pos], columns=daily.excess_returns.columns)
    frame.index.name = "date"
    return ReturnPanel("weekly", frame)


# -- files -----------------------------------------------------------------

def read_bars(path: str | Path) -> pd.DataFrame:
    df = pd.read_csv(path, dtype={"symbol": str, "price": float}, float_precision="round_trip")
    missing = {"timestamp", "symbol", "price"} - set(df.columns)
    if missing:
        raise DataError(f"{path}: missing columns {sorted(missing)}")
    df["timestamp"] = pd.to_datetime(df["timestamp"], format="ISO8601")
    if df.empty:
        raise NoData(f"{path}: no bars")
    return df


def read_risk_free(path: str | Path) -> RiskFreeCurve:
    df = pd.read_csv(path, float_precision="round_trip")
    if not {"date", "annualized_rate"} <= set(df.columns):
        raise DataError(f"{path}: expected columns date,annualized_rate")
    return RiskFreeCurve(pd.Series(df["annualized_rate"].to_numpy(float),
                                   index=pd.to_datetime(df["date"])))


def read_adjustments(path: str | Path) -> pd.DataFrame:
    df = pd.read_csv(path, dtype={"symbol": str}, float_precision="round_trip")
    if not {"date", "symbol", "factor"} <= set(df.columns):
        raise DataError(f"{path}: expected columns date,symbol,factor")
    df["date"] = pd.to_datetime(df["date"])
    return df


def apply_adjustments(bars: pd.DataFrame, adjustments: pd.DataFrame) -> pd.DataFrame:
    """Multiply each bar price by the (symbol, date) adjustment factor, default 1."""
    out = bars.copy()
    key = out["timestamp"].dt.normalize()
    factors = adjustments.set_index(["symbol", "date"])["factor"]
    idx = pd.MultiIndex.from_arrays([out["symbol"], key])
    out["price"] = out["price"].to_numpy() * factors.reindex(idx).fillna(1.0).to_numpy()
    return out


def build_grids(bars: pd.DataFrame, session: Session | None = None, threads: int | None = None,
                exclude_short: bool = True) -> GridSet:
    """Grid every (symbol, day) present in ``bars``.

    Missing days, and short sessions when ``exclude_short`` is set, are left as NaN
    rows so that later stages exclude them instead of imputing.
    """
    session = session or Session()
    if bars.empty:
        raise NoData("no bars")
    bars = bars.sort_values(["symbol", "timestamp"], kind="stable")
    day = bars["timestamp"].dt.normalize()
    dates = pd.DatetimeIndex(np.unique(day.to_numpy()))
    symbols = sorted(bars["symbol"].unique())
    didx = {d: i for i, d in enumerate(dates)}

    groups = list(bars.assign(_day=day).groupby("symbol", sort=True))

    def one_symbol(item):
        symbol, g = item
        rows = []
        ts = g["timestamp"].to_numpy("datetime64[ns]")
        px = g["price"].to_numpy(float)
        dd = g["_day"].to_numpy("datetime64[ns]")
        cuts = np.flatnonzero(dd[1:] != dd[:-1]) + 1
        for lo, hi in zip(np.r_[0, cuts], np.r_[cuts, len(dd)]):
            grid = _grid_from_arrays(ts[lo:hi], px[lo:hi], dd[lo], symbol, session)
            rows.append((didx[pd.Timestamp(dd[lo])], grid))
        return rows

    results = parallel_map(one_symbol, groups, threads)
    logp = np.full((len(symbols), len(dates), session.K + 1), np.nan)
    short = np.zeros((len(symbols), len(dates)), dtype=bool)
    for a, rows in enumerate(results):
        for d, grid in rows:
            short[a, d] = grid.short_session
            if grid.short_session and exclude_short:
                continue
            logp[a, d] = grid.log_prices
    n_short = int(short.sum())
    if n_short:
        log.info("%d short-session asset-days flagged%s", n_short,
                 " and excluded" if exclude_short else "")
    return GridSet(dates, symbols, logp, short)


def daily_return_panel(grids: GridSet, rf: RiskFreeCurve, exclude: Iterable[str] = ()) -> ReturnPanel:
    """Open-to-close excess log returns for every gridded symbol not in ``exclude``."""
    keep = [i for i, s in enumerate(grids.symbols) if s not in set(exclude)]
    lp = grids.log_prices[keep]
    raw = (lp[..., -1] - lp[..., 0]).T
    rate = rf.per_period_series(grids.dates, "daily")
    frame = pd.DataFrame(raw - rate[:, None], index=grids.dates,
                         columns=[grids.symbols[i] for i in keep])
    frame.index.name = "date"
    return ReturnPanel("daily", frame)


def write_panel(panel: ReturnPanel, path: str | Path) -> None:
    long = panel.to_long()
    long["date"] = long["date"].dt.strftime("%Y-%m-%d")
    long.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def read_panel(path: str | Path, frequency: str) -> ReturnPanel:
    df = pd.read_csv(path, dtype={"asset": str}, float_precision="round_trip")
    df["date"] = pd.to_datetime(df["date"])
    wide = df.pivot(index="date", columns="asset", values="excess_return").sort_index()
    wide.columns.name = None
    return ReturnPanel(frequency, wide)
