"""Realized variance, volatility, skewness and kurtosis from intraday returns.

Skewness and kurtosis are standardized by realized variance and scaled by
``sqrt(K)`` and ``K``, so constant returns give exactly 1 for both and a single
nonzero return gives ``sqrt(K)`` and ``K``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import date as Date
from pathlib import Path

import numpy as np
import pandas as pd

from momentrisk.errors import InsufficientData, NoData
from momentrisk.ingest import FLOAT_FORMAT, GridSet, trailing_blocks, weekly_anchor_positions

MEASURES = ("vol", "skew", "kurt")
ANNUALIZATION = ("outside_sqrt", "inside_sqrt", "none")


def _as_returns(returns) -> np.ndarray:
    r = np.asarray(returns, dtype=float)
    if r.ndim != 1 or len(r) < 2:
        raise InsufficientData(f"need at least 2 intraday returns, got {r.size}")
    return r


def realized_variance(returns) -> float:
    r = _as_returns(returns)
    return float(np.sum(r * r))


def realized_skewness(returns) -> float:
    """Returns NaN (undefined) on a zero-variance day."""
    r = _as_returns(returns)
    rdv = np.sum(r * r)
    if rdv == 0:
        return math.nan
    return float(math.sqrt(len(r)) * np.sum(r * r * r) / rdv**1.5)


def realized_kurtosis(returns) -> float:
    """Returns NaN (undefined) on a zero-variance day."""
    r = _as_returns(returns)
    rdv = np.sum(r * r)
    if rdv == 0:
        return math.nan
    r2 = r * r
    return float(len(r) * np.sum(r2 * r2) / rdv**2)


def realized_measures(returns: np.ndarray) -> dict[str, np.ndarray]:
    """Vectorized realized measures over the last axis.

    Rows containing NaN give NaN everywhere; zero-variance rows give NaN skewness
    and kurtosis.
    """
    r = np.asarray(returns, dtype=float)
    K = r.shape[-1]
    if K < 2:
        raise InsufficientData(f"need at least 2 intraday returns, got {K}")
    # explicit products: the vectorized power routine is not sign-symmetric,
    # which would break exact odd-power cancellation
    r2 = r * r
    rdv = np.sum(r2, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        rds = math.sqrt(K) * np.sum(r2 * r, axis=-1) / rdv**1.5
        rdk = K * np.sum(r2 * r2, axis=-1) / rdv**2
    undefined = ~(rdv > 0)
    rds = np.where(undefined, np.nan, rds)
    rdk = np.where(undefined, np.nan, rdk)
    return {"var": rdv, "vol": np.sqrt(rdv), "skew": rds, "kurt": rdk}


@dataclass(frozen=True)
class DailyMoments:
    symbol: str
    date: Date
    rdv: float
    rdvol: float
    rds: float
    rdk: float

    @property
    def defined(self) -> bool:
        return not (math.isnan(self.rds) or math.isnan(self.rdk))

    @classmethod
    def from_returns(cls, symbol: str, day, returns) -> "DailyMoments":
        m = realized_measures(_as_returns(returns))
        return cls(symbol, day, float(m["var"]), float(m["vol"]), float(m["skew"]), float(m["kurt"]))


@dataclass
class MomentPanel:
    """Per-asset moment matrices (period x asset) plus the market index series.

    ``variance`` is kept at daily frequency only; weekly aggregation needs it.
    ``market`` has columns ``vol, skew, kurt`` (and ``var`` when daily).
    """

    frequency: str
    vol: pd.DataFrame
    skew: pd.DataFrame
    kurt: pd.DataFrame
    market: pd.DataFrame | None = None
    variance: pd.DataFrame | None = None

    def __getitem__(self, measure: str) -> pd.DataFrame:
        return {"vol": self.vol, "skew": self.skew, "kurt": self.kurt, "var": self.variance}[measure]

    @property
    def dates(self) -> pd.DatetimeIndex:
        return self.vol.index

    @property
    def assets(self) -> list[str]:
        return list(self.vol.columns)


def compute_moment_panel(grids: GridSet, index_symbol: str | None = None) -> MomentPanel:
    """Daily realized moments for every gridded symbol; ``index_symbol`` feeds the market series."""
    m = realized_measures(grids.returns)
    assets = [s for s in grids.symbols if s != index_symbol]
    cols = [grids.symbols.index(s) for s in assets]

    def frame(key):
        f = pd.DataFrame(m[key][cols].T, index=grids.dates, columns=assets)
        f.index.name = "date"
        return f

    market = None
    if index_symbol is not None:
        a = grids.symbol_index(index_symbol)
        market = pd.DataFrame({k: m[k][a] for k in ("var", "vol", "skew", "kurt")}, index=grids.dates)
        market.index.name = "date"
    return MomentPanel("daily", frame("vol"), frame("skew"), frame("kurt"), market, frame("var"))


def _weekly_vol(rdv_sum: np.ndarray, annualization: str, days: int) -> np.ndarray:
    scale = 252.0 / days
    if annualization == "outside_sqrt":
        return scale * np.sqrt(rdv_sum)
    if annualization == "inside_sqrt":
        return np.sqrt(scale * rdv_sum)
    if annualization == "none":
        return np.sqrt(rdv_sum)
    raise ValueError(f"annualization must be one of {ANNUALIZATION}")


def weekly_aggregate(daily: MomentPanel, annualization: str = "outside_sqrt",
                     anchor_weekday: int = 0, days: int = 5) -> MomentPanel:
    """Weekly moments at each anchor from the ``days`` trailing daily moments.

    Volatility is ``(252/days) * sqrt(sum RDV)`` under the default
    ``outside_sqrt`` placement; skewness and kurtosis are plain means. Weeks with
    any missing or undefined day are NaN.
    """
    if daily.frequency != "daily" or daily.variance is None:
        raise ValueError("weekly aggregation needs a daily panel with variances")
    pos = weekly_anchor_positions(daily.dates, anchor_weekday, days)
    if len(pos) == 0:
        raise NoData("daily moment panel does not span a full week")
    index = daily.dates[pos]
    index.name = "date"

    def block(values):
        return trailing_blocks(np.asarray(values, dtype=float), pos, days)

    def frame(values):
        return pd.DataFrame(values, index=index, columns=daily.vol.columns)

    vol = frame(_weekly_vol(block(daily.variance).sum(axis=1), annualization, days))
    skew = frame(block(daily.skew).mean(axis=1))
    kurt = frame(block(daily.kurt).mean(axis=1))
    market = None
    if daily.market is not None:
        mk = daily.market
        market = pd.DataFrame({
            "vol": _weekly_vol(block(mk["var"]).sum(axis=1), annualization, days),
            "skew": block(mk["skew"]).mean(axis=1),
            "kurt": block(mk["kurt"]).mean(axis=1),
        }, index=index)
    return MomentPanel("weekly", vol, skew, kurt, market)


# -- files -----------------------------------------------------------------

_DAILY_COLS = ("rdvol", "rds", "rdk")
_WEEKLY_COLS = ("rvol", "rs", "rk")


def _names(frequency: str):
    return ("date", _DAILY_COLS) if frequency == "daily" else ("week", _WEEKLY_COLS)


def write_moments(panel: MomentPanel, path: str | Path, market_path: str | Path | None = None) -> None:
    """``date,asset,rdvol,rds,rdk`` (daily) or ``week,asset,rvol,rs,rk`` (weekly).

    Undefined moments are written as empty fields.
    """
    key, cols = _names(panel.frequency)
    parts = {}
    for col, measure in zip(cols, MEASURES):
        f = panel[measure].copy()
        f.index.name = key
        f.columns.name = "asset"
        parts[col] = f.stack(future_stack=True)
    long = pd.DataFrame(parts).reset_index()
    long[key] = pd.DatetimeIndex(long[key]).strftime("%Y-%m-%d")
    long.to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep="", lineterminator="\n")
    if market_path is not None and panel.market is not None:
        mk = panel.market[list(MEASURES)].copy()
        mk.columns = list(cols)
        mk.index = pd.DatetimeIndex(mk.index).strftime("%Y-%m-%d")
        mk.index.name = key
        mk.to_csv(market_path, float_format=FLOAT_FORMAT, na_rep="", lineterminator="\n")


def read_moments(path: str | Path, frequency: str, market_path: str | Path | None = None) -> MomentPanel:
    key, cols = _names(frequency)
    df = pd.read_csv(path, dtype={"asset": str}, float_precision="round_trip")
    df[key] = pd.to_datetime(df[key])
    frames = {}
    for col, measure in zip(cols, MEASURES):
        w = df.pivot(index=key, columns="asset", values=col).sort_index()
        w.index.name = "date"
        w.columns.name = None
        frames[measure] = w
    market = None
    if market_path is not None and Path(market_path).exists():
        mk = pd.read_csv(market_path, index_col=key, parse_dates=[key], float_precision="round_trip")
        mk.index.name = "date"
        market = mk.rename(columns=dict(zip(cols, MEASURES)))
    return MomentPanel(frequency, frames["vol"], frames["skew"], frames["kurt"], market)
