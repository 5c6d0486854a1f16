"""Factor matrices for the four-moment and horizon-specific pricing models.

Column names follow ``<MOMENT>[_<horizon>]_<source>``: ``RS_m`` is market
skewness, ``RK_l_I`` the long-run component of average idiosyncratic kurtosis.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from momentrisk.decomposition import PanelComponents
from momentrisk.errors import ConfigError, DataError, InsufficientData
from momentrisk.ingest import FLOAT_FORMAT
from momentrisk.moments import MEASURES, MomentPanel

log = logging.getLogger(__name__)

LABELS = {"vol": "RVOL", "skew": "RS", "kurt": "RK"}
SOURCES = ("m", "I")
CONTROLS = ("MKT", "SMB", "HML")


def factor_name(measure: str, source: str, horizon: str | None = None) -> str:
    mid = f"_{horizon}" if horizon else ""
    return f"{LABELS[measure]}{mid}_{source}"


def aggregate_columns(source: str) -> list[str]:
    return [factor_name(m, source) for m in MEASURES]


def horizon_columns(source: str) -> list[str]:
    return [factor_name(m, source, h) for m in MEASURES for h in ("s", "l")]


SFMM_COLUMNS = aggregate_columns("m") + aggregate_columns("I")
SHSM_COLUMNS = horizon_columns("m") + horizon_columns("I")

# regressor groups used for sort exposures; each sort controls for the rest of its group
GROUPS = {
    "market": aggregate_columns("m"),
    "market_hs": horizon_columns("m"),
    "idio": aggregate_columns("I"),
    "idio_hs": horizon_columns("I"),
}


def group_of(factor: str) -> str:
    for name, cols in GROUPS.items():
        if factor in cols:
            return name
    raise ConfigError(f"{factor!r} is not a moment factor")


def cross_sectional_mean(frame: pd.DataFrame) -> pd.DataFrame:
    """Equal-weighted mean over assets with defined values; ``n`` counts them."""
    values = frame.to_numpy(float)
    n = np.sum(~np.isnan(values), axis=1)
    with np.errstate(invalid="ignore"):
        mean = np.where(n > 0, np.nansum(values, axis=1) / np.maximum(n, 1), np.nan)
    return pd.DataFrame({"value": mean, "n": n}, index=frame.index)


def average_idiosyncratic_moment(panel: MomentPanel, measure: str) -> pd.DataFrame:
    """Average of a per-asset realized moment at each date, over assets where it is defined.

    Returns columns ``value`` and ``n`` (the number of contributing assets);
    dates with no defined asset have ``value`` NaN.
    """
    if measure not in MEASURES:
        raise ValueError(f"measure must be one of {MEASURES}")
    return cross_sectional_mean(panel[measure])


@dataclass
class ControlFactors:
    frame: pd.DataFrame

    def __post_init__(self):
        cols = {c.lower(): c for c in self.frame.columns}
        missing = [c for c in ("mkt", "smb", "hml") if c not in cols]
        if missing:
            raise DataError(f"control factors missing {missing}")
        f = self.frame[[cols["mkt"], cols["smb"], cols["hml"]]].astype(float)
        f.columns = list(CONTROLS)
        f.index = pd.DatetimeIndex(f.index)
        self.frame = f


def read_controls(path: str | Path) -> ControlFactors:
    df = pd.read_csv(path, float_precision="round_trip")
    if "date" not in df.columns:
        raise DataError(f"{path}: expected a date column")
    return ControlFactors(df.set_index(pd.to_datetime(df.pop("date"))))


@dataclass
class FactorMatrix:
    values: pd.DataFrame
    spec: str = "custom"
    dropped: int = 0

    def __post_init__(self):
        names = list(self.values.columns)
        if len(set(names)) != len(names):
            raise ConfigError("factor names must be unique")

    @property
    def factor_names(self) -> list[str]:
        return list(self.values.columns)

    @property
    def dates(self) -> pd.DatetimeIndex:
        return self.values.index

    def select(self, names: Sequence[str]) -> "FactorMatrix":
        missing = [n for n in names if n not in self.values.columns]
        if missing:
            raise ConfigError(f"factor matrix lacks columns {missing}")
        return FactorMatrix(self.values[list(names)], "custom", self.dropped)

    def to_csv(self, path: str | Path) -> None:
        out = self.values.copy()
        out.index = pd.DatetimeIndex(out.index).strftime("%Y-%m-%d")
        out.index.name = "date"
        out.to_csv(path, float_format=FLOAT_FORMAT, lineterminator="\n")


def read_factor_matrix(path: str | Path, spec: str = "custom") -> FactorMatrix:
    df = pd.read_csv(path, index_col="date", parse_dates=["date"], float_precision="round_trip")
    return FactorMatrix(df, spec)


def idiosyncratic_averages(panel: MomentPanel, components: PanelComponents | None = None) -> pd.DataFrame:
    """Average idiosyncratic aggregate moments and, if given, horizon components.

    Horizon components are averaged per asset after decomposition, so each
    ``(s) + (l)`` pair reproduces the aggregate average over the same assets.
    """
    cols = {}
    for m in MEASURES:
        cols[factor_name(m, "I")] = cross_sectional_mean(panel[m])["value"]
        if components is not None:
            for h, src in (("s", components.short), ("l", components.long)):
                cols[factor_name(m, "I", h)] = cross_sectional_mean(src[m])["value"]
    return pd.DataFrame(cols, index=panel.dates)


def market_columns(panel: MomentPanel, components: PanelComponents | None = None) -> pd.DataFrame:
    if panel.market is None:
        raise ConfigError("moment panel has no market series; set the index symbol")
    cols = {factor_name(m, "m"): panel.market[m] for m in MEASURES}
    if components is not None and components.market is not None:
        for m in MEASURES:
            cols[factor_name(m, "m", "s")] = components.market[f"{m}_s"]
            cols[factor_name(m, "m", "l")] = components.market[f"{m}_l"]
    return pd.DataFrame(cols, index=panel.market.index)


def build_factor_matrix(market: pd.DataFrame, idio: pd.DataFrame, spec: str = "SFMM",
                        controls: ControlFactors | None = None,
                        sources: Sequence[str] = SOURCES) -> FactorMatrix:
    """Assemble the regressors of one model.

    ``market`` and ``idio`` carry the columns named by :func:`factor_name`
    (see :func:`market_columns` and :func:`idiosyncratic_averages`). Column
    order is fixed: SFMM gives ``RVOL_m, RS_m, RK_m, RVOL_I, RS_I, RK_I``;
    SHSM gives the ``_s``/``_l`` pairs of each in the same order; controls
    ``MKT, SMB, HML`` are appended last. Rows with any missing factor are
    dropped and counted in ``dropped``.
    """
    if spec == "SFMM":
        per_source = aggregate_columns
    elif spec == "SHSM":
        per_source = horizon_columns
    else:
        raise ConfigError(f"unknown model spec {spec!r}; expected SFMM or SHSM")
    joined = market.join(idio, how="outer")
    names = [c for s in sources for c in per_source(s)]
    missing = [c for c in names if c not in joined.columns]
    if missing:
        hint = " (SHSM needs horizon components; run decompose first)" if spec == "SHSM" else ""
        raise ConfigError(f"missing factor columns {missing}{hint}")
    frame = joined[names]
    if controls is not None:
        frame = frame.join(controls.frame, how="left")
    n0 = len(frame)
    frame = frame.dropna(how="any")
    dropped = n0 - len(frame)
    if dropped:
        log.info("%s: dropped %d rows with missing factors", spec, dropped)
    frame.index.name = "date"
    return FactorMatrix(frame, spec, dropped)


def factor_correlations(matrix: FactorMatrix) -> pd.DataFrame:
    """Pairwise sample correlations over jointly observed rows.

    Pairs involving a constant column are NaN (undefined).
    """
    if len(matrix.values) < 3:
        raise InsufficientData("need at least 3 rows for correlations")
    values = matrix.values.to_numpy(float)
    names = matrix.factor_names
    k = len(names)
    out = np.full((k, k), np.nan)
    for i in range(k):
        for j in range(i, k):
            ok = ~(np.isnan(values[:, i]) | np.isnan(values[:, j]))
            if ok.sum() < 3 or np.ptp(values[ok, i]) == 0 or np.ptp(values[ok, j]) == 0:
                continue
            a = values[ok, i] - values[ok, i].mean()
            b = values[ok, j] - values[ok, j].mean()
            den = np.sqrt(np.dot(a, a) * np.dot(b, b))
            if den > 0:
                out[i, j] = out[j, i] = np.clip(np.dot(a, b) / den, -1.0, 1.0)
    return pd.DataFrame(out, index=names, columns=names)
