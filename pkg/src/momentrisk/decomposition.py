"""Causal short-run / long-run split of a time series at scale ``2**J``.

The long-run component is the trailing mean of the last ``2**J`` observations
(an expanding mean while fewer are available) and the short-run component is
the residual. Both components at ``t`` use only observations up to ``t``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view

from momentrisk.errors import NoData
from momentrisk.ingest import FLOAT_FORMAT
from momentrisk.moments import MEASURES, MomentPanel, _names


def trailing_mean(x: np.ndarray, width: int) -> np.ndarray:
    """Trailing mean over ``width`` points, expanding during warm-up.

    Each output uses a fixed reduction over its own window, so a prefix of the
    input reproduces a prefix of the output bit for bit.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    out = np.empty(n)
    k = min(width - 1, n)
    out[:k] = np.cumsum(x[:k]) / np.arange(1, k + 1)
    if n >= width:
        out[width - 1:] = sliding_window_view(x, width).mean(axis=1)
    return out


@dataclass
class HorizonComponents:
    scale_J: int
    short: np.ndarray
    long: np.ndarray
    warmup_len: int

    @property
    def width(self) -> int:
        return 2**self.scale_J


def decompose(series, J: int) -> HorizonComponents:
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or len(x) == 0:
        raise NoData("cannot decompose an empty series")
    if J < 1:
        raise ValueError("scale J must be >= 1")
    width = 2**J
    long = trailing_mean(x, width)
    return HorizonComponents(J, x - long, long, min(width - 1, len(x)))


def decompose_bands(series, scales: Sequence[int]) -> list[np.ndarray]:
    """Split into ``len(scales) + 1`` additive bands, fastest first.

    With scales ``J1 < J2 < ...`` the bands are ``x - m1, m1 - m2, ..., m_last``
    where ``m_k`` is the trailing mean at width ``2**J_k``.
    """
    scales = list(scales)
    if not scales or sorted(set(scales)) != scales:
        raise ValueError("scales must be a strictly increasing non-empty list")
    x = np.asarray(series, dtype=float)
    if len(x) == 0:
        raise NoData("cannot decompose an empty series")
    means = [trailing_mean(x, 2**J) for J in scales]
    bands = [x - means[0]]
    bands += [a - b for a, b in zip(means[:-1], means[1:])]
    bands.append(means[-1])
    return bands


def _decompose_observed(col: np.ndarray, J: int) -> tuple[np.ndarray, np.ndarray]:
    """Decompose the observed entries of ``col``; missing entries stay NaN."""
    short = np.full(len(col), np.nan)
    long = np.full(len(col), np.nan)
    ok = ~np.isnan(col)
    if ok.any():
        hc = decompose(col[ok], J)
        short[ok] = hc.short
        long[ok] = hc.long
    return short, long


def _decompose_frame(frame: pd.DataFrame, J: int) -> tuple[pd.DataFrame, pd.DataFrame]:
    values = frame.to_numpy(float)
    short = np.full_like(values, np.nan)
    long = np.full_like(values, np.nan)
    for j in range(values.shape[1]):
        short[:, j], long[:, j] = _decompose_observed(values[:, j], J)
    wrap = lambda v: pd.DataFrame(v, index=frame.index, columns=frame.columns)  # noqa: E731
    return wrap(short), wrap(long)


@dataclass
class PanelComponents:
    """Short/long components for every measure of a moment panel.

    ``short[measure]`` and ``long[measure]`` are (period x asset) frames;
    ``market`` has columns ``vol_s, vol_l, skew_s, ...``.
    """

    frequency: str
    scale_J: int
    short: dict[str, pd.DataFrame]
    long: dict[str, pd.DataFrame]
    market: pd.DataFrame | None = None

    @property
    def warmup_len(self) -> int:
        return 2**self.scale_J - 1


def decompose_panel(panel: MomentPanel, J: int) -> PanelComponents:
    """Column-wise decomposition of every measure and of the market series.

    Missing observations are skipped: each column is decomposed over its observed
    values in time order and missing cells stay missing.
    """
    if panel.vol.empty:
        raise NoData("empty moment panel")
    short, long = {}, {}
    for m in MEASURES:
        short[m], long[m] = _decompose_frame(panel[m], J)
    market = None
    if panel.market is not None:
        cols = {}
        for m in MEASURES:
            s, l = _decompose_observed(panel.market[m].to_numpy(float), J)
            cols[f"{m}_s"], cols[f"{m}_l"] = s, l
        market = pd.DataFrame(cols, index=panel.market.index)
    return PanelComponents(panel.frequency, J, short, long, market)


# -- files -----------------------------------------------------------------

def write_components(comp: PanelComponents, path: str | Path, market_path: str | Path | None = None) -> None:
    """Moment-panel layout with ``_s``/``_l`` suffixed columns; ``# J=<scale>`` header line."""
    key, cols = _names(comp.frequency)
    parts = {}
    for col, m in zip(cols, MEASURES):
        for suffix, src in (("_s", comp.short), ("_l", comp.long)):
            f = src[m].copy()
            f.index.name = key
            f.columns.name = "asset"
            parts[col + suffix] = f.stack(future_stack=True)
    long = pd.DataFrame(parts).reset_index()
    long[key] = pd.DatetimeIndex(long[key]).strftime("%Y-%m-%d")
    with open(path, "w", newline="") as fh:
        fh.write(f"# J={comp.scale_J}\n")
        long.to_csv(fh, index=False, float_format=FLOAT_FORMAT, na_rep="", lineterminator="\n")
    if market_path is not None and comp.market is not None:
        mk = comp.market.copy()
        mk.columns = [c + s for c in cols for s in ("_s", "_l")]
        mk.index = pd.DatetimeIndex(mk.index).strftime("%Y-%m-%d")
        mk.index.name = key
        with open(market_path, "w", newline="") as fh:
            fh.write(f"# J={comp.scale_J}\n")
            mk.to_csv(fh, float_format=FLOAT_FORMAT, na_rep="", lineterminator="\n")


def _read_header_J(path) -> int:
    with open(path) as fh:
        first = fh.readline().strip()
    if not first.startswith("# J="):
        raise ValueError(f"{path}: missing '# J=' header")
    return int(first[4:])


def read_components(path: str | Path, frequency: str, market_path: str | Path | None = None) -> PanelComponents:
    key, cols = _names(frequency)
    J = _read_header_J(path)
    df = pd.read_csv(path, comment="#", dtype={"asset": str}, float_precision="round_trip")
    df[key] = pd.to_datetime(df[key])
    short, long = {}, {}
    for col, m in zip(cols, MEASURES):
        for suffix, dest in (("_s", short), ("_l", long)):
            w = df.pivot(index=key, columns="asset", values=col + suffix).sort_index()
            w.index.name = "date"
            w.columns.name = None
            dest[m] = w
    market = None
    if market_path is not None and Path(market_path).exists():
        mk = pd.read_csv(market_path, comment="#", index_col=key, parse_dates=[key], float_precision="round_trip")
        mk.index.name = "date"
        mk.columns = [f"{m}{s}" for m in MEASURES for s in ("_s", "_l")]
        market = mk
    return PanelComponents(frequency, J, short, long, market)
