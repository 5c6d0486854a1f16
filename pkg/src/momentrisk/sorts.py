"""Rolling-window exposure sorts into quantile portfolios with High-Low spreads."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from momentrisk._ols import has_full_rank, ols, with_intercept
from momentrisk.errors import ConfigError, InsufficientData, RankError, SortError
from momentrisk.factors import GROUPS, FactorMatrix
from momentrisk.ingest import ReturnPanel

log = logging.getLogger(__name__)

BPS = 1e4


@dataclass(frozen=True)
class SortConfig:
    window_len: int = 63
    n_quantiles: int = 5
    holding: int = 5
    step: int = 5
    # group name from factors.GROUPS, an explicit column list, or None to infer
    exposure_spec: str | tuple[str, ...] | None = None
    min_coverage: float = 0.8
    timing: str = "predictive"
    nw_lags: int = 0

    def __post_init__(self):
        if self.n_quantiles < 2:
            raise ConfigError("n_quantiles must be at least 2")
        if min(self.window_len, self.holding, self.step) < 1:
            raise ConfigError("window_len, holding and step must be positive")
        if self.timing not in ("predictive", "contemporaneous"):
            raise ConfigError("timing must be 'predictive' or 'contemporaneous'")

    def exposure_columns(self, sort_variable: str, available: Sequence[str]) -> list[str]:
        spec = self.exposure_spec
        if spec is None:
            spec = next((g for g, cols in GROUPS.items() if sort_variable in cols), None)
            if spec is None:
                return list(available)
        cols = list(GROUPS[spec]) if isinstance(spec, str) else list(spec)
        if sort_variable not in cols:
            raise ConfigError(f"{sort_variable} is not in exposure set {cols}")
        missing = [c for c in cols if c not in available]
        if missing:
            raise ConfigError(f"factor matrix lacks {missing}")
        if self.window_len <= len(cols) + 2:
            raise ConfigError(f"window_len must exceed {len(cols) + 2} for {len(cols)} regressors")
        return cols


def estimate_exposures(returns: pd.DataFrame | np.ndarray, factors: pd.DataFrame | np.ndarray,
                       timing: str = "predictive", min_coverage: float = 0.8,
                       assets: Sequence[str] | None = None, factor_names: Sequence[str] | None = None
                       ) -> pd.DataFrame:
    """OLS factor loadings of each asset over one window.

    ``returns`` and ``factors`` cover the same window rows. Under predictive
    timing factor row ``k`` explains return row ``k + 1``. Assets observed on
    fewer than ``min_coverage`` of the pairs, or whose own rows give a
    rank-deficient design, are left out. A rank-deficient window design raises
    :class:`RankError`.
    """
    if isinstance(returns, pd.DataFrame):
        assets = list(returns.columns)
        returns = returns.to_numpy(float)
    if isinstance(factors, pd.DataFrame):
        factor_names = list(factors.columns)
        factors = factors.to_numpy(float)
    R = np.asarray(returns, dtype=float)
    F = np.asarray(factors, dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    assets = list(assets) if assets is not None else [str(i) for i in range(R.shape[1])]
    factor_names = list(factor_names) if factor_names is not None else [f"f{j}" for j in range(F.shape[1])]
    if timing == "predictive":
        F, R = F[:-1], R[1:]
    ok = ~np.isnan(F).any(axis=1)
    F, R = F[ok], R[ok]
    K = F.shape[1]
    if len(F) < K + 2:
        raise InsufficientData(f"{len(F)} window rows for {K} regressors")
    Z = with_intercept(F)
    if not has_full_rank(Z):
        raise RankError("rank-deficient factor design in window")
    present = ~np.isnan(R)
    counts = present.sum(axis=0)
    coef = np.full((K + 1, R.shape[1]), np.nan)
    full = counts == len(Z)
    if full.any():
        coef[:, full] = ols(Z, R[:, full])[0]
    for j in np.flatnonzero(~full & (counts >= max(K + 2, min_coverage * len(Z)))):
        Zj = Z[present[:, j]]
        if has_full_rank(Zj):
            coef[:, j] = ols(Zj, R[present[:, j], j])[0]
    keep = ~np.isnan(coef[0])
    return pd.DataFrame(coef[1:, keep].T, index=[a for a, k in zip(assets, keep) if k],
                        columns=factor_names)


def form_quantile_portfolios(loadings: pd.Series, n: int = 5) -> pd.Series:
    """Assign assets to portfolios 1..n by ascending loading.

    Ties are broken by asset identifier. Sizes differ by at most one, with the
    remainder going to the lowest portfolios first.
    """
    loadings = loadings.dropna()
    N = len(loadings)
    if N < n:
        raise SortError(f"{N} assets with loadings for {n} portfolios")
    ids = np.array([str(a) for a in loadings.index])
    order = np.lexsort((ids, loadings.to_numpy(float)))
    base, rem = divmod(N, n)
    sizes = [base + (1 if q < rem else 0) for q in range(n)]
    labels = np.repeat(np.arange(1, n + 1), sizes)
    out = pd.Series(0, index=loadings.index, dtype=int)
    out.iloc[order] = labels
    return out


def tstat(x: np.ndarray, lags: int = 0) -> float:
    """Mean over its standard error; Newey-West weighting when ``lags > 0``."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 2:
        return float("nan")
    if lags <= 0:
        se = np.std(x, ddof=1) / np.sqrt(n)
    else:
        d = x - x.mean()
        lrv = np.dot(d, d) / n
        for lag in range(1, min(lags, n - 1) + 1):
            lrv += 2 * (1 - lag / (lags + 1)) * np.dot(d[lag:], d[:-lag]) / n
        se = np.sqrt(lrv / n)
    return float(x.mean() / se) if se > 0 else float("nan")


@dataclass
class SortReport:
    sort_variable: str
    mean_bps: np.ndarray
    tstats: np.ndarray
    high_low: float
    high_low_t: float
    n_windows: int
    # per-roll post-ranking mean daily returns, one column per portfolio plus HL
    series: pd.DataFrame | None = None

    def to_frame(self) -> pd.DataFrame:
        q = [str(i + 1) for i in range(len(self.mean_bps))] + ["HL"]
        return pd.DataFrame({
            "sort_variable": self.sort_variable,
            "quantile": q,
            "mean_bps": list(self.mean_bps) + [self.high_low],
            "tstat": list(self.tstats) + [self.high_low_t],
        })


def run_sort(returns: ReturnPanel, factors: FactorMatrix, cfg: SortConfig | None = None,
             sort_variable: str | None = None) -> SortReport:
    """Roll the exposure window forward, sort, and track post-ranking returns.

    Each roll estimates loadings over ``window_len`` rows, forms equal-weighted
    quantile portfolios on ``sort_variable`` and records each portfolio's mean
    daily return over the next ``holding`` rows. Rolls advance by ``step``.
    Means are reported in basis points.
    """
    cfg = cfg or SortConfig()
    if sort_variable is None:
        sort_variable = factors.factor_names[0]
    cols = cfg.exposure_columns(sort_variable, factors.factor_names)
    R = returns.excess_returns
    F = factors.values[cols].reindex(R.index).to_numpy(float)
    Rv = R.to_numpy(float)
    assets = list(R.columns)
    T = len(R)
    L, h = cfg.window_len, cfg.holding
    if T < L + h:
        raise InsufficientData(f"sample of {T} rows shorter than window {L} + holding {h}")

    pos = {a: i for i, a in enumerate(assets)}
    rows, dates = [], []
    skipped = 0
    for w0 in range(0, T - L - h + 1, cfg.step):
        try:
            load = estimate_exposures(Rv[w0:w0 + L], F[w0:w0 + L], cfg.timing, cfg.min_coverage,
                                      assets, cols)
        except (RankError, InsufficientData) as exc:
            log.info("window at row %d skipped: %s", w0, exc)
            skipped += 1
            continue
        try:
            ports = form_quantile_portfolios(load[sort_variable], cfg.n_quantiles)
        except SortError as exc:
            log.info("window at row %d skipped: %s", w0, exc)
            skipped += 1
            continue
        post = Rv[w0 + L:w0 + L + h]
        member_idx = np.array([pos[a] for a in ports.index])
        labels = ports.to_numpy()
        vals = np.empty(cfg.n_quantiles)
        for q in range(cfg.n_quantiles):
            block = post[:, member_idx[labels == q + 1]]
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                vals[q] = np.nanmean(np.nanmean(block, axis=1))
        rows.append(vals)
        dates.append(R.index[w0 + L])

    if not rows:
        raise InsufficientData("no usable sort windows")
    P = np.array(rows)
    valid = ~np.isnan(P).any(axis=1)
    P = P[valid]
    dates = [d for d, v in zip(dates, valid) if v]
    if len(P) < 2:
        raise InsufficientData("fewer than two complete sort windows")
    hl = P[:, -1] - P[:, 0]
    means = P.mean(axis=0) * BPS
    ts = np.array([tstat(P[:, q], cfg.nw_lags) for q in range(cfg.n_quantiles)])
    series = pd.DataFrame(P, index=pd.DatetimeIndex(dates, name="date"),
                          columns=[str(q + 1) for q in range(cfg.n_quantiles)])
    series["HL"] = hl
    return SortReport(sort_variable, means, ts, float(means[-1] - means[0]),
                      tstat(hl, cfg.nw_lags), len(P), series)


def write_sort_results(reports: Sequence[SortReport], path: str | Path) -> None:
    """Machine-readable ``sort_variable,quantile,mean_bps,tstat``."""
    frame = pd.concat([r.to_frame() for r in reports], ignore_index=True)
    frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def read_sort_results(path: str | Path) -> list[SortReport]:
    df = pd.read_csv(path, dtype={"quantile": str, "sort_variable": str}, float_precision="round_trip")
    out = []
    for var, g in df.groupby("sort_variable", sort=False):
        q = g[g["quantile"] != "HL"]
        hl = g[g["quantile"] == "HL"].iloc[0]
        out.append(SortReport(var, q["mean_bps"].to_numpy(float), q["tstat"].to_numpy(float),
                              float(hl["mean_bps"]), float(hl["tstat"]), 0))
    return out
