"""Static two-pass Fama-MacBeth estimation with predictive timing.

First pass: per asset, ``r[t+1, i] = a_i + sum_j b_ij x[t, j] + e``.
Second pass: ``mean_t r[t+1, i] = omega + sum_j lambda_j b_ij + eta_i`` across assets.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from momentrisk._ols import dependent_columns, has_full_rank, ols, with_intercept
from momentrisk.errors import CollinearityError, InsufficientData
from momentrisk.factors import FactorMatrix
from momentrisk.ingest import ReturnPanel

log = logging.getLogger(__name__)


def predictive_pairs(returns: ReturnPanel, factors: FactorMatrix,
                     timing: str = "predictive") -> tuple[pd.DataFrame, pd.DataFrame]:
    """Row-aligned (factors, returns) frames.

    With ``predictive`` timing, factor row ``t`` (a return-panel date) is paired
    with the next return-panel row. ``contemporaneous`` pairs equal dates.
    Pairs whose factor row is missing are dropped.
    """
    R = returns.excess_returns
    if timing == "predictive":
        X = factors.values.reindex(R.index[:-1])
        Y = R.iloc[1:]
    elif timing == "contemporaneous":
        X = factors.values.reindex(R.index)
        Y = R
    else:
        raise ValueError("timing must be 'predictive' or 'contemporaneous'")
    ok = ~X.isna().any(axis=1).to_numpy()
    return X[ok], Y[ok]


@dataclass
class FirstStageLoadings:
    factor_names: list[str]
    alpha: pd.Series
    beta: pd.DataFrame
    resid_var: pd.Series
    n_obs: pd.Series
    return_dates: pd.DatetimeIndex
    factor_dates: pd.DatetimeIndex
    dropped: list[str] = field(default_factory=list)

    @property
    def assets(self) -> list[str]:
        return list(self.beta.index)


def first_stage(returns: ReturnPanel, factors: FactorMatrix, min_coverage: float = 0.6,
                timing: str = "predictive") -> FirstStageLoadings:
    """Per-asset time-series OLS of returns on lagged factors, intercept included.

    Each asset uses its available rows; assets below ``min_coverage`` of the
    usable rows, with fewer than ``K + 2`` rows or a rank-deficient design are
    dropped and listed in ``dropped``. A collinear factor matrix raises
    :class:`CollinearityError`.
    """
    X, Y = predictive_pairs(returns, factors, timing)
    names = factors.factor_names
    K = len(names)
    if len(X) < K + 2:
        raise InsufficientData(f"{len(X)} usable rows for {K} factors")
    Z = with_intercept(X.to_numpy(float))
    bad = dependent_columns(Z)
    if bad:
        raise CollinearityError(["const" if j == 0 else names[j - 1] for j in bad])

    Yv = Y.to_numpy(float)
    present = ~np.isnan(Yv)
    counts = present.sum(axis=0)
    assets = list(Y.columns)
    coef = np.full((K + 1, len(assets)), np.nan)
    rvar = np.full(len(assets), np.nan)
    dropped = []

    full = counts == len(Z)
    if full.any():
        c, e = ols(Z, Yv[:, full])
        coef[:, full] = c
        rvar[full] = np.sum(e * e, axis=0) / (len(Z) - K - 1)
    for j in np.flatnonzero(~full):
        n = counts[j]
        if n < max(K + 2, min_coverage * len(Z)):
            dropped.append(assets[j])
            continue
        Zj = Z[present[:, j]]
        if not has_full_rank(Zj):
            log.info("asset %s: rank-deficient design, dropped", assets[j])
            dropped.append(assets[j])
            continue
        c, e = ols(Zj, Yv[present[:, j], j])
        coef[:, j] = c
        rvar[j] = np.dot(e, e) / (n - K - 1)

    keep = [a for a in assets if a not in set(dropped)]
    ki = [assets.index(a) for a in keep]
    if dropped:
        log.info("first stage dropped %d assets", len(dropped))
    beta = pd.DataFrame(coef[1:, ki].T, index=keep, columns=names)
    return FirstStageLoadings(
        names,
        pd.Series(coef[0, ki], index=keep),
        beta,
        pd.Series(rvar[ki], index=keep),
        pd.Series(counts[ki], index=keep),
        pd.DatetimeIndex(Y.index),
        pd.DatetimeIndex(X.index),
        dropped,
    )


@dataclass
class RiskPremiaEstimate:
    omega: float
    omega_tstat: float
    lambdas: pd.Series
    tstats: pd.Series
    r2: float
    n_assets: int
    shanken: bool = False

    def table(self) -> pd.DataFrame:
        rows = [("const", self.omega, self.omega_tstat)]
        rows += [(f, self.lambdas[f], self.tstats[f]) for f in self.lambdas.index]
        return pd.DataFrame(rows, columns=["factor", "lambda", "tstat"])


def second_stage(loadings: FirstStageLoadings, returns: ReturnPanel, shanken: bool = False,
                 factors: FactorMatrix | None = None) -> RiskPremiaEstimate:
    """Cross-sectional OLS of average returns on first-stage loadings.

    Standard errors are classical OLS ones; ``shanken=True`` applies the
    errors-in-variables correction, which needs the factor matrix. R-squared
    is unadjusted.
    """
    assets = loadings.assets
    K = len(loadings.factor_names)
    N = len(assets)
    if N < K + 2:
        raise InsufficientData(f"{N} assets for {K} factors")
    rbar = returns.excess_returns.loc[loadings.return_dates, assets].mean(axis=0).to_numpy(float)
    Z = with_intercept(loadings.beta.to_numpy(float))
    bad = dependent_columns(Z)
    if bad:
        raise CollinearityError(["const" if j == 0 else loadings.factor_names[j - 1] for j in bad])
    coef, e = ols(Z, rbar)
    ssr = float(np.dot(e, e))
    dev = rbar - rbar.mean()
    sst = float(np.dot(dev, dev))
    r2 = 1.0 - ssr / sst if sst > 0 else float("nan")
    if sst > 0:
        r2 = min(max(r2, 0.0), 1.0)
    s2 = ssr / (N - K - 1)
    cov = s2 * np.linalg.inv(Z.T @ Z)
    if shanken:
        if factors is None:
            raise ValueError("Shanken correction needs the factor matrix")
        F = factors.values.loc[loadings.factor_dates, loadings.factor_names].to_numpy(float)
        sigma_f = np.atleast_2d(np.cov(F, rowvar=False))
        lam = coef[1:]
        c = float(lam @ np.linalg.solve(sigma_f, lam))
        cov = cov * (1.0 + c)
        cov[1:, 1:] += sigma_f / len(F)
    se = np.sqrt(np.diag(cov))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = coef / se
    names = loadings.factor_names
    return RiskPremiaEstimate(float(coef[0]), float(t[0]), pd.Series(coef[1:], index=names),
                              pd.Series(t[1:], index=names), r2, N, shanken)


def fama_macbeth(returns: ReturnPanel, factors: FactorMatrix, min_coverage: float = 0.6,
                 shanken: bool = False) -> RiskPremiaEstimate:
    loadings = first_stage(returns, factors, min_coverage)
    return second_stage(loadings, returns, shanken=shanken, factors=factors)


def write_premia(est: RiskPremiaEstimate, path: str | Path, model: str = "") -> None:
    """``factor,lambda,tstat`` with a leading ``#`` header line carrying omega, R2 and N."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# model={model} omega={est.omega:.17g} r2={est.r2:.17g} "
                 f"n_assets={est.n_assets} r2_type=unadjusted shanken={str(est.shanken).lower()}\n")
        est.table().to_csv(fh, index=False, float_format="%.17g", lineterminator="\n")
