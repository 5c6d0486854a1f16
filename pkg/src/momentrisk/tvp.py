"""Quasi-Bayesian local-likelihood (QBLL) time-varying-parameter regression.

At every target time ``s`` the likelihood is reweighted by a Gaussian kernel in
``|s - t| / H`` and combined with a Normal-Gamma prior, which gives a
Normal-Gamma quasi-posterior for ``(beta_s, lambda_s)`` where ``lambda_s`` is
the error precision. Draws at different ``s`` are independent.

Kernel normalization: raw weights are normalized to sum to one in each row and
rescaled by the Kish effective sample size ``1 / sum(w_norm**2)``, so uniform
weights give ``theta = 1`` everywhere. ``normalization="literal"`` computes the
effective size from the raw weights instead.

Gamma draws use the shape-rate parameterization (mean ``alpha / gamma``).
The shape update adds the full kernel mass ``sum(theta)`` by default
(``shape_rule="full"``); ``"conjugate"`` adds half of it, which is the exact
conjugate update for a Gaussian likelihood.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd
from scipy.linalg import solve_triangular

from momentrisk._ols import with_intercept
from momentrisk._parallel import parallel_map
from momentrisk.crosssection import predictive_pairs
from momentrisk.errors import InsufficientData, RankError
from momentrisk.factors import FactorMatrix
from momentrisk.ingest import ReturnPanel

NORMALIZATIONS = ("kish", "literal")
SHAPE_RULES = ("full", "conjugate")


@dataclass
class KernelWeights:
    T: int
    H: float
    theta: np.ndarray  # (T, T) local weights, row s is the diagonal of D_s
    ess: np.ndarray  # (T,) effective sample size per target time
    normalization: str = "kish"
    observed: np.ndarray | None = None

    @property
    def raw(self) -> np.ndarray:
        return _raw_kernel(self.T, self.H, self.observed)

    @property
    def normalized(self) -> np.ndarray:
        raw = self.raw
        return raw / raw.sum(axis=1, keepdims=True)

    def row(self, s: int) -> np.ndarray:
        return self.theta[s]


def _raw_kernel(T: int, H: float, observed: np.ndarray | None = None) -> np.ndarray:
    idx = np.arange(T, dtype=float)
    raw = np.exp(-0.5 * ((idx[:, None] - idx[None, :]) / H) ** 2) / math.sqrt(2 * math.pi)
    if observed is not None:
        raw = raw * observed[None, :]
    return raw


def kernel_weights(T: int, H: float | None = None, normalization: str = "kish",
                   observed: np.ndarray | None = None) -> KernelWeights:
    """Gaussian kernel weights for every target time ``s`` in ``0..T-1``.

    ``H`` defaults to ``sqrt(T)``. ``observed`` masks out time points (their
    weight is zero) while keeping the time distances of the rest.
    """
    if T < 1:
        raise ValueError("T must be at least 1")
    H = math.sqrt(T) if H is None else float(H)
    if not H > 0:
        raise ValueError("bandwidth H must be positive")
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
    mask = None if observed is None else np.asarray(observed, dtype=float)
    raw = _raw_kernel(T, H, mask)
    total = raw.sum(axis=1, keepdims=True)
    norm = raw / total
    if normalization == "kish":
        ess = 1.0 / np.sum(norm * norm, axis=1)
    else:
        ess = 1.0 / np.sum(raw * raw, axis=1)
    theta = ess[:, None] * norm
    return KernelWeights(T, H, theta, ess, normalization, mask)


@dataclass
class NormalGammaPrior:
    beta0: np.ndarray
    kappa0: np.ndarray
    alpha0: float
    gamma0: float

    def __post_init__(self):
        self.beta0 = np.asarray(self.beta0, dtype=float)
        self.kappa0 = np.atleast_2d(np.asarray(self.kappa0, dtype=float))
        if self.alpha0 <= 0 or self.gamma0 <= 0:
            raise ValueError("alpha0 and gamma0 must be positive")


def ols_prior(y: np.ndarray, X: np.ndarray, kappa_scale: float = 0.01,
              alpha0: float = 1.0) -> NormalGammaPrior:
    """Prior centred on full-sample OLS.

    ``kappa0 = kappa_scale * diag(mean(x_j**2))`` (so the intercept column gets
    ``kappa_scale``), ``gamma0`` is the OLS residual variance.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    e = y - X @ coef
    dof = max(len(y) - X.shape[1], 1)
    s2 = float(np.dot(e, e) / dof)
    scale = np.mean(X * X, axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return NormalGammaPrior(coef, kappa_scale * np.diag(scale), alpha0, max(s2, 1e-300))


@dataclass
class NormalGammaPosterior:
    """Quasi-posterior parameters; arrays carry a leading time axis when batched."""

    beta_bar: np.ndarray
    kappa_bar: np.ndarray
    alpha_bar: np.ndarray
    gamma_bar: np.ndarray
    beta_hat: np.ndarray
    prior: NormalGammaPrior

    def at(self, s: int) -> "NormalGammaPosterior":
        return NormalGammaPosterior(self.beta_bar[s], self.kappa_bar[s], self.alpha_bar[s],
                                    self.gamma_bar[s], self.beta_hat[s], self.prior)

    @property
    def lambda_mean(self):
        return self.alpha_bar / self.gamma_bar

    def beta_cov(self) -> np.ndarray:
        """Marginal covariance of beta: ``gamma / (alpha - 1) * inv(kappa)`` (alpha > 1)."""
        inv = np.linalg.inv(self.kappa_bar)
        scale = self.gamma_bar / (self.alpha_bar - 1.0)
        return np.asarray(scale)[..., None, None] * inv


def _posterior(XtDX, XtDy, yDy, mass, prior: NormalGammaPrior, shape_rule: str) -> NormalGammaPosterior:
    if shape_rule not in SHAPE_RULES:
        raise ValueError(f"shape_rule must be one of {SHAPE_RULES}")
    K = XtDX.shape[-1]
    rank = np.linalg.matrix_rank(XtDX, hermitian=True)
    bad = np.flatnonzero(np.atleast_1d(rank) < K)
    if len(bad):
        raise RankError(f"singular weighted design at s={int(bad[0])}", int(bad[0]))
    beta_hat = np.linalg.solve(XtDX, XtDy[..., None])[..., 0]
    kappa_bar = prior.kappa0 + XtDX
    rhs = XtDX @ beta_hat[..., None] + (prior.kappa0 @ prior.beta0)[:, None]
    beta_bar = np.linalg.solve(kappa_bar, rhs)[..., 0]
    quad_post = np.einsum("...i,...ij,...j->...", beta_bar, kappa_bar, beta_bar)
    quad_prior = float(prior.beta0 @ prior.kappa0 @ prior.beta0)
    gamma_bar = prior.gamma0 + 0.5 * (yDy - quad_post + quad_prior)
    add = mass if shape_rule == "full" else 0.5 * mass
    alpha_bar = prior.alpha0 + add
    return NormalGammaPosterior(beta_bar, kappa_bar, alpha_bar, gamma_bar, beta_hat, prior)


def local_posterior(y: np.ndarray, X: np.ndarray, theta: np.ndarray, prior: NormalGammaPrior,
                    shape_rule: str = "full") -> NormalGammaPosterior:
    """Quasi-posterior at one target time given its local weights ``theta`` (length T)."""
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    theta = np.asarray(theta, dtype=float)
    Xw = X * theta[:, None]
    return _posterior(Xw.T @ X, Xw.T @ y, float(np.dot(theta * y, y)), float(theta.sum()),
                      prior, shape_rule)


def local_posteriors(y: np.ndarray, X: np.ndarray, weights: KernelWeights, prior: NormalGammaPrior,
                     shape_rule: str = "full") -> NormalGammaPosterior:
    """Quasi-posteriors at every target time, batched over the leading axis."""
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    th = weights.theta
    outer = (X[:, :, None] * X[:, None, :]).reshape(len(X), -1)
    K = X.shape[1]
    XtDX = (th @ outer).reshape(-1, K, K)
    XtDX = 0.5 * (XtDX + np.swapaxes(XtDX, 1, 2))
    XtDy = th @ (X * y[:, None])
    yDy = th @ (y * y)
    return _posterior(XtDX, XtDy, yDy, th.sum(axis=1), prior, shape_rule)


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


def draw_at(post: NormalGammaPosterior, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """``n`` joint draws: lambda ~ Gamma(alpha, rate=gamma), beta | lambda ~ N(beta_bar, inv(lambda kappa))."""
    lam = rng.gamma(post.alpha_bar, 1.0 / post.gamma_bar, size=n)
    z = rng.standard_normal((n, len(post.beta_bar)))
    L = np.linalg.cholesky(post.kappa_bar)
    dev = solve_triangular(L.T, z.T, lower=False).T
    return post.beta_bar + dev / np.sqrt(lam)[:, None], lam


@dataclass
class TvpDraws:
    beta: np.ndarray  # (T, I, K)
    lam: np.ndarray  # (T, I)
    posterior: NormalGammaPosterior
    weights: KernelWeights
    seed: int
    quantiles: tuple[float, float] = (0.025, 0.975)

    @property
    def mean(self) -> np.ndarray:
        return self.beta.mean(axis=1)

    @property
    def sd(self) -> np.ndarray:
        return self.beta.std(axis=1, ddof=1)

    @property
    def bands(self) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = np.quantile(self.beta, self.quantiles, axis=1)
        return lo, hi


def sample_tvp(y: np.ndarray, X: np.ndarray, H: float | None = None, I: int = 1000,
               prior: NormalGammaPrior | None = None, seed: int = 0, burn_frac: float = 0.1,
               normalization: str = "kish", shape_rule: str = "full",
               quantiles: tuple[float, float] = (0.025, 0.975), threads: int | None = None) -> TvpDraws:
    """Sample the QBLL quasi-posterior at every time point.

    ``X`` should include the intercept column if one is wanted. Each time point
    gets its own seed-derived stream, so results do not depend on ``threads``.
    ``ceil(burn_frac * I)`` leading draws are generated and discarded so that
    exactly ``I`` are kept.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if I < 1:
        raise ValueError("I must be at least 1")
    T = len(y)
    prior = prior or ols_prior(y, X)
    w = kernel_weights(T, H, normalization)
    post = local_posteriors(y, X, w, prior, shape_rule)
    burn = math.ceil(burn_frac * I)

    def one(s):
        b, lam = draw_at(post.at(s), burn + I, _stream(seed, s))
        return b[burn:], lam[burn:]

    out = parallel_map(one, range(T), threads)
    beta = np.stack([b for b, _ in out])
    lam = np.stack([lam for _, lam in out])
    return TvpDraws(beta, lam, post, w, seed, tuple(quantiles))


@dataclass
class DynamicPremia:
    lambda_bar: pd.Series
    tstats: pd.Series
    path: pd.DataFrame  # lambda_t per period, first column "const"
    se_path: pd.DataFrame  # cross-sectional standard error of each lambda_t
    H: float
    I: int
    seed: int
    n_assets: int

    def table(self) -> pd.DataFrame:
        return pd.DataFrame({"factor": self.lambda_bar.index, "lambda_bar": self.lambda_bar.to_numpy(),
                             "tstat": self.tstats.to_numpy()})


def _asset_loadings(y, present, X, H, I, seed, asset_key, posterior_mean, normalization,
                    shape_rule, burn_frac, shared):
    """Posterior-mean loadings path (T, K) for one asset; NaN where undefined."""
    T, K = X.shape
    if present.all():
        w = shared["weights"]
        outer = shared["outer"]
        XtDX = shared["XtDX"]
        yv = y
    else:
        w = kernel_weights(T, H, normalization, observed=present)
        outer = None
        XtDX = None
        yv = np.where(present, y, 0.0)
    prior = ols_prior(y[present], X[present])
    if XtDX is None:
        outer = (X[:, :, None] * X[:, None, :]).reshape(T, -1)
        XtDX = (w.theta @ outer).reshape(-1, K, K)
        XtDX = 0.5 * (XtDX + np.swapaxes(XtDX, 1, 2))
    XtDy = w.theta @ (X * yv[:, None])
    yDy = w.theta @ (yv * yv)
    post = _posterior(XtDX, XtDy, yDy, w.theta.sum(axis=1), prior, shape_rule)
    if posterior_mean == "analytic":
        return post.beta_bar
    burn = math.ceil(burn_frac * I)
    out = np.empty((T, K))
    for s in range(T):
        b, _ = draw_at(post.at(s), burn + I, _stream(seed, asset_key, s))
        out[s] = b[burn:].mean(axis=0)
    return out


def dynamic_fama_macbeth(returns: ReturnPanel, factors: FactorMatrix, H: float | None = None,
                         I: int = 1000, seed: int = 0, posterior_mean: str = "draws",
                         min_coverage: float = 0.6, normalization: str = "kish",
                         shape_rule: str = "full", burn_frac: float = 0.1,
                         threads: int | None = None) -> DynamicPremia:
    """Two-pass Fama-MacBeth with QBLL time-varying first-stage loadings.

    Stage 1 regresses each asset's ``r[t+1]`` on ``x[t]`` (with intercept) by
    QBLL and keeps posterior-mean loadings ``beta[t, i]``, averaged over ``I``
    draws or taken analytically (``posterior_mean="analytic"``). Stage 2 runs a
    cross-sectional OLS of ``r[t+1, i]`` on ``[1, beta[t, i]]`` for each ``t``.
    The reported premium is the time average of ``lambda_t`` with t-statistic
    ``mean / sqrt(var / T_eff)`` over the periods where the regression is defined.
    """
    if posterior_mean not in ("draws", "analytic"):
        raise ValueError("posterior_mean must be 'draws' or 'analytic'")
    Xf, Y = predictive_pairs(returns, factors)
    names = factors.factor_names
    T = len(Xf)
    K = len(names) + 1
    if T < K + 2:
        raise InsufficientData(f"{T} usable rows for {K - 1} factors")
    H = math.sqrt(T) if H is None else float(H)
    X = with_intercept(Xf.to_numpy(float))
    Yv = Y.to_numpy(float)
    present = ~np.isnan(Yv)
    keep = np.flatnonzero(present.sum(axis=0) >= max(K + 2, min_coverage * T))
    if len(keep) < K + 1:
        raise InsufficientData(f"{len(keep)} assets with enough coverage for {K - 1} factors")

    w = kernel_weights(T, H, normalization)
    outer = (X[:, :, None] * X[:, None, :]).reshape(T, -1)
    XtDX = (w.theta @ outer).reshape(-1, K, K)
    shared = {"weights": w, "outer": outer, "XtDX": 0.5 * (XtDX + np.swapaxes(XtDX, 1, 2))}

    def stage1(j):
        return _asset_loadings(Yv[:, j], present[:, j], X, H, I, seed, int(j), posterior_mean,
                               normalization, shape_rule, burn_frac, shared)

    betas = np.stack(parallel_map(stage1, keep, threads), axis=1)  # (T, N, K)

    lam = np.full((T, K), np.nan)
    se = np.full((T, K), np.nan)
    Ykeep = Yv[:, keep]
    for t in range(T):
        ok = ~np.isnan(Ykeep[t])
        if ok.sum() < K + 1:
            continue
        Z = with_intercept(betas[t, ok, 1:])
        if np.linalg.matrix_rank(Z) < K:
            continue
        coef, *_ = np.linalg.lstsq(Z, Ykeep[t, ok], rcond=None)
        lam[t] = coef
        e = Ykeep[t, ok] - Z @ coef
        dof = ok.sum() - K
        if dof > 0:
            cov = np.dot(e, e) / dof * np.linalg.inv(Z.T @ Z)
            se[t] = np.sqrt(np.diag(cov))
    valid = ~np.isnan(lam).any(axis=1)
    if valid.sum() < 2:
        raise InsufficientData("fewer than two periods with a defined cross-section")
    lv = lam[valid]
    n_eff = len(lv)
    bar = lv.mean(axis=0)
    t_stat = bar / np.sqrt(lv.var(axis=0, ddof=1) / n_eff)
    cols = ["const"] + list(names)
    index = pd.DatetimeIndex(Xf.index, name="date")
    return DynamicPremia(pd.Series(bar, index=cols), pd.Series(t_stat, index=cols),
                         pd.DataFrame(lam, index=index, columns=cols),
                         pd.DataFrame(se, index=index, columns=cols), H, I, seed, len(keep))


def write_dynamic(dp: DynamicPremia, path, path_file=None, model: str = "") -> None:
    """``factor,lambda_bar,tstat`` summary and optional ``date,factor,lambda_t,post_sd`` path."""
    header = f"# model={model} seed={dp.seed} H={dp.H:.17g} I={dp.I} n_assets={dp.n_assets}\n"
    with open(path, "w", newline="") as fh:
        fh.write(header)
        dp.table().to_csv(fh, index=False, float_format="%.17g", lineterminator="\n")
    if path_file is not None:
        long = dp.path.stack().rename("lambda_t").to_frame()
        long["post_sd"] = dp.se_path.stack()
        long.index.names = ["date", "factor"]
        long = long.reset_index()
        long["date"] = long["date"].dt.strftime("%Y-%m-%d")
        with open(path_file, "w", newline="") as fh:
            fh.write(header)
            long.to_csv(fh, index=False, float_format="%.17g", lineterminator="\n")


def tvp_regression(y: Sequence[float], X: np.ndarray, **kwargs) -> TvpDraws:
    """:func:`sample_tvp` with an intercept column prepended to ``X``."""
    return sample_tvp(np.asarray(y, dtype=float), with_intercept(np.atleast_2d(np.asarray(X).T).T), **kwargs)
