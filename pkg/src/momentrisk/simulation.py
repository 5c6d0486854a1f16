"""Synthetic intraday prices and priced return panels with known ground truth.

Randomness is split into seed-derived substreams: one per (asset, day) for
intraday paths and one per asset for panel noise, so results never depend on
generation order or thread count.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from datetime import time
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from momentrisk._parallel import parallel_map
from momentrisk.errors import ConfigError
from momentrisk.factors import FactorMatrix
from momentrisk.ingest import FLOAT_FORMAT, GridSet, ReturnPanel, Session

JUMP_SIGNS = ("symmetric", "positive", "negative")

# substream tags
_INTRADAY, _FACTORS, _LOADINGS, _NOISE, _CONTROLS = range(5)


@dataclass
class SimSpec:
    seed: int
    n_assets: int = 10
    n_days: int = 250
    K: int = 78
    daily_vol: float = 0.01  # sd of the daily diffusion return
    jump_intensity: float = 0.0  # expected jumps per asset-day
    jump_size: float = 0.01  # sd of the (half-)normal jump magnitude
    jump_sign: str = "symmetric"
    market_beta: float = 0.0  # intraday exposure of each asset to the index path
    index_symbol: str = "IDX"
    start: str = "2015-01-05"
    start_price: float = 100.0
    session_open: str = "09:30"
    session_close: str = "16:00"
    # priced panel
    n_factors: int = 2
    loadings: np.ndarray | None = None  # (n_assets, n_factors); drawn when None
    loading_mean: float = 0.0
    loading_scale: float = 1.0
    premia: Sequence[float] | np.ndarray = (0.0, 0.0)  # constant vector or (n_days, n_factors) path
    factor_mean: float = 0.0
    factor_vol: float = 0.1
    noise: float = 0.1
    omega: float = 0.0
    factor_names: Sequence[str] | None = None

    def __post_init__(self):
        if not isinstance(self.seed, (int, np.integer)) or isinstance(self.seed, bool):
            raise ConfigError("seed must be an integer")
        for name in ("daily_vol", "jump_intensity", "jump_size", "loading_scale", "factor_vol", "noise"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.jump_sign not in JUMP_SIGNS:
            raise ConfigError(f"jump_sign must be one of {JUMP_SIGNS}")
        if min(self.n_assets, self.n_days, self.K, self.n_factors) < 1:
            raise ConfigError("sizes must be positive")

    @property
    def session(self) -> Session:
        return Session(time.fromisoformat(self.session_open), time.fromisoformat(self.session_close), self.K)

    @property
    def dates(self) -> pd.DatetimeIndex:
        return pd.bdate_range(self.start, periods=self.n_days, name="date")

    @property
    def symbols(self) -> list[str]:
        width = max(3, len(str(self.n_assets - 1)))
        return [f"A{i:0{width}d}" for i in range(self.n_assets)]

    def premia_path(self) -> np.ndarray:
        lam = np.asarray(self.premia, dtype=float)
        if lam.ndim == 1:
            if len(lam) != self.n_factors:
                raise ConfigError(f"premia has {len(lam)} entries for {self.n_factors} factors")
            return np.tile(lam, (self.n_days, 1))
        if lam.shape != (self.n_days, self.n_factors):
            raise ConfigError(f"premia path must have shape {(self.n_days, self.n_factors)}")
        return lam

    def names(self) -> list[str]:
        if self.factor_names is not None:
            return list(self.factor_names)
        return [f"f{j + 1}" for j in range(self.n_factors)]


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


def _day_returns(spec: SimSpec, asset: int, day: int) -> np.ndarray:
    K = spec.K
    rng = _rng(spec.seed, _INTRADAY, asset, day)
    r = spec.daily_vol / np.sqrt(K) * rng.standard_normal(K)
    if spec.jump_intensity > 0:
        counts = rng.poisson(spec.jump_intensity / K, K)
        n = int(counts.sum())
        if n:
            size = np.abs(rng.normal(0.0, spec.jump_size, n))
            if spec.jump_sign == "negative":
                size = -size
            elif spec.jump_sign == "symmetric":
                size *= rng.choice([-1.0, 1.0], n)
            np.add.at(r, np.repeat(np.arange(K), counts), size)
    return r


@dataclass
class IntradaySim:
    spec: SimSpec
    dates: pd.DatetimeIndex
    symbols: list[str]  # assets then the index symbol
    log_returns: np.ndarray  # (n_symbols, n_days, K)

    def log_prices(self) -> np.ndarray:
        """(n_symbols, n_days, K+1) log prices; each day opens at the previous close."""
        r = self.log_returns
        n, D, K = r.shape
        flat = np.cumsum(r.reshape(n, D * K), axis=1).reshape(n, D, K)
        base = np.log(self.spec.start_price)
        opens = np.concatenate([np.zeros((n, 1)), flat[:, :-1, -1]], axis=1)
        return base + np.concatenate([opens[..., None], flat], axis=2)

    def grids(self) -> GridSet:
        return GridSet(self.dates, self.symbols, self.log_prices(),
                       np.zeros((len(self.symbols), len(self.dates)), dtype=bool))

    def to_bars(self) -> pd.DataFrame:
        """Long ``timestamp,symbol,price`` bars at the K+1 slot boundaries of every day."""
        session = self.spec.session
        stamps = np.concatenate([session.boundaries(d) for d in self.dates])
        text = np.datetime_as_string(stamps.astype("datetime64[s]"), unit="s")
        lp = self.log_prices()
        n = len(self.symbols)
        return pd.DataFrame({
            "timestamp": np.tile(text, n),
            "symbol": np.repeat(self.symbols, len(text)),
            "price": np.exp(lp.reshape(n, -1)).ravel(),
        })

    def truth(self) -> dict:
        return {
            "kind": "intraday",
            "spec": _spec_record(self.spec),
            "daily_variance": self.spec.daily_vol ** 2,
            "symbols": self.symbols,
            "index_symbol": self.spec.index_symbol,
        }


def simulate_intraday(spec: SimSpec, threads: int | None = None) -> IntradaySim:
    """Diffusion plus compound-Poisson jump paths for every asset and the index.

    Interval returns are ``daily_vol / sqrt(K) * z`` plus jumps whose count per
    interval is Poisson(``jump_intensity / K``) and whose sizes are half-normal
    with the configured sign. With ``market_beta`` non-zero each asset also
    loads on the index's interval returns.
    """
    n, D = spec.n_assets, spec.n_days

    def one(a):
        return np.stack([_day_returns(spec, a, d) for d in range(D)])

    paths = parallel_map(one, range(n + 1), threads)
    r = np.stack(paths)
    if spec.market_beta:
        r[:n] += spec.market_beta * r[n]
    return IntradaySim(spec, spec.dates, spec.symbols + [spec.index_symbol], r)


@dataclass
class PricedPanel:
    returns: ReturnPanel
    factors: FactorMatrix
    loadings: pd.DataFrame
    premia: pd.DataFrame  # lambda path indexed by factor date
    omega: float
    spec: SimSpec = field(repr=False)

    def truth(self) -> dict:
        return {
            "kind": "panel",
            "spec": _spec_record(self.spec),
            "omega": self.omega,
            "factor_mean": self.spec.factor_mean,
            "loadings": {a: [float(v) for v in row] for a, row in self.loadings.iterrows()},
            "premia": [[float(v) for v in row] for row in self.premia.to_numpy()],
        }


def simulate_priced_panel(spec: SimSpec) -> PricedPanel:
    """Returns ``r[t+1, i] = alpha[t, i] + beta_i' x[t] + e`` with priced loadings.

    ``alpha[t, i] = omega + beta_i' (lambda_t - mu_x)`` so that the expected
    return given loadings is ``omega + beta_i' lambda_t``. Factors are i.i.d.
    normal with mean ``factor_mean`` and sd ``factor_vol``. The factor row
    before the first reported date is simulated too, so every reported return
    has a predecessor factor.
    """
    N, T, K = spec.n_assets, spec.n_days, spec.n_factors
    lam = spec.premia_path()
    x = spec.factor_mean + spec.factor_vol * _rng(spec.seed, _FACTORS).standard_normal((T + 1, K))
    if spec.loadings is not None:
        beta = np.asarray(spec.loadings, dtype=float).reshape(N, K)
    else:
        beta = spec.loading_mean + spec.loading_scale * _rng(spec.seed, _LOADINGS).standard_normal((N, K))
    lam_full = np.vstack([lam[:1], lam])  # pre-sample factor row uses the first premium
    mean = spec.omega + (lam_full[:-1] - spec.factor_mean) @ beta.T + x[:-1] @ beta.T
    noise = np.stack([_rng(spec.seed, _NOISE, i).standard_normal(T) for i in range(N)], axis=1)
    r = mean + spec.noise * noise

    dates = spec.dates
    assets = spec.symbols
    names = spec.names()
    R = pd.DataFrame(r, index=dates, columns=assets)
    F = pd.DataFrame(x[1:], index=dates, columns=names)
    return PricedPanel(
        ReturnPanel("daily", R),
        FactorMatrix(F, "custom"),
        pd.DataFrame(beta, index=assets, columns=names),
        pd.DataFrame(lam, index=dates, columns=names),
        spec.omega,
        spec,
    )


def simulate_controls(spec: SimSpec, dates=None, vol: float = 0.01) -> pd.DataFrame:
    """Independent normal ``MKT, SMB, HML`` control series for end-to-end runs."""
    dates = spec.dates if dates is None else pd.DatetimeIndex(dates, name="date")
    z = _rng(spec.seed, _CONTROLS).standard_normal((len(dates), 3))
    return pd.DataFrame(vol * z, index=dates, columns=["MKT", "SMB", "HML"])


def _spec_record(spec: SimSpec) -> dict:
    rec = asdict(spec)
    for k, v in rec.items():
        if isinstance(v, np.ndarray):
            rec[k] = v.tolist()
        elif isinstance(v, tuple):
            rec[k] = list(v)
    return rec


def write_truth(truth: dict, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(truth, fh, indent=1, sort_keys=True)
        fh.write("\n")


def write_bars(bars: pd.DataFrame, path: str | Path) -> None:
    bars.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
