from __future__ import annotations

import numpy as np
import pandas as pd
import pytest
from hypothesis import assume, given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from momentrisk.errors import ConfigError, RankError, SortError
from momentrisk.factors import FactorMatrix
from momentrisk.ingest import ReturnPanel
from momentrisk.oracles import oracle_quantile_sizes
from momentrisk.simulation import SimSpec, simulate_priced_panel
from momentrisk.sorts import (
    SortConfig,
    estimate_exposures,
    form_quantile_portfolios,
    read_sort_results,
    run_sort,
    tstat,
    write_sort_results,
)


def test_exact_loading_recovery():
    rng = np.random.default_rng(0)
    f = rng.standard_normal((63, 3))
    c = np.array([0.7, -1.3, 2.0])
    r = np.empty((63, 3))
    r[1:] = 0.01 + f[:-1] @ np.diag(c)
    r[0] = 0.0
    load = estimate_exposures(r, f, factor_names=["RVOL_m", "RS_m", "RK_m"], assets=["a", "b", "c"])
    np.testing.assert_allclose(np.diag(load.to_numpy()), c, atol=1e-10)


def test_pure_noise_loadings_small():
    rng = np.random.default_rng(1)
    f = rng.standard_normal((10_000, 2))
    r = 0.1 * rng.standard_normal((10_000, 5))
    load = estimate_exposures(r, f)
    assert np.all(np.abs(load.to_numpy()) < 0.05)


def test_constant_factor_window_raises():
    f = np.column_stack([np.ones(63), np.arange(63.0)])
    with pytest.raises(RankError):
        estimate_exposures(np.random.default_rng(2).standard_normal((63, 4)), f)


def test_low_coverage_asset_skipped():
    rng = np.random.default_rng(3)
    f = rng.standard_normal((63, 1))
    r = rng.standard_normal((63, 2))
    r[:20, 1] = np.nan
    load = estimate_exposures(r, f, assets=["a", "b"])
    assert list(load.index) == ["a"]


def test_quantile_examples():
    ten = pd.Series(np.arange(1.0, 11.0), index=[f"s{i:02d}" for i in range(10)])
    q = form_quantile_portfolios(ten, 5)
    assert q.tolist() == [1, 1, 2, 2, 3, 3, 4, 4, 5, 5]
    eleven = pd.Series(np.arange(11.0), index=[f"s{i:02d}" for i in range(11)])
    sizes = form_quantile_portfolios(eleven, 5).value_counts().sort_index().tolist()
    assert sizes == [3, 2, 2, 2, 2]
    ties = pd.Series(1.0, index=["d", "b", "a", "c", "e"])
    assert form_quantile_portfolios(ties, 5).to_dict() == {"a": 1, "b": 2, "c": 3, "d": 4, "e": 5}
    with pytest.raises(SortError):
        form_quantile_portfolios(ten.iloc[:3], 5)


loadings = arrays(np.float64, st.integers(5, 60), elements=st.floats(-10, 10, allow_nan=False))


@settings(max_examples=100, deadline=None)
@given(loadings, st.integers(2, 5))
def test_partition_and_sizes(x, n):
    s = pd.Series(x, index=[f"a{i:03d}" for i in range(len(x))])
    q = form_quantile_portfolios(s, n)
    assert set(q.index) == set(s.index)
    assert q.value_counts().sort_index().tolist() == oracle_quantile_sizes(len(x), n).value
    # lower portfolios never hold larger loadings than higher ones
    for k in range(1, n):
        assert s[q == k].max() <= s[q == k + 1].min()


@settings(max_examples=100, deadline=None)
@given(loadings)
def test_monotone_relabeling(x):
    s = pd.Series(x, index=[f"a{i:03d}" for i in range(len(x))])
    t = np.arctan(s / 3) * 7 + 2
    # the property needs a transform that is strictly increasing in floating point too
    assume(len(np.unique(t)) == len(np.unique(s)))
    a = form_quantile_portfolios(s, 5)
    b = form_quantile_portfolios(t, 5)
    pd.testing.assert_series_equal(a, b)


def test_tstat():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    assert tstat(x) == pytest.approx(x.mean() / (x.std(ddof=1) / 2))
    assert np.isnan(tstat(np.array([1.0])))
    assert np.isfinite(tstat(x, lags=2))


def small_panel(seed=0, premium=-0.0004, n=50, T=300):
    return simulate_priced_panel(SimSpec(seed=seed, n_assets=n, n_days=T, n_factors=1,
                                         premia=(premium,), noise=0.01, factor_vol=0.002))


def test_run_sort_identities():
    p = small_panel()
    rep = run_sort(p.returns, p.factors, SortConfig(exposure_spec=("f1",)), "f1")
    assert rep.high_low == rep.mean_bps[-1] - rep.mean_bps[0]
    np.testing.assert_allclose(rep.series["HL"], rep.series["5"] - rep.series["1"])
    assert rep.n_windows == len(rep.series) == (300 - 63 - 5) // 5 + 1
    np.testing.assert_allclose(rep.series[[str(q) for q in range(1, 6)]].mean() * 1e4, rep.mean_bps)


def test_equal_weighting():
    p = small_panel(n=10, T=80)
    cfg = SortConfig(exposure_spec=("f1",), n_quantiles=2)
    rep = run_sort(p.returns, p.factors, cfg, "f1")
    R = p.returns.excess_returns.to_numpy()
    load = estimate_exposures(R[:63], p.factors.values.to_numpy()[:63], assets=p.returns.assets,
                              factor_names=["f1"], min_coverage=0.8)
    q = form_quantile_portfolios(load["f1"], 2)
    members = [p.returns.assets.index(a) for a in q.index[q == 1]]
    expect = R[63:68][:, members].mean(axis=1).mean()
    assert rep.series["1"].iloc[0] == pytest.approx(expect, rel=1e-12)


def test_config_validation():
    with pytest.raises(ConfigError):
        SortConfig(n_quantiles=1)
    with pytest.raises(ConfigError):
        SortConfig(window_len=4, exposure_spec=("a", "b", "c")).exposure_columns("a", ["a", "b", "c"])
    with pytest.raises(ConfigError):
        SortConfig(exposure_spec="market").exposure_columns("RS_I", ["RS_I"])


def test_results_file_roundtrip(tmp_path):
    p = small_panel(T=120)
    rep = run_sort(p.returns, p.factors, SortConfig(exposure_spec=("f1",)), "f1")
    write_sort_results([rep], tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "sort_variable,quantile,mean_bps,tstat"
    assert [ln.split(",")[1] for ln in lines[1:]] == ["1", "2", "3", "4", "5", "HL"]
    back = read_sort_results(tmp_path / "s.csv")[0]
    np.testing.assert_array_equal(back.mean_bps, rep.mean_bps)
    assert back.high_low == rep.high_low


@pytest.mark.slow
def test_injected_premium_detected():
    p = simulate_priced_panel(SimSpec(seed=0, n_assets=500, n_days=2000, n_factors=1, premia=(-0.0004,),
                                      noise=0.01, factor_vol=0.002))
    rep = run_sort(p.returns, p.factors, SortConfig(exposure_spec=("f1",)), "f1")
    assert rep.high_low < 0 and rep.high_low_t < -2
