from __future__ import annotations

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

from momentrisk.decomposition import decompose_panel
from momentrisk.errors import ConfigError, InsufficientData
from momentrisk.factors import (
    SFMM_COLUMNS,
    SHSM_COLUMNS,
    ControlFactors,
    FactorMatrix,
    average_idiosyncratic_moment,
    build_factor_matrix,
    factor_correlations,
    idiosyncratic_averages,
    market_columns,
    read_controls,
    read_factor_matrix,
)
from momentrisk.moments import MomentPanel


def make_panel(n_dates=60, n_assets=4, seed=0):
    rng = np.random.default_rng(seed)
    dates = pd.bdate_range("2020-01-01", periods=n_dates)
    cols = [f"A{i}" for i in range(n_assets)]

    def f(loc, scale):
        return pd.DataFrame(loc + scale * rng.standard_normal((n_dates, n_assets)), index=dates, columns=cols)

    market = pd.DataFrame({"vol": 0.01 + 0.001 * rng.standard_normal(n_dates),
                           "skew": rng.standard_normal(n_dates),
                           "kurt": 5 + rng.standard_normal(n_dates)}, index=dates)
    return MomentPanel("daily", f(0.02, 0.002), f(0.0, 1.0), f(6.0, 1.0), market)


def test_idio_average_examples():
    dates = pd.bdate_range("2020-01-01", periods=2)
    skew = pd.DataFrame({"A": [1.0, np.nan], "B": [3.0, 5.0]}, index=dates)
    p = MomentPanel("daily", skew, skew, skew)
    out = average_idiosyncratic_moment(p, "skew")
    assert out["value"].tolist() == [2.0, 5.0]
    assert out["n"].tolist() == [2, 1]
    same = MomentPanel("daily", skew[["B"]].assign(C=skew["B"]), skew, skew)
    np.testing.assert_array_equal(average_idiosyncratic_moment(same, "vol")["value"], skew["B"])


def test_all_missing_date_is_missing():
    dates = pd.bdate_range("2020-01-01", periods=2)
    f = pd.DataFrame({"A": [np.nan, 1.0]}, index=dates)
    out = average_idiosyncratic_moment(MomentPanel("daily", f, f, f), "kurt")
    assert np.isnan(out["value"].iloc[0]) and out["n"].iloc[0] == 0


@settings(max_examples=30, deadline=None)
@given(st.permutations(list(range(5))))
def test_average_permutation_invariant(perm):
    p = make_panel(n_assets=5)
    q = MomentPanel("daily", p.vol.iloc[:, perm], p.skew.iloc[:, perm], p.kurt.iloc[:, perm])
    np.testing.assert_allclose(average_idiosyncratic_moment(q, "skew")["value"],
                               average_idiosyncratic_moment(p, "skew")["value"], rtol=1e-14, atol=1e-15)


def test_adding_mean_asset_leaves_average():
    p = make_panel(n_assets=3)
    avg = average_idiosyncratic_moment(p, "skew")["value"]
    skew = p.skew.assign(M=avg)
    q = MomentPanel("daily", p.vol.assign(M=avg), skew, p.kurt.assign(M=avg))
    np.testing.assert_allclose(average_idiosyncratic_moment(q, "skew")["value"], avg, rtol=1e-13)


def test_sfmm_and_shsm_shapes():
    p = make_panel()
    comp = decompose_panel(p, 3)
    market, idio = market_columns(p, comp), idiosyncratic_averages(p, comp)
    sf = build_factor_matrix(market, idio, "SFMM")
    sh = build_factor_matrix(market, idio, "SHSM")
    assert sf.factor_names == SFMM_COLUMNS and len(SFMM_COLUMNS) == 6
    assert sh.factor_names == SHSM_COLUMNS and len(SHSM_COLUMNS) == 12
    assert sf.factor_names == ["RVOL_m", "RS_m", "RK_m", "RVOL_I", "RS_I", "RK_I"]
    for name in SFMM_COLUMNS:
        lab, src = name.split("_")
        s = sh.values[f"{lab}_s_{src}"] + sh.values[f"{lab}_l_{src}"]
        np.testing.assert_allclose(s, sf.values[name], rtol=1e-13, atol=1e-15)


def test_controls_appended_and_rows_dropped():
    p = make_panel()
    market, idio = market_columns(p), idiosyncratic_averages(p)
    ctrl = pd.DataFrame({"mkt": 0.01, "smb": 0.0, "hml": -0.01}, index=p.dates[5:])
    fm = build_factor_matrix(market, idio, "SFMM", ControlFactors(ctrl))
    assert fm.factor_names[-3:] == ["MKT", "SMB", "HML"]
    assert fm.dropped == 5 and len(fm.values) == len(p.dates) - 5
    assert not fm.values.isna().any().any()


def test_shsm_without_components_errors():
    p = make_panel()
    with pytest.raises(ConfigError, match="decompose"):
        build_factor_matrix(market_columns(p), idiosyncratic_averages(p), "SHSM")
    with pytest.raises(ConfigError):
        build_factor_matrix(market_columns(p), idiosyncratic_averages(p), "XYZ")


def test_correlation_examples():
    rng = np.random.default_rng(5)
    x = rng.standard_normal(10_000)
    y = rng.standard_normal(10_000)
    fm = FactorMatrix(pd.DataFrame({"x": x, "y": y, "nx": -x, "c": 1.0}))
    c = factor_correlations(fm)
    assert c.loc["x", "x"] == pytest.approx(1.0, abs=1e-12)
    assert c.loc["x", "nx"] == pytest.approx(-1.0, abs=1e-12)
    assert abs(c.loc["x", "y"]) < 0.05
    assert np.isnan(c.loc["c", "x"]) and np.isnan(c.loc["c", "c"])
    np.testing.assert_array_equal(c.to_numpy(), c.to_numpy().T)
    with pytest.raises(InsufficientData):
        factor_correlations(FactorMatrix(pd.DataFrame({"x": [1.0, 2.0]})))


def test_duplicate_names_rejected():
    with pytest.raises(ConfigError):
        FactorMatrix(pd.DataFrame([[1.0, 2.0]], columns=["a", "a"]))


def test_files_roundtrip(tmp_path):
    p = make_panel()
    fm = build_factor_matrix(market_columns(p), idiosyncratic_averages(p), "SFMM")
    fm.to_csv(tmp_path / "f.csv")
    back = read_factor_matrix(tmp_path / "f.csv", "SFMM")
    pd.testing.assert_frame_equal(back.values, fm.values, check_freq=False, check_names=False)
    (tmp_path / "c.csv").write_text("date,mkt,smb,hml\n2020-01-01,0.1,0.2,0.3\n")
    assert list(read_controls(tmp_path / "c.csv").frame.columns) == ["MKT", "SMB", "HML"]
