from __future__ import annotations

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

from momentrisk.crosssection import (
    fama_macbeth,
    first_stage,
    predictive_pairs,
    second_stage,
    write_premia,
)
from momentrisk.errors import CollinearityError, InsufficientData
from momentrisk.factors import FactorMatrix
from momentrisk.ingest import ReturnPanel
from momentrisk.simulation import SimSpec, simulate_priced_panel


def panel_from(R, F, names=None):
    dates = pd.bdate_range("2015-01-01", periods=len(R))
    names = names or [f"f{j + 1}" for j in range(F.shape[1])]
    ret = ReturnPanel("daily", pd.DataFrame(R, index=dates, columns=[f"a{i:03d}" for i in range(R.shape[1])]))
    return ret, FactorMatrix(pd.DataFrame(F, index=dates, columns=names))


def test_predictive_alignment():
    F = np.arange(10.0)[:, None]
    R = np.arange(100.0, 110.0)[:, None]
    ret, fm = panel_from(R, F)
    X, Y = predictive_pairs(ret, fm)
    assert X.iloc[0, 0] == 0.0 and Y.iloc[0, 0] == 101.0
    assert len(X) == 9


def test_first_stage_examples():
    rng = np.random.default_rng(0)
    T = 200
    F = rng.standard_normal((T, 3))
    R = np.zeros((T, 3))
    R[1:, 0] = 0.5 * F[:-1, 0]
    R[1:, 1] = F[:-1] @ np.array([1.0, 2.0, 3.0])
    R[:, 2] = 0.07
    ret, fm = panel_from(R, F)
    fs = first_stage(ret, fm)
    np.testing.assert_allclose(fs.beta.iloc[0], [0.5, 0, 0], atol=1e-12)
    np.testing.assert_allclose(fs.beta.iloc[1], [1, 2, 3], atol=1e-12)
    np.testing.assert_allclose(fs.beta.iloc[2], 0, atol=1e-12)
    assert fs.alpha.iloc[2] == pytest.approx(0.07, abs=1e-12)


def test_orthonormal_factors_recovery():
    T = 64
    Q, _ = np.linalg.qr(np.random.default_rng(4).standard_normal((T - 1, 3)))
    F = np.vstack([Q * np.sqrt(T), np.zeros((1, 3))])
    R = np.zeros((T, 4))
    R[1:] = (F[:-1] @ np.array([1.0, 2.0, 3.0]))[:, None]
    fs = first_stage(*panel_from(R, F))
    np.testing.assert_allclose(fs.beta.to_numpy(), np.tile([1.0, 2.0, 3.0], (4, 1)), atol=1e-10)


def test_coverage_and_rank_drops():
    rng = np.random.default_rng(1)
    F = rng.standard_normal((100, 1))
    R = rng.standard_normal((100, 3))
    R[:50, 1] = np.nan
    fs = first_stage(*panel_from(R, F))
    assert fs.dropped == ["a001"] and fs.assets == ["a000", "a002"]


def test_duplicate_factor_collinear():
    rng = np.random.default_rng(2)
    F = rng.standard_normal((100, 2))
    F = np.column_stack([F, F[:, 1]])
    with pytest.raises(CollinearityError) as exc:
        first_stage(*panel_from(rng.standard_normal((100, 5)), F))
    assert exc.value.columns == ["f3"]


def test_r2_one_when_exactly_linear():
    rng = np.random.default_rng(3)
    N, T = 30, 120
    F = rng.standard_normal((T, 1))
    beta = rng.uniform(0.5, 2.0, N)
    R = np.empty((T, N))
    R[1:] = np.outer(F[:-1, 0] - F[:-1, 0].mean(), beta) + 0.01 + 0.002 * beta
    R[0] = 0.0
    est = fama_macbeth(*panel_from(R, F))
    assert est.r2 == pytest.approx(1.0, abs=1e-10)
    assert est.lambdas.iloc[0] == pytest.approx(0.002, abs=1e-10)


def test_orthogonal_means_give_zero_premium():
    rng = np.random.default_rng(4)
    N, T = 40, 400
    F = rng.standard_normal((T, 1))
    F[:-1] -= F[:-1].mean()  # only rows paired with a next-period return enter
    beta = np.linspace(-1, 1, N)
    # loadings symmetric, mean returns depend on |beta| only -> orthogonal to beta
    R = np.empty((T, N))
    R[1:] = np.outer(F[:-1, 0], beta) + 0.001 * np.abs(beta)
    R[0] = 0.001 * np.abs(beta)
    est = fama_macbeth(*panel_from(R, F))
    assert abs(est.lambdas.iloc[0]) < 1e-4
    assert est.r2 < 0.05


@pytest.mark.parametrize("seed", range(3))
def test_simulated_recovery(seed):
    p = simulate_priced_panel(SimSpec(seed=seed, n_assets=100, n_days=2000, premia=(0.5, -0.2),
                                      noise=0.1, factor_vol=0.1))
    est = fama_macbeth(p.returns, p.factors)
    np.testing.assert_allclose(est.lambdas.to_numpy(), [0.5, -0.2], atol=0.05)
    assert 0.0 <= est.r2 <= 1.0


def test_zero_noise_first_stage_exact():
    p = simulate_priced_panel(SimSpec(seed=9, n_assets=20, n_days=100, premia=(0.1, 0.0), noise=0.0))
    fs = first_stage(p.returns, p.factors)
    np.testing.assert_allclose(fs.beta.to_numpy(), p.loadings.to_numpy(), atol=1e-10)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.1, 10.0))
def test_factor_rescaling(c):
    p = simulate_priced_panel(SimSpec(seed=5, n_assets=30, n_days=200, premia=(0.3, -0.1)))
    base = fama_macbeth(p.returns, p.factors)
    scaled = p.factors.values.copy()
    scaled["f1"] *= c
    est = fama_macbeth(p.returns, FactorMatrix(scaled))
    assert est.lambdas["f1"] == pytest.approx(c * base.lambdas["f1"], rel=1e-8)
    assert est.lambdas["f2"] == pytest.approx(base.lambdas["f2"], rel=1e-8, abs=1e-12)
    assert est.r2 == pytest.approx(base.r2, rel=1e-8, abs=1e-12)
    assert est.tstats["f1"] == pytest.approx(base.tstats["f1"], rel=1e-7)


def test_t_grows_as_noise_shrinks():
    ts = []
    for noise in (0.08, 0.04, 0.02, 0.01):
        p = simulate_priced_panel(SimSpec(seed=6, n_assets=50, n_days=300, n_factors=1, premia=(0.3,),
                                          noise=noise))
        ts.append(fama_macbeth(p.returns, p.factors).tstats.iloc[0])
    assert all(b > a for a, b in zip(ts, ts[1:]))


def test_shanken_widens_errors():
    p = simulate_priced_panel(SimSpec(seed=7, n_assets=60, n_days=300, premia=(0.3, -0.1)))
    plain = fama_macbeth(p.returns, p.factors)
    sh = fama_macbeth(p.returns, p.factors, shanken=True)
    np.testing.assert_array_equal(plain.lambdas.to_numpy(), sh.lambdas.to_numpy())
    assert np.all(np.abs(sh.tstats) < np.abs(plain.tstats))


def test_too_few_assets():
    p = simulate_priced_panel(SimSpec(seed=8, n_assets=3, n_days=50, premia=(0.1, 0.1)))
    with pytest.raises(InsufficientData):
        second_stage(first_stage(p.returns, p.factors), p.returns)


def test_premia_file(tmp_path):
    p = simulate_priced_panel(SimSpec(seed=9, n_assets=20, n_days=100, premia=(0.1, 0.0)))
    est = fama_macbeth(p.returns, p.factors)
    write_premia(est, tmp_path / "p.csv", "M")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0].startswith("# model=M omega=") and "r2_type=unadjusted" in lines[0]
    assert lines[1] == "factor,lambda,tstat"
    assert [ln.split(",")[0] for ln in lines[2:]] == ["const", "f1", "f2"]
