from __future__ import annotations

import json

import numpy as np
import pytest

from momentrisk.crosssection import fama_macbeth, first_stage
from momentrisk.errors import ConfigError
from momentrisk.ingest import Session, build_grids, read_bars
from momentrisk.moments import realized_measures
from momentrisk.simulation import (
    SimSpec,
    simulate_controls,
    simulate_intraday,
    simulate_priced_panel,
    write_bars,
    write_truth,
)


def measures(spec, threads=None):
    sim = simulate_intraday(spec, threads)
    return realized_measures(sim.log_returns[: spec.n_assets])


def test_spec_validation():
    with pytest.raises(ConfigError):
        SimSpec(seed=None)
    with pytest.raises(ConfigError):
        SimSpec(seed=0, daily_vol=-1.0)
    with pytest.raises(ConfigError):
        SimSpec(seed=0, jump_sign="up")
    with pytest.raises(ConfigError):
        SimSpec(seed=0, premia=(1.0, 2.0, 3.0)).premia_path()


def test_intraday_determinism_and_thread_independence():
    spec = SimSpec(seed=5, n_assets=4, n_days=6, jump_intensity=1.0, market_beta=0.5)
    a = simulate_intraday(spec)
    b = simulate_intraday(spec, threads=3)
    assert a.log_returns.tobytes() == b.log_returns.tobytes()
    assert a.to_bars().equals(b.to_bars())
    c = simulate_intraday(SimSpec(seed=6, n_assets=4, n_days=6, jump_intensity=1.0, market_beta=0.5))
    assert not np.array_equal(a.log_returns, c.log_returns)


def test_substreams_independent_of_panel_size():
    small = simulate_intraday(SimSpec(seed=1, n_assets=2, n_days=3, market_beta=0.0))
    big = simulate_intraday(SimSpec(seed=1, n_assets=5, n_days=8, market_beta=0.0))
    np.testing.assert_array_equal(small.log_returns[:2, :3], big.log_returns[:2, :3])


def test_zero_vol_flat_prices():
    spec = SimSpec(seed=0, n_assets=3, n_days=4, daily_vol=0.0)
    sim = simulate_intraday(spec)
    px = sim.to_bars()["price"].to_numpy()
    assert np.all(px == px[0]) and px[0] == pytest.approx(100.0, rel=1e-15)
    m = measures(spec)
    assert np.all(m["var"] == 0)
    assert np.all(np.isnan(m["skew"])) and np.all(np.isnan(m["kurt"]))


def test_positive_jumps_give_positive_skew():
    spec = SimSpec(seed=2, n_assets=100, n_days=100, jump_intensity=0.5, jump_size=0.01,
                   jump_sign="positive")
    assert np.nanmean(measures(spec)["skew"]) > 0
    neg = SimSpec(seed=2, n_assets=100, n_days=100, jump_intensity=0.5, jump_size=0.01,
                  jump_sign="negative")
    assert np.nanmean(measures(neg)["skew"]) < 0


def test_gaussian_kurtosis_benchmark():
    spec = SimSpec(seed=3, n_assets=10, n_days=1000)
    rdk = measures(spec)["kurt"]
    K = 78
    # E[K sum r^4 / (sum r^2)^2] is close to 3K / (K + 2) for Gaussian returns
    assert np.mean(rdk) == pytest.approx(3 * K / (K + 2), abs=0.03)


@pytest.mark.slow
def test_variance_targeting():
    spec = SimSpec(seed=4, n_assets=100, n_days=1000, daily_vol=0.02)
    rdv = measures(spec)["var"]
    assert rdv.size == 100_000
    assert np.mean(rdv) == pytest.approx(0.02**2, rel=0.01)


def test_bars_roundtrip_through_grids(tmp_path):
    spec = SimSpec(seed=7, n_assets=2, n_days=3, K=12, jump_intensity=0.5)
    sim = simulate_intraday(spec)
    write_bars(sim.to_bars(), tmp_path / "bars.csv")
    bars = read_bars(tmp_path / "bars.csv")
    grids = build_grids(bars, Session(spec.session.open, spec.session.close, 12))
    r = np.diff(grids.log_prices, axis=2)
    np.testing.assert_allclose(r, sim.log_returns, atol=1e-12)


def test_truth_record(tmp_path):
    p = simulate_priced_panel(SimSpec(seed=0, n_assets=3, n_days=5))
    write_truth(p.truth(), tmp_path / "truth.json")
    rec = json.loads((tmp_path / "truth.json").read_text())
    assert rec["kind"] == "panel" and len(rec["loadings"]) == 3 and len(rec["premia"]) == 5


def test_priced_panel_determinism():
    spec = SimSpec(seed=11, n_assets=10, n_days=50, premia=(0.1, -0.1))
    a, b = simulate_priced_panel(spec), simulate_priced_panel(spec)
    assert a.returns.excess_returns.equals(b.returns.excess_returns)
    assert a.factors.values.equals(b.factors.values)


def test_zero_noise_exact_structure():
    spec = SimSpec(seed=12, n_assets=15, n_days=60, premia=(0.3, -0.2), noise=0.0, omega=0.01,
                   factor_mean=0.05)
    p = simulate_priced_panel(spec)
    fs = first_stage(p.returns, p.factors)
    np.testing.assert_allclose(fs.beta.to_numpy(), p.loadings.to_numpy(), atol=1e-10)
    # intercepts carry omega + beta'(lambda - mu)
    expect = 0.01 + p.loadings.to_numpy() @ (np.array([0.3, -0.2]) - 0.05)
    np.testing.assert_allclose(fs.alpha.to_numpy(), expect, atol=1e-10)


def test_null_premia_centre_on_zero():
    est = [fama_macbeth(*(lambda p: (p.returns, p.factors))(
        simulate_priced_panel(SimSpec(seed=s, n_assets=50, n_days=300)))).lambdas.to_numpy()
        for s in range(30)]
    mean = np.mean(est, axis=0)
    sd = np.std(est, axis=0, ddof=1)
    assert np.all(np.abs(mean) < 3 * sd / np.sqrt(30))


def test_controls():
    spec = SimSpec(seed=0, n_days=40)
    c = simulate_controls(spec)
    assert list(c.columns) == ["MKT", "SMB", "HML"] and len(c) == 40
    assert c.equals(simulate_controls(spec))
