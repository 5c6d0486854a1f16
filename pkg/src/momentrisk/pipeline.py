"""Stage functions that read and write artifacts in a single output directory.

Each stage checks for the files it needs and raises
:class:`~momentrisk.errors.DependencyError` naming the stage that produces a
missing one. Stages are idempotent: rerunning with the same inputs rewrites
byte-identical files.
"""

from __future__ import annotations

import json
import logging
from datetime import time
from pathlib import Path
from typing import Callable, Iterable

import numpy as np
import pandas as pd

from momentrisk import _parallel
from momentrisk.config import STAGES, RunConfig
from momentrisk.crosssection import fama_macbeth, write_premia
from momentrisk.decomposition import decompose_panel, read_components, write_components
from momentrisk.errors import ConfigError, DependencyError
from momentrisk.factors import (
    SFMM_COLUMNS,
    SHSM_COLUMNS,
    FactorMatrix,
    build_factor_matrix,
    factor_correlations,
    idiosyncratic_averages,
    market_columns,
    read_controls,
    read_factor_matrix,
)
from momentrisk.ingest import (
    FLOAT_FORMAT,
    GridSet,
    RiskFreeCurve,
    Session,
    aggregate_weekly_returns,
    apply_adjustments,
    build_grids,
    daily_return_panel,
    read_adjustments,
    read_bars,
    read_panel,
    read_risk_free,
    write_panel,
)
from momentrisk.moments import compute_moment_panel, read_moments, weekly_aggregate, write_moments
from momentrisk.report import (
    read_premia,
    render_correlation_table,
    render_premia_table,
    render_sort_table,
    premia_table_frame,
    sort_table_frame,
    write_frame,
    write_text,
)
from momentrisk.simulation import SimSpec, simulate_controls, simulate_intraday, write_bars, write_truth
from momentrisk.sorts import SortConfig, read_sort_results, run_sort, write_sort_results
from momentrisk.tvp import dynamic_fama_macbeth, write_dynamic

log = logging.getLogger(__name__)

FREQUENCIES = ("daily", "weekly")
CONFIG_ECHO = "config.resolved"


def _need(cfg: RunConfig, stage: str, name: str, producer: str) -> Path:
    p = cfg.out_dir / name
    if not p.exists():
        raise DependencyError(stage, producer, name)
    return p


def _input(cfg: RunConfig, stage: str, value: str, default: str, producer: str) -> Path:
    if value:
        p = Path(value)
        if not p.exists():
            raise ConfigError(f"input file {p} not found")
        return p
    return _need(cfg, stage, default, producer)


def _session(cfg: RunConfig) -> Session:
    return Session(time.fromisoformat(cfg.session_open), time.fromisoformat(cfg.session_close), cfg.K)


# -- stages ----------------------------------------------------------------

def stage_simulate(cfg: RunConfig) -> None:
    spec = SimSpec(
        seed=cfg.seed, n_assets=cfg.sim_assets, n_days=cfg.sim_days, K=cfg.K,
        daily_vol=cfg.sim_daily_vol, jump_intensity=cfg.sim_jump_intensity,
        jump_sign=cfg.sim_jump_sign, market_beta=cfg.sim_market_beta,
        index_symbol=cfg.index_symbol, start=cfg.sim_start,
        session_open=cfg.session_open, session_close=cfg.session_close,
    )
    sim = simulate_intraday(spec)
    out = cfg.out_dir
    write_bars(sim.to_bars(), out / "bars.csv")
    rf = pd.DataFrame({"date": sim.dates.strftime("%Y-%m-%d"), "annualized_rate": cfg.sim_rate})
    rf.to_csv(out / "riskfree.csv", index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    ctrl = simulate_controls(spec)
    ctrl.index = ctrl.index.strftime("%Y-%m-%d")
    ctrl.to_csv(out / "controls.csv", float_format=FLOAT_FORMAT, lineterminator="\n")
    write_truth(sim.truth(), out / "truth.json")


def stage_ingest(cfg: RunConfig) -> None:
    bars = read_bars(_input(cfg, "ingest", cfg.bars, "bars.csv", "simulate"))
    if cfg.adjustments:
        bars = apply_adjustments(bars, read_adjustments(cfg.adjustments))
    grids = build_grids(bars, _session(cfg), exclude_short=cfg.exclude_short)
    rf_path = cfg.riskfree or (cfg.out_dir / "riskfree.csv")
    if Path(rf_path).exists():
        rf = read_risk_free(rf_path)
    else:
        log.warning("no risk-free file; using a zero rate")
        rf = RiskFreeCurve.constant(grids.dates, 0.0)
    daily = daily_return_panel(grids, rf, exclude=(cfg.index_symbol,))
    out = cfg.out_dir
    write_panel(daily, out / "returns_daily.csv")
    write_panel(aggregate_weekly_returns(daily), out / "returns_weekly.csv")
    np.save(out / "intraday_logprices.npy", grids.log_prices)
    meta = {"dates": [d.strftime("%Y-%m-%d") for d in grids.dates], "symbols": list(grids.symbols),
            "K": cfg.K, "short_session": grids.short_session.astype(int).tolist()}
    with open(out / "intraday_meta.json", "w") as fh:
        json.dump(meta, fh, sort_keys=True)
        fh.write("\n")


def _load_grids(cfg: RunConfig, stage: str) -> GridSet:
    meta_path = _need(cfg, stage, "intraday_meta.json", "ingest")
    lp_path = _need(cfg, stage, "intraday_logprices.npy", "ingest")
    with open(meta_path) as fh:
        meta = json.load(fh)
    return GridSet(pd.DatetimeIndex(meta["dates"]), meta["symbols"], np.load(lp_path),
                   np.asarray(meta["short_session"], dtype=bool))


def stage_moments(cfg: RunConfig) -> None:
    grids = _load_grids(cfg, "moments")
    index = cfg.index_symbol if cfg.index_symbol in grids.symbols else None
    if index is None:
        log.warning("index symbol %s not in bars; no market moments", cfg.index_symbol)
    daily = compute_moment_panel(grids, index)
    out = cfg.out_dir
    write_moments(daily, out / "moments_daily.csv", out / "market_moments_daily.csv")
    weekly = weekly_aggregate(daily, cfg.annualization)
    write_moments(weekly, out / "moments_weekly.csv", out / "market_moments_weekly.csv")


def _moments(cfg: RunConfig, stage: str, freq: str):
    path = _need(cfg, stage, f"moments_{freq}.csv", "moments")
    return read_moments(path, freq, cfg.out_dir / f"market_moments_{freq}.csv")


def stage_decompose(cfg: RunConfig) -> None:
    for freq, J in (("daily", cfg.J_daily), ("weekly", cfg.J_weekly)):
        comp = decompose_panel(_moments(cfg, "decompose", freq), J)
        write_components(comp, cfg.out_dir / f"components_{freq}.csv",
                         cfg.out_dir / f"market_components_{freq}.csv")


def stage_factors(cfg: RunConfig) -> None:
    controls = read_controls(cfg.controls) if cfg.controls else None
    for freq in FREQUENCIES:
        panel = _moments(cfg, "factors", freq)
        comp = None
        if "SHSM" in cfg.model_list:
            path = _need(cfg, "factors", f"components_{freq}.csv", "decompose")
            comp = read_components(path, freq, cfg.out_dir / f"market_components_{freq}.csv")
        market = market_columns(panel, comp)
        idio = idiosyncratic_averages(panel, comp)
        for model in cfg.model_list:
            ctrl = controls if freq == "daily" else None
            fm = build_factor_matrix(market, idio, model, ctrl)
            fm.to_csv(cfg.out_dir / f"factors_{model}_{freq}.csv")
        cols = SFMM_COLUMNS + (SHSM_COLUMNS if comp is not None else [])
        joined = market.join(idio, how="outer")[cols].dropna(how="any")
        corr = factor_correlations(FactorMatrix(joined))
        corr.index.name = "factor"
        corr.to_csv(cfg.out_dir / f"correlations_{freq}.csv", float_format=FLOAT_FORMAT,
                    na_rep="", lineterminator="\n")


def _factors(cfg: RunConfig, stage: str, model: str, freq: str):
    return read_factor_matrix(_need(cfg, stage, f"factors_{model}_{freq}.csv", "factors"), model)


def _returns(cfg: RunConfig, stage: str, freq: str):
    return read_panel(_need(cfg, stage, f"returns_{freq}.csv", "ingest"), freq)


def stage_sort(cfg: RunConfig) -> None:
    returns = _returns(cfg, "sort", "daily")
    sc = SortConfig(window_len=cfg.window_len, n_quantiles=cfg.n_quantiles, holding=cfg.holding,
                    step=cfg.step, min_coverage=cfg.sort_coverage, nw_lags=cfg.nw_lags)
    wanted = [v.strip() for v in cfg.sort_vars.split(",") if v.strip()]
    reports = []
    for model in cfg.model_list:
        fm = _factors(cfg, "sort", model, "daily")
        names = [n for n in fm.factor_names if n not in ("MKT", "SMB", "HML")]
        for var in names:
            if wanted and var not in wanted:
                continue
            reports.append(run_sort(returns, fm, sc, var))
    if not reports:
        raise ConfigError(f"no sort variables matched {wanted}")
    write_sort_results(reports, cfg.out_dir / "sort_results.csv")


def stage_crosssection(cfg: RunConfig) -> None:
    freq = cfg.frequency
    returns = _returns(cfg, "crosssection", freq)
    for model in cfg.model_list:
        fm = _factors(cfg, "crosssection", model, freq)
        est = fama_macbeth(returns, fm, cfg.min_coverage, cfg.shanken)
        write_premia(est, cfg.out_dir / f"premia_{model}_{freq}_static.csv", model)


def stage_tvp(cfg: RunConfig) -> None:
    freq = cfg.frequency
    returns = _returns(cfg, "tvp", freq)
    for model in cfg.model_list:
        fm = _factors(cfg, "tvp", model, freq)
        dp = dynamic_fama_macbeth(returns, fm, H=cfg.H if cfg.H > 0 else None, I=cfg.I, seed=cfg.seed,
                                  posterior_mean=cfg.posterior_mean, min_coverage=cfg.min_coverage,
                                  normalization=cfg.normalization, shape_rule=cfg.shape_rule)
        write_dynamic(dp, cfg.out_dir / f"premia_{model}_{freq}_dynamic.csv",
                      cfg.out_dir / f"tvp_path_{model}_{freq}.csv", model)


def stage_report(cfg: RunConfig) -> None:
    out = cfg.out_dir
    rep = out / "report"
    sort_file = out / "sort_results.csv"
    premia = sorted(out.glob("premia_*_static.csv")) + sorted(out.glob("premia_*_dynamic.csv"))
    corr_file = out / "correlations_daily.csv"
    if not sort_file.exists() and not premia:
        raise DependencyError("report", "sort", "sort_results.csv or premia files")
    rep.mkdir(exist_ok=True)
    if sort_file.exists():
        reports = read_sort_results(sort_file)
        write_text(render_sort_table(reports, "Post-ranking mean daily returns (bps)"), rep / "sort_table.txt")
        write_frame(sort_table_frame(reports), rep / "sort_table.csv")
    if premia:
        cols = []
        for p in premia:
            model, freq, kind = p.stem.split("_")[1:4]
            cols.append(read_premia(p, f"{model} {kind}"))
        write_text(render_premia_table(cols, f"Risk premia ({cfg.frequency})"), rep / "premia_table.txt")
        write_frame(premia_table_frame(cols), rep / "premia_table.csv")
    if corr_file.exists():
        corr = pd.read_csv(corr_file, index_col="factor", float_precision="round_trip")
        write_text(render_correlation_table(corr), rep / "correlation_table.txt")


STAGE_FUNCS: dict[str, Callable[[RunConfig], None]] = {
    "simulate": stage_simulate,
    "ingest": stage_ingest,
    "moments": stage_moments,
    "decompose": stage_decompose,
    "factors": stage_factors,
    "sort": stage_sort,
    "crosssection": stage_crosssection,
    "tvp": stage_tvp,
    "report": stage_report,
}


def run_pipeline(cfg: RunConfig, stages: Iterable[str]) -> None:
    """Run ``stages`` in dependency order, writing the resolved config first."""
    stages = list(stages)
    unknown = [s for s in stages if s not in STAGES]
    if unknown:
        raise ConfigError(f"unknown stages {unknown}; choose from {', '.join(STAGES)}")
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    (cfg.out_dir / CONFIG_ECHO).write_text(cfg.dumps())
    previous = _parallel.MAX_THREADS
    _parallel.MAX_THREADS = cfg.threads
    try:
        for stage in [s for s in STAGES if s in stages]:
            log.info("stage %s", stage)
            STAGE_FUNCS[stage](cfg)
    finally:
        _parallel.MAX_THREADS = previous

