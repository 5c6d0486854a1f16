"""Run configuration: defaults, ``key=value`` files, environment and flags.

Precedence, lowest first: built-in defaults, the config file, environment
variables ``MOMENTRISK_<KEY>`` (key upper-cased), command-line flags.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Mapping

from momentrisk.errors import ConfigError

ENV_PREFIX = "MOMENTRISK_"
STAGES = ("simulate", "ingest", "moments", "decompose", "factors", "sort", "crosssection", "tvp", "report")


@dataclass(frozen=True)
class RunConfig:
    out: str = "out"
    # inputs; empty means "use the simulate stage output in the out directory"
    bars: str = ""
    riskfree: str = ""
    controls: str = ""
    adjustments: str = ""
    # intraday grid
    K: int = 78
    session_open: str = "09:30"
    session_close: str = "16:00"
    index_symbol: str = "IDX"
    exclude_short: bool = True
    # moments and horizons
    annualization: str = "outside_sqrt"
    J_daily: int = 7
    J_weekly: int = 5
    # models
    models: str = "SFMM,SHSM"
    frequency: str = "daily"
    min_coverage: float = 0.6
    shanken: bool = False
    # sorts
    window_len: int = 63
    n_quantiles: int = 5
    holding: int = 5
    step: int = 5
    sort_vars: str = ""
    sort_coverage: float = 0.8
    nw_lags: int = 0
    # time-varying parameters; H <= 0 means sqrt(T)
    H: float = 0.0
    I: int = 1000
    seed: int = 0
    posterior_mean: str = "draws"
    shape_rule: str = "full"
    normalization: str = "kish"
    # simulation
    sim_assets: int = 20
    sim_days: int = 260
    sim_daily_vol: float = 0.01
    sim_jump_intensity: float = 0.2
    sim_jump_sign: str = "symmetric"
    sim_market_beta: float = 1.0
    sim_rate: float = 0.0
    sim_start: str = "2015-01-05"
    threads: int = 1

    def validate(self) -> "RunConfig":
        if self.frequency not in ("daily", "weekly"):
            raise ConfigError("frequency must be daily or weekly")
        if self.annualization not in ("outside_sqrt", "inside_sqrt", "none"):
            raise ConfigError("annualization must be outside_sqrt, inside_sqrt or none")
        if self.posterior_mean not in ("draws", "analytic"):
            raise ConfigError("posterior_mean must be draws or analytic")
        if self.shape_rule not in ("full", "conjugate"):
            raise ConfigError("shape_rule must be full or conjugate")
        if self.normalization not in ("kish", "literal"):
            raise ConfigError("normalization must be kish or literal")
        if min(self.K, self.J_daily, self.J_weekly, self.I, self.threads) < 1:
            raise ConfigError("K, J_daily, J_weekly, I and threads must be positive")
        bad = [m for m in self.model_list if m not in ("SFMM", "SHSM")]
        if bad:
            raise ConfigError(f"unknown models {bad}; expected SFMM and/or SHSM")
        return self

    @property
    def model_list(self) -> list[str]:
        return [m.strip() for m in self.models.split(",") if m.strip()]

    @property
    def out_dir(self) -> Path:
        return Path(self.out)

    def dumps(self) -> str:
        """The resolved configuration as ``key=value`` lines in field order."""
        return "".join(f"{f.name}={_format(getattr(self, f.name))}\n" for f in fields(self))


_TYPES = {f.name: f.type for f in fields(RunConfig)}
_BY_LOWER = {name.lower(): name for name in _TYPES}


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _coerce(key: str, raw: Any) -> Any:
    kind = _TYPES[key]
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if kind == "bool":
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind}") from None
    return text


def _canonical(key: str) -> str:
    name = _BY_LOWER.get(key.strip().lower().replace("-", "_"))
    if name is None:
        raise ConfigError(f"unknown config key {key!r}")
    return name


def read_config_file(path: str | Path) -> dict[str, Any]:
    """Parse a ``key=value`` file; ``#`` and ``;`` start comments, section headers are optional."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file {p} not found")
    text = p.read_text()
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"{p}: {exc}") from None
    out = {}
    for section in parser.sections():
        for k, v in parser.items(section):
            out[_canonical(k)] = v
    return out


def env_overrides(env: Mapping[str, str] | None = None) -> dict[str, Any]:
    env = os.environ if env is None else env
    out = {}
    for k, v in env.items():
        if k.startswith(ENV_PREFIX):
            out[_canonical(k[len(ENV_PREFIX):])] = v
    return out


def resolve_config(path: str | Path | None = None, env: Mapping[str, str] | None = None,
                   flags: Mapping[str, Any] | None = None) -> RunConfig:
    values: dict[str, Any] = {}
    if path:
        values.update(read_config_file(path))
    values.update(env_overrides(env))
    values.update({_canonical(k): v for k, v in (flags or {}).items() if v is not None})
    cfg = replace(RunConfig(), **{k: _coerce(k, v) for k, v in values.items()})
    return cfg.validate()
