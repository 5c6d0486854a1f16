"""Plain-text and delimited renderings of sort, premia and correlation tables.

Layouts are fixed-width so that reruns are byte-identical: numbers are
right-aligned in columns of :data:`COL` characters under a left-aligned label
column of :data:`LABEL` characters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from momentrisk.sorts import SortReport

LABEL = 12
COL = 10

GROUP_TITLES = (("_m", "Market"), ("_I", "Idiosyncratic"))


def _num(x: float, dp: int) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{x:.{dp}f}"


def _paren(x: float, dp: int) -> str:
    s = _num(x, dp)
    return f"({s})" if s else ""


def _line(label: str, cells: Sequence[str], col: int = COL) -> str:
    return (label.ljust(LABEL) + "".join(c.rjust(col) for c in cells)).rstrip()


def _group(name: str) -> str:
    for suffix, title in GROUP_TITLES:
        if name.endswith(suffix):
            return title
    return "Other"


def render_sort_table(reports: Sequence[SortReport], title: str | None = None) -> str:
    """Quantile means (bps) with t-statistics in parentheses on the row below.

    Columns are the quantile portfolios ``1..n`` followed by High-Low. Rows are
    grouped under Market and Idiosyncratic headings by the factor-name suffix.
    """
    if not reports:
        raise ValueError("no sort results to render")
    n = len(reports[0].mean_bps)
    if any(len(r.mean_bps) != n for r in reports):
        raise ValueError("sort results have different quantile counts")
    header = _line("Variable", [str(q + 1) for q in range(n)] + ["High-Low"])
    rule = "-" * len(header)
    out = []
    if title:
        out.append(title)
    out += [rule, header, rule]
    order = [t for _, t in GROUP_TITLES] + ["Other"]
    for g in order:
        rows = [r for r in reports if _group(r.sort_variable) == g]
        if not rows:
            continue
        out.append(g)
        for r in rows:
            out.append(_line(r.sort_variable, [_num(v, 2) for v in r.mean_bps] + [_num(r.high_low, 2)]))
            out.append(_line("", [_paren(v, 2) for v in r.tstats] + [_paren(r.high_low_t, 2)]))
        out.append(rule)
    return "\n".join(out) + "\n"


def sort_table_frame(reports: Sequence[SortReport]) -> pd.DataFrame:
    """Delimited companion of :func:`render_sort_table`: one mean row and one t row per variable."""
    rows = []
    for r in reports:
        n = len(r.mean_bps)
        cols = [str(q + 1) for q in range(n)] + ["High-Low"]
        rows.append({"variable": r.sort_variable, "stat": "mean_bps",
                     **dict(zip(cols, list(r.mean_bps) + [r.high_low]))})
        rows.append({"variable": r.sort_variable, "stat": "tstat",
                     **dict(zip(cols, list(r.tstats) + [r.high_low_t]))})
    return pd.DataFrame(rows)


@dataclass
class PremiaColumn:
    label: str
    table: pd.DataFrame  # columns factor, coef, tstat
    r2: float | None = None
    kind: str = "static"


def read_premia(path: str | Path, label: str | None = None) -> PremiaColumn:
    """Load a static (``factor,lambda,tstat``) or dynamic (``factor,lambda_bar,tstat``) file."""
    with open(path) as fh:
        first = fh.readline()
    meta = {}
    if first.startswith("#"):
        for tok in first[1:].split():
            k, _, v = tok.partition("=")
            meta[k] = v
    df = pd.read_csv(path, comment="#", float_precision="round_trip")
    if "lambda" in df.columns:
        kind, coef = "static", "lambda"
    elif "lambda_bar" in df.columns:
        kind, coef = "dynamic", "lambda_bar"
    else:
        raise ValueError(f"{path}: not a premia file")
    table = df.rename(columns={coef: "coef"})[["factor", "coef", "tstat"]]
    r2 = float(meta["r2"]) if "r2" in meta else None
    return PremiaColumn(label or meta.get("model", Path(path).stem), table, r2, kind)


def render_premia_table(columns: Sequence[PremiaColumn], title: str | None = None) -> str:
    """Models side by side: coefficient rows with parenthesized t-statistics and an R2 footer.

    Factors appear in order of first appearance with ``const`` first; a blank
    cell means the model does not include that factor.
    """
    if not columns:
        raise ValueError("no premia to render")
    factors = ["const"]
    for c in columns:
        factors += [f for f in c.table["factor"] if f not in factors]
    lookup = [dict(zip(c.table["factor"], zip(c.table["coef"], c.table["tstat"]))) for c in columns]
    width = max(COL, 2 + max(len(c.label) for c in columns))
    header = _line("", [f"[{i + 1}]" for i in range(len(columns))], width)
    rule = "-" * max(len(header), LABEL + width * len(columns))
    out = []
    if title:
        out.append(title)
    out += [rule, header, _line("", [c.label for c in columns], width), rule]
    for f in factors:
        cells = [lk.get(f, (np.nan, np.nan)) for lk in lookup]
        out.append(_line(f, [_num(float(v), 4) for v, _ in cells], width))
        out.append(_line("", [_paren(float(t), 4) for _, t in cells], width))
    out.append(rule)
    out.append(_line("R2", [_num(c.r2, 4) if c.r2 is not None else "" for c in columns], width))
    out.append(rule)
    return "\n".join(out) + "\n"


def premia_table_frame(columns: Sequence[PremiaColumn]) -> pd.DataFrame:
    rows = []
    for c in columns:
        for f, v, t in c.table[["factor", "coef", "tstat"]].itertuples(index=False):
            rows.append({"model": c.label, "kind": c.kind, "factor": f, "coef": v, "tstat": t})
        rows.append({"model": c.label, "kind": c.kind, "factor": "R2",
                     "coef": c.r2 if c.r2 is not None else np.nan, "tstat": np.nan})
    return pd.DataFrame(rows)


def _lower_triangle(corr: pd.DataFrame, rows: list[str], cols: list[str], square: bool) -> list[str]:
    out = [_line("", cols)]
    for i, r in enumerate(rows):
        cells = []
        for j, c in enumerate(cols):
            if square and j > i:
                cells.append("")
            else:
                cells.append(_num(float(corr.loc[r, c]), 2))
        out.append(_line(r, cells))
    return out


def render_correlation_table(corr: pd.DataFrame) -> str:
    """Three panels: market factors, idiosyncratic factors, and market against idiosyncratic."""
    names = list(corr.index)
    mkt = [n for n in names if _group(n) == "Market"]
    idio = [n for n in names if _group(n) == "Idiosyncratic"]
    other = [n for n in names if _group(n) == "Other"]
    out = []
    panels = [("Panel A: market", mkt, mkt, True),
              ("Panel B: idiosyncratic", idio, idio, True),
              ("Panel C: market vs idiosyncratic", idio, mkt, False)]
    if other:
        panels.append(("Panel D: other", other, names, False))
    for title, rows, cols, square in panels:
        if not rows or not cols:
            continue
        body = _lower_triangle(corr, rows, cols, square)
        rule = "-" * max(len(s) for s in body)
        out += [title, rule, *body, rule]
    return "\n".join(out) + "\n"


def write_text(text: str, path: str | Path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def write_frame(frame: pd.DataFrame, path: str | Path) -> None:
    frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
