"""
CSV output and table rendering for simulation reports.
"""
import csv
import sys
from pathlib import Path
from typing import Dict, List, Mapping, Sequence

import pandas as pd
from jinja2 import Environment, FileSystemLoader
from loguru import logger

from errors import ConfigError, OutputError

CSV_COLUMNS = [
    "method", "sigma", "p", "fdr", "se_fdr", "fnr", "se_fnr",
    "mfdr", "mfnr", "mean_rejections", "replicates", "wall_time_s",
]

# reference column order: marginal, BH, oracle
METHOD_LABELS = {
    "marginal": "Marginal Procedure",
    "bh": "BH procedure",
    "oracle": "Oracle procedure",
}

METRIC_TITLES = {
    "fdr": "FDRs of the three methods",
    "fnr": "FNRs of the three methods",
    "mean_rejections": "No. of rejections of the three methods",
    "mfdr": "mFDRs of the three methods",
    "mfnr": "mFNRs of the three methods",
    "se_fdr": "Standard errors of the FDR estimates",
    "se_fnr": "Standard errors of the FNR estimates",
}

TEMPLATE_DIR = Path(__file__).resolve().parent / "templates"
# setup.py installs the templates under sys.prefix
TEMPLATE_SEARCH_PATH = [str(TEMPLATE_DIR), str(Path(sys.prefix) / "templates")]


def format_value(value) -> str:
    """Floats with 9 significant digits, everything else verbatim."""
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


def write_reports_csv(rows: Sequence[Mapping[str, object]], path) -> None:
    """Write rows in CSV_COLUMNS order with 9 significant digits and \\n newlines."""
    path = Path(path)
    try:
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=CSV_COLUMNS, lineterminator="\n")
            writer.writeheader()
            for row in rows:
                writer.writerow({column: format_value(row[column]) for column in CSV_COLUMNS})
    except OSError as e:
        logger.error(f"Could not write {path}: {e}")
        raise OutputError(f"Could not write {path}: {e}") from e


def read_reports_csv(path) -> pd.DataFrame:
    """Load a results CSV written by write_reports_csv."""
    try:
        frame = pd.read_csv(path)
    except FileNotFoundError as e:
        raise OutputError(f"Report file {path} not found") from e

    missing = [column for column in CSV_COLUMNS if column not in frame.columns]
    if missing:
        raise ConfigError(f"{path} is not a simulation report; missing columns {missing}")
    logger.debug(f"Loaded {len(frame)} report rows from {path}")
    return frame


def pivot_table(frame: pd.DataFrame, metric: str) -> pd.DataFrame:
    """One row per (sigma, p), one column per method, in the reference layout."""
    if metric not in METRIC_TITLES:
        raise ConfigError(f"Unknown metric '{metric}'; choose from {sorted(METRIC_TITLES)}")

    table = frame.pivot_table(index=["sigma", "p"], columns="method", values=metric, aggfunc="first")
    ordered = [method for method in METHOD_LABELS if method in table.columns]
    table = table[ordered].rename(columns=METHOD_LABELS)
    table.columns.name = None
    return table


def _markdown_rows(table: pd.DataFrame) -> List[List[str]]:
    rows = []
    for (sigma, p), values in table.iterrows():
        rows.append([format_value(float(v)) for v in values] + [format_value(float(p)), str(sigma)])
    return rows


def render_markdown_report(frame: pd.DataFrame, metrics: Sequence[str], title: str = "Simulation report") -> str:
    env = Environment(loader=FileSystemLoader(TEMPLATE_SEARCH_PATH), keep_trailing_newline=True)
    template = env.get_template("table_report.md.j2")

    tables: List[Dict[str, object]] = []
    for metric in metrics:
        table = pivot_table(frame, metric)
        tables.append({
            "caption": METRIC_TITLES[metric],
            "headers": list(table.columns) + ["p", "Correlation"],
            "rows": _markdown_rows(table),
        })

    replicates = sorted(int(r) for r in frame["replicates"].unique())
    return template.render(title=title, tables=tables, replicates=replicates)
