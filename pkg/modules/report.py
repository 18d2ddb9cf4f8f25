"""
Aggregation of sweep results: per-group best / median infidelity, success
rates and the best / median training curves.
"""
import json
import logging

import numpy as np
import pandas as pd

from config.app_config import HARNESS_CONFIG, SWEEP_COLUMNS
from modules.column_mapper import apply_column_mapping
from modules.errors import ConfigError
from modules.utils import format_infidelity, format_percent

logger = logging.getLogger(__name__)

GROUP_KEYS = ["geometry", "compact", "chi"]
METRIC_COLUMNS = ["diameter", "largest_tensor", "total_elems", "peak_elems"]


def lower_median(values):
    """Middle order statistic; the lower of the two middle values for even counts."""
    ordered = np.sort(np.asarray(values, dtype=np.float64))
    return ordered[(len(ordered) - 1) // 2]


def _rows(table):
    rows = getattr(table, "rows", table)
    if rows is None or rows.empty:
        raise ConfigError("cannot report on an empty table")
    return rows


def _first_finite(series):
    values = pd.to_numeric(series, errors="coerce").dropna()
    return values.iloc[0] if not values.empty else np.nan


def report(table, threshold=None) -> pd.DataFrame:
    """
    Summarize a sweep per (geometry, compact, chi).

    Failed trials (NaN infidelity) count as unsuccessful and are left out of
    best / median. Groups without a single finished trial are omitted.

    Args:
        table (pd.DataFrame | SweepTable): sweep rows
        threshold (float): success threshold on the final infidelity

    Returns:
        pd.DataFrame: one row per group, in order of first appearance
    """
    if threshold is None:
        threshold = HARNESS_CONFIG["success_threshold"]
    rows = _rows(table)

    records = []
    for (geometry, compact, chi), group in rows.groupby(GROUP_KEYS, sort=False):
        infidelity = pd.to_numeric(group["final_infidelity"], errors="coerce")
        finished = infidelity[np.isfinite(infidelity)]
        if finished.empty:
            logger.warning("no finished trial for %s compact=%s chi=%s, group omitted", geometry, compact, chi)
            continue

        record = {
            "geometry": geometry,
            "compact": compact,
            "chi": chi,
            "trials": len(group),
            "failed": len(group) - len(finished),
            "best_infidelity": finished.min(),
            "median_infidelity": lower_median(finished),
            "success_rate": (finished < threshold).sum() / len(group),
            "mean_iterations": pd.to_numeric(group["iterations"], errors="coerce").mean()
            if "iterations" in group else np.nan,
            "mean_wall_ms": pd.to_numeric(group["wall_ms"], errors="coerce").mean()
            if "wall_ms" in group else np.nan,
        }
        for col in METRIC_COLUMNS:
            if col in group:
                record[col] = _first_finite(group[col])
        records.append(record)

    return pd.DataFrame(records)


def training_curves(rows, histories) -> pd.DataFrame:
    """
    Best and median training of each group, ranked by final infidelity.

    Args:
        rows (pd.DataFrame): sweep rows
        histories (list): per-row [(loss, infidelity), ...], aligned with ``rows``

    Returns:
        pd.DataFrame: long table (geometry, compact, chi, rank, trial,
            iteration, loss, infidelity)
    """
    rows = _rows(rows).reset_index(drop=True)
    if len(histories) != len(rows):
        raise ConfigError(f"{len(histories)} histories for {len(rows)} rows")

    curves = []
    for (geometry, compact, chi), group in rows.groupby(GROUP_KEYS, sort=False):
        infidelity = pd.to_numeric(group["final_infidelity"], errors="coerce")
        finished = infidelity[np.isfinite(infidelity)]
        if finished.empty:
            continue
        order = finished.sort_values(kind="stable").index
        picks = {"best": order[0], "median": order[(len(order) - 1) // 2]}
        for rank, pos in picks.items():
            trial = rows.at[pos, "trial"] if "trial" in rows else pos
            for iteration, (loss, infid) in enumerate(histories[pos]):
                curves.append({
                    "geometry": geometry,
                    "compact": compact,
                    "chi": chi,
                    "rank": rank,
                    "trial": trial,
                    "iteration": iteration,
                    "loss": loss,
                    "infidelity": infid,
                })

    return pd.DataFrame(curves, columns=GROUP_KEYS + ["rank", "trial", "iteration", "loss", "infidelity"])


def load_sweep_csv(path) -> pd.DataFrame:
    """Read a sweep CSV, resolving column aliases."""
    try:
        rows = pd.read_csv(path)
    except pd.errors.EmptyDataError:
        raise ConfigError(f"{path} is empty") from None
    return apply_column_mapping(rows, SWEEP_COLUMNS)


def load_sweep_jsonl(path):
    """
    Read the JSONL mirror of a sweep.

    Returns:
        tuple: (rows DataFrame, histories list)
    """
    records, histories = [], []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise ConfigError(f"{path}:{line_no}: {e}") from None
            histories.append([tuple(point) for point in record.pop("history", [])])
            records.append(record)
    if not records:
        raise ConfigError(f"{path} has no rows")
    return apply_column_mapping(pd.DataFrame(records), SWEEP_COLUMNS), histories


def format_summary(summary: pd.DataFrame) -> str:
    """Human readable rendering of a report table."""
    if summary.empty:
        return "(no groups)"
    display = summary.copy()
    display["best_infidelity"] = display["best_infidelity"].map(format_infidelity)
    display["median_infidelity"] = display["median_infidelity"].map(format_infidelity)
    display["success_rate"] = display["success_rate"].map(format_percent)
    display["mean_iterations"] = display["mean_iterations"].map(lambda v: f"{v:.1f}")
    display["mean_wall_ms"] = display["mean_wall_ms"].map(lambda v: f"{v:.1f}")
    return display.to_string(index=False)
