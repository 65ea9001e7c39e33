"""Positioning metrics (RMSE, R^2 with wrapped headings) and error CDF export."""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .positioning import heading_error


@dataclass
class MetricsRow:
    scenario: str
    pattern: str
    n: int
    rmse_x: float
    rmse_y: float
    rmse_heading: float
    rmse_dist: float
    r2_x: float | None
    r2_y: float | None
    r2_heading: float | None


METRICS_HEADER = [f.name for f in fields(MetricsRow)]


def _r2(ss_res: float, ss_tot: float) -> float | None:
    return None if ss_tot == 0 else 1.0 - ss_res / ss_tot


def circular_mean(deg: np.ndarray) -> float:
    rad = np.radians(deg)
    return float(np.degrees(np.arctan2(np.sin(rad).mean(), np.cos(rad).mean())))


def compute_metrics(pred: np.ndarray, truth: np.ndarray, scenario: str = "", pattern: str = "All") -> MetricsRow:
    """``pred``/``truth`` are (n, 3) arrays of x, y, heading (degrees)."""
    pred = np.asarray(pred, dtype=float).reshape(-1, 3)
    truth = np.asarray(truth, dtype=float).reshape(-1, 3)
    if len(pred) == 0 or len(pred) != len(truth):
        raise ValueError("metrics need aligned, non-empty predictions and truths")
    ex = pred[:, 0] - truth[:, 0]
    ey = pred[:, 1] - truth[:, 1]
    eh = heading_error(pred[:, 2], truth[:, 2])
    eh = np.atleast_1d(eh)
    ss_x = float(np.sum((truth[:, 0] - truth[:, 0].mean()) ** 2))
    ss_y = float(np.sum((truth[:, 1] - truth[:, 1].mean()) ** 2))
    ss_h = float(np.sum(np.atleast_1d(heading_error(truth[:, 2], circular_mean(truth[:, 2]))) ** 2))
    return MetricsRow(
        scenario=scenario,
        pattern=pattern,
        n=len(pred),
        rmse_x=float(np.sqrt(np.mean(ex ** 2))),
        rmse_y=float(np.sqrt(np.mean(ey ** 2))),
        rmse_heading=float(np.sqrt(np.mean(eh ** 2))),
        rmse_dist=float(np.sqrt(np.mean(ex ** 2 + ey ** 2))),
        r2_x=_r2(float(np.sum(ex ** 2)), ss_x),
        r2_y=_r2(float(np.sum(ey ** 2)), ss_y),
        r2_heading=_r2(float(np.sum(eh ** 2)), ss_h),
    )


def _fmt(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_metrics_csv(path: str | Path, rows: Sequence[MetricsRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRICS_HEADER)
        for r in rows:
            w.writerow([_fmt(getattr(r, k)) for k in METRICS_HEADER])


def read_metrics_csv(path: str | Path) -> list[MetricsRow]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            vals = {}
            for k in METRICS_HEADER:
                v = row[k]
                if k in ("scenario", "pattern"):
                    vals[k] = v
                elif k == "n":
                    vals[k] = int(v)
                else:
                    vals[k] = None if v == "NA" else float(v)
            out.append(MetricsRow(**vals))
    return out


def cdf_table(errors) -> np.ndarray:
    """Sorted (error, k/n) pairs; the last probability is exactly 1."""
    e = np.sort(np.asarray(errors, dtype=float).ravel())
    if e.size == 0:
        raise ValueError("cannot build a CDF from no errors")
    prob = np.arange(1, e.size + 1) / e.size
    return np.column_stack([e, prob])


def export_cdf(errors, path: str | Path) -> np.ndarray:
    table = cdf_table(errors)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["error", "probability"])
        for e, p in table:
            w.writerow([repr(float(e)), repr(float(p))])
    return table


def read_cdf(path: str | Path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def quantile_from_cdf(table: np.ndarray, q: float) -> float:
    """Smallest error whose cumulative probability reaches ``q``."""
    k = int(np.searchsorted(table[:, 1], q - 1e-12, side="left"))
    return float(table[min(k, len(table) - 1), 0])
