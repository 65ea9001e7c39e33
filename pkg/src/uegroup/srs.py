"""SRS snapshot preprocessing: PRB pairing, PRSG decimation, forward fill, amplitude snapshot.

Grids are numpy arrays whose last axis is frequency; leading axes are free
(``(layers, beams, prb)`` for one instant, ``(T, layers, beams, prb)`` for a stream).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

N_PRB = 273
N_PRSG = 137
N_PRSG_KEPT = 46
DOWNSAMPLE = 3
N_BEAMS = 64
N_LAYERS = 2
SNAPSHOT_LEN = N_BEAMS * N_LAYERS


@dataclass
class RawSrsGrid:
    """One SRS report: PRB-level values plus which PRSGs were refreshed."""

    values: np.ndarray  # (layers, beams, 273), real or complex
    update_mask: np.ndarray  # (layers, beams, 137) bool

    def __post_init__(self):
        self.values = np.asarray(self.values)
        self.update_mask = np.asarray(self.update_mask, dtype=bool)
        if self.values.shape[-1] != N_PRB:
            raise ValueError(f"expected {N_PRB} PRBs, got {self.values.shape[-1]}")
        if self.update_mask.shape != self.values.shape[:-1] + (N_PRSG,):
            raise ValueError(f"update_mask shape {self.update_mask.shape} does not match PRSG grid")


@dataclass
class Snapshot:
    features: np.ndarray
    t: float
    user: int
    cold: bool = False

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        if self.features.shape != (SNAPSHOT_LEN,):
            raise ValueError(f"snapshot must hold {SNAPSHOT_LEN} values, got {self.features.shape}")


def prb_pair_average(grid: np.ndarray) -> np.ndarray:
    """Mean of PRB pairs (2k, 2k+1); the odd last PRB forms its own group."""
    grid = np.asarray(grid)
    if grid.shape[-1] != N_PRB:
        raise ValueError(f"expected {N_PRB} PRBs on the last axis, got {grid.shape[-1]}")
    paired = grid[..., :-1].reshape(grid.shape[:-1] + (N_PRSG - 1, 2)).mean(axis=-1)
    return np.concatenate([paired, grid[..., -1:]], axis=-1)


def prsg_downsample(prsgs: np.ndarray) -> np.ndarray:
    """Keep PRSGs 0, 3, ..., 135."""
    prsgs = np.asarray(prsgs)
    if prsgs.shape[-1] != N_PRSG:
        raise ValueError(f"expected {N_PRSG} PRSGs on the last axis, got {prsgs.shape[-1]}")
    return prsgs[..., ::DOWNSAMPLE]


def forward_fill(values: np.ndarray, mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Replace stale entries with the latest refreshed value along axis 0 (time).

    Returns ``(filled, cold)`` where ``cold[t]`` marks snapshots holding at least
    one entry never refreshed up to ``t``; such entries are set to 0.
    """
    values = np.asarray(values)
    mask = np.asarray(mask, dtype=bool)
    if values.shape != mask.shape:
        raise ValueError(f"mask shape {mask.shape} != values shape {values.shape}")
    n = values.shape[0]
    if n == 0:
        return values.copy(), np.zeros(0, dtype=bool)
    steps = np.arange(n).reshape((n,) + (1,) * (values.ndim - 1))
    last = np.where(mask, steps, -1)
    np.maximum.accumulate(last, axis=0, out=last)
    never = last < 0
    filled = np.take_along_axis(values, np.maximum(last, 0), axis=0)
    filled = np.where(never, np.zeros((), dtype=values.dtype), filled)
    cold = never.reshape(n, -1).any(axis=1)
    return filled, cold


def assemble_snapshot(filled: np.ndarray, t: float, user: int, cold: bool = False) -> Snapshot:
    """Average magnitude over the 46 PRSGs, layer-major: feature[layer * 64 + beam]."""
    filled = np.asarray(filled)
    if filled.shape != (N_LAYERS, N_BEAMS, N_PRSG_KEPT):
        raise ValueError(f"expected grid ({N_LAYERS}, {N_BEAMS}, {N_PRSG_KEPT}), got {filled.shape}")
    return Snapshot(snapshot_features(filled), t, user, cold)


def snapshot_features(filled: np.ndarray) -> np.ndarray:
    """Vectorized feature extraction for ``(..., layers, beams, 46)`` grids."""
    if not np.all(np.isfinite(filled)):
        raise ValueError("non-finite channel values")
    amp = np.abs(filled).mean(axis=-1)
    return amp.reshape(amp.shape[:-2] + (-1,))


def simulate_update_mask(n_steps: int, p_miss: float, rng: np.random.Generator,
                         layers: int = N_LAYERS, beams: int = N_BEAMS) -> np.ndarray:
    """Each PRSG report is dropped with probability ``p_miss``, for all beams and layers at once."""
    refreshed = rng.random((n_steps, N_PRSG)) >= p_miss
    return np.broadcast_to(refreshed[:, None, None, :], (n_steps, layers, beams, N_PRSG))


def process_stream(raw: np.ndarray, mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(T, layers, beams, 273) raw grids + (T, layers, beams, 137) masks -> (T, 128) features, cold flags."""
    grouped = prsg_downsample(prb_pair_average(raw))
    kept_mask = prsg_downsample(mask)
    filled, cold = forward_fill(grouped, kept_mask)
    return snapshot_features(filled), cold


SNAPSHOT_FEATURES = [f"f{k}" for k in range(SNAPSHOT_LEN)]


def snapshot_header(labeled: bool = True) -> list[str]:
    return ["t", "user", *SNAPSHOT_FEATURES, *(["x", "y", "heading"] if labeled else [])]


def write_snapshots_csv(path: str | Path, t: np.ndarray, user: np.ndarray, features: np.ndarray,
                        labels: np.ndarray | None = None) -> None:
    """Rows ``t,user,f0..f127[,x,y,heading]`` at full double precision."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(snapshot_header(labels is not None))
        for k in range(len(t)):
            row = [repr(float(t[k])), int(user[k])] + [repr(float(v)) for v in features[k]]
            if labels is not None:
                row += [repr(float(v)) for v in labels[k]]
            w.writerow(row)


def read_snapshots_csv(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [r for r in reader]
    data = np.array(rows, dtype=float).reshape(-1, len(header))
    out = {
        "t": data[:, 0],
        "user": data[:, 1].astype(np.int64),
        "features": data[:, 2:2 + SNAPSHOT_LEN],
    }
    if "x" in header:
        out["labels"] = data[:, 2 + SNAPSHOT_LEN:2 + SNAPSHOT_LEN + 3]
    return out


def snapshots_from_arrays(t: Sequence[float], user: Sequence[int], features: np.ndarray,
                          cold: Sequence[bool] | None = None) -> list[Snapshot]:
    cold = np.zeros(len(t), dtype=bool) if cold is None else cold
    return [Snapshot(features[k], float(t[k]), int(user[k]), bool(cold[k])) for k in range(len(t))]
