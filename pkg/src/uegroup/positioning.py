"""CNN+FNN position/heading regressor, smoothing post-process and heading error."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import nn
from .scene import normalize_heading
from .srs import N_BEAMS, N_LAYERS, SNAPSHOT_LEN, Snapshot

LOG_FLOOR = 1e-12


@dataclass
class PositioningModelSpec:
    conv_channels: tuple[int, ...] = (16, 32)
    conv_kernels: tuple[int, ...] = (5, 3)
    dense_widths: tuple[int, ...] = (512, 256, 128, 64, 64, 32, 16)
    heading_encoding: str = "sincos"  # or "degrees"
    input_channels: int = N_LAYERS
    input_length: int = N_BEAMS

    def __post_init__(self):
        self.conv_channels = tuple(self.conv_channels)
        self.conv_kernels = tuple(self.conv_kernels)
        self.dense_widths = tuple(self.dense_widths)

    @property
    def output_dim(self) -> int:
        return 4 if self.heading_encoding == "sincos" else 3

    def validate(self) -> None:
        if self.heading_encoding not in ("sincos", "degrees"):
            raise ValueError(f"unknown heading encoding {self.heading_encoding!r}")
        if len(self.conv_channels) != len(self.conv_kernels):
            raise ValueError("conv_channels and conv_kernels differ in length")
        if any(c < 1 for c in self.conv_channels + self.dense_widths) or any(k < 1 for k in self.conv_kernels):
            raise ValueError("layer widths and kernels must be positive")
        if self.input_channels * self.input_length != SNAPSHOT_LEN:
            raise ValueError("input layout must cover the 128-value snapshot")

    def layer_specs(self) -> list[nn.LayerSpec]:
        specs = []
        for ch, k in zip(self.conv_channels, self.conv_kernels):
            specs += [nn.LayerSpec("Conv1D", ch, k), nn.LayerSpec("ReLU")]
        specs.append(nn.LayerSpec("Flatten"))
        widths = list(self.dense_widths) + [self.output_dim]
        for i, w in enumerate(widths):
            specs.append(nn.LayerSpec("Dense", w))
            if i < len(widths) - 1:
                specs.append(nn.LayerSpec("ReLU"))
        return specs

    def to_dict(self) -> dict:
        return {"conv_channels": list(self.conv_channels), "conv_kernels": list(self.conv_kernels),
                "dense_widths": list(self.dense_widths), "heading_encoding": self.heading_encoding,
                "input_channels": self.input_channels, "input_length": self.input_length}


def build_model(spec: PositioningModelSpec, seed: int = 0) -> nn.Sequential:
    spec.validate()
    return nn.build_network((spec.input_channels, spec.input_length), spec.layer_specs(), seed)


def log_amplitude(features: np.ndarray) -> np.ndarray:
    return 20.0 * np.log10(np.asarray(features, dtype=float) + LOG_FLOOR)


@dataclass
class Scaler:
    """Input log/z-score statistics and target standardization, fitted on training data."""

    feature_mean: np.ndarray
    feature_std: np.ndarray
    target_mean: np.ndarray
    target_std: np.ndarray
    heading_encoding: str = "sincos"

    @classmethod
    def fit(cls, features: np.ndarray, poses: np.ndarray, heading_encoding: str = "sincos") -> "Scaler":
        """``poses`` columns are x, y, heading in degrees."""
        logf = log_amplitude(features)
        fstd = logf.std(axis=0)
        poses = np.asarray(poses, dtype=float)
        cols = poses[:, :2] if heading_encoding == "sincos" else poses[:, :3]
        tstd = cols.std(axis=0)
        return cls(logf.mean(axis=0), np.where(fstd > 0, fstd, 1.0), cols.mean(axis=0),
                   np.where(tstd > 0, tstd, 1.0), heading_encoding)

    def transform(self, features: np.ndarray) -> np.ndarray:
        """Standardized inputs reshaped to (batch, layers, beams)."""
        z = (log_amplitude(features) - self.feature_mean) / self.feature_std
        return z.reshape(len(z), N_LAYERS, N_BEAMS)

    def encode_targets(self, poses: np.ndarray) -> np.ndarray:
        poses = np.asarray(poses, dtype=float)
        n = len(self.target_mean)
        scaled = (poses[:, :n] - self.target_mean) / self.target_std
        if self.heading_encoding == "sincos":
            h = np.radians(poses[:, 2])
            return np.column_stack([scaled, np.sin(h), np.cos(h)])
        return scaled

    def decode_outputs(self, out: np.ndarray) -> np.ndarray:
        """Network outputs -> (x, y, heading degrees in [0, 360))."""
        n = len(self.target_mean)
        raw = out[:, :n] * self.target_std + self.target_mean
        if self.heading_encoding == "sincos":
            heading = np.degrees(np.arctan2(out[:, 2], out[:, 3]))
        else:
            heading = raw[:, 2]
        return np.column_stack([raw[:, 0], raw[:, 1], normalize_heading(heading)])

    def to_dict(self) -> dict:
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.__dict__.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "Scaler":
        return cls(*(np.asarray(d[k], dtype=float) for k in
                     ("feature_mean", "feature_std", "target_mean", "target_std")), d["heading_encoding"])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "Scaler":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class PredictionRecord:
    t: float
    user: int
    x: float
    y: float
    heading: float
    smoothed: bool = False
    cold: bool = False


def predict_batch(model: nn.Sequential, features: np.ndarray, scaler: Scaler, batch: int = 1024) -> np.ndarray:
    """(n, 128) snapshots -> (n, 3) array of x, y, heading."""
    features = np.atleast_2d(np.asarray(features, dtype=float))
    if features.shape[1] != SNAPSHOT_LEN:
        raise ValueError(f"snapshots must have {SNAPSHOT_LEN} features, got {features.shape[1]}")
    outs = [model(scaler.transform(features[k:k + batch])) for k in range(0, len(features), batch)]
    return scaler.decode_outputs(np.concatenate(outs) if outs else np.empty((0, model.output_shape[0])))


def predict(model: nn.Sequential, snapshot: Snapshot, scaler: Scaler) -> PredictionRecord:
    x, y, h = predict_batch(model, snapshot.features[None], scaler)[0]
    return PredictionRecord(snapshot.t, snapshot.user, float(x), float(y), float(h), False, snapshot.cold)


def smooth_arrays(x: np.ndarray, y: np.ndarray, heading: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Average each prediction with the previous smoothed one; headings on the circle."""
    n = len(x)
    sx, sy, sh = np.empty(n), np.empty(n), np.empty(n)
    if n == 0:
        return sx, sy, sh
    rad = np.radians(heading)
    sin, cos = np.sin(rad), np.cos(rad)
    sx[0], sy[0], sh[0] = x[0], y[0], normalize_heading(float(heading[0]))
    prev = np.radians(sh[0])
    for k in range(1, n):
        sx[k] = (x[k] + sx[k - 1]) / 2
        sy[k] = (y[k] + sy[k - 1]) / 2
        s = sin[k] + np.sin(prev)
        c = cos[k] + np.cos(prev)
        # antipodal pair has no mean direction; keep the new prediction
        prev = np.arctan2(s, c) if np.hypot(s, c) > 1e-12 else rad[k]
        sh[k] = normalize_heading(float(np.degrees(prev)))
    return sx, sy, sh


def smooth(records: Sequence[PredictionRecord]) -> list[PredictionRecord]:
    """Smooth one user's time-ordered prediction series."""
    if not records:
        return []
    x = np.array([r.x for r in records])
    y = np.array([r.y for r in records])
    h = np.array([r.heading for r in records])
    sx, sy, sh = smooth_arrays(x, y, h)
    return [PredictionRecord(r.t, r.user, float(sx[k]), float(sy[k]), float(sh[k]), True, r.cold)
            for k, r in enumerate(records)]


def heading_error(pred, truth):
    """Absolute angular difference in degrees, wrapped to [0, 180]."""
    d = np.mod(np.asarray(pred, dtype=float) - np.asarray(truth, dtype=float), 360.0)
    err = np.minimum(d, 360.0 - d)
    return float(err) if err.ndim == 0 else err


def chronological_split(users: np.ndarray, ratio: float = 0.8) -> np.ndarray:
    """Boolean train mask: first ``ratio`` of each user's (time-ordered) rows."""
    users = np.asarray(users)
    train = np.zeros(len(users), dtype=bool)
    for u in np.unique(users):
        idx = np.flatnonzero(users == u)
        train[idx[:int(round(ratio * len(idx)))]] = True
    return train


PREDICTION_HEADER = ["t", "user", "x", "y", "heading", "x_true", "y_true", "heading_true", "smoothed"]


def write_predictions_csv(path: str | Path, records: Sequence[PredictionRecord], truths: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PREDICTION_HEADER)
        for r, tr in zip(records, truths):
            w.writerow([repr(float(r.t)), r.user, repr(float(r.x)), repr(float(r.y)), repr(float(r.heading)),
                        repr(float(tr[0])), repr(float(tr[1])), repr(float(tr[2])), int(r.smoothed)])


def read_predictions_csv(path: str | Path) -> tuple[list[PredictionRecord], np.ndarray]:
    records, truths = [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            records.append(PredictionRecord(float(row["t"]), int(row["user"]), float(row["x"]), float(row["y"]),
                                            float(row["heading"]), bool(int(row["smoothed"]))))
            truths.append((float(row["x_true"]), float(row["y_true"]), float(row["heading_true"])))
    return records, np.array(truths, dtype=float).reshape(-1, 3)
