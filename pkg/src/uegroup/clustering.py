"""Per-instant user grouping on normalized (position, heading) features."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels

NOISE = -1


@dataclass
class FeatureConfig:
    mode: str = "sincos"  # position | sincos | degrees
    heading_weight: float = 0.5
    bounds: tuple[float, float, float, float] | None = None  # (xmin, xmax, ymin, ymax); None = per instant

    def validate(self):
        if self.mode not in ("position", "sincos", "degrees"):
            raise ValueError(f"unknown feature mode {self.mode!r}")


@dataclass
class FeatureVector:
    values: np.ndarray
    user: int
    t: float


@dataclass
class ClusterParams:
    method: str = "dbscan"  # dbscan | hierarchical
    eps: float = 0.5
    min_pts: int = 1
    distance_threshold: float = 0.5
    metric: str = "euclidean"
    linkage: str = "ward"

    def validate(self):
        if self.method not in ("dbscan", "hierarchical"):
            raise ValueError(f"unknown clustering method {self.method!r}")
        if self.eps <= 0:
            raise ValueError("eps must be > 0")
        if self.min_pts < 1:
            raise ValueError("min_pts must be >= 1")
        if self.distance_threshold <= 0:
            raise ValueError("distance_threshold must be > 0")

    @property
    def value(self) -> float:
        return self.eps if self.method == "dbscan" else self.distance_threshold


@dataclass
class Merge:
    a: int
    b: int
    delta: float
    size: int


@dataclass
class ClusterAssignment:
    t: float
    users: list[int]
    labels: np.ndarray
    params: ClusterParams | None = None
    features: np.ndarray | None = None
    merges: list[Merge] = field(default_factory=list)

    def as_dict(self) -> dict[int, int]:
        return {u: int(lab) for u, lab in zip(self.users, self.labels)}

    @property
    def n_clusters(self) -> int:
        return len(set(int(v) for v in self.labels if v != NOISE))


def _minmax(v: np.ndarray, lo: float, hi: float) -> np.ndarray:
    if hi - lo <= 0:
        return np.full(v.shape, 0.5)
    return np.clip((v - lo) / (hi - lo), 0.0, 1.0)


def normalize_features(x, y, heading, cfg: FeatureConfig) -> np.ndarray:
    """Feature matrix for one instant: min-max position, optional weighted heading."""
    cfg.validate()
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if cfg.bounds is None:
        xmin, xmax, ymin, ymax = x.min(), x.max(), y.min(), y.max()
    else:
        xmin, xmax, ymin, ymax = cfg.bounds
    cols = [_minmax(x, xmin, xmax), _minmax(y, ymin, ymax)]
    if cfg.mode == "sincos":
        h = np.radians(np.asarray(heading, dtype=float))
        cols += [cfg.heading_weight * np.sin(h), cfg.heading_weight * np.cos(h)]
    elif cfg.mode == "degrees":
        cols.append(cfg.heading_weight * np.asarray(heading, dtype=float) / 360.0)
    return np.column_stack(cols)


def feature_vectors(records, cfg: FeatureConfig) -> list[FeatureVector]:
    """Normalize a list of prediction records sharing one instant."""
    if not records:
        raise ValueError("need at least one record")
    F = normalize_features([r.x for r in records], [r.y for r in records], [r.heading for r in records], cfg)
    return [FeatureVector(F[k], r.user, r.t) for k, r in enumerate(records)]


def canonical_labels(labels: np.ndarray) -> np.ndarray:
    """Renumber clusters 0, 1, ... in order of first appearance; noise stays -1."""
    labels = np.asarray(labels)
    out = np.full(labels.shape, NOISE, dtype=np.int64)
    mapping: dict[int, int] = {}
    for k, lab in enumerate(labels):
        if lab == NOISE:
            continue
        if lab not in mapping:
            mapping[lab] = len(mapping)
        out[k] = mapping[lab]
    return out


def dbscan(points, eps: float, min_pts: int = 1) -> np.ndarray:
    """Euclidean DBSCAN labels (``-1`` for noise), canonicalized."""
    if eps <= 0:
        raise ValueError("eps must be > 0")
    if min_pts < 1:
        raise ValueError("min_pts must be >= 1")
    X = np.ascontiguousarray(np.atleast_2d(np.asarray(points, dtype=float)))
    if X.size == 0:
        return np.empty(0, dtype=np.int64)
    return canonical_labels(kernels.dbscan_labels(X, float(eps), int(min_pts)))


@dataclass
class ClusterStats:
    size: int
    centroid: np.ndarray

    @classmethod
    def of(cls, points) -> "ClusterStats":
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return cls(len(pts), pts.mean(axis=0))


def ward_merge_distance(a: ClusterStats, b: ClusterStats) -> float:
    """Increase in within-cluster sum of squares when merging ``a`` and ``b``."""
    diff = np.asarray(a.centroid, dtype=float) - np.asarray(b.centroid, dtype=float)
    return a.size * b.size / (a.size + b.size) * float(np.sum(diff * diff))


def ward_tree(points) -> list[Merge]:
    """Complete Ward merge history (lowest slot pair wins ties)."""
    X = np.ascontiguousarray(np.atleast_2d(np.asarray(points, dtype=float)))
    if X.size == 0:
        return []
    pairs, deltas, sizes = kernels.ward_linkage(X)
    return [Merge(int(p[0]), int(p[1]), float(d), int(s)) for p, d, s in zip(pairs, deltas, sizes)]


def labels_from_merges(n: int, merges: Sequence[Merge]) -> np.ndarray:
    slot = np.arange(n)
    for m in merges:
        slot[slot == m.b] = m.a
    return canonical_labels(slot)


def hierarchical_cluster(points, threshold: float) -> tuple[np.ndarray, list[Merge]]:
    """Ward agglomeration stopped once the cheapest merge has sqrt(delta) > threshold.

    Returns labels and the full merge history; the applied merges are its prefix.
    """
    if threshold <= 0:
        raise ValueError("threshold must be > 0")
    X = np.atleast_2d(np.asarray(points, dtype=float))
    if X.size == 0:
        return np.empty(0, dtype=np.int64), []
    merges = ward_tree(X)
    applied = []
    for m in merges:
        if np.sqrt(m.delta) > threshold:
            break
        applied.append(m)
    return labels_from_merges(len(X), applied), merges


def cluster_points(points: np.ndarray, params: ClusterParams) -> tuple[np.ndarray, list[Merge]]:
    params.validate()
    if params.method == "dbscan":
        return dbscan(points, params.eps, params.min_pts), []
    return hierarchical_cluster(points, params.distance_threshold)


def cluster_instant(vectors: Sequence[FeatureVector], params: ClusterParams) -> ClusterAssignment:
    if not vectors:
        return ClusterAssignment(t=float("nan"), users=[], labels=np.empty(0, dtype=np.int64), params=params)
    F = np.stack([v.values for v in vectors])
    labels, merges = cluster_points(F, params)
    return ClusterAssignment(vectors[0].t, [v.user for v in vectors], labels, params, F, merges)


ASSIGNMENT_HEADER = ["t", "user", "x", "y", "heading", "label", "method", "eps_or_threshold", "features_mode"]


def write_assignments_csv(path: str | Path, rows: Sequence[tuple]) -> None:
    """``rows`` are tuples in ``ASSIGNMENT_HEADER`` order."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ASSIGNMENT_HEADER)
        for r in rows:
            w.writerow([repr(float(r[0])), int(r[1]), repr(float(r[2])), repr(float(r[3])), repr(float(r[4])),
                        int(r[5]), r[6], repr(float(r[7])), r[8]])
