"""Experiment configuration and the simulate -> ... -> evaluate stages.

Every stage reads its inputs from and writes its outputs to one artifact
directory, so stages can be run one at a time from the CLI or chained by
:func:`run_experiment`.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels, nn
from .channel import ArrayConfig, add_awgn, multipath_batch, prb_frequencies, synthesize_batch, write_ctf_binary
from .clustering import ClusterParams, FeatureConfig, cluster_points, normalize_features, write_assignments_csv
from .evaluation import MetricsRow, compute_metrics, export_cdf, write_metrics_csv
from .positioning import (
    PositioningModelSpec,
    PredictionRecord,
    Scaler,
    build_model,
    chronological_split,
    heading_error,
    predict_batch,
    read_predictions_csv,
    smooth_arrays,
    write_predictions_csv,
)
from .scene import ALL_PATTERNS, Pattern, ScenarioConfig, generate_laps, read_trajectories_csv, split_virtual_users, \
    write_trajectories_csv
from .srs import prb_pair_average, prsg_downsample, forward_fill, read_snapshots_csv, simulate_update_mask, \
    snapshot_features, write_snapshots_csv

log = logging.getLogger(__name__)

PROFILE_EPOCHS = {"desk": 50, "full": 200}

STAGES = ("simulate", "preprocess", "train", "predict", "cluster", "evaluate")


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


def default_clustering() -> list[ClusterParams]:
    return [
        ClusterParams("dbscan", eps=0.5, min_pts=1),
        ClusterParams("dbscan", eps=0.6, min_pts=1),
        ClusterParams("hierarchical", distance_threshold=0.5),
        ClusterParams("hierarchical", distance_threshold=1.0),
    ]


@dataclass
class ExperimentConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig.default)
    array: ArrayConfig = field(default_factory=ArrayConfig)
    snr_db: float = 20.0
    p_miss: float = 0.1
    model: PositioningModelSpec = field(default_factory=PositioningModelSpec)
    train: nn.TrainConfig = field(default_factory=nn.TrainConfig)
    epochs: int | None = None  # None -> taken from the profile
    clustering: list[ClusterParams] = field(default_factory=default_clustering)
    feature_modes: list[str] = field(default_factory=lambda: ["position", "sincos"])
    heading_weight: float = 0.5
    normalization: str = "bbox"  # bbox | instant
    split_ratio: float = 0.8
    patterns: list[Pattern] = field(default_factory=lambda: list(ALL_PATTERNS))
    seed: int = 0
    profile: str = "desk"
    chunk: int = 50
    export_ctf: bool = False
    output_dir: str = "runs/default"

    def __post_init__(self):
        self.patterns = [Pattern(p) for p in self.patterns]

    @property
    def effective_epochs(self) -> int:
        if self.epochs is not None:
            return int(self.epochs)
        if self.profile not in PROFILE_EPOCHS:
            raise ValueError(f"unknown profile {self.profile!r}")
        return PROFILE_EPOCHS[self.profile]

    def train_config(self) -> nn.TrainConfig:
        return dataclasses.replace(self.train, epochs=self.effective_epochs, seed=self.seed)

    def scene(self) -> ScenarioConfig:
        return dataclasses.replace(self.scenario, rng_seed=self.seed)

    def validate(self) -> None:
        self.scene().validate()
        self.array.validate()
        self.model.validate()
        self.train_config().validate()
        for p in self.clustering:
            p.validate()
        for m in self.feature_modes:
            FeatureConfig(mode=m).validate()
        if not 0 < self.split_ratio < 1:
            raise ValueError("split_ratio must be in (0, 1)")
        if not 0 <= self.p_miss < 1:
            raise ValueError("p_miss must be in [0, 1)")
        if self.normalization not in ("bbox", "instant"):
            raise ValueError(f"unknown normalization {self.normalization!r}")

    def to_dict(self) -> dict:
        d = {
            "scenario": self.scenario.to_dict(),
            "array": dataclasses.asdict(self.array),
            "model": self.model.to_dict(),
            "train": dataclasses.asdict(self.train),
            "clustering": [dataclasses.asdict(p) for p in self.clustering],
            "patterns": [p.value for p in self.patterns],
        }
        for f in dataclasses.fields(self):
            if f.name not in d:
                d[f.name] = getattr(self, f.name)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        kw = {}
        if "scenario" in d:
            kw["scenario"] = ScenarioConfig.from_dict(d.pop("scenario"))
        if "array" in d:
            kw["array"] = ArrayConfig(**d.pop("array"))
        if "model" in d:
            kw["model"] = PositioningModelSpec(**d.pop("model"))
        if "train" in d:
            kw["train"] = nn.TrainConfig(**d.pop("train"))
        if "clustering" in d:
            kw["clustering"] = [ClusterParams(**p) for p in d.pop("clustering")]
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kw.update(d)
        return cls(**kw)

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def config_hash(self) -> str:
        """SHA-256 of the canonical config, ignoring where outputs go."""
        d = self.to_dict()
        d.pop("output_dir", None)
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _require(out: Path, name: str, stage: str) -> Path:
    p = out / name
    if not p.exists():
        raise StageError(stage, f"missing input {p}; run the earlier stages first")
    return p


# -- stages ------------------------------------------------------------------------------------------------------


def stage_simulate(cfg: ExperimentConfig, out: Path) -> list:
    laps = generate_laps(cfg.scene(), cfg.patterns)
    users = split_virtual_users(laps)
    write_trajectories_csv(out / "trajectories.csv", users)
    log.info("simulate: %d laps -> %d users", len(laps), len(users))
    return users


def stage_preprocess(cfg: ExperimentConfig, out: Path) -> dict:
    tracks = read_trajectories_csv(_require(out, "trajectories.csv", "preprocess"))
    scene = cfg.scene()
    freqs = prb_frequencies(cfg.array)
    ts, us, feats, labels, colds, patterns = [], [], [], [], [], []
    ctf_blocks = []
    for track in tracks:
        P = np.array([(p.t, p.x, p.y, p.z, p.heading) for p in track.poses], dtype=float)
        noise_rng = np.random.default_rng([cfg.seed, 1, track.user])
        mask_rng = np.random.default_rng([cfg.seed, 2, track.user])
        grouped = []
        for start in range(0, len(P), cfg.chunk):
            block = P[start:start + cfg.chunk]
            mp = multipath_batch(block[:, 1:4], block[:, 4], scene, cfg.array)
            raw = synthesize_batch(mp.delay, mp.azimuth, mp.elevation, mp.amplitude, cfg.array, freqs)
            raw = add_awgn(raw, cfg.snr_db, noise_rng)
            grouped.append(prsg_downsample(prb_pair_average(raw)))
        grouped = np.concatenate(grouped)
        mask = prsg_downsample(simulate_update_mask(len(P), cfg.p_miss, mask_rng,
                                                    cfg.array.ue_layers, cfg.array.beams_per_layer))
        filled, cold = forward_fill(grouped, mask)
        if cfg.export_ctf:
            ctf_blocks.append(filled.reshape(len(P), -1, filled.shape[-1]).astype(np.complex64))
        ts.append(P[:, 0])
        us.append(np.full(len(P), track.user))
        feats.append(snapshot_features(filled))
        labels.append(P[:, [1, 2, 4]])
        colds.append(cold)
        patterns += [track.pattern.value] * len(P)
    t = np.concatenate(ts)
    user = np.concatenate(us)
    features = np.concatenate(feats)
    write_snapshots_csv(out / "snapshots.csv", t, user, features, np.concatenate(labels))
    cold = np.concatenate(colds)
    with open(out / "snapshot_flags.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "user", "pattern", "cold"])
        for k in range(len(t)):
            w.writerow([repr(float(t[k])), int(user[k]), patterns[k], int(cold[k])])
    if cfg.export_ctf:
        write_ctf_binary(out / "ctf.bin", np.concatenate(ctf_blocks), {"axes": ["snapshot", "row", "prsg"]})
    log.info("preprocess: %d snapshots", len(t))
    return {"t": t, "user": user, "features": features, "cold": cold}


def _read_flags(out: Path) -> tuple[dict[int, str], dict[tuple[int, float], bool]]:
    patterns, cold = {}, {}
    with open(out / "snapshot_flags.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            u = int(row["user"])
            patterns[u] = row["pattern"]
            cold[(u, float(row["t"]))] = bool(int(row["cold"]))
    return patterns, cold


def stage_train(cfg: ExperimentConfig, out: Path) -> list[float]:
    data = read_snapshots_csv(_require(out, "snapshots.csv", "train"))
    train_mask = chronological_split(data["user"], cfg.split_ratio)
    feats, labels = data["features"][train_mask], data["labels"][train_mask]
    scaler = Scaler.fit(feats, labels, cfg.model.heading_encoding)
    model = build_model(cfg.model, cfg.seed)
    tcfg = cfg.train_config()
    log.info("train: %d samples, %d params, %d epochs", len(feats), model.n_params(), tcfg.epochs)
    result = nn.train(model, scaler.transform(feats), scaler.encode_targets(labels), tcfg)
    nn.save_model(model, out / "model", extra={"spec": cfg.model.to_dict()})
    scaler.save(out / "scaler.json")
    with open(out / "loss_curve.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "loss"])
        for k, v in enumerate(result.loss_curve, start=1):
            w.writerow([k, repr(v)])
    return result.loss_curve


def stage_predict(cfg: ExperimentConfig, out: Path) -> tuple[list[PredictionRecord], np.ndarray]:
    data = read_snapshots_csv(_require(out, "snapshots.csv", "predict"))
    model, _ = nn.load_model(_require(out, "model.json", "predict").with_suffix(""))
    scaler = Scaler.load(_require(out, "scaler.json", "predict"))
    _, cold = _read_flags(out)
    test = ~chronological_split(data["user"], cfg.split_ratio)
    pred = predict_batch(model, data["features"][test], scaler)
    t, user, truth = data["t"][test], data["user"][test], data["labels"][test]
    records, truths = [], []
    for smoothed in (False, True):
        for u in np.unique(user):
            idx = np.flatnonzero(user == u)
            idx = idx[np.argsort(t[idx], kind="stable")]
            x, y, h = pred[idx, 0], pred[idx, 1], pred[idx, 2]
            if smoothed:
                x, y, h = smooth_arrays(x, y, h)
            for j, k in enumerate(idx):
                records.append(PredictionRecord(float(t[k]), int(u), float(x[j]), float(y[j]), float(h[j]),
                                                smoothed, cold.get((int(u), float(t[k])), False)))
                truths.append(truth[k])
    truths = np.array(truths).reshape(-1, 3)
    write_predictions_csv(out / "predictions.csv", records, truths)
    return records, truths


def align_streams(records: Sequence[PredictionRecord], user_start: dict[int, float], interval: float):
    """Re-zero each user's clock and sample-and-hold onto a shared grid.

    Yields ``(grid_time, [record, ...])`` for every grid instant with at least one user present.
    """
    by_user: dict[int, list[PredictionRecord]] = {}
    for r in records:
        by_user.setdefault(r.user, []).append(r)
    streams = {}
    for u, recs in by_user.items():
        recs = sorted(recs, key=lambda r: r.t)
        rel = np.array([r.t - user_start.get(u, recs[0].t) for r in recs])
        streams[u] = (np.rint(rel / interval).astype(np.int64), recs)
    if not streams:
        return
    lo = min(s[0][0] for s in streams.values())
    hi = max(s[0][-1] for s in streams.values())
    for k in range(lo, hi + 1):
        present = []
        for u in sorted(streams):
            ticks, recs = streams[u]
            if ticks[0] <= k <= ticks[-1]:
                j = int(np.searchsorted(ticks, k, side="right")) - 1
                present.append(recs[j])
        if present:
            yield k * interval, present


def assignment_filename(params: ClusterParams) -> str:
    return f"assignments_{params.method}_{params.value:g}.csv"


def stage_cluster(cfg: ExperimentConfig, out: Path) -> dict[str, int]:
    records, _ = read_predictions_csv(_require(out, "predictions.csv", "cluster"))
    records = [r for r in records if r.smoothed]
    snaps = read_snapshots_csv(_require(out, "snapshots.csv", "cluster"))
    user_start = {int(u): float(snaps["t"][snaps["user"] == u].min()) for u in np.unique(snaps["user"])}
    scene = cfg.scene()
    bounds = scene.bounding_box() if cfg.normalization == "bbox" else None
    instants = list(align_streams(records, user_start, scene.sample_interval))
    counts = {}
    for params in cfg.clustering:
        rows = []
        for mode in cfg.feature_modes:
            fcfg = FeatureConfig(mode=mode, heading_weight=cfg.heading_weight, bounds=bounds)
            for gt, present in instants:
                F = normalize_features([r.x for r in present], [r.y for r in present],
                                       [r.heading for r in present], fcfg)
                labels, _ = cluster_points(F, params)
                rows += [(gt, r.user, r.x, r.y, r.heading, lab, params.method, params.value, mode)
                         for r, lab in zip(present, labels)]
        name = assignment_filename(params)
        write_assignments_csv(out / name, rows)
        counts[name] = len(rows)
    return counts


def stage_evaluate(cfg: ExperimentConfig, out: Path) -> list[MetricsRow]:
    records, truths = read_predictions_csv(_require(out, "predictions.csv", "evaluate"))
    patterns, _ = _read_flags(out)
    scen = cfg.scenario.scenario.value
    all_rows = {}
    for smoothed, fname in ((True, "metrics.csv"), (False, "metrics_raw.csv")):
        sel = np.array([r.smoothed == smoothed for r in records])
        pred = np.array([(r.x, r.y, r.heading) for r in records]).reshape(-1, 3)[sel]
        tru = truths[sel]
        pats = np.array([patterns[r.user] for r in records])[sel]
        rows = []
        for pat in cfg.patterns:
            m = pats == pat.value
            if m.any():
                rows.append(compute_metrics(pred[m], tru[m], scen, pat.value))
        rows.append(compute_metrics(pred, tru, scen, "All"))
        write_metrics_csv(out / fname, rows)
        all_rows[smoothed] = rows
        if smoothed:
            dist = np.hypot(pred[:, 0] - tru[:, 0], pred[:, 1] - tru[:, 1])
            export_cdf(dist, out / "cdf_distance.csv")
            export_cdf(heading_error(pred[:, 2], tru[:, 2]), out / "cdf_heading.csv")
    return all_rows[True]


_STAGE_FUNCS = {
    "simulate": stage_simulate,
    "preprocess": stage_preprocess,
    "train": stage_train,
    "predict": stage_predict,
    "cluster": stage_cluster,
    "evaluate": stage_evaluate,
}


def run_stage(name: str, cfg: ExperimentConfig, out: str | Path | None = None):
    out = Path(out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        cfg.validate()
    except ValueError as exc:
        raise StageError("config", str(exc)) from exc
    try:
        return _STAGE_FUNCS[name](cfg, out)
    except StageError:
        raise
    except (ValueError, OSError, KeyError) as exc:
        raise StageError(name, str(exc)) from exc


def write_manifest(cfg: ExperimentConfig, out: Path) -> dict:
    tracks = read_trajectories_csv(out / "trajectories.csv")
    files = sorted(p.name for p in out.iterdir() if p.is_file() and p.name != "manifest.json")
    manifest = {
        "config": cfg.to_dict(),
        "config_sha256": cfg.config_hash(),
        "seed": cfg.seed,
        "profile": cfg.profile,
        "epochs": cfg.effective_epochs,
        "kernel_backend": kernels.BACKEND,
        "users": [{"user": t.user, "pattern": t.pattern.value, "snapshots": len(t.poses)} for t in tracks],
        "n_users": len(tracks),
        "n_snapshots": sum(len(t.poses) for t in tracks),
        "files": {name: _sha256(out / name) for name in files},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest


def run_experiment(cfg: ExperimentConfig, out: str | Path | None = None) -> Path:
    """Execute every stage in order and write ``manifest.json``; returns the artifact directory."""
    out = Path(out or cfg.output_dir)
    for name in STAGES:
        log.info("stage %s", name)
        run_stage(name, cfg, out)
    write_manifest(cfg, out)
    return out
