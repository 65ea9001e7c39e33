"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The lines are also repeated in the "acceptance criteria" section at the end
of the pytest run. The two desk-scale runs train the full positioning model
and take several minutes each.
"""

import csv
import time

import numpy as np
import pytest

from acceptance_report import record
from oracles import (connected_components, finite_difference_grads, max_relative_error, naive_ctf, naive_ward,
                     partition)
from uegroup.channel import ArrayConfig, MultipathComponent, synthesize_ctf
from uegroup.clustering import (ClusterStats, FeatureConfig, cluster_instant, dbscan, feature_vectors,
                               ward_merge_distance, ward_tree)
from uegroup.evaluation import read_metrics_csv
from uegroup.experiment import ExperimentConfig, default_clustering, run_experiment
from uegroup.nn import LayerSpec, backward, build_network, forward, mse_loss
from uegroup.positioning import PositioningModelSpec, PredictionRecord, heading_error, smooth_arrays
from uegroup.scene import ScenarioConfig
from uegroup.srs import (N_BEAMS, N_LAYERS, N_PRB, N_PRSG, prb_pair_average, process_stream, prsg_downsample,
                         simulate_update_mask)

ARRAY = ArrayConfig()
DESK_RUNTIME_LIMIT = 600.0


def test_pipeline_exactness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    ok = True
    for T in (1, 2, 17):
        raw = rng.standard_normal((T, N_LAYERS, N_BEAMS, N_PRB)) + 1j * rng.standard_normal((T, N_LAYERS, N_BEAMS, N_PRB))
        grouped = prb_pair_average(raw)
        kept = prsg_downsample(grouped)
        for p_miss in (0.0, 0.5, 0.99):
            features, cold = process_stream(raw, simulate_update_mask(T, p_miss, rng))
            ok &= features.shape == (T, 128) and cold.shape == (T,)
        ok &= grouped.shape[-1] == 137 and kept.shape[-1] == 46
    ok &= prb_pair_average(np.zeros(N_PRB)).shape == (137,) and prsg_downsample(np.zeros(N_PRSG)).shape == (46,)
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 1.0
    record("pipeline exactness", ok, f"273 -> 137 -> 46 PRSGs, 128 features per snapshot, {elapsed:.2f} s")
    assert ok


def _random_mpcs(rng):
    mpcs = []
    for _ in range(int(rng.integers(1, 8))):
        amp = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        mpcs.append(MultipathComponent(rng.uniform(1e-8, 2e-6), rng.uniform(-np.pi, np.pi),
                                       rng.uniform(-np.pi / 2, np.pi / 2), amp))
    return mpcs


def test_channel_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(100):
        freqs = ARRAY.carrier_frequency + rng.uniform(-50e6, 50e6, int(rng.integers(1, 47)))
        mpcs = _random_mpcs(rng)
        got = synthesize_ctf(mpcs, ARRAY, freqs).values
        ref = naive_ctf(mpcs, ARRAY, freqs)
        worst = max(worst, float(np.max(np.abs(got - ref)) / np.max(np.abs(ref))))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and elapsed < 10.0
    record("channel oracle", ok, f"100 random multipath sets, max rel. error {worst:.2e}, {elapsed:.1f} s")
    assert ok


def test_gradient_correctness():
    t0 = time.perf_counter()
    worst = 0.0
    nets = [
        ((2, 9), [LayerSpec("Conv1D", 3, 3), LayerSpec("ReLU"), LayerSpec("Conv1D", 2, 2), LayerSpec("Flatten"),
                  LayerSpec("Dense", 5), LayerSpec("ReLU"), LayerSpec("Dense", 4)]),
        ((2, 16), [LayerSpec("Conv1D", 4, 5), LayerSpec("ReLU"), LayerSpec("Conv1D", 3, 3), LayerSpec("ReLU"),
                   LayerSpec("Flatten"), LayerSpec("Dense", 8), LayerSpec("ReLU"), LayerSpec("Dense", 6),
                   LayerSpec("ReLU"), LayerSpec("Dense", 4)]),
        ((7,), [LayerSpec("Dense", 6), LayerSpec("ReLU"), LayerSpec("Dense", 3)]),
    ]
    for seed, (shape, specs) in enumerate(nets):
        rng = np.random.default_rng(seed)
        model = build_network(shape, specs, seed)
        x = rng.standard_normal((4,) + shape)
        t = rng.standard_normal((4, model.output_shape[0]))
        _, cache = forward(model, x)
        analytic = backward(model, cache, t)
        numeric = finite_difference_grads(lambda: mse_loss(model(x), t), model.params)
        worst = max(worst, max_relative_error(analytic, numeric))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-4 and elapsed < 30.0
    record("gradient correctness", ok, f"Conv1D/ReLU/Flatten/Dense nets, max rel. error {worst:.2e}, {elapsed:.1f} s")
    assert ok


def test_dbscan_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    mismatches = 0
    for _ in range(50):
        n = int(rng.integers(1, 201))
        d = int(rng.integers(2, 5))
        X = rng.random((n, d)) * rng.uniform(0.5, 4.0)
        for eps in (0.5, 0.6):
            mismatches += partition(dbscan(X, eps, 1)) != connected_components(X, eps)
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and elapsed < 30.0
    record("dbscan oracle", ok, f"50 instances x 2 eps, {mismatches} partition mismatches, {elapsed:.1f} s")
    assert ok


def _half_squared(a, b):
    total = 0.0
    for u, v in zip(a, b):
        total += (u - v) * (u - v)
    return 0.5 * total


def test_ward_oracle():
    t0 = time.perf_counter()
    order_ok, worst, singleton_ok, singleton_pairs = True, 0.0, True, 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        X = rng.random((int(rng.integers(2, 51)), int(rng.integers(2, 5))))
        slot = {i: {i} for i in range(len(X))}
        for m, (ra, rb, rd) in zip(ward_tree(X), naive_ward(X)):
            order_ok &= (frozenset(slot[m.a]), frozenset(slot[m.b])) == (ra, rb)
            worst = max(worst, abs(m.delta - rd) / max(rd, 1e-300))
            if len(slot[m.a]) == len(slot[m.b]) == 1:
                singleton_pairs += 1
                singleton_ok &= m.delta == _half_squared(X[m.a], X[m.b])
            slot[m.a] |= slot.pop(m.b)
        for _ in range(10):
            i, j = rng.choice(len(X), 2, replace=False)
            singleton_ok &= ward_merge_distance(ClusterStats.of([X[i]]), ClusterStats.of([X[j]])) == \
                _half_squared(X[i], X[j])
    elapsed = time.perf_counter() - t0
    ok = order_ok and worst <= 1e-9 and singleton_ok and elapsed < 60.0
    record("ward oracle", ok, f"20 seeds, merge order {'equal' if order_ok else 'DIFFERS'}, max delta rel. diff "
           f"{worst:.1e}, singleton 1/2|a-b|^2 exact over {singleton_pairs} tree merges "
           f"{'yes' if singleton_ok else 'NO'}, {elapsed:.1f} s")
    assert ok


def _desk_run(scenario, tmp_path_factory):
    cfg = ExperimentConfig(scenario=ScenarioConfig.default(scenario), profile="desk")
    t0 = time.perf_counter()
    out = run_experiment(cfg, tmp_path_factory.mktemp(f"desk_{scenario}"))
    return out, time.perf_counter() - t0


def _trajectory_diagonal(out):
    with open(out / "trajectories.csv", newline="") as fh:
        xy = np.array([(float(r["x"]), float(r["y"])) for r in csv.DictReader(fh)])
    return float(np.hypot(*(xy.max(axis=0) - xy.min(axis=0))))


def _overall(out):
    return next(r for r in read_metrics_csv(out / "metrics.csv") if r.pattern == "All")


@pytest.mark.slow
def test_desk_positioning_los(tmp_path_factory):
    out, elapsed = _desk_run("LoS", tmp_path_factory)
    diag = _trajectory_diagonal(out)
    m = _overall(out)
    ok = m.rmse_dist <= 0.05 * diag and m.rmse_heading <= 15.0 and elapsed <= DESK_RUNTIME_LIMIT
    record("desk positioning LoS", ok, f"distance RMSE {m.rmse_dist:.2f} m (limit {0.05 * diag:.2f} m = 5% of "
           f"{diag:.1f} m), heading RMSE {m.rmse_heading:.2f} deg (limit 15), {elapsed:.0f} s")
    assert ok


@pytest.mark.slow
def test_desk_positioning_nlos(tmp_path_factory):
    out, elapsed = _desk_run("NLoS", tmp_path_factory)
    diag = _trajectory_diagonal(out)
    m = _overall(out)
    ok = m.rmse_dist <= 0.10 * diag and elapsed <= DESK_RUNTIME_LIMIT
    record("desk positioning NLoS", ok, f"distance RMSE {m.rmse_dist:.2f} m (limit {0.10 * diag:.2f} m = 10% of "
           f"{diag:.1f} m), heading RMSE {m.rmse_heading:.2f} deg, {elapsed:.0f} s")
    assert ok


def test_heading_feature_separation():
    t0 = time.perf_counter()
    cfg = ExperimentConfig()
    box = cfg.scenario.bounding_box()
    rng = np.random.default_rng(0)
    cx, cy = (box[0] + box[1]) / 2, (box[2] + box[3]) / 2
    recs = [PredictionRecord(1.0, k, cx + rng.uniform(-0.5, 0.5), cy + rng.uniform(-0.5, 0.5),
                             90.0 if k < 4 else 270.0) for k in range(8)]
    counts = []
    ok = True
    for params in default_clustering():
        without = cluster_instant(feature_vectors(recs, FeatureConfig("position", bounds=box)), params)
        with_heading = cluster_instant(
            feature_vectors(recs, FeatureConfig("sincos", cfg.heading_weight, box)), params)
        counts.append(f"{params.method} {params.value}: {without.n_clusters} -> {with_heading.n_clusters}")
        ok &= without.n_clusters == 1 and with_heading.n_clusters >= 2
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 1.0
    record("heading-feature separation", ok, f"clusters without -> with heading: {'; '.join(counts)}, "
           f"{elapsed:.2f} s")
    assert ok


def test_smoothing_and_wrap():
    k = np.arange(60)
    step = np.where(k == 0, 0.0, 1.0)
    sx, sy, _ = smooth_arrays(step, step, np.zeros(len(k)))
    worst = float(max(np.max(np.abs(sx - (1 - 2.0 ** -k))), np.max(np.abs(sy - (1 - 2.0 ** -k)))))
    wrap = heading_error(359, 1)
    ok = worst <= 1e-12 and wrap == 2 and heading_error(1, 359) == 2
    record("smoothing and wrap", ok, f"step response max deviation {worst:.1e}, heading_error(359, 1) = {wrap!r}")
    assert ok


def test_reproducibility(tmp_path):
    scene = ScenarioConfig.default("LoS", lap_waypoints=[(40.0, 20.0), (60.0, 20.0), (60.0, 30.0), (40.0, 30.0)])
    cfg = ExperimentConfig(scenario=scene, epochs=3, seed=11,
                           model=PositioningModelSpec(conv_channels=(4,), conv_kernels=(3,), dense_widths=(32, 16)))
    a = run_experiment(cfg, tmp_path / "a")
    b = run_experiment(cfg, tmp_path / "b")
    same = [(a / n).read_bytes() == (b / n).read_bytes() for n in ("metrics.csv", "metrics_raw.csv")]
    ok = all(same)
    record("reproducibility", ok, f"two identical runs, metrics.csv identical {same[0]}, "
           f"metrics_raw.csv identical {same[1]}")
    assert ok

