import math

import numpy as np
import pytest

from uegroup.evaluation import (
    MetricsRow,
    cdf_table,
    circular_mean,
    compute_metrics,
    export_cdf,
    quantile_from_cdf,
    read_cdf,
    read_metrics_csv,
    write_metrics_csv,
)


def _poses(n=50, seed=0):
    rng = np.random.default_rng(seed)
    return np.column_stack([rng.uniform(0, 120, n), rng.uniform(0, 80, n), rng.uniform(0, 360, n)])


def test_perfect_predictions():
    truth = _poses()
    m = compute_metrics(truth, truth, "LoS", "Clockwise")
    assert (m.rmse_x, m.rmse_y, m.rmse_heading, m.rmse_dist) == (0.0, 0.0, 0.0, 0.0)
    assert (m.r2_x, m.r2_y, m.r2_heading) == (1.0, 1.0, 1.0)
    assert m.n == 50 and m.pattern == "Clockwise"


def test_mean_predictor_scores_zero():
    truth = _poses()
    pred = truth.copy()
    pred[:, 0] = truth[:, 0].mean()
    pred[:, 1] = truth[:, 1].mean()
    pred[:, 2] = circular_mean(truth[:, 2])
    m = compute_metrics(pred, truth)
    assert m.r2_x == pytest.approx(0.0, abs=1e-12)
    assert m.r2_y == pytest.approx(0.0, abs=1e-12)
    assert m.r2_heading == pytest.approx(0.0, abs=1e-12)


def test_hand_example():
    truth = np.array([[0.0, 5.0, 10.0], [1.0, 6.0, 20.0], [2.0, 7.0, 30.0]])
    pred = truth.copy()
    pred[2, 0] = 3.0
    m = compute_metrics(pred, truth)
    assert m.rmse_x == pytest.approx(math.sqrt(1 / 3), rel=1e-15)
    assert m.r2_x == pytest.approx(0.5, rel=1e-15)
    assert m.rmse_dist == pytest.approx(math.sqrt(1 / 3), rel=1e-15)


def test_heading_rmse_uses_wrap():
    truth = np.array([[0.0, 0.0, 350.0], [1.0, 1.0, 0.0], [2.0, 2.0, 80.0]])
    pred = truth.copy()
    pred[:, 2] = [10.0, 0.0, 90.0]
    assert compute_metrics(pred, truth).rmse_heading == pytest.approx(math.sqrt(500 / 3), rel=1e-12)


def test_distance_rmse_is_two_dimensional():
    truth = np.zeros((2, 3))
    pred = np.array([[3.0, 4.0, 0.0], [0.0, 0.0, 0.0]])
    assert compute_metrics(pred, truth).rmse_dist == pytest.approx(math.sqrt(25 / 2))


def test_constant_truth_r2_not_available(tmp_path):
    truth = np.tile([5.0, 1.0, 90.0], (4, 1))
    truth[:, 1] = [0.0, 1.0, 2.0, 3.0]
    m = compute_metrics(truth + 0.1, truth)
    assert m.r2_x is None and m.r2_heading is None and m.r2_y is not None
    path = tmp_path / "m.csv"
    write_metrics_csv(path, [m])
    assert "NA" in path.read_text().splitlines()[1].split(",")
    assert read_metrics_csv(path)[0] == m


def test_metrics_reject_misaligned():
    with pytest.raises(ValueError):
        compute_metrics(np.zeros((2, 3)), np.zeros((3, 3)))
    with pytest.raises(ValueError):
        compute_metrics(np.zeros((0, 3)), np.zeros((0, 3)))


def test_metrics_csv_roundtrip_matches_memory(tmp_path):
    truth = _poses(200, 1)
    pred = truth + np.random.default_rng(2).normal(0, 1.5, truth.shape)
    rows = [compute_metrics(pred, truth, "NLoS", "All"), compute_metrics(pred[:50], truth[:50], "NLoS", "Clockwise")]
    path = tmp_path / "metrics.csv"
    write_metrics_csv(path, rows)
    assert path.read_text().splitlines()[0] == \
        "scenario,pattern,n,rmse_x,rmse_y,rmse_heading,rmse_dist,r2_x,r2_y,r2_heading"
    for a, b in zip(rows, read_metrics_csv(path)):
        for k, v in a.__dict__.items():
            if isinstance(v, float):
                assert abs(getattr(b, k) - v) <= 1e-9
            else:
                assert getattr(b, k) == v


def test_r2_never_exceeds_one():
    truth = _poses(100, 3)
    rng = np.random.default_rng(4)
    for scale in (0.1, 10.0, 100.0):
        m = compute_metrics(truth + rng.normal(0, scale, truth.shape), truth)
        assert max(m.r2_x, m.r2_y, m.r2_heading) <= 1.0


def test_cdf_small_example(tmp_path):
    table = export_cdf([3.0, 1.0, 2.0], tmp_path / "c.csv")
    assert table.tolist() == [[1.0, 1 / 3], [2.0, 2 / 3], [3.0, 1.0]]
    assert np.array_equal(read_cdf(tmp_path / "c.csv"), table)
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "error,probability"


def test_cdf_all_equal_is_single_step():
    table = cdf_table([2.5] * 4)
    assert np.all(table[:, 0] == 2.5)
    assert table[-1, 1] == 1.0


def test_cdf_rejects_empty():
    with pytest.raises(ValueError):
        cdf_table([])


def test_cdf_median_within_one_rank(tmp_path):
    errors = np.random.default_rng(5).exponential(2.0, 1001)
    export_cdf(errors, tmp_path / "c.csv")
    table = read_cdf(tmp_path / "c.csv")
    med = quantile_from_cdf(table, 0.5)
    ranks = np.sort(errors)
    k = int(np.searchsorted(ranks, med))
    assert abs(k - 500) <= 1
    assert med == pytest.approx(np.median(errors), abs=max(ranks[501] - ranks[499], 1e-12))


def test_metrics_row_fields():
    assert [f for f in MetricsRow.__dataclass_fields__] == [
        "scenario", "pattern", "n", "rmse_x", "rmse_y", "rmse_heading", "rmse_dist", "r2_x", "r2_y", "r2_heading"]
