import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import signal

from oracles import loop_metrics

from even import evaluate
from even.depth import DepthMap
from even.evaluate import (
    MetricsReport, compute_metrics, format_records, format_table, parse_records, sobel_image, sobel_magnitude,
    weather_split,
)


def dm(data, mask=None):
    data = np.asarray(data, dtype=np.float64)
    return DepthMap(data, np.ones(data.shape, bool) if mask is None else mask)


def test_perfect_prediction():
    gt = dm(np.random.default_rng(0).uniform(1, 50, (6, 6)))
    rep = compute_metrics(gt, gt)
    assert rep.values() == (0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0)
    assert rep.n_pixels == 36


def test_single_pixel_example():
    rep = compute_metrics(dm([[1.1]]), dm([[1.0]]))
    assert rep.abs_rel == pytest.approx(0.1, abs=1e-12)
    assert rep.sq_rel == pytest.approx(0.01, abs=1e-12)
    assert rep.rmse == pytest.approx(0.1, abs=1e-12)
    assert rep.log10 == pytest.approx(0.04139, abs=1e-5)
    assert rep.alpha1 == 1.0


def test_strict_boundary_at_ratio_1_25():
    gt = np.array([[1.0, 2.0], [4.0, 8.0]])
    rep = compute_metrics(dm(1.25 * gt), dm(gt))
    assert (rep.alpha1, rep.alpha2, rep.alpha3) == (0.0, 1.0, 1.0)
    rep = compute_metrics(dm(gt / 1.25), dm(gt))
    assert (rep.alpha1, rep.alpha2, rep.alpha3) == (0.0, 1.0, 1.0)


def test_matches_loop_oracle_on_100_pairs():
    rng = np.random.default_rng(42)
    for _ in range(100):
        shape = tuple(rng.integers(2, 9, 2))
        gt = rng.uniform(0.5, 80, shape)
        pred = gt * np.exp(rng.normal(0, 0.3, shape))
        mask = rng.uniform(size=shape) < 0.8
        mask.flat[0] = True
        rep = compute_metrics(dm(pred), dm(gt, mask))
        ref = loop_metrics(pred, gt, mask)
        assert max(abs(a - b) for a, b in zip(rep.values(), ref)) < 1e-9


def test_errors():
    with pytest.raises(ValueError):
        compute_metrics(dm([[1.0]]), dm([[1.0]], np.zeros((1, 1), bool)))
    with pytest.raises(ValueError):
        compute_metrics(dm([[1.0]]), dm([[0.0]]))
    with pytest.raises(ValueError):
        compute_metrics(dm([[1.0, 2.0]]), dm([[1.0]]))


def test_depth_range_clamps_predictions():
    rep = compute_metrics(dm([[100.0]]), dm([[50.0]]), depth_range=(2.0, 60.0))
    assert rep.abs_rel == pytest.approx(0.2)


positive_maps = st.integers(0, 2**31 - 1).map(
    lambda s: (np.random.default_rng(s).uniform(0.5, 60, (5, 7)),
               np.random.default_rng(s + 1).uniform(0.5, 60, (5, 7))))


@settings(max_examples=100, deadline=None)
@given(positive_maps)
def test_alpha_monotone_and_ranges(maps):
    pred, gt = maps
    rep = compute_metrics(dm(pred), dm(gt))
    assert rep.alpha1 <= rep.alpha2 <= rep.alpha3
    assert all(0 <= a <= 1 for a in (rep.alpha1, rep.alpha2, rep.alpha3))
    assert min(rep.abs_rel, rep.sq_rel, rep.rmse, rep.log10) >= 0


@settings(max_examples=100, deadline=None)
@given(positive_maps, st.integers(-6, 6))
def test_power_of_two_rescaling_is_exact(maps, exponent):
    pred, gt = maps
    c = 2.0 ** exponent
    a = compute_metrics(dm(pred), dm(gt))
    b = compute_metrics(dm(c * pred), dm(c * gt))
    assert (b.abs_rel, b.log10, b.alpha1, b.alpha2, b.alpha3) == (a.abs_rel, a.log10, a.alpha1, a.alpha2, a.alpha3)
    assert b.rmse == c * a.rmse
    assert b.sq_rel == pytest.approx(c * a.sq_rel, rel=1e-14)


@settings(max_examples=100, deadline=None)
@given(positive_maps, st.floats(0.01, 100.0))
def test_general_rescaling(maps, c):
    pred, gt = maps
    a = compute_metrics(dm(pred), dm(gt))
    b = compute_metrics(dm(c * pred), dm(c * gt))
    for x, y in ((a.abs_rel, b.abs_rel), (a.log10, b.log10)):
        assert y == pytest.approx(x, rel=1e-12)
    assert b.rmse == pytest.approx(c * a.rmse, rel=1e-12)
    assert b.sq_rel == pytest.approx(c * a.sq_rel, rel=1e-12)


def test_sobel_constant_and_step():
    assert not sobel_image(np.full((5, 5, 3), 0.4)).any()
    img = np.zeros((5, 5, 3))
    img[:, 3:] = 1.0
    mag = sobel_magnitude(img.mean(axis=2))
    # hand correlation: columns 2 and 3 straddle the step, full kernel weight 1+2+1
    np.testing.assert_allclose(mag[:, 2], 4.0)
    np.testing.assert_allclose(mag[:, 3], 4.0)
    np.testing.assert_allclose(mag[:, [0, 1, 4]], 0.0)
    out = sobel_image(img)
    assert out.shape == (5, 5, 3) and out.min() >= 0 and out.max() == 1.0


def test_sobel_matches_scipy_convolution_oracle():
    gray = np.random.default_rng(0).uniform(size=(9, 11))
    padded = np.pad(gray, 1, mode="edge")
    gx = signal.correlate2d(padded, evaluate.SOBEL_X, mode="valid")
    gy = signal.correlate2d(padded, evaluate.SOBEL_Y, mode="valid")
    np.testing.assert_allclose(sobel_magnitude(gray), np.hypot(gx, gy), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_sobel_translation_equivariance(seed):
    gray = np.random.default_rng(seed).uniform(size=(10, 10))
    shifted = np.roll(gray, 1, axis=1)
    a = sobel_magnitude(gray)
    b = sobel_magnitude(shifted)
    np.testing.assert_allclose(b[:, 2:-1], a[:, 1:-2], atol=1e-12)


def test_report_round_trip_and_table():
    rows = {"rgb": MetricsReport(0.2, 1.5, 5.0, 0.07, 0.7, 0.9, 0.95, 1000),
            "even": MetricsReport(0.15, 1.0, 4.0, 0.06, 0.8, 0.93, 0.97, 1000)}
    assert parse_records(format_records(rows)) == rows
    table = format_table(rows, title="T")
    assert "Abs. Rel." in table and "alpha3" in table
    assert len(table.strip().splitlines()) == 5


def test_weather_split_partitions(tiny_manifest):
    split = weather_split(tiny_manifest)
    assert not set(split.fold_a) & set(split.fold_b)
    weathered = {r.id for r in tiny_manifest.records if r.weather.kind != "clear"}
    assert set(split.fold_a) | set(split.fold_b) == weathered
