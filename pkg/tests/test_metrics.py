import math

import numpy as np
import pytest

from corekit.errors import DimensionMismatchError, EmptySampleError, SubsetNotContainedError
from corekit.metrics import (
    ConfusionCounts,
    evaluate_masks,
    macro_f1,
    pixel_confusion,
    sliced_wasserstein,
    sliced_wasserstein_points,
    wasserstein_1d,
)
from corekit.raster import Mask


def confusion_oracle(pred, truth):
    """Naive double-loop confusion counter."""
    tp = fp = fn = tn = 0
    for y in range(pred.shape[0]):
        for x in range(pred.shape[1]):
            p, t = pred[y, x], truth[y, x]
            if p and t:
                tp += 1
            elif p and not t:
                fp += 1
            elif not p and t:
                fn += 1
            else:
                tn += 1
    return tp, fp, fn, tn


def w1_quantile_oracle(a, b):
    """W1 via the quantile-function integral, evaluated segment by segment."""
    a = sorted(a)
    b = sorted(b)
    n, m = len(a), len(b)
    cuts = sorted({i / n for i in range(n + 1)} | {j / m for j in range(m + 1)})
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        mid = (lo + hi) / 2
        qa = a[min(int(mid * n), n - 1)]
        qb = b[min(int(mid * m), m - 1)]
        total += (hi - lo) * abs(qa - qb)
    return total


def test_confusion_perfect_prediction():
    truth = np.zeros((10, 10), dtype=np.uint8)
    truth[:2, :5] = 1
    c = pixel_confusion(Mask(truth), Mask(truth))
    assert (c.tp, c.fp, c.fn, c.tn) == (10, 0, 0, 90)


def test_confusion_all_background_prediction():
    truth = np.zeros((10, 10), dtype=np.uint8)
    truth[0, :10] = 1
    pred = np.zeros((10, 10), dtype=np.uint8)
    c = pixel_confusion(Mask(pred), Mask(truth))
    assert (c.tp, c.fp, c.fn, c.tn) == (0, 0, 10, 90)


def test_confusion_matches_double_loop_oracle():
    rng = np.random.RandomState(0)
    for _ in range(25):
        pred = (rng.rand(8, 8) > 0.5).astype(np.uint8)
        truth = (rng.rand(8, 8) > 0.5).astype(np.uint8)
        c = pixel_confusion(Mask(pred), Mask(truth))
        assert (c.tp, c.fp, c.fn, c.tn) == confusion_oracle(pred, truth)


def test_confusion_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        pixel_confusion(Mask(np.zeros((2, 2), np.uint8)), Mask(np.zeros((2, 3), np.uint8)))


def test_macro_f1_perfect():
    _, _, macro = macro_f1(ConfusionCounts(10, 0, 0, 90))
    assert macro == 1.0


def test_macro_f1_hand_computed_fixture():
    defect, background, macro = macro_f1(ConfusionCounts(8, 2, 2, 88))
    assert defect.f1 == pytest.approx(0.8, abs=1e-12)
    assert background.precision == pytest.approx(88 / 90, abs=1e-12)
    assert background.f1 == pytest.approx(88 / 90, abs=1e-12)
    assert macro == pytest.approx(0.8888888888888888, abs=1e-9)


def test_macro_f1_vacuous_all_background():
    defect, background, macro = macro_f1(ConfusionCounts(0, 0, 0, 100))
    assert defect.f1 == 1.0
    assert macro == 1.0


def test_macro_f1_symmetric_under_class_swap():
    rng = np.random.RandomState(1)
    for _ in range(50):
        tp, fp, fn, tn = rng.randint(0, 40, size=4).tolist()
        _, _, m1 = macro_f1(ConfusionCounts(tp, fp, fn, tn))
        _, _, m2 = macro_f1(ConfusionCounts(tn, fn, fp, tp))
        assert m1 == pytest.approx(m2, abs=1e-12)


def test_report_mean_std_hand_aggregation():
    # three 2x2 images with macro F1 values 1.0, 1.0, and one mixed case
    full = np.ones((2, 2), dtype=np.uint8)
    empty = np.zeros((2, 2), dtype=np.uint8)
    half = np.array([[1, 1], [0, 0]], dtype=np.uint8)
    pairs = [
        ("a", Mask(full), Mask(full)),
        ("b", Mask(empty), Mask(empty)),
        ("c", Mask(half), Mask(full)),
    ]
    report = evaluate_masks(pairs)
    # image c: tp=2, fn=2 -> defect F1 = 2*2/(2*2+0+2) = 2/3; background absent
    # in prediction? tn=0, fp=0, fn(pos-swap)=2 -> background F1 = 0
    mc = (2 / 3 + 0.0) / 2
    expected = np.array([1.0, 1.0, mc])
    assert [s.macro_f1 for s in report.per_image] == pytest.approx(expected.tolist(), abs=1e-12)
    assert report.mean_macro_f1 == pytest.approx(expected.mean(), abs=1e-15)
    assert report.std_macro_f1 == pytest.approx(expected.std(), abs=1e-15)


def test_w1_identical_samples():
    assert wasserstein_1d([3.0, 1.0, 2.0], [1.0, 2.0, 3.0]) == 0.0


def test_w1_translation():
    assert wasserstein_1d([0.0, 1.0], [1.0, 2.0]) == pytest.approx(1.0, abs=1e-15)


def test_w1_sorted_coupling_example():
    assert wasserstein_1d([0.0, 0.0], [0.0, 2.0]) == pytest.approx(1.0, abs=1e-15)


def test_w1_empty_sample():
    with pytest.raises(EmptySampleError):
        wasserstein_1d([], [1.0])


def test_w1_matches_quantile_oracle_on_random_pairs():
    rng = np.random.RandomState(42)
    for _ in range(500):
        n = rng.randint(1, 12)
        m = rng.randint(1, 12)
        a = rng.randn(n) * rng.uniform(0.5, 3.0)
        b = rng.randn(m) + rng.uniform(-2, 2)
        assert wasserstein_1d(a, b) == pytest.approx(w1_quantile_oracle(a, b), abs=1e-12)


def test_w1_equal_sizes_matches_sorted_coupling():
    rng = np.random.RandomState(9)
    for _ in range(100):
        n = rng.randint(1, 20)
        a, b = rng.randn(n), rng.randn(n)
        coupling = np.mean(np.abs(np.sort(a) - np.sort(b)))
        assert wasserstein_1d(a, b) == pytest.approx(coupling, abs=1e-12)


def test_w1_metric_axioms():
    rng = np.random.RandomState(4)
    for _ in range(60):
        a = rng.randn(rng.randint(1, 8))
        b = rng.randn(rng.randint(1, 8))
        c = rng.randn(rng.randint(1, 8))
        dab = wasserstein_1d(a, b)
        dba = wasserstein_1d(b, a)
        dac = wasserstein_1d(a, c)
        dcb = wasserstein_1d(c, b)
        assert dab == pytest.approx(dba, abs=1e-12)
        assert dab <= dac + dcb + 1e-12
        assert wasserstein_1d(a, a) == pytest.approx(0.0, abs=1e-12)


def test_w1_constant_shift():
    rng = np.random.RandomState(8)
    for _ in range(30):
        a = rng.randn(rng.randint(1, 15))
        c = rng.uniform(-5, 5)
        assert wasserstein_1d(a, a + c) == pytest.approx(abs(c), abs=1e-10)


class _Emb:
    def __init__(self, ids, coords):
        self.ids = tuple(ids)
        self.coords = np.asarray(coords, dtype=float)


def test_sliced_subset_equals_full():
    rng = np.random.RandomState(0)
    coords = rng.randn(10, 2)
    full = _Emb([f"i{k}" for k in range(10)], coords)
    report = sliced_wasserstein(full, full)
    assert report.sliced_w1 == pytest.approx(0.0, abs=1e-12)
    assert report.axis_w1 == pytest.approx((0.0, 0.0), abs=1e-12)


def test_sliced_translation_analytic_mean_abs_cos():
    rng = np.random.RandomState(1)
    pts = rng.randn(40, 2)
    dist, _ = sliced_wasserstein_points(pts, pts + np.array([1.0, 0.0]), projections=64)
    assert dist == pytest.approx(2 / math.pi, abs=1e-3)


def test_sliced_random_subsets_strictly_positive():
    rng = np.random.RandomState(2)
    coords = rng.randn(67, 2)
    full = _Emb([f"i{k}" for k in range(67)], coords)
    for seed in range(5):
        idx = np.random.RandomState(seed).choice(67, size=24, replace=False)
        sub = _Emb([f"i{k}" for k in idx], coords[idx])
        assert sliced_wasserstein(sub, full).sliced_w1 > 0.0


def test_sliced_subset_not_contained():
    full = _Emb(["a", "b"], [[0, 0], [1, 1]])
    sub = _Emb(["z"], [[0, 0]])
    with pytest.raises(SubsetNotContainedError):
        sliced_wasserstein(sub, full)
