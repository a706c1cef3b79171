import numpy as np
import pytest

from corekit.errors import TooFewSamplesError
from corekit.features import (
    FEATURE_DIM,
    FeatureMatrix,
    area_downsample,
    extract_features,
    load_feature_csv,
    save_feature_csv,
    standardize,
)
from corekit.raster import Raster


def downsample_oracle(pixels, size=64):
    """Slow per-cell oracle: integrate the piecewise-constant image over the
    exact target-cell rectangle with fractional coverage weights."""
    h, w = pixels.shape
    out = np.zeros((size, size))
    for i in range(size):
        for j in range(size):
            y0, y1 = i * h / size, (i + 1) * h / size
            x0, x1 = j * w / size, (j + 1) * w / size
            total = 0.0
            for yy in range(int(np.floor(y0)), int(np.ceil(y1))):
                for xx in range(int(np.floor(x0)), int(np.ceil(x1))):
                    cover_y = min(y1, yy + 1) - max(y0, yy)
                    cover_x = min(x1, xx + 1) - max(x0, xx)
                    total += pixels[yy, xx] * cover_y * cover_x
            out[i, j] = total / ((y1 - y0) * (x1 - x0))
    return out


def test_feature_dimension():
    img = Raster(np.zeros((10, 10), dtype=np.uint8))
    assert extract_features(img).shape == (FEATURE_DIM,)
    assert FEATURE_DIM == 4166


def test_constant_image_features():
    img = Raster(np.full((32, 48), 100, dtype=np.uint8))
    v = extract_features(img)
    down = v[:4096]
    hist = v[4096:4160]
    mean, stdev, entropy, grad_h, grad_v, dark = v[4160:]
    assert np.allclose(down, 100 / 255, atol=1e-12)
    assert hist[100 >> 2] == 1.0 and hist.sum() == 1.0
    assert mean == 100.0
    assert stdev == 0.0
    assert entropy == 0.0
    assert grad_h == 0.0 and grad_v == 0.0
    assert dark == 1.0  # everything at or below the degenerate threshold


def test_64x64_downsample_is_identity():
    rng = np.random.RandomState(0)
    px = rng.randint(0, 256, (64, 64)).astype(np.uint8)
    v = extract_features(Raster(px))
    assert np.allclose(v[:4096].reshape(64, 64), px / 255.0, atol=1e-12)


def test_checkerboard_stats():
    tile = np.array([[0, 255], [255, 0]], dtype=np.uint8)
    px = np.tile(tile, (32, 32))
    v = extract_features(Raster(px))
    mean, stdev, entropy = v[4160], v[4161], v[4162]
    assert mean == pytest.approx(127.5, abs=1e-12)
    assert stdev == pytest.approx(127.5, abs=1e-12)
    assert entropy == pytest.approx(1.0, abs=1e-12)  # two equal bins -> 1 bit


def test_downsample_matches_fractional_oracle():
    rng = np.random.RandomState(1)
    for h, w in [(100, 130), (64, 64), (7, 5), (65, 64)]:
        px = rng.randint(0, 256, (h, w)).astype(np.uint8)
        fast = area_downsample(px, size=16)
        slow = downsample_oracle(px.astype(float), size=16)
        assert np.allclose(fast, slow, atol=1e-8)


def test_downsample_on_tiny_image():
    px = np.array([[10, 200]], dtype=np.uint8)
    d = area_downsample(px, size=4)
    # left half of cells average pixel 10, right half 200
    assert np.allclose(d[:, :2], 10.0)
    assert np.allclose(d[:, 2:], 200.0)


def test_extract_deterministic():
    rng = np.random.RandomState(2)
    px = rng.randint(0, 256, (33, 47)).astype(np.uint8)
    a = extract_features(Raster(px))
    b = extract_features(Raster(px.copy()))
    assert np.array_equal(a, b)


def test_standardize_two_point_column():
    out, stats = standardize(np.array([[1.0], [3.0]]))
    assert out.ravel().tolist() == [-1.0, 1.0]
    assert stats.mean[0] == 2.0 and stats.stdev[0] == 1.0


def test_standardize_constant_column():
    out, _ = standardize(np.array([[5.0, 1.0], [5.0, 2.0], [5.0, 3.0]]))
    assert np.all(out[:, 0] == 0.0)


def test_standardize_idempotent():
    rng = np.random.RandomState(3)
    m = rng.randn(10, 6) * 3 + 1
    m[:, 2] = 7.0  # constant column
    z1, _ = standardize(m)
    z2, _ = standardize(z1)
    assert np.allclose(z1, z2, atol=1e-12)


def test_standardize_column_invariants():
    rng = np.random.RandomState(4)
    m = rng.randn(20, 9) * rng.uniform(0.1, 10, size=9) + rng.uniform(-5, 5, size=9)
    z, _ = standardize(m)
    assert np.all(np.abs(z.mean(axis=0)) < 1e-10)
    assert np.all(np.abs(z.std(axis=0) - 1.0) < 1e-10)


def test_standardize_too_few_samples():
    with pytest.raises(TooFewSamplesError):
        standardize(np.array([[1.0, 2.0]]))


def test_feature_csv_roundtrip(tmp_path):
    rng = np.random.RandomState(5)
    fm = FeatureMatrix(("a", "b", "c"), rng.randn(3, 10))
    p = tmp_path / "features.csv"
    save_feature_csv(fm, str(p))
    back = load_feature_csv(str(p))
    assert back.ids == fm.ids
    assert np.array_equal(back.values, fm.values)  # repr() round-trips exactly
