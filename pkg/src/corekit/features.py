"""Fixed-length image descriptors and feature-matrix standardization.

Each image becomes a 4166-vector: a 64x64 area-average downsample (4096),
a 64-bin normalized intensity histogram, and six global statistics. The
recipe is cheap, deterministic, and captures the contrast / texture /
defect-density cues the embedding stage needs; it is recorded in campaign
manifests so alternative extractors can be swapped in later.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import TooFewSamplesError
from .raster import Raster
from .segment import otsu_threshold

__all__ = [
    "FEATURE_DIM",
    "FeatureMatrix",
    "StandardizationStats",
    "extract_features",
    "area_downsample",
    "standardize",
    "save_feature_csv",
    "load_feature_csv",
]

DOWNSAMPLE_SIZE = 64
HISTOGRAM_BINS = 64
GLOBAL_STATS = 6
FEATURE_DIM = DOWNSAMPLE_SIZE * DOWNSAMPLE_SIZE + HISTOGRAM_BINS + GLOBAL_STATS


@dataclass(frozen=True)
class FeatureMatrix:
    ids: tuple[str, ...]
    values: np.ndarray  # (N, D)

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "ids", tuple(self.ids))
        if len(self.ids) != arr.shape[0]:
            raise ValueError("id count does not match row count")


@dataclass(frozen=True)
class StandardizationStats:
    mean: np.ndarray
    stdev: np.ndarray  # population

    def __post_init__(self):
        for name in ("mean", "stdev"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def area_downsample(pixels: np.ndarray, size: int = DOWNSAMPLE_SIZE) -> np.ndarray:
    """Exact box-filter resample to size x size.

    Every target cell averages the image over its exact source rectangle,
    with fractional pixel coverage handled through the (piecewise bilinear)
    integral of the piecewise-constant image.
    """
    px = np.asarray(pixels, dtype=np.float64)
    h, w = px.shape
    integral = np.zeros((h + 1, w + 1))
    np.cumsum(np.cumsum(px, axis=0), axis=1, out=integral[1:, 1:])

    def integral_at(ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
        # bilinear interpolation of the integral image at real coordinates;
        # clamping keeps y0+1/x0+1 in range, the fractional part compensates
        y0 = np.minimum(np.floor(ys).astype(int), h - 1)
        x0 = np.minimum(np.floor(xs).astype(int), w - 1)
        fy = ys - y0
        fx = xs - x0
        g00 = integral[y0][:, x0]
        g01 = integral[y0][:, x0 + 1]
        g10 = integral[y0 + 1][:, x0]
        g11 = integral[y0 + 1][:, x0 + 1]
        fy = fy[:, None]
        fx = fx[None, :]
        return (
            g00 * (1 - fy) * (1 - fx)
            + g01 * (1 - fy) * fx
            + g10 * fy * (1 - fx)
            + g11 * fy * fx
        )

    edges_y = np.arange(size + 1) * (h / size)
    edges_x = np.arange(size + 1) * (w / size)
    corner = integral_at(edges_y, edges_x)
    cell = corner[1:, 1:] - corner[:-1, 1:] - corner[1:, :-1] + corner[:-1, :-1]
    cell_area = (h / size) * (w / size)
    return cell / cell_area


def _histogram64(pixels: np.ndarray) -> np.ndarray:
    bins = np.bincount((pixels.ravel() >> 2).astype(np.int64), minlength=HISTOGRAM_BINS)
    return bins.astype(np.float64) / pixels.size


def extract_features(image: Raster) -> np.ndarray:
    """4166-dim descriptor: downsample/255, 64-bin histogram, six global stats."""
    px = image.pixels
    down = area_downsample(px) / 255.0
    hist = _histogram64(px)

    as_float = px.astype(np.float64)
    mean = float(as_float.mean())
    stdev = float(as_float.std())  # population
    nz = hist[hist > 0]
    entropy = float(-(nz * np.log2(nz)).sum())
    grad_h = float(np.abs(np.diff(as_float, axis=1)).mean()) if px.shape[1] > 1 else 0.0
    grad_v = float(np.abs(np.diff(as_float, axis=0)).mean()) if px.shape[0] > 1 else 0.0
    otsu = otsu_threshold(image)
    dark_fraction = float((px <= otsu.threshold).mean())

    stats = np.array([mean, stdev, entropy, grad_h, grad_v, dark_fraction])
    return np.concatenate([down.ravel(), hist, stats])


def standardize(matrix: np.ndarray) -> tuple[np.ndarray, StandardizationStats]:
    """Column-wise (x - mean) / stdev with population stdev.

    Zero-variance columns pass through as all-zeros so re-standardization
    is the identity.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] < 2:
        raise TooFewSamplesError("standardize requires at least 2 samples")
    mean = matrix.mean(axis=0)
    stdev = matrix.std(axis=0)
    safe = np.where(stdev > 0, stdev, 1.0)
    out = (matrix - mean) / safe
    out[:, stdev == 0] = 0.0
    return out, StandardizationStats(mean, stdev)


def save_feature_csv(fm: FeatureMatrix, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_id"] + [f"f{i}" for i in range(fm.values.shape[1])])
        for image_id, row in zip(fm.ids, fm.values):
            writer.writerow([image_id] + [repr(float(v)) for v in row])


def load_feature_csv(path: str) -> FeatureMatrix:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "image_id":
            raise ValueError(f"{path}: not a feature CSV (missing image_id header)")
        ids = []
        rows = []
        for record in reader:
            ids.append(record[0])
            rows.append([float(v) for v in record[1:]])
    return FeatureMatrix(tuple(ids), np.array(rows, dtype=np.float64))
