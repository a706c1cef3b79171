"""Segmentation evaluation and embedding-coverage metrics.

Pixel-level scoring treats defect as the positive class. Macro F1 averages
the defect and background F1 with equal weight; a class absent from both
prediction and truth counts as perfect (F1 = 1) so that empty images do not
tank the score. Coverage between a selected subset and the full pool is the
sliced 1-D Wasserstein distance averaged over evenly spaced projection
angles, which keeps every subproblem exactly solvable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, EmptySampleError, SubsetNotContainedError
from .raster import Mask

__all__ = [
    "ConfusionCounts",
    "ClassScores",
    "MetricsReport",
    "CoverageReport",
    "pixel_confusion",
    "macro_f1",
    "evaluate_masks",
    "wasserstein_1d",
    "sliced_wasserstein_points",
    "sliced_wasserstein",
]

DEFAULT_PROJECTION_COUNT = 64


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class ClassScores:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class ImageScore:
    image_id: str
    counts: ConfusionCounts
    defect: ClassScores
    background: ClassScores
    macro_f1: float


@dataclass(frozen=True)
class MetricsReport:
    per_image: tuple[ImageScore, ...]
    pooled_defect: ClassScores
    pooled_background: ClassScores
    pooled_macro_f1: float
    mean_macro_f1: float
    std_macro_f1: float  # population stdev across images

    def to_dict(self) -> dict:
        return {
            "per_image": [
                {
                    "image_id": s.image_id,
                    "tp": s.counts.tp,
                    "fp": s.counts.fp,
                    "fn": s.counts.fn,
                    "tn": s.counts.tn,
                    "defect_precision": s.defect.precision,
                    "defect_recall": s.defect.recall,
                    "defect_f1": s.defect.f1,
                    "background_precision": s.background.precision,
                    "background_recall": s.background.recall,
                    "background_f1": s.background.f1,
                    "macro_f1": s.macro_f1,
                }
                for s in self.per_image
            ],
            "pooled": {
                "defect": vars(self.pooled_defect),
                "background": vars(self.pooled_background),
                "macro_f1": self.pooled_macro_f1,
            },
            "mean_macro_f1": self.mean_macro_f1,
            "std_macro_f1": self.std_macro_f1,
        }


@dataclass(frozen=True)
class CoverageReport:
    strategy: str
    subset_size: int
    full_size: int
    projection_count: int
    sliced_w1: float
    axis_w1: tuple[float, ...]  # exact 1-D distance per embedding dimension

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "subset_size": self.subset_size,
            "full_size": self.full_size,
            "projection_count": self.projection_count,
            "sliced_w1": self.sliced_w1,
            "axis_w1": list(self.axis_w1),
        }


def pixel_confusion(pred: Mask, truth: Mask) -> ConfusionCounts:
    """Count TP/FP/FN/TN pixels between a predicted and a ground-truth mask."""
    if (pred.width, pred.height) != (truth.width, truth.height):
        raise DimensionMismatchError(
            f"prediction is {pred.width}x{pred.height}, truth is {truth.width}x{truth.height}"
        )
    p = pred.pixels.astype(bool)
    t = truth.pixels.astype(bool)
    tp = int(np.count_nonzero(p & t))
    fp = int(np.count_nonzero(p & ~t))
    fn = int(np.count_nonzero(~p & t))
    tn = int(np.count_nonzero(~p & ~t))
    return ConfusionCounts(tp, fp, fn, tn)


def _prf(tp: int, fp: int, fn: int, absent_in_both: bool) -> ClassScores:
    if absent_in_both:
        # neither predicted nor present: vacuous perfect agreement
        return ClassScores(1.0, 1.0, 1.0)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return ClassScores(precision, recall, f1)


def macro_f1(counts: ConfusionCounts) -> tuple[ClassScores, ClassScores, float]:
    """Per-class precision/recall/F1 and their unweighted mean (macro F1).

    The background class is scored by swapping the positive label, so its
    TP are the TN pixels. 0/0 ratios resolve to 0, except a class with no
    pixels in either mask, which scores F1 = 1.
    """
    defect = _prf(counts.tp, counts.fp, counts.fn, counts.tp + counts.fp + counts.fn == 0)
    background = _prf(counts.tn, counts.fn, counts.fp, counts.tn + counts.fn + counts.fp == 0)
    return defect, background, (defect.f1 + background.f1) / 2.0


def evaluate_masks(pairs: list[tuple[str, Mask, Mask]]) -> MetricsReport:
    """Score (image_id, predicted, truth) pairs and aggregate across images."""
    if not pairs:
        raise EmptySampleError("no image pairs to evaluate")
    scores = []
    agg = np.zeros(4, dtype=np.int64)
    for image_id, pred, truth in pairs:
        counts = pixel_confusion(pred, truth)
        defect, background, macro = macro_f1(counts)
        scores.append(ImageScore(image_id, counts, defect, background, macro))
        agg += (counts.tp, counts.fp, counts.fn, counts.tn)
    pooled = ConfusionCounts(*(int(v) for v in agg))
    pd, pb, pm = macro_f1(pooled)
    macros = np.array([s.macro_f1 for s in scores])
    return MetricsReport(
        per_image=tuple(scores),
        pooled_defect=pd,
        pooled_background=pb,
        pooled_macro_f1=pm,
        mean_macro_f1=float(macros.mean()),
        std_macro_f1=float(macros.std()),  # population
    )


def wasserstein_1d(a, b) -> float:
    """Exact W1 between the empirical distributions of two 1-D samples.

    Integrates |F_a - F_b| over the merged support; sample counts may differ.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise EmptySampleError("wasserstein_1d requires non-empty samples")
    values = np.concatenate([a, b])
    order = np.argsort(values, kind="stable")
    values = values[order]
    # step in F_a - F_b contributed by each sample point
    deltas = np.concatenate([np.full(a.size, 1.0 / a.size), np.full(b.size, -1.0 / b.size)])
    deltas = deltas[order]
    cdf_diff = np.cumsum(deltas)[:-1]
    gaps = np.diff(values)
    return float(np.sum(np.abs(cdf_diff) * gaps))


def sliced_wasserstein_points(
    subset_xy: np.ndarray, full_xy: np.ndarray, projections: int = DEFAULT_PROJECTION_COUNT
) -> tuple[float, tuple[float, ...]]:
    """Mean 1-D W1 over evenly spaced projection angles l*pi/L, plus per-axis W1."""
    subset_xy = np.asarray(subset_xy, dtype=np.float64)
    full_xy = np.asarray(full_xy, dtype=np.float64)
    if projections < 1:
        raise ValueError("projection count must be >= 1")
    if subset_xy.shape[0] == 0 or full_xy.shape[0] == 0:
        raise EmptySampleError("cannot compare empty point sets")
    total = 0.0
    for ell in range(projections):
        theta = ell * math.pi / projections
        direction = np.array([math.cos(theta), math.sin(theta)])
        total += wasserstein_1d(subset_xy @ direction, full_xy @ direction)
    axis = tuple(
        wasserstein_1d(subset_xy[:, d], full_xy[:, d]) for d in range(subset_xy.shape[1])
    )
    return total / projections, axis


def sliced_wasserstein(
    subset,
    full,
    projections: int = DEFAULT_PROJECTION_COUNT,
    strategy: str = "",
) -> CoverageReport:
    """Coverage of an EmbeddingSet subset against the full EmbeddingSet."""
    missing = set(subset.ids) - set(full.ids)
    if missing:
        raise SubsetNotContainedError(f"subset ids not in full set: {sorted(missing)[:5]}")
    distance, axis = sliced_wasserstein_points(subset.coords, full.coords, projections)
    return CoverageReport(
        strategy=strategy,
        subset_size=len(subset.ids),
        full_size=len(full.ids),
        projection_count=projections,
        sliced_w1=distance,
        axis_w1=axis,
    )
