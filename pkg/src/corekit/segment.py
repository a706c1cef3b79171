"""Training-free segmentation baseline and the desk-scale simulated learner.

Otsu thresholding gives the classical global-intensity baseline. Ensemble
disagreement is summarized as per-pixel binary entropy of the mean
probability. The simulated learner is a Gaussian naive Bayes over three
cheap pixel features; it is deliberately simple so that active-learning
campaigns run in seconds while still rewarding diverse training pools.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatchError,
    ImageTooSmallError,
    SingleClassTrainingError,
)
from .raster import Mask, ProbMap, Raster

__all__ = [
    "OtsuResult",
    "UncertaintyMap",
    "SimLearner",
    "otsu_threshold",
    "otsu_segment",
    "ensemble_uncertainty",
    "fit_sim_learner",
    "fit_gnb_from_pixels",
    "predict_sim_learner",
    "gnb_posterior",
    "fit_sim_ensemble",
    "pixel_features",
    "sample_training_patches",
    "apply_dihedral",
    "PatchSet",
]

VARIANCE_FLOOR = 1e-6
DIHEDRAL_OPS = 8  # identity, 3 rotations, 4 reflections


@dataclass(frozen=True)
class OtsuResult:
    threshold: int
    between_class_variance: float
    defect_is_dark: bool = True
    degenerate: bool = False  # single-valued histogram


@dataclass(frozen=True)
class UncertaintyMap:
    entropy: np.ndarray  # per-pixel binary entropy, bits
    score: float  # image-level mean entropy

    def __post_init__(self):
        arr = np.asarray(self.entropy, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "entropy", arr)


def otsu_threshold(image: Raster) -> OtsuResult:
    """Threshold t in [0, 255] maximizing between-class variance; ties go to the smallest t.

    Classes are {pixel <= t} and {pixel > t}. A constant image is flagged
    degenerate and returns that value as the threshold with zero variance.
    """
    hist = np.bincount(image.pixels.ravel(), minlength=256).astype(np.float64)
    total = hist.sum()
    nonzero = np.nonzero(hist)[0]
    if nonzero.size == 1:
        return OtsuResult(int(nonzero[0]), 0.0, degenerate=True)

    w0 = np.cumsum(hist) / total  # P(pixel <= t)
    moment = np.cumsum(hist * np.arange(256)) / total
    mu_total = moment[-1]
    w1 = 1.0 - w0
    with np.errstate(divide="ignore", invalid="ignore"):
        mu0 = moment / w0
        mu1 = (mu_total - moment) / w1
        sigma_b = w0 * w1 * (mu0 - mu1) ** 2
    sigma_b = np.where((w0 > 0) & (w1 > 0), sigma_b, 0.0)
    t = int(np.argmax(sigma_b))  # argmax returns the first (smallest) maximizer
    return OtsuResult(t, float(sigma_b[t]))


def otsu_segment(image: Raster, defect_is_dark: bool = True) -> Mask:
    """Binarize with the Otsu threshold; dark polarity marks pixel <= t as defect."""
    result = otsu_threshold(image)
    if defect_is_dark:
        return Mask((image.pixels <= result.threshold).astype(np.uint8))
    return Mask((image.pixels > result.threshold).astype(np.uint8))


def binary_entropy(p: np.ndarray) -> np.ndarray:
    """Elementwise binary entropy in bits with the 0*log(0) := 0 convention."""
    p = np.asarray(p, dtype=np.float64)
    out = np.zeros_like(p)
    interior = (p > 0.0) & (p < 1.0)
    q = p[interior]
    out[interior] = -q * np.log2(q) - (1.0 - q) * np.log2(1.0 - q)
    return out


def ensemble_uncertainty(maps: list[ProbMap]) -> UncertaintyMap:
    """Per-pixel entropy of the ensemble-mean probability; score is its pixel mean."""
    if len(maps) < 2:
        raise DimensionMismatchError("ensemble uncertainty needs at least two maps")
    shape = maps[0].values.shape
    for m in maps[1:]:
        if m.values.shape != shape:
            raise DimensionMismatchError(
                f"map dimensions differ: {m.values.shape} vs {shape}"
            )
    mean = np.mean([m.values for m in maps], axis=0)
    entropy = binary_entropy(mean)
    return UncertaintyMap(entropy, float(entropy.mean()))


# --- simulated learner -------------------------------------------------------

def _window_sums(arr: np.ndarray, radius: int) -> np.ndarray:
    """Sum over (2r+1)^2 windows with edge-replicated borders, via integral image."""
    padded = np.pad(arr, radius, mode="edge").astype(np.float64)
    integral = np.zeros((padded.shape[0] + 1, padded.shape[1] + 1))
    np.cumsum(np.cumsum(padded, axis=0), axis=1, out=integral[1:, 1:])
    k = 2 * radius + 1
    h, w = arr.shape
    return (
        integral[k : k + h, k : k + w]
        - integral[:h, k : k + w]
        - integral[k : k + h, :w]
        + integral[:h, :w]
    )


def pixel_features(image: Raster) -> np.ndarray:
    """Per-pixel feature stack (H, W, 3): intensity, 5x5 local mean, 5x5 local stdev."""
    px = image.pixels.astype(np.float64)
    n = 25.0
    s1 = _window_sums(px, 2)
    s2 = _window_sums(px * px, 2)
    local_mean = s1 / n
    local_var = np.maximum(s2 / n - local_mean**2, 0.0)
    return np.stack([px, local_mean, np.sqrt(local_var)], axis=-1)


@dataclass(frozen=True)
class SimLearner:
    """Gaussian naive Bayes over 3 pixel features; class 1 = defect."""

    means: np.ndarray  # (2, 3)
    variances: np.ndarray  # (2, 3), floored
    log_priors: np.ndarray  # (2,)

    def __post_init__(self):
        for name in ("means", "variances", "log_priors"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def fit_gnb_from_pixels(features: np.ndarray, labels: np.ndarray) -> SimLearner:
    """Fit the naive Bayes model from an (N, 3) feature matrix and 0/1 labels."""
    return _fit_gnb(features, labels)


def _fit_gnb(features: np.ndarray, labels: np.ndarray) -> SimLearner:
    means = np.zeros((2, 3))
    variances = np.zeros((2, 3))
    counts = np.zeros(2)
    for cls in (0, 1):
        rows = features[labels == cls]
        counts[cls] = rows.shape[0]
        if rows.shape[0] == 0:
            raise SingleClassTrainingError(
                "training pixels must contain both defect and background"
            )
        means[cls] = rows.mean(axis=0)
        variances[cls] = np.maximum(rows.var(axis=0), VARIANCE_FLOOR)
    log_priors = np.log(counts / counts.sum())
    return SimLearner(means, variances, log_priors)


def _stack_training_pixels(pairs: list[tuple[Raster, Mask]]) -> tuple[np.ndarray, np.ndarray]:
    feats = []
    labels = []
    for image, mask in pairs:
        if (image.width, image.height) != (mask.width, mask.height):
            raise DimensionMismatchError("image and mask dimensions differ")
        feats.append(pixel_features(image).reshape(-1, 3))
        labels.append(mask.pixels.ravel())
    return np.concatenate(feats), np.concatenate(labels)


def fit_sim_learner(pairs: list[tuple[Raster, Mask]], seed: int = 0) -> SimLearner:
    """Fit the naive Bayes learner on all labeled pixels of (image, mask) pairs."""
    features, labels = _stack_training_pixels(pairs)
    return _fit_gnb(features, labels)


def fit_sim_ensemble(
    pairs: list[tuple[Raster, Mask]], seed: int, members: int = 10
) -> list[SimLearner]:
    """Bootstrap ensemble: each member fits a seeded per-class resample of the pixels.

    Resampling within each class keeps both classes present in every member.
    """
    features, labels = _stack_training_pixels(pairs)
    idx_by_class = [np.nonzero(labels == cls)[0] for cls in (0, 1)]
    if any(ix.size == 0 for ix in idx_by_class):
        raise SingleClassTrainingError("training pixels must contain both defect and background")
    models = []
    for member in range(members):
        rng = np.random.RandomState(seed + member)
        take = np.concatenate([ix[rng.randint(0, ix.size, size=ix.size)] for ix in idx_by_class])
        models.append(_fit_gnb(features[take], labels[take]))
    return models


def gnb_posterior(model: SimLearner, features: np.ndarray) -> np.ndarray:
    """Posterior defect probability for a (..., 3) feature array."""
    log_post = np.empty(features.shape[:-1] + (2,))
    for cls in (0, 1):
        z = (features - model.means[cls]) ** 2 / model.variances[cls]
        log_pdf = -0.5 * (z + np.log(2 * np.pi * model.variances[cls])).sum(axis=-1)
        log_post[..., cls] = model.log_priors[cls] + log_pdf
    shift = log_post.max(axis=-1, keepdims=True)
    expd = np.exp(log_post - shift)
    return expd[..., 1] / expd.sum(axis=-1)


def predict_sim_learner(model: SimLearner, image: Raster) -> ProbMap:
    """Posterior defect probability per pixel."""
    return ProbMap(gnb_posterior(model, pixel_features(image)))


def predict_mask(model: SimLearner, image: Raster, threshold: float = 0.5) -> Mask:
    pm = predict_sim_learner(model, image)
    return Mask((pm.values >= threshold).astype(np.uint8))


# --- training patch sampler ---------------------------------------------------

def apply_dihedral(arr: np.ndarray, op: int) -> np.ndarray:
    """Apply one of the 8 square symmetries: op 0-3 rotate by 90*op degrees,
    op 4-7 are the horizontal flip followed by the same rotations."""
    if not 0 <= op < DIHEDRAL_OPS:
        raise ValueError(f"dihedral op must be in [0, 8), got {op}")
    out = np.fliplr(arr) if op >= 4 else arr
    return np.ascontiguousarray(np.rot90(out, k=op % 4))


@dataclass(frozen=True)
class PatchSet:
    patches: tuple[tuple[Raster, Mask], ...]
    train_indices: tuple[int, ...]
    val_indices: tuple[int, ...]
    offsets: tuple[tuple[int, int], ...]  # (x, y) crop origin per patch
    ops: tuple[int, ...]  # dihedral op per patch


def sample_training_patches(
    image: Raster,
    mask: Mask,
    count: int = 500,
    size: int = 256,
    seed: int = 0,
) -> PatchSet:
    """Uniform random size x size crops, each with a random square symmetry applied
    identically to image and mask, plus an 80/20 train/validation split."""
    if image.width < size or image.height < size:
        raise ImageTooSmallError(
            f"image {image.width}x{image.height} smaller than patch size {size}"
        )
    if (image.width, image.height) != (mask.width, mask.height):
        raise DimensionMismatchError("image and mask dimensions differ")
    rng = np.random.RandomState(seed)
    patches = []
    offsets = []
    ops = []
    for _ in range(count):
        x = int(rng.randint(0, image.width - size + 1))
        y = int(rng.randint(0, image.height - size + 1))
        op = int(rng.randint(0, DIHEDRAL_OPS))
        img_crop = image.pixels[y : y + size, x : x + size]
        msk_crop = mask.pixels[y : y + size, x : x + size]
        patches.append((Raster(apply_dihedral(img_crop, op)), Mask(apply_dihedral(msk_crop, op))))
        offsets.append((x, y))
        ops.append(op)
    order = rng.permutation(count)
    cut = int(round(count * 0.8))
    return PatchSet(
        patches=tuple(patches),
        train_indices=tuple(int(i) for i in order[:cut]),
        val_indices=tuple(int(i) for i in order[cut:]),
        offsets=tuple(offsets),
        ops=tuple(ops),
    )
