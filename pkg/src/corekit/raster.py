"""Grayscale image, binary mask, and probability-map types plus file I/O.

Conventions used everywhere downstream: row-major storage, top-left origin,
(x = column, y = row) addressing. Masks are exchanged as 0/255 8-bit PNG,
probability maps as 16-bit grayscale PNG with linear scaling v/65535.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import CorruptImageError, InvalidMaskValueError, UnsupportedFormatError

__all__ = [
    "Raster",
    "Mask",
    "ProbMap",
    "load_grayscale",
    "save_grayscale",
    "load_mask",
    "save_mask",
    "load_probmap",
    "save_probmap",
]


def _frozen_array(data, dtype) -> np.ndarray:
    arr = np.ascontiguousarray(np.asarray(data, dtype=dtype))
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Raster:
    """8-bit grayscale image. ``pixels`` is an immutable (height, width) uint8 array."""

    pixels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "pixels", _frozen_array(self.pixels, np.uint8))
        if self.width < 1 or self.height < 1:
            raise ValueError("image must be at least 1x1")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class Mask:
    """Binary defect mask: 0 = background, 1 = defect."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels)
        bad = ~np.isin(arr, (0, 1))
        if bad.any():
            raise InvalidMaskValueError(
                f"mask contains values outside {{0,1}}: {sorted(np.unique(arr[bad]).tolist())[:5]}"
            )
        object.__setattr__(self, "pixels", _frozen_array(arr, np.uint8))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def defect_pixel_count(self) -> int:
        return int(self.pixels.sum())


@dataclass(frozen=True)
class ProbMap:
    """Per-pixel probabilities in [0, 1], float64."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.size and (not np.isfinite(arr).all() or arr.min() < 0.0 or arr.max() > 1.0):
            raise ValueError("probabilities must be finite and within [0, 1]")
        object.__setattr__(self, "values", _frozen_array(arr, np.float64))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


def _open_image(path: str) -> Image.Image:
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    try:
        img = Image.open(path)
        img.load()
    except UnidentifiedImageError as exc:
        raise CorruptImageError(f"{path}: not a recognized image file") from exc
    except OSError as exc:
        raise CorruptImageError(f"{path}: {exc}") from exc
    return img


def _require_8bit_gray(img: Image.Image, path: str) -> np.ndarray:
    if img.format not in ("PNG", "PPM", None):
        raise UnsupportedFormatError(f"{path}: format {img.format} not supported (PNG/PGM only)")
    if img.mode != "L":
        raise UnsupportedFormatError(
            f"{path}: mode {img.mode} not supported, expected 8-bit grayscale"
        )
    return np.asarray(img, dtype=np.uint8)


def load_grayscale(path: str) -> Raster:
    """Load an 8-bit grayscale PNG or binary PGM (P5). Color/16-bit inputs are rejected."""
    img = _open_image(path)
    return Raster(_require_8bit_gray(img, path))


def save_grayscale(image: Raster, path: str) -> None:
    Image.fromarray(np.asarray(image.pixels)).save(path, format=_format_for(path))


def load_mask(path: str) -> Mask:
    """Load a 0/255 8-bit grayscale mask file; 255 maps to 1."""
    img = _open_image(path)
    arr = _require_8bit_gray(img, path)
    bad = ~np.isin(arr, (0, 255))
    if bad.any():
        offenders = sorted(np.unique(arr[bad]).tolist())[:5]
        raise InvalidMaskValueError(f"{path}: mask pixels must be 0 or 255, found {offenders}")
    return Mask((arr == 255).astype(np.uint8))


def save_mask(mask: Mask, path: str) -> None:
    """Write a mask as 0/255 8-bit grayscale."""
    arr = (np.asarray(mask.pixels) * 255).astype(np.uint8)
    Image.fromarray(arr).save(path, format=_format_for(path))


def load_probmap(path: str) -> ProbMap:
    """Load a 16-bit grayscale PNG; value v maps to v/65535."""
    img = _open_image(path)
    if img.format != "PNG" or img.mode not in ("I;16", "I"):
        raise UnsupportedFormatError(
            f"{path}: probability maps must be 16-bit grayscale PNG, got {img.format}/{img.mode}"
        )
    arr = np.asarray(img, dtype=np.float64)
    if arr.min() < 0 or arr.max() > 65535:
        raise UnsupportedFormatError(f"{path}: pixel values outside the 16-bit range")
    return ProbMap(arr / 65535.0)


def save_probmap(pm: ProbMap, path: str) -> None:
    """Write probabilities as 16-bit grayscale PNG (p -> round(p*65535))."""
    arr = np.rint(np.asarray(pm.values) * 65535.0).astype(np.uint16)
    Image.fromarray(arr).save(path, format="PNG")


def _format_for(path: str) -> str:
    ext = os.path.splitext(path)[1].lower()
    if ext == ".pgm":
        return "PPM"
    return "PNG"
