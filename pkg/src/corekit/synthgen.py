"""Seeded synthetic micrographs with exact ground truth.

Pores render as near-circular ellipses, lack-of-fusion voids as elongated
wavy bands, both darker than the matrix, with Gaussian pixel noise on top.
Placement keeps shapes apart so every rendered shape is one ground-truth
instance; if shapes still merge in the mask (dense custom configs), the
merged component reports the class of its largest contributor.

The benchmark pool stacks four process conditions with different
backgrounds, defect brightness, and pore/LoF mixes. That heterogeneity is
what makes selection strategies distinguishable: a learner trained on one
stratum transfers poorly to the others, so balanced coverage pays off.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .defects import CLASS_LOF, CLASS_POROSITY, ProcessCondition, extract_instances
from .errors import ConfigInfeasibleError
from .raster import Mask, Raster

__all__ = [
    "SynthConfig",
    "GroundTruthInstance",
    "SynthImage",
    "generate_micrograph",
    "BENCHMARK_STRATA",
    "BenchmarkStratum",
    "benchmark_pool",
    "config_from_dict",
    "config_to_dict",
]


@dataclass(frozen=True)
class SynthConfig:
    width: int = 256
    height: int = 256
    background_gray: int = 180
    defect_gray: int = 70
    noise_sigma: float = 8.0
    pore_count: tuple[int, int] = (3, 8)
    pore_radius: tuple[float, float] = (4.0, 13.0)
    lof_count: tuple[int, int] = (1, 3)
    lof_length: tuple[float, float] = (30.0, 80.0)
    lof_width_ratio: tuple[float, float] = (0.08, 0.18)
    lof_waviness: tuple[float, float] = (0.10, 0.18)  # amplitude / length

    def __post_init__(self):
        if self.defect_gray >= self.background_gray:
            raise ConfigInfeasibleError("defect gray must be darker than the background")
        for name in ("pore_count", "pore_radius", "lof_count", "lof_length",
                     "lof_width_ratio", "lof_waviness"):
            lo, hi = getattr(self, name)
            if hi < lo:
                raise ConfigInfeasibleError(f"{name} range is empty: ({lo}, {hi})")


@dataclass(frozen=True)
class GroundTruthInstance:
    label: str
    bbox: tuple[int, int, int, int]
    area: int
    centroid: tuple[float, float]


@dataclass(frozen=True)
class SynthImage:
    image: Raster
    mask: Mask
    instances: tuple[GroundTruthInstance, ...]


def _pore_pixels(rng: np.random.RandomState, config: SynthConfig, cx, cy):
    a = rng.uniform(*config.pore_radius)
    b = a * rng.uniform(0.8, 1.0)
    theta = rng.uniform(0.0, math.pi)
    ct, st = math.cos(theta), math.sin(theta)
    extent = int(math.ceil(a)) + 1
    xs = np.arange(int(cx) - extent, int(cx) + extent + 1)
    ys = np.arange(int(cy) - extent, int(cy) + extent + 1)
    xx, yy = np.meshgrid(xs, ys)
    u = (xx - cx) * ct + (yy - cy) * st
    v = -(xx - cx) * st + (yy - cy) * ct
    inside = (u / a) ** 2 + (v / b) ** 2 <= 1.0
    return xx[inside], yy[inside]


def _lof_pixels(rng: np.random.RandomState, config: SynthConfig, cx, cy):
    length = rng.uniform(*config.lof_length)
    width = max(1.5, length * rng.uniform(*config.lof_width_ratio))
    amp = length * rng.uniform(*config.lof_waviness)
    theta = rng.uniform(0.0, math.pi)
    phase = rng.uniform(0.0, 2 * math.pi)
    cycles = rng.uniform(1.0, 2.0)
    ct, st = math.cos(theta), math.sin(theta)
    extent = int(math.ceil(length / 2 + amp + width)) + 1
    xs = np.arange(int(cx) - extent, int(cx) + extent + 1)
    ys = np.arange(int(cy) - extent, int(cy) + extent + 1)
    xx, yy = np.meshgrid(xs, ys)
    u = (xx - cx) * ct + (yy - cy) * st
    v = -(xx - cx) * st + (yy - cy) * ct
    spine = amp * np.sin(2 * math.pi * cycles * u / length + phase)
    inside = (np.abs(u) <= length / 2) & (np.abs(v - spine) <= width / 2)
    return xx[inside], yy[inside]


def generate_micrograph(config: SynthConfig, seed: int) -> SynthImage:
    """Render one image + mask + ground truth, deterministic per (config, seed)."""
    rng = np.random.RandomState(seed)
    w, h = config.width, config.height
    occupied = np.zeros((h, w), dtype=bool)
    mask = np.zeros((h, w), dtype=np.uint8)
    shapes: list[tuple[str, np.ndarray, np.ndarray]] = []

    n_pores = int(rng.randint(config.pore_count[0], config.pore_count[1] + 1))
    n_lof = int(rng.randint(config.lof_count[0], config.lof_count[1] + 1))
    plan = [(CLASS_POROSITY, _pore_pixels)] * n_pores + [(CLASS_LOF, _lof_pixels)] * n_lof

    for label, renderer in plan:
        placed = False
        for _ in range(200):
            cx = rng.uniform(0, w)
            cy = rng.uniform(0, h)
            px, py = renderer(rng, config, cx, cy)
            if px.size == 0:
                continue
            if px.min() < 0 or px.max() >= w or py.min() < 0 or py.max() >= h:
                continue  # clipped shapes distort the ground-truth geometry
            # demand a 2px moat so instances never touch (8-connectivity safe)
            x0, x1 = px.min(), px.max()
            y0, y1 = py.min(), py.max()
            gx0, gx1 = max(x0 - 2, 0), min(x1 + 2, w - 1)
            gy0, gy1 = max(y0 - 2, 0), min(y1 + 2, h - 1)
            if occupied[gy0 : gy1 + 1, gx0 : gx1 + 1].any():
                continue
            occupied[gy0 : gy1 + 1, gx0 : gx1 + 1] = True
            mask[py, px] = 1
            shapes.append((label, px, py))
            placed = True
            break
        if not placed:
            raise ConfigInfeasibleError(
                f"could not place a {label} shape after 200 attempts "
                f"({w}x{h} image, {len(shapes)} shapes already placed)"
            )

    noise = rng.standard_normal((h, w)) * config.noise_sigma
    base = np.full((h, w), float(config.background_gray))
    base[mask == 1] = float(config.defect_gray)
    image = np.clip(np.rint(base + noise), 0, 255).astype(np.uint8)

    # match rendered shapes to mask components; a merged component (possible
    # only under dense custom configs) takes the class of its largest piece
    mask_obj = Mask(mask)
    components = extract_instances(mask_obj)
    comp_id = _component_ids(mask)
    contributions: dict[int, dict[str, int]] = {}
    for label, px, py in shapes:
        cid = int(comp_id[py[0], px[0]])
        bucket = contributions.setdefault(cid, {})
        bucket[label] = bucket.get(label, 0) + px.size
    instances = []
    for idx, comp in enumerate(components):
        votes = contributions.get(idx, {})
        label = max(votes, key=lambda lb: (votes[lb], lb)) if votes else CLASS_POROSITY
        instances.append(
            GroundTruthInstance(
                label=label, bbox=comp.bbox, area=comp.area, centroid=comp.centroid
            )
        )
    return SynthImage(Raster(image), mask_obj, tuple(instances))


def _component_ids(mask: np.ndarray) -> np.ndarray:
    """8-connected component id per pixel, in the same scan order the
    instance extractor uses."""
    from collections import deque

    h, w = mask.shape
    ids = np.full((h, w), -1, dtype=int)
    next_id = 0
    rows, cols = np.nonzero(mask)
    for y0, x0 in zip(rows.tolist(), cols.tolist()):
        if ids[y0, x0] >= 0:
            continue
        queue = deque([(x0, y0)])
        ids[y0, x0] = next_id
        while queue:
            x, y = queue.popleft()
            for dx in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    nx, ny = x + dx, y + dy
                    if 0 <= nx < w and 0 <= ny < h and mask[ny, nx] and ids[ny, nx] < 0:
                        ids[ny, nx] = next_id
                        queue.append((nx, ny))
        next_id += 1
    return ids


# --- the standard synthetic benchmark ---------------------------------------------

@dataclass(frozen=True)
class BenchmarkStratum:
    """One process condition: defect mix and noise level.

    Imaging brightness is drawn per image from the shared continuous span
    below, independent of the stratum, so the pool is heterogeneous along a
    continuum rather than in a handful of discrete looks. A learner only
    generalizes across the part of the span it has seen, which is what
    makes balanced-coverage selection measurably better than random.
    """

    name: str
    condition: ProcessCondition
    noise_sigma: float
    pore_count: tuple[int, int]
    lof_count: tuple[int, int]


BENCHMARK_BACKGROUND_SPAN = (115, 225)
BENCHMARK_CONTRAST_GAP = (70, 90)  # defect gray = background - gap

BENCHMARK_STRATA: tuple[BenchmarkStratum, ...] = (
    BenchmarkStratum("high-energy-porous", ProcessCondition(400.0, 500.0), 10.0, (6, 10), (0, 1)),
    BenchmarkStratum("mid-energy-mixed", ProcessCondition(350.0, 800.0), 8.0, (4, 7), (1, 3)),
    BenchmarkStratum("low-energy-lof", ProcessCondition(300.0, 1100.0), 8.0, (2, 4), (2, 4)),
    BenchmarkStratum("cold-lof", ProcessCondition(250.0, 1400.0), 6.0, (1, 2), (3, 5)),
)


@dataclass(frozen=True)
class PoolImage:
    image_id: str
    image: Raster
    mask: Mask
    condition: ProcessCondition
    stratum: str
    instances: tuple[GroundTruthInstance, ...]


def benchmark_pool(count: int, seed: int, strata=BENCHMARK_STRATA) -> list[PoolImage]:
    """Deterministic pool of `count` images cycling through the strata."""
    out = []
    for idx in range(count):
        stratum = strata[idx % len(strata)]
        rng = np.random.RandomState(seed * 100003 + idx)
        background = int(rng.randint(BENCHMARK_BACKGROUND_SPAN[0], BENCHMARK_BACKGROUND_SPAN[1] + 1))
        gap = int(rng.randint(BENCHMARK_CONTRAST_GAP[0], BENCHMARK_CONTRAST_GAP[1] + 1))
        cfg = SynthConfig(
            background_gray=background,
            defect_gray=background - gap,
            noise_sigma=stratum.noise_sigma,
            pore_count=stratum.pore_count,
            lof_count=stratum.lof_count,
        )
        synth = generate_micrograph(cfg, seed * 9176 + 31 * idx + 7)
        out.append(
            PoolImage(
                image_id=f"img{idx:03d}",
                image=synth.image,
                mask=synth.mask,
                condition=stratum.condition,
                stratum=stratum.name,
                instances=synth.instances,
            )
        )
    return out


# --- config (de)serialization --------------------------------------------------------

def config_to_dict(config: SynthConfig) -> dict:
    return {
        "width": config.width,
        "height": config.height,
        "background_gray": config.background_gray,
        "defect_gray": config.defect_gray,
        "noise_sigma": config.noise_sigma,
        "pore_count": list(config.pore_count),
        "pore_radius": list(config.pore_radius),
        "lof_count": list(config.lof_count),
        "lof_length": list(config.lof_length),
        "lof_width_ratio": list(config.lof_width_ratio),
        "lof_waviness": list(config.lof_waviness),
    }


def config_from_dict(payload: dict) -> SynthConfig:
    kwargs = {}
    for key, value in payload.items():
        if key in ("pore_count", "lof_count"):
            kwargs[key] = (int(value[0]), int(value[1]))
        elif key in ("pore_radius", "lof_length", "lof_width_ratio", "lof_waviness"):
            kwargs[key] = (float(value[0]), float(value[1]))
        elif key in ("width", "height", "background_gray", "defect_gray"):
            kwargs[key] = int(value)
        elif key == "noise_sigma":
            kwargs[key] = float(value)
        else:
            raise ConfigInfeasibleError(f"unknown synth config field {key!r}")
    return SynthConfig(**kwargs)
