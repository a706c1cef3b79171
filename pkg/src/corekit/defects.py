"""Stage-two analytics: defect instances, patch windows, classes, process maps.

Instances are 8-connected components of a binary mask, ordered by their
first pixel in row-major scan order. The perimeter estimate is the
perimeter of the convex hull of the instance's pixel squares (hull of the
pixel centers plus the Minkowski border of 4): exact for axis-aligned
rectangles, close to the true boundary length for convex blobs, and it
keeps circularity = 4*pi*A/P^2 inside (0, 1] by the isoperimetric
inequality. That robustly separates near-circular pores (>= ~0.85) from
elongated lack-of-fusion voids (<= ~0.45) at the default 0.6 threshold.
"""

from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    EmptyAggregatesError,
    ImageSmallerThanPatchError,
    UnknownClassError,
    UnknownInstanceError,
    UnmappedImageError,
)
from .raster import Mask, Raster

__all__ = [
    "PATCH_SIZE",
    "BBOX_PAD",
    "CLASS_POROSITY",
    "CLASS_LOF",
    "CLASS_UNLABELED",
    "DefectInstance",
    "PatchSpec",
    "ImageDefectStats",
    "ProcessCondition",
    "ConditionAggregate",
    "extract_instances",
    "patch_window",
    "extract_patch",
    "classify_heuristic",
    "apply_labels",
    "defect_stats",
    "aggregate_by_condition",
    "emit_process_map",
    "save_instances_csv",
    "load_instances_csv",
    "load_condition_csv",
    "save_condition_csv",
]

PATCH_SIZE = 128
BBOX_PAD = 10
MIN_CLASSIFIABLE_AREA = 4
CLASS_POROSITY = "porosity"
CLASS_LOF = "lack_of_fusion"
CLASS_UNLABELED = "unlabeled"
VALID_CLASSES = (CLASS_POROSITY, CLASS_LOF, CLASS_UNLABELED)


@dataclass(frozen=True)
class DefectInstance:
    instance_id: int
    area: int
    bbox: tuple[int, int, int, int]  # x, y, w, h
    centroid: tuple[float, float]  # mean pixel coordinates (x, y)
    perimeter: float
    circularity: float
    label: str = CLASS_UNLABELED


@dataclass(frozen=True)
class PatchSpec:
    instance_id: int
    window: tuple[int, int, int, int]  # x, y, w, h in the source image
    resize: bool  # True when the window is resampled down to PATCH_SIZE
    target: int = PATCH_SIZE


@dataclass(frozen=True)
class ImageDefectStats:
    image_id: str
    defect_count: int
    area_fraction: float
    porosity_fraction: float
    lof_fraction: float


@dataclass(frozen=True)
class ProcessCondition:
    power_w: float
    speed_mm_s: float

    def __post_init__(self):
        if self.power_w <= 0 or self.speed_mm_s <= 0:
            raise ValueError("laser power and scan speed must be positive")


@dataclass(frozen=True)
class ConditionAggregate:
    condition: ProcessCondition
    image_count: int
    mean_defect_count: float
    mean_area_fraction: float
    mean_porosity_fraction: float
    mean_lof_fraction: float


# --- instance extraction -----------------------------------------------------------

_NEIGHBORS8 = ((-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1))


def _convex_hull(points: list[tuple[int, int]]) -> list[tuple[int, int]]:
    """Monotone-chain hull (CCW) over integer pixel centers; exact arithmetic."""
    pts = sorted(set(points))
    if len(pts) <= 2:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list[tuple[int, int]] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[tuple[int, int]] = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def _hull_perimeter(pixels: list[tuple[int, int]]) -> float:
    """Perimeter of the convex hull of the unit pixel squares."""
    hull = _convex_hull(pixels)
    if len(hull) == 1:
        return 4.0
    if len(hull) == 2:
        return 2.0 * math.dist(hull[0], hull[1]) + 4.0
    edges = sum(math.dist(hull[i], hull[(i + 1) % len(hull)]) for i in range(len(hull)))
    return edges + 4.0


def extract_instances(mask: Mask) -> list[DefectInstance]:
    """8-connected components ordered by first pixel in row-major scan order."""
    grid = mask.pixels
    h, w = grid.shape
    seen = np.zeros((h, w), dtype=bool)
    instances: list[DefectInstance] = []
    defect_rows, defect_cols = np.nonzero(grid)
    for y0, x0 in zip(defect_rows.tolist(), defect_cols.tolist()):
        if seen[y0, x0]:
            continue
        queue = deque([(x0, y0)])
        seen[y0, x0] = True
        pixels: list[tuple[int, int]] = []
        while queue:
            x, y = queue.popleft()
            pixels.append((x, y))
            for dx, dy in _NEIGHBORS8:
                nx, ny = x + dx, y + dy
                if 0 <= nx < w and 0 <= ny < h and grid[ny, nx] and not seen[ny, nx]:
                    seen[ny, nx] = True
                    queue.append((nx, ny))
        xs = [p[0] for p in pixels]
        ys = [p[1] for p in pixels]
        area = len(pixels)
        perimeter = _hull_perimeter(pixels)
        instances.append(
            DefectInstance(
                instance_id=len(instances),
                area=area,
                bbox=(min(xs), min(ys), max(xs) - min(xs) + 1, max(ys) - min(ys) + 1),
                centroid=(sum(xs) / area, sum(ys) / area),
                perimeter=perimeter,
                circularity=4.0 * math.pi * area / (perimeter * perimeter),
            )
        )
    return instances


# --- patch windows -------------------------------------------------------------------

def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def patch_window(instance: DefectInstance, image_width: int, image_height: int) -> PatchSpec:
    """Window for a PATCH_SIZE x PATCH_SIZE context patch around one defect.

    Small defects (bbox under the patch size in both axes) get a fixed
    window centered at the rounded centroid, shifted inside the image with
    no resampling. Larger defects get their bbox padded by BBOX_PAD pixels,
    clamped, and marked for resampling down to the patch size.
    """
    if image_width < PATCH_SIZE or image_height < PATCH_SIZE:
        raise ImageSmallerThanPatchError(
            f"image {image_width}x{image_height} cannot hold a {PATCH_SIZE} patch"
        )
    bx, by, bw, bh = instance.bbox
    if bw < PATCH_SIZE and bh < PATCH_SIZE:
        half = PATCH_SIZE // 2
        x0 = _round_half_up(instance.centroid[0]) - half
        y0 = _round_half_up(instance.centroid[1]) - half
        x0 = min(max(x0, 0), image_width - PATCH_SIZE)
        y0 = min(max(y0, 0), image_height - PATCH_SIZE)
        return PatchSpec(instance.instance_id, (x0, y0, PATCH_SIZE, PATCH_SIZE), resize=False)
    x0 = max(bx - BBOX_PAD, 0)
    y0 = max(by - BBOX_PAD, 0)
    x1 = min(bx + bw + BBOX_PAD, image_width)
    y1 = min(by + bh + BBOX_PAD, image_height)
    return PatchSpec(instance.instance_id, (x0, y0, x1 - x0, y1 - y0), resize=True)


def _bilinear_resize(pixels: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    src = pixels.astype(np.float64)
    h, w = src.shape
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y1 = np.clip(y0 + 1, 0, h - 1)
    x1 = np.clip(x0 + 1, 0, w - 1)
    fy = np.clip(ys - y0, 0.0, 1.0)[:, None]
    fx = np.clip(xs - x0, 0.0, 1.0)[None, :]
    g00 = src[np.ix_(y0, x0)]
    g01 = src[np.ix_(y0, x1)]
    g10 = src[np.ix_(y1, x0)]
    g11 = src[np.ix_(y1, x1)]
    out = g00 * (1 - fy) * (1 - fx) + g01 * (1 - fy) * fx + g10 * fy * (1 - fx) + g11 * fy * fx
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


def extract_patch(image: Raster, spec: PatchSpec) -> Raster:
    x, y, w, h = spec.window
    crop = image.pixels[y : y + h, x : x + w]
    if spec.resize:
        return Raster(_bilinear_resize(crop, spec.target, spec.target))
    return Raster(crop)


# --- classification -------------------------------------------------------------------

def classify_heuristic(instance: DefectInstance, threshold: float = 0.6) -> str:
    """Geometry-only class: round instances are porosity, elongated ones
    lack of fusion. Instances under 4 px have unstable circularity and stay
    unlabeled."""
    if instance.area < MIN_CLASSIFIABLE_AREA:
        return CLASS_UNLABELED
    return CLASS_POROSITY if instance.circularity >= threshold else CLASS_LOF


def apply_labels(
    instances_by_image: dict[str, list[DefectInstance]], labels_path: str
) -> dict[str, list[DefectInstance]]:
    """Overwrite instance labels from a (image_id, instance_id, class) CSV.

    Instances missing from the file keep their current label.
    """
    out = {image_id: list(instances) for image_id, instances in instances_by_image.items()}
    with open(labels_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header and header[:3] != ["image_id", "instance_id", "class"]:
            raise UnknownClassError(f"{labels_path}: expected header image_id,instance_id,class")
        for row in reader:
            if not row:
                continue
            image_id, instance_id, label = row[0], int(row[1]), row[2]
            if label not in VALID_CLASSES:
                raise UnknownClassError(f"unknown class {label!r} for {image_id}/{instance_id}")
            if image_id not in out:
                raise UnknownInstanceError(f"labels reference unknown image {image_id}")
            match = [k for k, inst in enumerate(out[image_id]) if inst.instance_id == instance_id]
            if not match:
                raise UnknownInstanceError(
                    f"labels reference unknown instance {image_id}/{instance_id}"
                )
            out[image_id][match[0]] = replace(out[image_id][match[0]], label=label)
    return out


# --- statistics ------------------------------------------------------------------------

def defect_stats(
    image_id: str, instances: list[DefectInstance], image_width: int, image_height: int
) -> ImageDefectStats:
    """Count, area fraction, and class-count fractions for one image."""
    total_area = sum(inst.area for inst in instances)
    classified = [inst for inst in instances if inst.label != CLASS_UNLABELED]
    porosity = sum(1 for inst in classified if inst.label == CLASS_POROSITY)
    return ImageDefectStats(
        image_id=image_id,
        defect_count=len(instances),
        area_fraction=total_area / (image_width * image_height),
        porosity_fraction=porosity / len(classified) if classified else 0.0,
        lof_fraction=(len(classified) - porosity) / len(classified) if classified else 0.0,
    )


def aggregate_by_condition(
    stats: list[ImageDefectStats], conditions: dict[str, ProcessCondition]
) -> list[ConditionAggregate]:
    """Mean per-image metrics per (power, speed) cell, ordered by power desc,
    speed asc (the process-map layout)."""
    groups: dict[tuple[float, float], list[ImageDefectStats]] = {}
    for s in stats:
        if s.image_id not in conditions:
            raise UnmappedImageError(f"no process condition for image {s.image_id}")
        cond = conditions[s.image_id]
        groups.setdefault((cond.power_w, cond.speed_mm_s), []).append(s)
    out = []
    for power, speed in sorted(groups, key=lambda c: (-c[0], c[1])):
        rows = groups[(power, speed)]
        n = len(rows)
        out.append(
            ConditionAggregate(
                condition=ProcessCondition(power, speed),
                image_count=n,
                mean_defect_count=sum(r.defect_count for r in rows) / n,
                mean_area_fraction=sum(r.area_fraction for r in rows) / n,
                mean_porosity_fraction=sum(r.porosity_fraction for r in rows) / n,
                mean_lof_fraction=sum(r.lof_fraction for r in rows) / n,
            )
        )
    return out


# --- process map -------------------------------------------------------------------------

_CELL_W = 150
_CELL_H = 110
_MARGIN = 70


def emit_process_map(aggregates: list[ConditionAggregate]) -> tuple[str, str]:
    """Deterministic SVG grid (power rows x speed columns) plus a CSV twin.

    Each cell: a stacked class-fraction bar (lack of fusion blue, porosity
    orange, porosity fraction printed in white) and a red area-fraction bar
    with the mean defect count in brackets.
    """
    if not aggregates:
        raise EmptyAggregatesError("no process conditions to plot")
    powers = sorted({a.condition.power_w for a in aggregates}, reverse=True)
    speeds = sorted({a.condition.speed_mm_s for a in aggregates})
    cell_of = {(a.condition.power_w, a.condition.speed_mm_s): a for a in aggregates}
    max_area = max(a.mean_area_fraction for a in aggregates) or 1.0

    width = _MARGIN + len(speeds) * _CELL_W + 20
    height = _MARGIN + len(powers) * _CELL_H + 20
    svg = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{_MARGIN + len(speeds) * _CELL_W / 2:.1f}" y="20" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13">scan speed (mm/s)</text>',
        f'<text x="16" y="{_MARGIN + len(powers) * _CELL_H / 2:.1f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13" '
        f'transform="rotate(-90 16 {_MARGIN + len(powers) * _CELL_H / 2:.1f})">laser power (W)</text>',
    ]
    for col, speed in enumerate(speeds):
        x = _MARGIN + col * _CELL_W + _CELL_W / 2
        svg.append(
            f'<text x="{x:.1f}" y="{_MARGIN - 12}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{_num(speed)}</text>'
        )
    for row, power in enumerate(powers):
        y = _MARGIN + row * _CELL_H + _CELL_H / 2
        svg.append(
            f'<text x="{_MARGIN - 10}" y="{y:.1f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{_num(power)}</text>'
        )
    bar_h = 16
    bar_w = _CELL_W - 40
    for row, power in enumerate(powers):
        for col, speed in enumerate(speeds):
            x0 = _MARGIN + col * _CELL_W
            y0 = _MARGIN + row * _CELL_H
            svg.append(
                f'<rect x="{x0}" y="{y0}" width="{_CELL_W}" height="{_CELL_H}" '
                f'fill="none" stroke="#999999"/>'
            )
            agg = cell_of.get((power, speed))
            if agg is None:
                continue
            bx = x0 + 20
            by = y0 + 22
            lof_w = bar_w * agg.mean_lof_fraction
            por_w = bar_w * agg.mean_porosity_fraction
            svg.append(
                f'<rect x="{bx:.2f}" y="{by}" width="{lof_w:.2f}" height="{bar_h}" fill="#1f77b4"/>'
            )
            svg.append(
                f'<rect x="{bx + lof_w:.2f}" y="{by}" width="{por_w:.2f}" height="{bar_h}" '
                f'fill="#ff7f0e"/>'
            )
            svg.append(
                f'<text x="{bx + bar_w / 2:.1f}" y="{by + 12}" text-anchor="middle" '
                f'font-family="sans-serif" font-size="10" fill="white">'
                f"{agg.mean_porosity_fraction:.2f}</text>"
            )
            area_w = bar_w * (agg.mean_area_fraction / max_area)
            ay = by + bar_h + 14
            svg.append(
                f'<rect x="{bx:.2f}" y="{ay}" width="{area_w:.2f}" height="{bar_h}" fill="#d62728"/>'
            )
            svg.append(
                f'<text x="{bx:.1f}" y="{ay + bar_h + 14}" font-family="sans-serif" '
                f'font-size="10">{agg.mean_area_fraction * 100:.2f}% '
                f"[{_num(agg.mean_defect_count)}]</text>"
            )
    svg.append("</svg>")

    lines = [
        "power_w,speed_mm_s,image_count,mean_defect_count,mean_area_fraction,"
        "mean_porosity_fraction,mean_lof_fraction"
    ]
    for a in aggregates:
        lines.append(
            f"{_num(a.condition.power_w)},{_num(a.condition.speed_mm_s)},{a.image_count},"
            f"{_num(a.mean_defect_count)},{_num(a.mean_area_fraction)},"
            f"{_num(a.mean_porosity_fraction)},{_num(a.mean_lof_fraction)}"
        )
    return "\n".join(svg) + "\n", "\n".join(lines) + "\n"


def _num(v: float) -> str:
    return repr(int(v)) if float(v).is_integer() else repr(float(v))


# --- persistence ---------------------------------------------------------------------------

def save_instances_csv(instances_by_image: dict[str, list[DefectInstance]], path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "image_id",
                "instance_id",
                "area",
                "bbox_x",
                "bbox_y",
                "bbox_w",
                "bbox_h",
                "centroid_x",
                "centroid_y",
                "perimeter",
                "circularity",
                "class",
            ]
        )
        for image_id in sorted(instances_by_image):
            for inst in instances_by_image[image_id]:
                writer.writerow(
                    [
                        image_id,
                        inst.instance_id,
                        inst.area,
                        *inst.bbox,
                        repr(inst.centroid[0]),
                        repr(inst.centroid[1]),
                        repr(inst.perimeter),
                        repr(inst.circularity),
                        inst.label,
                    ]
                )


def load_instances_csv(path: str) -> dict[str, list[DefectInstance]]:
    out: dict[str, list[DefectInstance]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            if not row:
                continue
            inst = DefectInstance(
                instance_id=int(row[1]),
                area=int(row[2]),
                bbox=(int(row[3]), int(row[4]), int(row[5]), int(row[6])),
                centroid=(float(row[7]), float(row[8])),
                perimeter=float(row[9]),
                circularity=float(row[10]),
                label=row[11],
            )
            out.setdefault(row[0], []).append(inst)
    return out


def save_condition_csv(conditions: dict[str, ProcessCondition], path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_id", "power_w", "speed_mm_s"])
        for image_id in sorted(conditions):
            cond = conditions[image_id]
            writer.writerow([image_id, _num(cond.power_w), _num(cond.speed_mm_s)])


def load_condition_csv(path: str) -> dict[str, ProcessCondition]:
    out: dict[str, ProcessCondition] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            if row:
                out[row[0]] = ProcessCondition(float(row[1]), float(row[2]))
    return out
