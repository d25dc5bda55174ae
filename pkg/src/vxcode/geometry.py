"""Axis-aligned boxes, IoU, and the adaptive patch grid.

A grid tiles an image into ``d_h`` x ``d_w`` rectangular patches indexed
row-major from the top-left. Division counts adapt to the ratio of the target
box area to the image area, and for small targets a candidate filter keeps
only the patches whose centers lie near the box.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

# Division-count bands over the box-to-image area ratio: the finest grid for
# tiny targets, the coarsest for dominant ones. Band edges are inclusive.
FINE_DIVISIONS = 24
MEDIUM_DIVISIONS = 16
COARSE_DIVISIONS = 8
FINE_RATIO = 0.01
MEDIUM_RATIO = 0.2

# Candidate filtering applies only below this box-area ratio; the search
# window extends one fifth of the image size beyond each box edge.
RESTRICTION_RATIO = 0.1
CANDIDATE_MARGIN = 1.0 / 5.0


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box with top-left corner (x1, y1), bottom-right (x2, y2)."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self) -> None:
        for v in (self.x1, self.y1, self.x2, self.y2):
            if not math.isfinite(v):
                raise ValueError(f"box coordinates must be finite, got {self}")
        if self.x2 < self.x1 or self.y2 < self.y1:
            raise ValueError(f"box corners out of order: {self}")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)


def iou(a: BBox, b: BBox) -> float:
    """Intersection-over-union of two boxes; 0.0 when the union is empty.

    Degenerate (zero-area) boxes never overlap anything, so they score 0
    against every box rather than dividing by zero.
    """
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    inter = max(iw, 0.0) * max(ih, 0.0)
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


@dataclass(frozen=True)
class PatchGrid:
    """Partition of an image into d_h x d_w patches, indexed row-major.

    When the image dimensions are not divisible by the division counts, the
    last row/column of patches absorbs the remainder pixels so the rectangles
    still partition the image exactly.
    """

    image_w: int
    image_h: int
    d_h: int
    d_w: int

    def __post_init__(self) -> None:
        if self.image_w <= 0 or self.image_h <= 0:
            raise ValueError("image dimensions must be positive")
        if self.d_h < 1 or self.d_w < 1:
            raise ValueError("division counts must be at least 1")
        if self.d_w > self.image_w or self.d_h > self.image_h:
            raise ValueError("more divisions than pixels")

    @property
    def n(self) -> int:
        """Number of patches."""
        return self.d_h * self.d_w

    def patch_rect(self, index: int) -> tuple[int, int, int, int]:
        """Half-open pixel rectangle (x1, y1, x2, y2) of one patch."""
        if not 0 <= index < self.n:
            raise IndexError(f"patch index {index} out of range for {self.n} patches")
        row, col = divmod(index, self.d_w)
        pw = self.image_w // self.d_w
        ph = self.image_h // self.d_h
        x1 = col * pw
        y1 = row * ph
        x2 = self.image_w if col == self.d_w - 1 else x1 + pw
        y2 = self.image_h if row == self.d_h - 1 else y1 + ph
        return (x1, y1, x2, y2)

    def patch_center(self, index: int) -> tuple[float, float]:
        """Continuous midpoint of a patch rectangle."""
        x1, y1, x2, y2 = self.patch_rect(index)
        return ((x1 + x2) / 2.0, (y1 + y2) / 2.0)

    def labels(self) -> np.ndarray:
        """(h, w) int array mapping every pixel to its patch index."""
        return _grid_labels(self)


@functools.lru_cache(maxsize=128)
def _grid_labels(grid: PatchGrid) -> np.ndarray:
    out = np.empty((grid.image_h, grid.image_w), dtype=np.int32)
    for i in range(grid.n):
        x1, y1, x2, y2 = grid.patch_rect(i)
        out[y1:y2, x1:x2] = i
    out.setflags(write=False)
    return out


def box_area_ratio(image_w: int, image_h: int, box: BBox) -> float:
    """Ratio of box area to image area."""
    if image_w <= 0 or image_h <= 0:
        raise ValueError("image dimensions must be positive")
    return box.area / (image_w * image_h)


def divisions_for_ratio(ratio: float) -> int:
    """Division count per axis as a function of the box-to-image area ratio."""
    if ratio <= FINE_RATIO:
        return FINE_DIVISIONS
    if ratio <= MEDIUM_RATIO:
        return MEDIUM_DIVISIONS
    return COARSE_DIVISIONS


def make_grid(image_w: int, image_h: int, target_box: BBox) -> PatchGrid:
    """Build the grid for an image, sized by the target box area ratio."""
    if image_w <= 0 or image_h <= 0:
        raise ValueError("image dimensions must be positive")
    _check_box_within(image_w, image_h, target_box)
    d = divisions_for_ratio(box_area_ratio(image_w, image_h, target_box))
    return PatchGrid(image_w=image_w, image_h=image_h, d_h=d, d_w=d)


def candidate_patches(grid: PatchGrid, target_box: BBox) -> tuple[int, ...]:
    """Patches worth scoring for a target box, in ascending index order.

    Large targets (area ratio above RESTRICTION_RATIO) keep every patch.
    Smaller ones keep only patches whose centers fall within the box extended
    by CANDIDATE_MARGIN of the image size on each side.
    """
    _check_box_within(grid.image_w, grid.image_h, target_box)
    ratio = box_area_ratio(grid.image_w, grid.image_h, target_box)
    if ratio > RESTRICTION_RATIO:
        return tuple(range(grid.n))
    mx = grid.image_w * CANDIDATE_MARGIN
    my = grid.image_h * CANDIDATE_MARGIN
    lo_x, hi_x = target_box.x1 - mx, target_box.x2 + mx
    lo_y, hi_y = target_box.y1 - my, target_box.y2 + my
    kept = []
    for i in range(grid.n):
        cx, cy = grid.patch_center(i)
        if lo_x <= cx <= hi_x and lo_y <= cy <= hi_y:
            kept.append(i)
    return tuple(kept)


def _check_box_within(image_w: int, image_h: int, box: BBox) -> None:
    if box.x1 < 0 or box.y1 < 0 or box.x2 > image_w or box.y2 > image_h:
        raise ValueError(f"box {box.as_tuple()} extends outside {image_w}x{image_h} image")
