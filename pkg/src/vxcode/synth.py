"""Seeded synthetic scenes and detector setups for benchmarks and tests.

Scene pixels are strictly positive so that zero-masking never collides with
natural image content, keeping the synthetic detectors exact set functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import BBox, PatchGrid
from .rng import SplitMix64


def scene_image(width: int, height: int, seed: int, channels: int = 3) -> np.ndarray:
    """Random uint8 image with values in [30, 255] (never zero)."""
    if width < 1 or height < 1 or channels < 1:
        raise ValueError("scene dimensions must be positive")
    rng = SplitMix64(seed)
    flat = np.empty(height * width * channels, dtype=np.uint8)
    for i in range(flat.size):
        flat[i] = rng.randint(30, 255)
    return flat.reshape(height, width, channels)


def spread_weights(indices, total: float, rng: SplitMix64) -> dict[int, float]:
    """Random positive weights over ``indices`` normalized to sum to ``total``."""
    indices = list(indices)
    raw = [rng.uniform(0.5, 1.0) for _ in indices]
    denom = math.fsum(raw)
    return {idx: total * r / denom for idx, r in zip(indices, raw)}


@dataclass(frozen=True)
class BiasScenario:
    """A detector that needs both the instance and an off-box marker cue.

    The instance occupies a block of patches inside the box; one marker patch
    sits in the image's upper-right corner outside the box. Instance weights
    sum to ``instance_total`` and the marker contributes ``marker_gain``, so
    with the default sizing neither region alone reaches full confidence.
    """

    image: np.ndarray
    grid: PatchGrid
    box: BBox
    instance_weights: dict[int, float]
    marker_patch: int
    marker_gain: float
    target_class: int
    num_classes: int


def bias_scenario(seed: int, marker_gain: float = 0.5) -> BiasScenario:
    """Build the standard marker-bias benchmark scene.

    128x128 image on an 8x8 grid; the box covers the central 3x3 patch block
    (9 instance patches) and the marker is the top-right patch.
    """
    grid = PatchGrid(image_w=128, image_h=128, d_h=8, d_w=8)
    box = BBox(48.0, 48.0, 96.0, 96.0)
    instance_patches = [row * grid.d_w + col for row in (3, 4, 5) for col in (3, 4, 5)]
    marker_patch = grid.d_w - 1  # top-right corner, outside the box
    rng = SplitMix64(seed)
    weights = spread_weights(instance_patches, total=0.5, rng=rng)
    image = scene_image(grid.image_w, grid.image_h, seed=rng.next_u64())
    return BiasScenario(
        image=image,
        grid=grid,
        box=box,
        instance_weights=weights,
        marker_patch=marker_patch,
        marker_gain=marker_gain,
        target_class=0,
        num_classes=3,
    )
