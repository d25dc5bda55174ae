"""Shared helpers: tiny one-pixel-per-patch scenes that realize arbitrary
cooperative games as real detectors, so engine runs exercise the full
masking/detection path cheaply."""

import numpy as np

from vxcode.detector import AdditiveDetector, TabularDetector, to_float_image
from vxcode.geometry import BBox, PatchGrid
from vxcode.reward import RewardSpec
from vxcode.synth import scene_image


def line_grid(n):
    """n patches of one pixel each, laid out on an n x 1 image."""
    return PatchGrid(image_w=n, image_h=1, d_h=1, d_w=n)


def class_reward():
    return RewardSpec("class_only", class_index=0)


def game_setup(values, n, seed=12345):
    """Tabular detector realizing the subset-value table ``values``."""
    grid = line_grid(n)
    image = to_float_image(scene_image(n, 1, seed=seed))
    detector = TabularDetector(
        np.asarray(values, dtype=np.float64), BBox(0, 0, n, 1), 0, 2, image, grid
    )
    return detector, image, grid


def additive_setup(weights, n, seed=12345):
    """Additive detector with the given index->weight mapping over n patches."""
    grid = line_grid(n)
    image = to_float_image(scene_image(n, 1, seed=seed))
    detector = AdditiveDetector(weights, BBox(0, 0, n, 1), 0, 2, image, grid)
    return detector, image, grid
