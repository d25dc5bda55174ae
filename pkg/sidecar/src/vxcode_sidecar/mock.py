"""Deterministic additive mock detector for integration testing.

Scores a masked image by summing per-patch weights over the patches that
survived masking, emitting one proposal at a fixed box. Patch survival is
judged after this detector's own preprocessing (uint8 -> float in [0, 1]) by
exact comparison with the preprocessed original, and the weight sum uses
exactly-rounded summation, so a client-side implementation of the same game
produces bit-identical probabilities.
"""

from __future__ import annotations

import math

import numpy as np

from .server import patch_rect

PROB_FLOOR = 1e-6


def make_mock(weights: dict[int, float], box, target_class: int, classes: int):
    """Build a registry entry realizing an additive patch game."""
    box = [float(v) for v in box]
    if not 0 <= target_class < classes:
        raise ValueError("target_class out of range")
    if any(w < 0 for w in weights.values()):
        raise ValueError("weights must be nonnegative")

    def run(masked: np.ndarray, original: np.ndarray, d_h: int, d_w: int):
        height, width = original.shape[:2]
        masked_f = masked.astype(np.float64) / 255.0
        original_f = original.astype(np.float64) / 255.0
        present = []
        for i in range(d_h * d_w):
            x1, y1, x2, y2 = patch_rect(i, d_h, d_w, width, height)
            if np.array_equal(masked_f[y1:y2, x1:x2], original_f[y1:y2, x1:x2]):
                present.append(i)
        score = min(1.0, max(0.0, math.fsum(weights.get(i, 0.0) for i in present)))
        probs = [PROB_FLOOR] * classes
        probs[target_class] = score
        return [{"box": box, "probs": probs}]

    return run
