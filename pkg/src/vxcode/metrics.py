"""Faithfulness and localization metrics for patch explanations.

Perturbation curves score the detection similarity as patches are added to an
empty image (insertion) or removed from the original (deletion) in a given
importance order; the area under the curve summarizes faithfulness. The
pointing game and its energy variant measure whether the heat map localizes
the ground-truth region.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .detector import DetectorHandle, mask_apply
from .geometry import BBox, PatchGrid
from .reward import RewardSpec, evaluate_reward

MODE_INSERTION = "insertion"
MODE_DELETION = "deletion"


@dataclass(frozen=True)
class Curve:
    """Similarity scores over the fraction of patches perturbed.

    The first point (fraction 0) is the baseline: empty image for insertion,
    full image for deletion.
    """

    fractions: tuple[float, ...]
    scores: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.fractions) != len(self.scores):
            raise ValueError("fractions and scores lengths differ")
        if len(self.fractions) < 1:
            raise ValueError("curve is empty")
        if any(b <= a for a, b in zip(self.fractions, self.fractions[1:])):
            raise ValueError("fractions must be strictly increasing")

    def to_csv(self) -> str:
        lines = ["fraction,score"]
        lines += [f"{f!r},{s!r}" for f, s in zip(self.fractions, self.scores)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "Curve":
        rows = [line for line in text.splitlines() if line.strip()]
        if not rows or rows[0] != "fraction,score":
            raise ValueError("not a curve CSV")
        fracs, scores = [], []
        for row in rows[1:]:
            f, s = row.split(",")
            fracs.append(float(f))
            scores.append(float(s))
        return cls(tuple(fracs), tuple(scores))


def perturbation_curve(detector: DetectorHandle, image: np.ndarray, grid: PatchGrid,
                       order, mode: str, reward: RewardSpec) -> Curve:
    """Score every prefix of a patch order under progressive perturbation.

    ``order`` must be a permutation of all grid patches, most important
    first. Insertion reveals patches one at a time starting from the empty
    image; deletion removes them starting from the original. Each prefix
    costs one detector call; the baseline point at fraction 0 is included.
    """
    order = tuple(int(i) for i in order)
    if sorted(order) != list(range(grid.n)):
        raise ValueError("order must be a permutation of all grid patches")
    if mode not in (MODE_INSERTION, MODE_DELETION):
        raise ValueError(f"unknown mode {mode!r}")

    n = grid.n
    insertion = mode == MODE_INSERTION
    all_patches = set(range(n))

    def score(keep) -> float:
        return evaluate_reward(detector.detect(mask_apply(image, grid, keep)), reward)

    fractions = [0.0]
    scores = [score([] if insertion else sorted(all_patches))]
    for k in range(1, n + 1):
        prefix = set(order[:k])
        keep = sorted(prefix) if insertion else sorted(all_patches - prefix)
        fractions.append(k / n)
        scores.append(score(keep))
    return Curve(tuple(fractions), tuple(scores))


def auc(curve: Curve) -> float:
    """Trapezoidal area under the curve over the fraction axis."""
    if len(curve.fractions) < 2:
        raise ValueError("AUC needs at least two curve points")
    total = 0.0
    for (x0, y0), (x1, y1) in zip(
        zip(curve.fractions, curve.scores), zip(curve.fractions[1:], curve.scores[1:])
    ):
        total += (x1 - x0) * (y0 + y1) / 2.0
    return total


def overall(insertion_auc: float, deletion_auc: float) -> float:
    """Combined faithfulness score: insertion AUC minus deletion AUC."""
    return insertion_auc - deletion_auc


def heatmap_rank_order(heat: np.ndarray, grid: PatchGrid) -> tuple[int, ...]:
    """Patch order by descending importance, ties toward the lower index.

    Heat maps are piecewise-constant per patch, so the importance is read at
    each patch's top-left pixel.
    """
    heat = np.asarray(heat, dtype=np.float64)
    if heat.shape != (grid.image_h, grid.image_w):
        raise ValueError("heat map dimensions do not match the grid")
    values = []
    for i in range(grid.n):
        x1, y1, _, _ = grid.patch_rect(i)
        values.append(float(heat[y1, x1]))
    return tuple(sorted(range(grid.n), key=lambda i: (-values[i], i)))


def region_mask(region, height: int, width: int) -> np.ndarray:
    """Rasterize a ground-truth region (box or boolean mask) to (h, w) bools.

    For boxes, a pixel belongs to the region when its center lies inside.
    """
    if isinstance(region, BBox):
        ys = np.arange(height) + 0.5
        xs = np.arange(width) + 0.5
        inside_y = (ys >= region.y1) & (ys <= region.y2)
        inside_x = (xs >= region.x1) & (xs <= region.x2)
        return inside_y[:, None] & inside_x[None, :]
    mask = np.asarray(region)
    if mask.shape != (height, width):
        raise ValueError("ground-truth mask dimensions do not match")
    return mask.astype(bool)


def pointing_game(heat: np.ndarray, region) -> bool:
    """True when the heat map's global maximum lies inside the region.

    Ties resolve to the first maximum in row-major order.
    """
    heat = np.asarray(heat, dtype=np.float64)
    if heat.ndim != 2:
        raise ValueError("heat map must be 2-D")
    mask = region_mask(region, *heat.shape)
    y, x = np.unravel_index(int(np.argmax(heat)), heat.shape)
    return bool(mask[y, x])


def energy_pointing_game(heat: np.ndarray, region) -> float:
    """Fraction of total heat-map mass inside the region; 0.0 for an empty map."""
    heat = np.asarray(heat, dtype=np.float64)
    if heat.ndim != 2:
        raise ValueError("heat map must be 2-D")
    total = float(heat.sum())
    if total == 0.0:
        return 0.0
    mask = region_mask(region, *heat.shape)
    return float(heat[mask].sum()) / total
