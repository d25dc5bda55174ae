"""Detection-similarity reward functions mapping proposals to a scalar in [0, 1].

The full reward scores each proposal by IoU with the target box times cosine
similarity of the class-probability vectors and takes the maximum. Variants
keep only the box term, only the class probability, or blend the two terms
with an exponent weight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .detector import TargetDetection
from .geometry import BBox, iou

VARIANTS = ("full", "box_only", "class_only", "alpha_weighted")


def cosine(p, q) -> float:
    """Cosine similarity of two nonnegative vectors; 0.0 when either is zero."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 1:
        raise ValueError(f"vector shapes differ: {p.shape} vs {q.shape}")
    np_norm = float(np.linalg.norm(p))
    nq_norm = float(np.linalg.norm(q))
    if np_norm == 0.0 or nq_norm == 0.0:
        return 0.0
    return float(np.dot(p, q)) / (np_norm * nq_norm)


def reward_full(proposals, target: TargetDetection) -> float:
    """max over proposals of IoU(target.box, box) * cosine(target.probs, probs)."""
    best = 0.0
    for prop in proposals:
        term = iou(target.box, prop.box) * cosine(target.probs, prop.probs)
        if term > best:
            best = term
    return best


def reward_box(proposals, target_box: BBox) -> float:
    """max over proposals of IoU with the target box; 0.0 when empty."""
    best = 0.0
    for prop in proposals:
        term = iou(target_box, prop.box)
        if term > best:
            best = term
    return best


def reward_class(proposals, class_index: int, iou_gate: float | None = None,
                 target_box: BBox | None = None) -> float:
    """max over proposals of the probability of one class; 0.0 when empty.

    ``iou_gate`` optionally restricts the max to proposals whose box overlaps
    the target box with at least the given IoU (a stricter matching variant,
    off by default).
    """
    if iou_gate is not None and target_box is None:
        raise ValueError("iou_gate requires a target_box")
    best = 0.0
    for prop in proposals:
        if class_index >= prop.probs.size:
            raise IndexError(f"class {class_index} out of range for {prop.probs.size} classes")
        if iou_gate is not None and iou(target_box, prop.box) < iou_gate:
            continue
        term = float(prop.probs[class_index])
        if term > best:
            best = term
    return best


def reward_alpha(proposals, target: TargetDetection, alpha: float) -> float:
    """max over proposals of IoU**(1-alpha) * cosine**alpha, with 0**0 == 1."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    best = 0.0
    for prop in proposals:
        term = iou(target.box, prop.box) ** (1.0 - alpha) * cosine(target.probs, prop.probs) ** alpha
        if term > best:
            best = term
    return best


@dataclass(frozen=True)
class RewardSpec:
    """Selects a reward variant and carries its parameters.

    ``target`` holds the detection being explained (box + class probabilities);
    ``alpha`` is required exactly for the alpha_weighted variant and
    ``class_index`` for class_only.
    """

    variant: str
    target: TargetDetection | None = None
    alpha: float | None = None
    class_index: int | None = None
    iou_gate: float | None = None

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown reward variant {self.variant!r}")
        if (self.alpha is not None) != (self.variant == "alpha_weighted"):
            raise ValueError("alpha must be given exactly for the alpha_weighted variant")
        if self.alpha is not None and not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.variant == "class_only":
            if self.class_index is None:
                raise ValueError("class_only requires class_index")
        if self.variant in ("full", "box_only", "alpha_weighted") and self.target is None:
            raise ValueError(f"{self.variant} requires a target detection")
        if self.iou_gate is not None and self.variant != "class_only":
            raise ValueError("iou_gate applies only to class_only")


def evaluate_reward(proposals, spec: RewardSpec) -> float:
    """Apply a reward spec to a proposal sequence."""
    if spec.variant == "full":
        return reward_full(proposals, spec.target)
    if spec.variant == "box_only":
        return reward_box(proposals, spec.target.box)
    if spec.variant == "class_only":
        target_box = spec.target.box if spec.target is not None else None
        return reward_class(proposals, spec.class_index, spec.iou_gate, target_box)
    return reward_alpha(proposals, spec.target, spec.alpha)
