"""Black-box detector abstraction, zero-masking, and synthetic test detectors.

Images are float64 arrays of shape (h, w, c) with values in [0, 1]. Masking
replaces every pixel outside the kept patches with exactly 0.0, which is the
perturbation convention used throughout the package.

The synthetic detectors decide whether a patch "survived" masking by exact
pixel comparison against a stored reference image, which turns them into pure
set functions of the kept patch set. That property is what makes them usable
as ground-truth games for the exact oracle and the greedy engine tests.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

import numpy as np
from PIL import Image as PILImage

from .geometry import BBox, PatchGrid

# Probability assigned to non-target classes by synthetic detectors, so class
# probability vectors are never all-zero and cosine similarity stays defined.
PROB_FLOOR = 1e-6

MAX_TABULAR_PLAYERS = 20


@dataclass
class Proposal:
    """One detector output: a bounding box plus a per-class probability vector."""

    box: BBox
    probs: np.ndarray

    def __post_init__(self) -> None:
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.ndim != 1 or self.probs.size < 1:
            raise ValueError("probs must be a non-empty 1-D vector")
        if not np.all(np.isfinite(self.probs)) or np.any(self.probs < 0):
            raise ValueError("probs must be finite and nonnegative")


# The explanation target has the same structure as a proposal.
TargetDetection = Proposal


def check_image(image: np.ndarray) -> np.ndarray:
    """Validate an (h, w, c) float image in [0, 1] and return it as float64."""
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[0] < 1 or arr.shape[1] < 1 or arr.shape[2] < 1:
        raise ValueError(f"expected (h, w, c) image, got shape {arr.shape}")
    arr = arr.astype(np.float64, copy=False)
    if not np.all(np.isfinite(arr)):
        raise ValueError("image contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("image values must lie in [0, 1]")
    return arr


def to_float_image(raw: np.ndarray) -> np.ndarray:
    """Convert a uint8 (h, w, c) image to float64 in [0, 1]."""
    arr = np.asarray(raw)
    if arr.dtype != np.uint8:
        raise ValueError("raw images must be uint8")
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr.astype(np.float64) / 255.0


def load_png(path) -> np.ndarray:
    """Load a PNG as a uint8 (h, w, c) array (grayscale gets a channel axis)."""
    with PILImage.open(path) as img:
        if img.mode not in ("L", "RGB"):
            img = img.convert("RGB")
        arr = np.asarray(img, dtype=np.uint8)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr


def save_png(raw: np.ndarray, path) -> None:
    """Write a uint8 (h, w, 1|3) array as a PNG file."""
    arr = np.asarray(raw, dtype=np.uint8)
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise ValueError("expected (h, w, 1) or (h, w, 3) uint8 array")
    mode = "L" if arr.shape[2] == 1 else "RGB"
    PILImage.fromarray(arr[:, :, 0] if mode == "L" else arr, mode=mode).save(path, format="PNG")


def _check_grid_match(image: np.ndarray, grid: PatchGrid) -> None:
    h, w = image.shape[:2]
    if w != grid.image_w or h != grid.image_h:
        raise ValueError(
            f"grid is for {grid.image_w}x{grid.image_h} but image is {w}x{h}"
        )


def mask_apply(image: np.ndarray, grid: PatchGrid, keep) -> np.ndarray:
    """Zero out every pixel outside the kept patches.

    Pixels inside patches listed in ``keep`` are copied unchanged; all other
    pixels become exactly 0.0.
    """
    image = check_image(image)
    _check_grid_match(image, grid)
    member = np.zeros(grid.n, dtype=bool)
    keep_idx = np.fromiter(keep, dtype=np.int64) if not isinstance(keep, np.ndarray) else keep
    if keep_idx.size:
        if keep_idx.min() < 0 or keep_idx.max() >= grid.n:
            raise IndexError("keep contains out-of-range patch indices")
        member[keep_idx] = True
    pixel_keep = member[grid.labels()]
    return np.where(pixel_keep[:, :, None], image, 0.0)


def present_patches(image: np.ndarray, reference: np.ndarray, grid: PatchGrid) -> np.ndarray:
    """Boolean (n,) array: patch i is present iff it is pixel-identical to the reference."""
    if image.shape != reference.shape:
        raise ValueError("image and reference shapes differ")
    mismatch = (image != reference).any(axis=2)
    counts = np.bincount(grid.labels().ravel(), weights=mismatch.ravel(), minlength=grid.n)
    return counts == 0


def zero_patches(image: np.ndarray, grid: PatchGrid) -> np.ndarray:
    """Boolean (n,) array: patch i holds only exactly-zero pixels."""
    nonzero = (image != 0.0).any(axis=2)
    counts = np.bincount(grid.labels().ravel(), weights=nonzero.ravel(), minlength=grid.n)
    return counts == 0


class DetectorHandle:
    """Base class for black-box detectors with call instrumentation.

    Subclasses implement ``_detect``. Every ``detect`` call increments an
    atomic counter, which the engine and the budget tests rely on. Detectors
    must be deterministic: identical images yield identical proposals.
    ``thread_safe`` declares whether concurrent ``detect`` calls are allowed;
    callers must serialize access when it is False.
    """

    thread_safe = True

    def __init__(self) -> None:
        self._calls = 0
        self._calls_lock = threading.Lock()

    @property
    def calls(self) -> int:
        return self._calls

    def detect(self, image: np.ndarray) -> list[Proposal]:
        with self._calls_lock:
            self._calls += 1
        return self._detect(image)

    def _detect(self, image: np.ndarray) -> list[Proposal]:
        raise NotImplementedError


class SyntheticPatchDetector(DetectorHandle):
    """Detector whose score depends only on which patches survived masking.

    Emits a single proposal at a fixed box whose target-class probability is
    ``_score(present)``, with PROB_FLOOR on every other class. Presence is
    judged by exact pixel equality with the reference image.
    """

    def __init__(
        self,
        reference: np.ndarray,
        grid: PatchGrid,
        box: BBox,
        target_class: int,
        num_classes: int,
    ) -> None:
        super().__init__()
        self.reference = check_image(reference)
        _check_grid_match(self.reference, grid)
        if not 0 <= target_class < num_classes:
            raise ValueError("target_class out of range")
        self.grid = grid
        self.box = box
        self.target_class = target_class
        self.num_classes = num_classes

    def _score(self, present: np.ndarray) -> float:
        raise NotImplementedError

    def _detect(self, image: np.ndarray) -> list[Proposal]:
        image = check_image(image)
        _check_grid_match(image, self.grid)
        present = present_patches(image, self.reference, self.grid)
        score = min(1.0, max(0.0, self._score(present)))
        probs = np.full(self.num_classes, PROB_FLOOR, dtype=np.float64)
        probs[self.target_class] = score
        return [Proposal(box=self.box, probs=probs)]


class AdditiveDetector(SyntheticPatchDetector):
    """Score is the clamped sum of per-patch weights over present patches."""

    def __init__(
        self,
        weights: dict[int, float],
        box: BBox,
        target_class: int,
        num_classes: int,
        reference: np.ndarray,
        grid: PatchGrid,
    ) -> None:
        super().__init__(reference, grid, box, target_class, num_classes)
        table = np.zeros(grid.n, dtype=np.float64)
        for idx, w in weights.items():
            if not 0 <= idx < grid.n:
                raise ValueError(f"weight index {idx} outside grid")
            if w < 0:
                raise ValueError("weights must be nonnegative")
            table[idx] = w
        self.weights = table

    def _score(self, present: np.ndarray) -> float:
        # fsum keeps the sum exactly rounded, so independent implementations
        # of the same game agree bit-for-bit regardless of summation order.
        return math.fsum(self.weights[np.flatnonzero(present)])


class BiasedDetector(SyntheticPatchDetector):
    """Additive detector plus a gain for one marker patch outside the box.

    Models a detector that scores an instance using both its own features and
    a co-occurring cue elsewhere in the image; with the default sizing neither
    alone reaches full confidence.
    """

    def __init__(
        self,
        instance_weights: dict[int, float],
        marker_patch: int,
        marker_gain: float,
        box: BBox,
        target_class: int,
        num_classes: int,
        reference: np.ndarray,
        grid: PatchGrid,
    ) -> None:
        super().__init__(reference, grid, box, target_class, num_classes)
        if not 0 <= marker_patch < grid.n:
            raise ValueError("marker_patch outside grid")
        if marker_gain < 0:
            raise ValueError("marker_gain must be nonnegative")
        x1, y1, x2, y2 = grid.patch_rect(marker_patch)
        overlap_w = min(float(x2), box.x2) - max(float(x1), box.x1)
        overlap_h = min(float(y2), box.y2) - max(float(y1), box.y1)
        if overlap_w > 0 and overlap_h > 0:
            raise ValueError("marker_patch must lie outside the target box")
        table = np.zeros(grid.n, dtype=np.float64)
        for idx, w in instance_weights.items():
            if not 0 <= idx < grid.n:
                raise ValueError(f"weight index {idx} outside grid")
            if w < 0:
                raise ValueError("weights must be nonnegative")
            table[idx] = w
        self.instance_weights = table
        self.marker_patch = marker_patch
        self.marker_gain = marker_gain

    def _score(self, present: np.ndarray) -> float:
        terms = list(self.instance_weights[np.flatnonzero(present)])
        if present[self.marker_patch]:
            terms.append(self.marker_gain)
        return math.fsum(terms)


class TabularDetector(SyntheticPatchDetector):
    """Detector whose score is read from a table over all 2**n patch subsets.

    The subset of present patches is encoded as a bitmask (bit i set when
    patch i is present), indexing directly into ``values``. This realizes an
    arbitrary set function as a detector, which is how random games are fed
    through the full masking/detection path in tests.
    """

    def __init__(
        self,
        values: np.ndarray,
        box: BBox,
        target_class: int,
        num_classes: int,
        reference: np.ndarray,
        grid: PatchGrid,
    ) -> None:
        super().__init__(reference, grid, box, target_class, num_classes)
        if grid.n > MAX_TABULAR_PLAYERS:
            raise ValueError(f"tabular detectors support at most {MAX_TABULAR_PLAYERS} patches")
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (1 << grid.n,):
            raise ValueError("values must have length 2**n")
        if values.min() < 0.0 or values.max() > 1.0:
            raise ValueError("table values must lie in [0, 1]")
        self.values = values
        self._bits = 1 << np.arange(grid.n, dtype=np.int64)

    def _score(self, present: np.ndarray) -> float:
        mask = int((self._bits * present).sum())
        return float(self.values[mask])
