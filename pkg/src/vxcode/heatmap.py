"""Heat-map synthesis from a greedy trace, plus raster export.

Importance is piecewise-constant per patch. The first identified group gets
the maximum value 1.0; every later group is credited with the score change it
was responsible for: 1 - (reward before the step) for insertion, or the
reward before the step for deletion. Patches appended outside the candidate
set carry zero importance.

Rasters export as 16-bit binary PGM (P5, big-endian, values scaled by 65535)
with a full-precision CSV twin alongside.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .engine import MODE_INSERTION, ExplanationTrace
from .geometry import PatchGrid

PGM_MAXVAL = 65535


def build_heatmap(trace: ExplanationTrace, grid: PatchGrid | None = None) -> np.ndarray:
    """Per-pixel importance raster for a complete greedy trace."""
    if grid is None:
        grid = trace.grid
    elif grid != trace.grid:
        raise ValueError("grid does not match the trace")
    if not trace.valid:
        raise ValueError("cannot build a heat map from an invalid trace")
    covered = [i for step in trace.steps for i in step.selected]
    if sorted(covered) != sorted(trace.candidates):
        raise ValueError("trace steps do not cover the candidate set")

    insertion = trace.mode == MODE_INSERTION
    heat = np.zeros((grid.image_h, grid.image_w), dtype=np.float64)
    previous_reward = trace.baseline
    for step_number, step in enumerate(trace.steps):
        if step_number == 0:
            value = 1.0
        else:
            value = 1.0 - previous_reward if insertion else previous_reward
        for patch in step.selected:
            x1, y1, x2, y2 = grid.patch_rect(patch)
            heat[y1:y2, x1:x2] = value
        previous_reward = step.reward
    # Appended patches keep the initial 0.0.
    return heat


def export_raster(heat: np.ndarray, path) -> tuple[Path, Path]:
    """Write a heat map as ``path`` (16-bit P5 PGM) plus a CSV twin.

    Returns the two paths written. Values are clipped to [0, 1] before
    quantization; the CSV twin keeps full float precision.
    """
    heat = np.asarray(heat, dtype=np.float64)
    if heat.ndim != 2:
        raise ValueError("heat map must be 2-D")
    pgm_path = Path(path)
    csv_path = pgm_path.with_suffix(".csv")

    quantized = np.rint(np.clip(heat, 0.0, 1.0) * PGM_MAXVAL).astype(">u2")
    h, w = heat.shape
    header = f"P5\n{w} {h}\n{PGM_MAXVAL}\n".encode("ascii")
    pgm_path.write_bytes(header + quantized.tobytes())

    rows = (",".join(repr(float(v)) for v in row) for row in heat)
    csv_path.write_text("\n".join(rows) + "\n")
    return pgm_path, csv_path


def load_raster(path) -> np.ndarray:
    """Read a heat map written by ``export_raster`` (either the PGM or the CSV)."""
    path = Path(path)
    if path.suffix == ".csv":
        rows = [
            [float(v) for v in line.split(",")]
            for line in path.read_text().splitlines()
            if line.strip()
        ]
        return np.asarray(rows, dtype=np.float64)
    data = path.read_bytes()
    if not data.startswith(b"P5"):
        raise ValueError(f"{path} is not a binary PGM file")
    fields: list[bytes] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    pos += 1  # single whitespace byte after maxval
    w, h, maxval = (int(f) for f in fields)
    if maxval != PGM_MAXVAL:
        raise ValueError(f"expected 16-bit PGM with maxval {PGM_MAXVAL}, got {maxval}")
    raster = np.frombuffer(data[pos:], dtype=">u2", count=w * h).reshape(h, w)
    return raster.astype(np.float64) / PGM_MAXVAL
