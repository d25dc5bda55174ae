#!/usr/bin/env python3
"""Minimal stdio detector server used by the wire-client tests.

Speaks the line-delimited JSON protocol from the package README. Deliberately
does not import vxcode: masking, patch geometry, and the additive score are
reimplemented here so the tests compare two independent implementations.
"""

import argparse
import base64
import io
import json
import math
import sys

import numpy as np
from PIL import Image


def patch_rect(index, d_h, d_w, width, height):
    row, col = divmod(index, d_w)
    pw = width // d_w
    ph = height // d_h
    x1 = col * pw
    y1 = row * ph
    x2 = width if col == d_w - 1 else x1 + pw
    y2 = height if row == d_h - 1 else y1 + ph
    return x1, y1, x2, y2


def decode_png(b64):
    raw = base64.b64decode(b64)
    img = Image.open(io.BytesIO(raw))
    arr = np.asarray(img, dtype=np.uint8)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr


def additive_proposal(reference, d_h, d_w, keep, weights, box, target_class, classes):
    height, width = reference.shape[:2]
    n = d_h * d_w
    for i in keep:
        if not 0 <= i < n:
            raise ValueError(f"keep index {i} out of range for {n} patches")
    # mask raw pixels first, then apply the detector's own preprocessing
    masked = np.zeros_like(reference)
    for i in keep:
        x1, y1, x2, y2 = patch_rect(i, d_h, d_w, width, height)
        masked[y1:y2, x1:x2] = reference[y1:y2, x1:x2]
    ref_float = reference.astype(np.float64) / 255.0
    masked_float = masked.astype(np.float64) / 255.0
    present = []
    for i in range(n):
        x1, y1, x2, y2 = patch_rect(i, d_h, d_w, width, height)
        if np.array_equal(masked_float[y1:y2, x1:x2], ref_float[y1:y2, x1:x2]):
            present.append(i)
    score = min(1.0, max(0.0, math.fsum(weights.get(i, 0.0) for i in present)))
    probs = [1e-6] * classes
    probs[target_class] = score
    return {"box": list(box), "probs": probs}


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--weights", required=True, help="index:weight,index:weight,...")
    parser.add_argument("--box", required=True, help="x1,y1,x2,y2")
    parser.add_argument("--target-class", type=int, default=0)
    parser.add_argument("--classes", type=int, default=3)
    args = parser.parse_args()

    weights = {}
    for part in args.weights.split(","):
        idx, w = part.split(":")
        weights[int(idx)] = float(w)
    box = tuple(float(v) for v in args.box.split(","))

    images = {}

    def reply(payload):
        sys.stdout.write(json.dumps(payload) + "\n")
        sys.stdout.flush()

    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            reply({"v": 1, "type": "error", "id": None, "message": f"bad json: {exc}"})
            continue
        msg_id = msg.get("id")
        try:
            kind = msg.get("type")
            if kind == "load":
                images[msg_id] = decode_png(msg["png_b64"])
                reply({"v": 1, "type": "result", "id": msg_id, "proposals": []})
            elif kind == "detect":
                ref = msg.get("image_ref")
                if ref not in images:
                    raise ValueError(f"unknown image_ref {ref}")
                if msg.get("detector") != "mock":
                    raise ValueError(f"unknown detector {msg.get('detector')!r}")
                d_h, d_w = msg["grid"]
                proposal = additive_proposal(
                    images[ref], d_h, d_w, msg["keep"], weights, box,
                    args.target_class, args.classes,
                )
                reply({"v": 1, "type": "result", "id": msg_id, "proposals": [proposal]})
            else:
                raise ValueError(f"unknown message type {kind!r}")
        except Exception as exc:
            reply({"v": 1, "type": "error", "id": msg_id, "message": str(exc)})


if __name__ == "__main__":
    main()
