"""Detector inference server speaking the stdio wire protocol.

One JSON message per line on stdin/stdout, every message carrying ``"v": 1``:

    {"v":1,"type":"load","id":N,"png_b64":...}
        -> {"v":1,"type":"result","id":N,"proposals":[]}
    {"v":1,"type":"detect","id":N,"image_ref":M,"grid":[dh,dw],
     "keep":[...],"detector":NAME}
        -> {"v":1,"type":"result","id":N,
            "proposals":[{"box":[x1,y1,x2,y2],"probs":[...]}]}
    failure -> {"v":1,"type":"error","id":N-or-null,"message":...}

The session holds every loaded image by its load id; detect requests
reference one by id. Masking happens here, on the raw pixels, BEFORE any
detector preprocessing: patches not listed in ``keep`` are zeroed using the
row-major grid layout in which the last row/column absorbs remainder pixels.

Registered detectors are callables

    detector(masked_raw, original_raw, d_h, d_w) -> [{"box": [...], "probs": [...]}]

taking uint8 arrays of shape (h, w, c) and returning plain JSON-ready
proposals; whatever preprocessing the wrapped model needs happens inside the
callable, on the already-masked pixels.
"""

from __future__ import annotations

import base64
import binascii
import io
import json

import numpy as np
from PIL import Image

PROTOCOL_VERSION = 1


class ProtocolError(ValueError):
    """Bad request content; reported to the client, the session continues."""


def patch_rect(index: int, d_h: int, d_w: int, width: int, height: int):
    """Half-open pixel rect of a row-major grid patch; remainder pixels go to
    the last row/column."""
    row, col = divmod(index, d_w)
    pw = width // d_w
    ph = height // d_h
    x1 = col * pw
    y1 = row * ph
    x2 = width if col == d_w - 1 else x1 + pw
    y2 = height if row == d_h - 1 else y1 + ph
    return x1, y1, x2, y2


def mask_raw(image: np.ndarray, d_h: int, d_w: int, keep) -> np.ndarray:
    """Zero every pixel outside the kept patches of a raw uint8 image."""
    height, width = image.shape[:2]
    if d_h < 1 or d_w < 1 or d_h > height or d_w > width:
        raise ProtocolError(f"grid [{d_h}, {d_w}] does not fit a {width}x{height} image")
    n = d_h * d_w
    masked = np.zeros_like(image)
    for i in keep:
        if not isinstance(i, int) or not 0 <= i < n:
            raise ProtocolError(f"keep index {i!r} out of range for {n} patches")
        x1, y1, x2, y2 = patch_rect(i, d_h, d_w, width, height)
        masked[y1:y2, x1:x2] = image[y1:y2, x1:x2]
    return masked


def decode_png(png_b64: str) -> np.ndarray:
    try:
        raw = base64.b64decode(png_b64, validate=True)
        img = Image.open(io.BytesIO(raw))
        arr = np.asarray(img, dtype=np.uint8)
    except (binascii.Error, OSError, ValueError) as exc:
        raise ProtocolError(f"cannot decode png_b64: {exc}") from exc
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr


def _require(message: dict, key: str):
    if key not in message:
        raise ProtocolError(f"message is missing '{key}'")
    return message[key]


def handle_message(message: dict, images: dict, registry: dict) -> dict:
    """Process one parsed request and build the reply payload."""
    msg_id = message.get("id")
    kind = message.get("type")
    if kind == "load":
        images[msg_id] = decode_png(_require(message, "png_b64"))
        return {"v": PROTOCOL_VERSION, "type": "result", "id": msg_id, "proposals": []}
    if kind == "detect":
        ref = _require(message, "image_ref")
        if ref not in images:
            raise ProtocolError(f"unknown image_ref {ref!r}")
        name = _require(message, "detector")
        if name not in registry:
            raise ProtocolError(f"unknown detector {name!r}")
        grid = _require(message, "grid")
        if not isinstance(grid, list) or len(grid) != 2:
            raise ProtocolError("grid must be [d_h, d_w]")
        d_h, d_w = (int(v) for v in grid)
        keep = _require(message, "keep")
        original = images[ref]
        masked = mask_raw(original, d_h, d_w, keep)
        proposals = registry[name](masked, original, d_h, d_w)
        return {
            "v": PROTOCOL_VERSION,
            "type": "result",
            "id": msg_id,
            "proposals": proposals,
        }
    raise ProtocolError(f"unknown message type {kind!r}")


def serve(stdin, stdout, registry: dict) -> None:
    """Serve requests line by line until stdin closes.

    Every failure becomes an error reply carrying the request id (null when
    the line could not even be parsed); the loop always continues.
    """
    images: dict = {}
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            message = json.loads(line)
        except json.JSONDecodeError as exc:
            _reply(stdout, {
                "v": PROTOCOL_VERSION, "type": "error", "id": None,
                "message": f"malformed message: {exc}",
            })
            continue
        if not isinstance(message, dict):
            _reply(stdout, {
                "v": PROTOCOL_VERSION, "type": "error", "id": None,
                "message": "message must be a JSON object",
            })
            continue
        try:
            reply = handle_message(message, images, registry)
        except ProtocolError as exc:
            reply = {
                "v": PROTOCOL_VERSION, "type": "error",
                "id": message.get("id"), "message": str(exc),
            }
        except Exception as exc:  # wrapped detectors may fail arbitrarily
            reply = {
                "v": PROTOCOL_VERSION, "type": "error",
                "id": message.get("id"), "message": f"detector failure: {exc}",
            }
        _reply(stdout, reply)


def _reply(stdout, payload: dict) -> None:
    stdout.write(json.dumps(payload) + "\n")
    stdout.flush()
