"""Client for external detector sidecars speaking the stdio wire protocol.

The protocol is newline-delimited JSON over the child process's standard
streams, one message per line, every message carrying ``"v": 1``:

    {"v":1,"type":"load","id":N,"png_b64":...}
        -> {"v":1,"type":"result","id":N,"proposals":[]}        (ack)
    {"v":1,"type":"detect","id":N,"image_ref":M,"grid":[dh,dw],
     "keep":[...],"detector":NAME}
        -> {"v":1,"type":"result","id":N,
            "proposals":[{"box":[x1,y1,x2,y2],"probs":[...]}]}
    any failure -> {"v":1,"type":"error","id":N-or-null,"message":...}

The image is loaded once per session as base64 PNG and later detect requests
reference it by the load id, so per-evaluation bandwidth is proportional to
the keep list, not the pixel count. The server masks the raw pixels itself
(before any detector preprocessing), which is why requests carry patch index
sets rather than images.

The client exposes the usual DetectorHandle interface: ``detect`` takes a
masked variant of the loaded image and recovers the keep set by comparing
patches against the original (a patch must be either pixel-identical to the
original or entirely zero).
"""

from __future__ import annotations

import base64
import io
import json
import queue
import subprocess
import threading

import numpy as np
from PIL import Image as PILImage

from .detector import (
    BBox,
    DetectorHandle,
    Proposal,
    present_patches,
    to_float_image,
    zero_patches,
)
from .geometry import PatchGrid

PROTOCOL_VERSION = 1


class WireProtocolError(RuntimeError):
    """Transport or protocol failure talking to a sidecar process."""


class SidecarDetector(DetectorHandle):
    """Detector served by a sidecar child process.

    ``reference`` is the unmasked uint8 image; it is PNG-encoded and loaded
    into the sidecar at construction time. ``detect`` accepts float images
    that are zero-maskings of ``to_float_image(reference)``.
    """

    thread_safe = False

    def __init__(self, command, reference: np.ndarray, grid: PatchGrid,
                 detector: str = "mock", timeout: float = 60.0) -> None:
        super().__init__()
        self.grid = grid
        self.detector_name = detector
        self._timeout = timeout
        self._reference = to_float_image(reference)
        if self._reference.shape[:2] != (grid.image_h, grid.image_w):
            raise ValueError("grid does not match the reference image")
        self._next_id = 0
        self._pending: dict[int, dict] = {}
        self._responses: queue.Queue = queue.Queue()
        try:
            self._proc = subprocess.Popen(
                list(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise WireProtocolError(f"failed to launch sidecar: {exc}") from exc
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

        png = io.BytesIO()
        arr = np.asarray(reference, dtype=np.uint8)
        mode = "L" if arr.shape[2] == 1 else "RGB"
        PILImage.fromarray(arr[:, :, 0] if mode == "L" else arr, mode=mode).save(png, format="PNG")
        self._image_ref = self._request(
            {"type": "load", "png_b64": base64.b64encode(png.getvalue()).decode("ascii")}
        )["id"]

    def _read_loop(self) -> None:
        stream = self._proc.stdout
        try:
            for line in stream:
                line = line.strip()
                if line:
                    self._responses.put(line)
        finally:
            self._responses.put(None)  # EOF marker

    def _request(self, message: dict) -> dict:
        if self._proc.poll() is not None:
            raise WireProtocolError("sidecar process has exited")
        self._next_id += 1
        message = {"v": PROTOCOL_VERSION, "id": self._next_id, **message}
        try:
            self._proc.stdin.write(json.dumps(message) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise WireProtocolError(f"sidecar pipe closed: {exc}") from exc
        return self._await_response(self._next_id)

    def _await_response(self, wanted_id: int) -> dict:
        # Responses may arrive out of order; park the others by id.
        while wanted_id not in self._pending:
            try:
                line = self._responses.get(timeout=self._timeout)
            except queue.Empty:
                raise WireProtocolError("timed out waiting for sidecar response") from None
            if line is None:
                raise WireProtocolError("sidecar closed its output stream")
            try:
                reply = json.loads(line)
            except json.JSONDecodeError as exc:
                raise WireProtocolError(f"malformed sidecar message: {line!r}") from exc
            if reply.get("id") is None:
                raise WireProtocolError(f"sidecar error: {reply.get('message', line)}")
            self._pending[int(reply["id"])] = reply
        reply = self._pending.pop(wanted_id)
        if reply.get("type") == "error":
            raise WireProtocolError(f"sidecar error: {reply.get('message')}")
        if reply.get("type") != "result":
            raise WireProtocolError(f"unexpected message type {reply.get('type')!r}")
        return reply

    def _keep_set(self, image: np.ndarray) -> list[int]:
        image = np.asarray(image, dtype=np.float64)
        if image.shape != self._reference.shape:
            raise ValueError("image shape does not match the loaded reference")
        present = present_patches(image, self._reference, self.grid)
        zeroed = zero_patches(image, self.grid)
        if not np.all(present | zeroed):
            bad = int(np.flatnonzero(~(present | zeroed))[0])
            raise ValueError(
                f"patch {bad} is neither identical to the reference nor zero-masked"
            )
        return [int(i) for i in np.flatnonzero(present)]

    def _detect(self, image: np.ndarray) -> list[Proposal]:
        keep = self._keep_set(image)
        reply = self._request(
            {
                "type": "detect",
                "image_ref": self._image_ref,
                "grid": [self.grid.d_h, self.grid.d_w],
                "keep": keep,
                "detector": self.detector_name,
            }
        )
        proposals = []
        for item in reply.get("proposals", []):
            box = BBox(*(float(v) for v in item["box"]))
            probs = np.asarray([float(v) for v in item["probs"]], dtype=np.float64)
            proposals.append(Proposal(box=box, probs=probs))
        return proposals

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()

    def __enter__(self) -> "SidecarDetector":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()
