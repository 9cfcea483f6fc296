"""External-process backend speaking newline-delimited JSON over stdin/stdout.

Protocol (one JSON object per line):
  -> {"type": "hello"}
  <- {"type": "hello", "protocol": 1, "name": <text>}
  -> {"type": "predict", "tile_id": <text>, "width": W, "height": H,
      "rgb_png_b64": <base64 PNG>, "chm_f32_b64": <optional base64 LE float32 row-major>}
  <- {"type": "result", "tile_id": <text>,
      "instances": [{"score": s, "rle": {"size": [H, W], "counts": [...]}}]}
  <- {"type": "error", "message": <text>}   (recoverable, per tile)
"""

from __future__ import annotations

import base64
import io
import json
import selectors
import shlex
import subprocess
import time

import numpy as np
from PIL import Image

from ..errors import BackendError, ProtocolError
from ..masks import RlePayload
from .base import InstancePrediction, SegmentationBackend

PROTOCOL_VERSION = 1


def _encode_rgb(pixels: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(pixels.astype(np.uint8))).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _encode_chm(pixels: np.ndarray) -> str:
    data = np.ascontiguousarray(pixels, dtype="<f4").tobytes()
    return base64.b64encode(data).decode("ascii")


class ExternalBackend(SegmentationBackend):
    """Client side of the wire protocol; one subprocess, serialized requests."""

    needs_rgb = True

    def __init__(self, command: str, send_chm: bool = False, timeout: float = 60.0):
        self.command = command
        self.needs_chm = send_chm
        self.timeout = timeout
        self.proc = subprocess.Popen(
            shlex.split(command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
        self._selector = selectors.DefaultSelector()
        self._selector.register(self.proc.stdout, selectors.EVENT_READ)
        self.name = self._handshake()

    def _send(self, obj: dict) -> None:
        if self.proc.poll() is not None:
            raise BackendError(f"backend process exited with code {self.proc.returncode}")
        self.proc.stdin.write(json.dumps(obj) + "\n")
        self.proc.stdin.flush()

    def _read_line(self, timeout: float) -> str:
        deadline = time.monotonic() + timeout
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise BackendError(f"backend timed out after {timeout:.1f}s")
            if self._selector.select(timeout=remaining):
                line = self.proc.stdout.readline()
                if not line:
                    raise BackendError("backend closed its output stream")
                if line.strip():
                    return line
            elif self.proc.poll() is not None:
                raise BackendError(f"backend process exited with code {self.proc.returncode}")

    def _recv(self, timeout: float) -> dict:
        line = self._read_line(timeout)
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise BackendError(f"malformed backend response: {exc}: {line[:200]!r}")
        if not isinstance(obj, dict) or "type" not in obj:
            raise BackendError(f"malformed backend response: {line[:200]!r}")
        return obj

    def _handshake(self) -> str:
        self._send({"type": "hello"})
        try:
            reply = self._recv(self.timeout)
        except BackendError as exc:
            raise ProtocolError(f"handshake failed: {exc}")
        if reply.get("type") != "hello" or reply.get("protocol") != PROTOCOL_VERSION:
            raise ProtocolError(
                f"backend speaks protocol {reply.get('protocol')!r}, "
                f"expected {PROTOCOL_VERSION}"
            )
        return str(reply.get("name", "external"))

    def predict_tile(self, tile_id, tile_rgb, tile_chm):
        self.check_inputs(tile_rgb, tile_chm)
        size = tile_rgb.size if tile_rgb is not None else tile_chm.size
        request = {
            "type": "predict",
            "tile_id": tile_id,
            "width": size,
            "height": size,
        }
        if tile_rgb is not None:
            request["rgb_png_b64"] = _encode_rgb(tile_rgb.pixels)
        if tile_chm is not None:
            request["chm_f32_b64"] = _encode_chm(tile_chm.pixels)
        self._send(request)
        reply = self._recv(self.timeout)
        if reply.get("type") == "error":
            raise BackendError(f"tile {tile_id}: backend error: {reply.get('message')}")
        if reply.get("type") != "result":
            raise BackendError(f"tile {tile_id}: unexpected response type {reply.get('type')!r}")
        if reply.get("tile_id") not in (None, tile_id):
            raise BackendError(
                f"tile {tile_id}: response for wrong tile {reply.get('tile_id')!r}"
            )
        return self._parse_instances(reply, tile_id, size)

    def _parse_instances(self, reply: dict, tile_id: str, size: int) -> list[InstancePrediction]:
        out = []
        for idx, inst in enumerate(reply.get("instances", [])):
            try:
                score = float(inst["score"])
                rle = RlePayload.from_coco(inst["rle"])
            except (KeyError, TypeError, ValueError) as exc:
                raise BackendError(f"tile {tile_id}: instance {idx} malformed: {exc}")
            if not 0.0 <= score <= 1.0:
                raise BackendError(f"tile {tile_id}: instance {idx} score {score} outside [0, 1]")
            if rle.width != size or rle.height != size:
                raise BackendError(
                    f"tile {tile_id}: instance {idx} mask is {rle.width}x{rle.height}, "
                    f"expected {size}x{size}"
                )
            if sum(rle.counts) != rle.width * rle.height:
                raise BackendError(
                    f"tile {tile_id}: instance {idx} RLE counts sum to {sum(rle.counts)}, "
                    f"expected {rle.width * rle.height}"
                )
            out.append(InstancePrediction(score=score, mask=rle, tile_id=tile_id))
        return out

    def close(self) -> None:
        if self.proc.poll() is None:
            try:
                self.proc.stdin.close()
                self.proc.wait(timeout=5)
            except Exception:
                self.proc.kill()
        self._selector.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
