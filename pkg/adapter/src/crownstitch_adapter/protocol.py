"""The serve loop: newline-delimited JSON requests on stdin, responses on stdout.

Requests:
  {"type": "hello"}
  {"type": "predict", "tile_id": ..., "width": W, "height": H,
   "rgb_png_b64": <base64 PNG>, "chm_f32_b64": <optional, ignored here>}

Responses:
  {"type": "hello", "protocol": 1, "name": <model name>}
  {"type": "result", "tile_id": ..., "instances":
      [{"score": s, "rle": {"size": [H, W], "counts": [...]}}]}
  {"type": "error", "message": <text>}

Malformed requests get an error response; the loop never dies on bad input.
"""

from __future__ import annotations

import base64
import io
import json

import numpy as np
from PIL import Image

PROTOCOL_VERSION = 1


def rle_counts(mask: np.ndarray) -> list[int]:
    """COCO column-major run lengths, zero-run first."""
    flat = np.asarray(mask, dtype=bool).ravel(order="F")
    if flat.size == 0:
        return [0]
    changes = np.flatnonzero(np.diff(flat))
    counts = np.diff(np.concatenate(([0], changes + 1, [flat.size]))).tolist()
    if flat[0]:
        counts.insert(0, 0)
    return counts


def _decode_image(request: dict) -> np.ndarray:
    raw = base64.b64decode(request["rgb_png_b64"])
    image = np.asarray(Image.open(io.BytesIO(raw)).convert("RGB"))
    if image.shape[:2] != (request["height"], request["width"]):
        raise ValueError(
            f"image is {image.shape[1]}x{image.shape[0]}, "
            f"request says {request['width']}x{request['height']}"
        )
    return image


def _handle_predict(request: dict, model) -> dict:
    image = _decode_image(request)
    instances = []
    for score, mask in model(image):
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != image.shape[:2]:
            raise ValueError(f"model produced a {mask.shape} mask for a {image.shape[:2]} tile")
        instances.append(
            {
                "score": float(score),
                "rle": {"size": [int(mask.shape[0]), int(mask.shape[1])], "counts": rle_counts(mask)},
            }
        )
    return {"type": "result", "tile_id": request.get("tile_id"), "instances": instances}


def serve(stdin, stdout, model, name: str) -> int:
    """Answer requests until EOF. Returns the process exit code."""

    def respond(obj):
        stdout.write(json.dumps(obj) + "\n")
        stdout.flush()

    for line in stdin:
        if not line.strip():
            continue
        try:
            request = json.loads(line)
        except json.JSONDecodeError as exc:
            respond({"type": "error", "message": f"malformed request: {exc}"})
            continue
        if not isinstance(request, dict):
            respond({"type": "error", "message": "request must be a JSON object"})
            continue
        kind = request.get("type")
        if kind == "hello":
            respond({"type": "hello", "protocol": PROTOCOL_VERSION, "name": name})
        elif kind == "predict":
            try:
                respond(_handle_predict(request, model))
            except Exception as exc:
                respond({"type": "error", "message": f"predict failed: {exc}"})
        else:
            respond({"type": "error", "message": f"unknown request type {kind!r}"})
    return 0
