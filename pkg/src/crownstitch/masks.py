"""Binary masks, the COCO run-length codec, and mask IoU.

Masks are plain 2-D boolean numpy arrays. RLE follows the COCO convention:
pixels enumerated column-major (top to bottom within a column, columns left
to right), counts alternating zero-runs and one-runs starting with a zero-run.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class RlePayload:
    width: int
    height: int
    counts: tuple[int, ...]

    def to_coco(self) -> dict:
        """COCO-style {"size": [H, W], "counts": [...]} dict."""
        return {"size": [self.height, self.width], "counts": list(self.counts)}

    @classmethod
    def from_coco(cls, obj: dict) -> "RlePayload":
        h, w = obj["size"]
        return cls(width=int(w), height=int(h), counts=tuple(int(c) for c in obj["counts"]))


def rle_encode(mask: np.ndarray) -> RlePayload:
    """Encode a 2-D boolean mask as COCO column-major RLE."""
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise ValidationError("mask must be 2-D")
    h, w = mask.shape
    flat = mask.ravel(order="F")
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    runs = np.diff(np.concatenate(([0], changes, [flat.size])))
    counts = runs.tolist()
    if flat[0]:
        counts = [0] + counts
    return RlePayload(width=w, height=h, counts=tuple(int(c) for c in counts))


def rle_decode(rle: RlePayload) -> np.ndarray:
    """Inverse of rle_encode. Rejects payloads whose counts do not cover the grid."""
    total = rle.width * rle.height
    if any(c < 0 for c in rle.counts):
        raise ValidationError("RLE counts must be non-negative")
    if sum(rle.counts) != total:
        raise ValidationError(
            f"RLE counts sum to {sum(rle.counts)}, expected {total} for "
            f"{rle.width}x{rle.height}"
        )
    flat = np.zeros(total, dtype=bool)
    pos = 0
    value = False
    for c in rle.counts:
        if value:
            flat[pos : pos + c] = True
        pos += c
        value = not value
    return flat.reshape((rle.height, rle.width), order="F")


def mask_area(mask: np.ndarray) -> int:
    return int(np.count_nonzero(mask))


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union of two same-shaped boolean masks (0 when both empty)."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ValidationError(f"mask shape mismatch: {a.shape} vs {b.shape}")
    union = np.count_nonzero(a | b)
    if union == 0:
        return 0.0
    return np.count_nonzero(a & b) / union
