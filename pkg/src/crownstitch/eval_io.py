"""File loading for the evaluation command: COCO JSON and GeoJSON inputs."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from .errors import ValidationError
from .evaluation import EvalItem
from .masks import RlePayload, rle_encode


def _rasterize_polygon(points: list[float], width: int, height: int) -> np.ndarray:
    img = Image.new("1", (width, height), 0)
    xy = list(zip(points[0::2], points[1::2]))
    ImageDraw.Draw(img).polygon(xy, fill=1)
    return np.asarray(img, dtype=bool)


def _segmentation_to_rle(seg, width: int, height: int) -> RlePayload:
    if isinstance(seg, dict):
        return RlePayload.from_coco(seg)
    if isinstance(seg, list) and seg and isinstance(seg[0], list):
        mask = np.zeros((height, width), dtype=bool)
        for ring in seg:
            mask |= _rasterize_polygon(ring, width, height)
        return rle_encode(mask)
    raise ValidationError(f"unsupported segmentation payload: {type(seg)}")


def is_geojson(path) -> bool:
    try:
        obj = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError):
        return False
    return isinstance(obj, dict) and obj.get("type") == "FeatureCollection"


def load_coco_eval_items(gt_path, pred_path) -> list[EvalItem]:
    """Pair a COCO ground-truth file with a COCO results array."""
    gt = json.loads(Path(gt_path).read_text())
    preds = json.loads(Path(pred_path).read_text())
    if isinstance(preds, dict) and "annotations" in preds:
        # Allow a full COCO file as predictions (scores default to 1.0).
        preds = [
            {**ann, "score": ann.get("score", 1.0)} for ann in preds["annotations"]
        ]
    if len(gt.get("categories", [])) != 1:
        raise ValidationError("ground truth must have exactly one category")

    dims = {img["id"]: (img["width"], img["height"]) for img in gt["images"]}
    items = {
        image_id: EvalItem(image_id=image_id, pred_scores=[], pred_masks=[], gt_masks=[])
        for image_id in dims
    }
    for ann in gt["annotations"]:
        w, h = dims[ann["image_id"]]
        items[ann["image_id"]].gt_masks.append(
            _segmentation_to_rle(ann["segmentation"], w, h)
        )
    for det in preds:
        image_id = det["image_id"]
        if image_id not in items:
            raise ValidationError(f"prediction references unknown image {image_id}")
        w, h = dims[image_id]
        items[image_id].pred_scores.append(float(det["score"]))
        items[image_id].pred_masks.append(_segmentation_to_rle(det["segmentation"], w, h))
    return [items[k] for k in sorted(items)]
