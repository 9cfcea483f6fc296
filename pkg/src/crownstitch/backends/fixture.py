"""Fixture backend: replays predictions stored as per-tile JSON files.

Directory layout: <dir>/<tile_id>.json holding
{"instances": [{"score": s, "rle": {"size": [H, W], "counts": [...]}}]}.
Tiles without a file yield an empty prediction list.
"""

from __future__ import annotations

import json
from pathlib import Path

from ..errors import ValidationError
from ..masks import RlePayload
from .base import InstancePrediction, SegmentationBackend


class FixtureBackend(SegmentationBackend):
    name = "fixture"
    needs_rgb = False
    needs_chm = False

    def __init__(self, directory):
        self.directory = Path(directory)
        if not self.directory.is_dir():
            raise ValidationError(f"fixture directory {self.directory} does not exist")

    def predict_tile(self, tile_id, tile_rgb, tile_chm):
        path = self.directory / f"{tile_id}.json"
        if not path.exists():
            return []
        payload = json.loads(path.read_text())
        out = []
        for inst in payload.get("instances", []):
            out.append(
                InstancePrediction(
                    score=float(inst["score"]),
                    mask=RlePayload.from_coco(inst["rle"]),
                    tile_id=tile_id,
                )
            )
        return out

    @staticmethod
    def store(directory, tile_id: str, instances: list[InstancePrediction]) -> None:
        """Write predictions in the format predict_tile reads back."""
        path = Path(directory) / f"{tile_id}.json"
        payload = {
            "instances": [
                {"score": inst.score, "rle": inst.mask.to_coco()} for inst in instances
            ]
        }
        path.write_text(json.dumps(payload, indent=2) + "\n")
