"""Backend contract shared by all tile segmenters."""

from __future__ import annotations

import abc
from dataclasses import dataclass

from ..errors import ValidationError
from ..masks import RlePayload
from ..raster import TileImage


@dataclass(frozen=True)
class InstancePrediction:
    """One detected crown on a single tile, mask in tile pixel coordinates."""

    score: float
    mask: RlePayload
    tile_id: str

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValidationError(f"score {self.score} outside [0, 1]")


class SegmentationBackend(abc.ABC):
    """Tile-level instance segmenter. predict_tile must be deterministic."""

    name: str = "backend"
    needs_rgb: bool = True
    needs_chm: bool = False

    @abc.abstractmethod
    def predict_tile(
        self, tile_id: str, tile_rgb: TileImage | None, tile_chm: TileImage | None
    ) -> list[InstancePrediction]:
        """Return detections on one tile; an empty list is a valid result."""

    def check_inputs(self, tile_rgb: TileImage | None, tile_chm: TileImage | None) -> None:
        if self.needs_rgb and tile_rgb is None:
            raise ValidationError(f"backend {self.name!r} requires an RGB tile")
        if self.needs_chm and tile_chm is None:
            raise ValidationError(f"backend {self.name!r} requires a CHM tile")

    def close(self) -> None:
        """Release external resources (subprocesses); default is a no-op."""
