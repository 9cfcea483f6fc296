"""Classical treetop + watershed crown delineation on a CHM tile.

Pipeline: Gaussian smoothing, height thresholding, local-maximum treetop
seeding with a minimum separation, then watershed flooding of the inverted
smoothed surface restricted to the above-threshold mask. Scores are a
height-based heuristic (taller trees score higher) so the downstream score
filter has something to work with.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.ndimage as ndimage
from skimage.segmentation import watershed

from ..errors import ValidationError
from ..masks import rle_encode
from ..raster import TileImage
from .base import InstancePrediction, SegmentationBackend

SCORE_FULL_HEIGHT = 40.0  # metres; roughly a tall temperate canopy


@dataclass(frozen=True)
class WatershedParams:
    smoothing_sigma: float = 5.0  # px
    min_treetop_distance: int = 20  # px, half-width of the seed exclusion square
    min_height: float = 2.0  # m
    min_crown_pixels: int = 100

    def __post_init__(self):
        if (
            self.smoothing_sigma <= 0
            or self.min_treetop_distance <= 0
            or self.min_height <= 0
            or self.min_crown_pixels <= 0
        ):
            raise ValidationError("all watershed parameters must be strictly positive")


def _find_seeds(smoothed: np.ndarray, mask: np.ndarray, min_distance: int) -> list[tuple[int, int]]:
    """Treetop pixels: local maxima over a square neighborhood, min separation enforced.

    Candidates are ranked by descending height then row-major index, so plateau
    ties resolve to the smallest row-major pixel.
    """
    size = 2 * min_distance + 1
    local_max = smoothed == ndimage.maximum_filter(smoothed, size=size, mode="nearest")
    cand_r, cand_c = np.nonzero(local_max & mask)
    if cand_r.size == 0:
        return []
    heights = smoothed[cand_r, cand_c]
    order = np.lexsort((cand_c, cand_r, -heights))
    seeds: list[tuple[int, int]] = []
    for k in order:
        r, c = int(cand_r[k]), int(cand_c[k])
        if any(abs(r - sr) <= min_distance and abs(c - sc) <= min_distance for sr, sc in seeds):
            continue
        seeds.append((r, c))
    return seeds


def watershed_segment(
    chm: np.ndarray, params: WatershedParams = WatershedParams(), tile_id: str = ""
) -> list[InstancePrediction]:
    """Segment a single-band CHM array into crown instances."""
    chm = np.asarray(chm, dtype=np.float64)
    if chm.ndim != 2:
        raise ValidationError("watershed expects a single-band CHM tile")
    smoothed = ndimage.gaussian_filter(chm, sigma=params.smoothing_sigma)
    mask = smoothed >= params.min_height
    if not mask.any():
        return []
    seeds = _find_seeds(smoothed, mask, params.min_treetop_distance)
    if not seeds:
        return []
    markers = np.zeros(chm.shape, dtype=np.int32)
    for label, (r, c) in enumerate(seeds, start=1):
        markers[r, c] = label
    labels = watershed(-smoothed, markers=markers, mask=mask, connectivity=1)

    predictions = []
    for label, (r, c) in enumerate(seeds, start=1):
        crown = labels == label
        if np.count_nonzero(crown) < params.min_crown_pixels:
            continue
        score = float(np.clip(smoothed[r, c] / SCORE_FULL_HEIGHT, 0.05, 0.99))
        predictions.append(
            InstancePrediction(score=score, mask=rle_encode(crown), tile_id=tile_id)
        )
    return predictions


class WatershedBackend(SegmentationBackend):
    """CHM-only backend wrapping watershed_segment."""

    name = "watershed"
    needs_rgb = False
    needs_chm = True

    def __init__(self, params: WatershedParams | None = None):
        self.params = params or WatershedParams()

    def predict_tile(self, tile_id, tile_rgb, tile_chm: TileImage | None):
        self.check_inputs(tile_rgb, tile_chm)
        chm = np.asarray(tile_chm.pixels, dtype=np.float64)
        # Zero-padded and nodata cells must never seed or join a crown.
        chm = np.where(np.isfinite(chm), chm, 0.0)
        return watershed_segment(chm, self.params, tile_id=tile_id)
