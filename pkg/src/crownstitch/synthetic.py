"""Synthetic forest scenes for demos and end-to-end testing.

Places non-touching disk crowns on a jittered grid; the generator's disks are
their own ground truth for checking the inference pipeline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .polygons import PolygonGeo
from .raster import AffineTransform, GeoRaster


@dataclass(frozen=True)
class SyntheticCrown:
    center: tuple[float, float]  # world coordinates
    radius_m: float
    peak_height_m: float

    def polygon(self, vertices: int = 64) -> PolygonGeo:
        cx, cy = self.center
        pts = [
            (
                cx + self.radius_m * math.cos(2 * math.pi * k / vertices),
                cy + self.radius_m * math.sin(2 * math.pi * k / vertices),
            )
            for k in range(vertices)
        ]
        pts.append(pts[0])
        return PolygonGeo(exterior=tuple(pts))


def make_synthetic_forest(
    n_crowns: int = 25,
    gsd: float = 0.025,
    radius_range: tuple[float, float] = (2.0, 6.0),
    height_range: tuple[float, float] = (13.0, 20.0),
    gap_m: float = 2.0,
    margin_m: float = 8.0,
    origin: tuple[float, float] = (500000.0, 4000000.0),
    crs: str = "EPSG:32654",
    seed: int = 0,
) -> tuple[GeoRaster, GeoRaster, list[SyntheticCrown]]:
    """Build (rgb orthomosaic, matching CHM, crowns) with paraboloid canopies."""
    rng = np.random.default_rng(seed)
    cols = math.ceil(math.sqrt(n_crowns))
    rows = math.ceil(n_crowns / cols)
    pitch = 2 * radius_range[1] + gap_m
    width_m = (cols - 1) * pitch + 2 * margin_m
    height_m = (rows - 1) * pitch + 2 * margin_m
    width_px = int(round(width_m / gsd))
    height_px = int(round(height_m / gsd))

    transform = AffineTransform(origin[0], origin[1], gsd, -gsd)
    chm = np.zeros((height_px, width_px), dtype=np.float32)
    rgb = np.empty((height_px, width_px, 3), dtype=np.uint8)
    rgb[:] = (92, 72, 48)  # bare-ground brown

    crowns = []
    jitter_max = gap_m / 4
    for k in range(n_crowns):
        r, c = divmod(k, cols)
        radius = float(rng.uniform(*radius_range))
        peak = float(rng.uniform(*height_range))
        cx = origin[0] + margin_m + c * pitch + float(rng.uniform(-jitter_max, jitter_max))
        cy = origin[1] - margin_m - r * pitch + float(rng.uniform(-jitter_max, jitter_max))
        crowns.append(SyntheticCrown(center=(cx, cy), radius_m=radius, peak_height_m=peak))

        px = (cx - origin[0]) / gsd
        py = (origin[1] - cy) / gsd
        rad_px = radius / gsd
        x0, x1 = int(px - rad_px) - 1, int(px + rad_px) + 2
        y0, y1 = int(py - rad_px) - 1, int(py + rad_px) + 2
        yy, xx = np.mgrid[y0:y1, x0:x1]
        d2 = ((xx + 0.5 - px) ** 2 + (yy + 0.5 - py) ** 2) / rad_px**2
        bump = np.clip(peak * (1.0 - d2), 0.0, None).astype(np.float32)
        window = chm[y0:y1, x0:x1]
        np.maximum(window, bump, out=window)
        inside = d2 <= 1.0
        shade = (40 + 50 * np.clip(1.0 - d2[inside], 0, 1)).astype(np.uint8)
        rgb_window = rgb[y0:y1, x0:x1]
        rgb_window[inside, 0] = 30
        rgb_window[inside, 1] = shade + 90
        rgb_window[inside, 2] = 35

    ortho = GeoRaster(pixels=rgb, transform=transform, crs=crs)
    chm_raster = GeoRaster(pixels=chm, transform=transform, crs=crs)
    return ortho, chm_raster, crowns
