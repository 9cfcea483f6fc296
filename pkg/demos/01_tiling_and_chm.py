"""Tile grids and canopy height models.

Walks through the two raster primitives everything else builds on: the
deterministic overlapping tile grid, and CHM = DSM - bilinearly resampled DEM.

Run: python3 demos/01_tiling_and_chm.py
"""

import tempfile
from pathlib import Path

import numpy as np

from crownstitch import (
    AffineTransform,
    GeoRaster,
    compute_chm,
    compute_tile_grid,
    extract_tile,
)
from crownstitch.raster_io import dump_debug, write_geotiff

# ---------------------------------------------------------------------------
# 1. The tile grid. A 1500x1024 mosaic with 1024 px tiles at 80 % overlap:
#    stride is floor(1024 * 0.2) = 204, and the final tile is clamped so it
#    ends exactly at the raster edge instead of hanging over.

grid = compute_tile_grid(width=1500, height=1024, tile_size=1024, overlap_fraction=0.8)
print("tile origins for (1500, 1024, 1024, 0.8):")
for rect in grid:
    edges = [
        name
        for name, flag in (
            ("left", rect.touches_left),
            ("top", rect.touches_top),
            ("right", rect.touches_right),
            ("bottom", rect.touches_bottom),
        )
        if flag
    ]
    print(f"  x0={rect.x0:4d} y0={rect.y0:4d}  mosaic edges: {', '.join(edges) or '-'}")

# ---------------------------------------------------------------------------
# 2. Tile extraction keeps georeferencing: each tile carries a translated
#    affine transform, so tile pixel (0, 0) still maps to the right place.

transform = AffineTransform(500000.0, 4000000.0, 0.025, -0.025)
mosaic = GeoRaster(
    pixels=np.zeros((1024, 1500, 3), dtype=np.uint8), transform=transform, crs="EPSG:32654"
)
tile = extract_tile(mosaic, grid[1])
print(f"\ntile at x0={grid[1].x0}: world origin {tile.transform.pixel_to_world(0, 0)}")

# ---------------------------------------------------------------------------
# 3. The CHM. The DEM is usually coarser than the DSM; it is resampled
#    bilinearly onto the DSM grid, the difference is clamped at zero, and
#    nodata cells propagate.

dsm = GeoRaster(
    pixels=np.full((40, 40), 18.0, dtype=np.float32),
    transform=AffineTransform(500000.0, 4000000.0, 0.5, -0.5),
    crs="EPSG:32654",
)
dem_pixels = np.tile(np.linspace(2.0, 6.0, 10, dtype=np.float32), (10, 1))
dem = GeoRaster(
    pixels=dem_pixels,
    transform=AffineTransform(500000.0, 4000000.0, 2.0, -2.0),
    crs="EPSG:32654",
)
chm = compute_chm(dsm, dem)
print(f"\nCHM range: {chm.pixels.min():.2f} .. {chm.pixels.max():.2f} m (never negative)")

with tempfile.TemporaryDirectory() as tmp:
    out = Path(tmp) / "chm.tif"
    write_geotiff(out, chm)
    dump_debug(chm, Path(tmp) / "chm.png")
    sidecar = (Path(tmp) / "chm.transform.txt").read_text().split()
    print(f"wrote {out.name} plus a PNG debug dump; sidecar transform: {sidecar}")
