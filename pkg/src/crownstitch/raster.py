"""Georeferenced rasters, affine transforms, tile grids, and CHM derivation.

Rasters are immutable value objects: pixel arrays are never mutated after
construction, so they can be shared freely between threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GeoreferenceError, ValidationError

SQUARE_PIXEL_TOL = 1e-6


@dataclass(frozen=True)
class AffineTransform:
    """North-up affine geotransform (rotation terms are always zero).

    world(px, py) = (origin_x + px * scale_x, origin_y + py * scale_y)
    """

    origin_x: float
    origin_y: float
    scale_x: float
    scale_y: float

    def __post_init__(self):
        if self.scale_x == 0 or self.scale_y == 0:
            raise GeoreferenceError("affine scales must be non-zero")

    def pixel_to_world(self, px: float, py: float) -> tuple[float, float]:
        return (self.origin_x + px * self.scale_x, self.origin_y + py * self.scale_y)

    def world_to_pixel(self, wx: float, wy: float) -> tuple[float, float]:
        return ((wx - self.origin_x) / self.scale_x, (wy - self.origin_y) / self.scale_y)

    def translated(self, px_offset: int, py_offset: int) -> "AffineTransform":
        """Transform of a sub-window whose pixel (0,0) is parent pixel (px_offset, py_offset)."""
        ox, oy = self.pixel_to_world(px_offset, py_offset)
        return AffineTransform(ox, oy, self.scale_x, self.scale_y)


@dataclass(frozen=True)
class GeoRaster:
    """Pixel grid plus georeferencing. Single-band float (heights) or 3-band uint8 (RGB)."""

    pixels: np.ndarray  # (H, W) or (H, W, 3)
    transform: AffineTransform
    crs: str
    nodata: float | None = None

    def __post_init__(self):
        if self.pixels.ndim not in (2, 3):
            raise ValidationError("raster array must be 2-D or (H, W, bands)")
        if self.pixels.ndim == 3 and self.pixels.shape[2] not in (1, 3):
            raise ValidationError("only 1- or 3-band rasters are supported")
        if self.height < 1 or self.width < 1:
            raise ValidationError("raster must be at least 1x1")
        if abs(abs(self.transform.scale_x) - abs(self.transform.scale_y)) > SQUARE_PIXEL_TOL:
            raise GeoreferenceError(
                f"non-square pixels: |scale_x|={abs(self.transform.scale_x)} "
                f"|scale_y|={abs(self.transform.scale_y)}"
            )

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def bands(self) -> int:
        return 1 if self.pixels.ndim == 2 else self.pixels.shape[2]

    @property
    def gsd(self) -> float:
        """Ground sampling distance in world units per pixel."""
        return abs(self.transform.scale_x)

    def world_bounds(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) of the pixel extent in world coordinates."""
        x0, y0 = self.transform.pixel_to_world(0, 0)
        x1, y1 = self.transform.pixel_to_world(self.width, self.height)
        return (min(x0, x1), min(y0, y1), max(x0, x1), max(y0, y1))


@dataclass(frozen=True)
class TileRect:
    """Square tile placement within a parent raster (pixel coordinates)."""

    x0: int
    y0: int
    size: int
    touches_left: bool = False
    touches_top: bool = False
    touches_right: bool = False
    touches_bottom: bool = False

    @property
    def x1(self) -> int:
        return self.x0 + self.size

    @property
    def y1(self) -> int:
        return self.y0 + self.size


@dataclass(frozen=True)
class TileImage:
    """Extracted tile: fixed-size pixel block with its own georeferencing.

    valid_width/valid_height delimit the region backed by real raster pixels
    (the remainder is zero padding, only present for rasters smaller than a tile).
    """

    pixels: np.ndarray
    transform: AffineTransform
    rect: TileRect
    valid_width: int
    valid_height: int

    @property
    def size(self) -> int:
        return self.rect.size


def _axis_origins(dim: int, tile_size: int, stride: int) -> list[int]:
    if dim <= tile_size:
        return [0]
    origins = []
    o = 0
    while True:
        if o + tile_size >= dim:
            last = dim - tile_size
            if not origins or origins[-1] != last:
                origins.append(last)
            break
        origins.append(o)
        o += stride
    return origins


def compute_tile_grid(width: int, height: int, tile_size: int, overlap_fraction: float) -> list[TileRect]:
    """Deterministic row-major grid of overlapping square tiles covering every pixel.

    Stride is floor(tile_size * (1 - overlap_fraction)), minimum 1; the final
    tile on each axis is clamped to the raster edge. Rasters smaller than a
    tile yield a single tile flagged as touching the relevant edges (padded on
    extraction).
    """
    if not 0 <= overlap_fraction < 1:
        raise ValidationError("overlap_fraction must be in [0, 1)")
    if tile_size < 1:
        raise ValidationError("tile_size must be >= 1")
    if width < 1 or height < 1:
        raise ValidationError("raster dimensions must be >= 1")
    stride = max(1, math.floor(tile_size * (1.0 - overlap_fraction)))
    xs = _axis_origins(width, tile_size, stride)
    ys = _axis_origins(height, tile_size, stride)
    tiles = []
    for y in ys:
        for x in xs:
            tiles.append(
                TileRect(
                    x0=x,
                    y0=y,
                    size=tile_size,
                    touches_left=x == 0,
                    touches_top=y == 0,
                    touches_right=x + tile_size >= width,
                    touches_bottom=y + tile_size >= height,
                )
            )
    return tiles


def extract_tile(raster: GeoRaster, rect: TileRect) -> TileImage:
    """Cut a tile out of the raster, zero-padding past the raster edge."""
    if rect.x0 < 0 or rect.y0 < 0:
        raise ValidationError("tile rect has negative origin")
    if rect.x0 + rect.size > max(raster.width, rect.size) or rect.y0 + rect.size > max(
        raster.height, rect.size
    ):
        raise ValidationError("tile rect inconsistent with raster dimensions")
    if rect.x0 > 0 and rect.x1 > raster.width:
        raise ValidationError("tile rect extends past the raster without being a padded full-cover tile")
    if rect.y0 > 0 and rect.y1 > raster.height:
        raise ValidationError("tile rect extends past the raster without being a padded full-cover tile")

    valid_w = min(rect.size, raster.width - rect.x0)
    valid_h = min(rect.size, raster.height - rect.y0)
    src = raster.pixels[rect.y0 : rect.y0 + valid_h, rect.x0 : rect.x0 + valid_w]
    if valid_w == rect.size and valid_h == rect.size:
        block = src.copy()
    else:
        shape = (rect.size, rect.size) + raster.pixels.shape[2:]
        block = np.zeros(shape, dtype=raster.pixels.dtype)
        block[:valid_h, :valid_w] = src
    return TileImage(
        pixels=block,
        transform=raster.transform.translated(rect.x0, rect.y0),
        rect=rect,
        valid_width=valid_w,
        valid_height=valid_h,
    )


def compute_chm(dsm: GeoRaster, dem: GeoRaster) -> GeoRaster:
    """Canopy height model on the DSM grid: DSM minus bilinearly resampled DEM.

    Negative heights are clamped to zero; nodata in either input propagates.
    """
    if dsm.crs != dem.crs:
        raise ValidationError(f"CRS mismatch: DSM {dsm.crs!r} vs DEM {dem.crs!r}")
    if dsm.bands != 1 or dem.bands != 1:
        raise ValidationError("CHM inputs must be single-band height rasters")
    db = dsm.world_bounds()
    eb = dem.world_bounds()
    if db[0] >= eb[2] or db[2] <= eb[0] or db[1] >= eb[3] or db[3] <= eb[1]:
        raise ValidationError("DSM and DEM extents do not overlap")

    dsm_vals = np.asarray(dsm.pixels, dtype=np.float64)
    dem_vals = np.asarray(dem.pixels, dtype=np.float64).copy()
    if dem.nodata is not None:
        dem_vals[dem_vals == dem.nodata] = np.nan

    # World coordinates of DSM cell centers, expressed as fractional DEM
    # pixel-center indices.
    t, u = dsm.transform, dem.transform
    cols = t.origin_x + (np.arange(dsm.width) + 0.5) * t.scale_x
    rows = t.origin_y + (np.arange(dsm.height) + 0.5) * t.scale_y
    fx = (cols - u.origin_x) / u.scale_x - 0.5
    fy = (rows - u.origin_y) / u.scale_y - 0.5

    # Bilinear sample with edge clamping (DEM treated as constant past its rim).
    def sample_axis(f, n):
        i0 = np.clip(np.floor(f).astype(int), 0, n - 1)
        i1 = np.clip(i0 + 1, 0, n - 1)
        w = np.clip(f - np.floor(f), 0.0, 1.0)
        w[f < 0] = 0.0
        w[f > n - 1] = 1.0
        return i0, i1, w

    cx0, cx1, wx = sample_axis(fx, dem.width)
    cy0, cy1, wy = sample_axis(fy, dem.height)
    top = dem_vals[np.ix_(cy0, cx0)] * (1 - wx) + dem_vals[np.ix_(cy0, cx1)] * wx
    bot = dem_vals[np.ix_(cy1, cx0)] * (1 - wx) + dem_vals[np.ix_(cy1, cx1)] * wx
    dem_on_dsm = top * (1 - wy[:, None]) + bot * wy[:, None]

    chm = dsm_vals - dem_on_dsm
    np.clip(chm, 0.0, None, out=chm)

    nodata_mask = np.isnan(dem_on_dsm)
    if dsm.nodata is not None:
        nodata_mask |= dsm_vals == dsm.nodata
    out_nodata = dsm.nodata if dsm.nodata is not None else dem.nodata
    if nodata_mask.any():
        if out_nodata is None:
            out_nodata = -9999.0
        chm[nodata_mask] = out_nodata
    return GeoRaster(
        pixels=chm.astype(np.float32),
        transform=dsm.transform,
        crs=dsm.crs,
        nodata=out_nodata,
    )
