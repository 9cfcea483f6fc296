"""GeoTIFF reading/writing and the PNG + sidecar debug dump.

Georeferencing uses the standard ModelPixelScale + ModelTiepoint tags plus a
minimal GeoKey directory carrying the EPSG code. ModelTransformation matrices
are accepted only when rotation-free (north-up rasters only).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import tifffile
from PIL import Image

from .errors import GeoreferenceError, ValidationError
from .raster import AffineTransform, GeoRaster

_TAG_PIXEL_SCALE = 33550
_TAG_TIEPOINT = 33922
_TAG_TRANSFORMATION = 34264
_TAG_GEO_KEYS = 34735
_TAG_GDAL_NODATA = 42113

_KEY_MODEL_TYPE = 1024
_KEY_RASTER_TYPE = 1025
_KEY_GEOGRAPHIC_CS = 2048
_KEY_PROJECTED_CS = 3072


def _epsg_from_geokeys(values) -> str | None:
    vals = list(values)
    if len(vals) < 4:
        return None
    num_keys = vals[3]
    code = None
    for k in range(num_keys):
        key_id, location, _count, value = vals[4 + 4 * k : 8 + 4 * k]
        if location != 0:
            continue
        if key_id == _KEY_PROJECTED_CS:
            return f"EPSG:{value}"
        if key_id == _KEY_GEOGRAPHIC_CS:
            code = f"EPSG:{value}"
    return code


def read_geotiff(path, transform: AffineTransform | None = None, crs: str | None = None) -> GeoRaster:
    """Read a single- or 3-band GeoTIFF (tiled or stripped).

    A non-georeferenced TIFF is accepted only when an explicit transform is
    supplied; `crs` overrides or supplies the coordinate system tag.
    """
    path = Path(path)
    with tifffile.TiffFile(path) as tif:
        page = tif.pages[0]
        data = page.asarray()
        tags = {t.code: t.value for t in page.tags.values()}

    if data.ndim == 3 and data.shape[2] == 1:
        data = data[:, :, 0]
    if data.ndim not in (2, 3):
        raise ValidationError(f"{path}: unsupported band layout {data.shape}")

    file_transform = None
    if _TAG_TRANSFORMATION in tags:
        m = np.asarray(tags[_TAG_TRANSFORMATION], dtype=float).reshape(4, 4)
        if m[0, 1] != 0 or m[1, 0] != 0:
            raise GeoreferenceError(f"{path}: rotated geotransforms are not supported")
        file_transform = AffineTransform(m[0, 3], m[1, 3], m[0, 0], m[1, 1])
    elif _TAG_PIXEL_SCALE in tags and _TAG_TIEPOINT in tags:
        sx, sy, _sz = tags[_TAG_PIXEL_SCALE][:3]
        tp = tags[_TAG_TIEPOINT]
        i, j, _k, x, y, _z = tp[:6]
        file_transform = AffineTransform(x - i * sx, y + j * sy, sx, -sy)

    if transform is None:
        transform = file_transform
    if transform is None:
        raise GeoreferenceError(
            f"{path}: no georeferencing tags; supply an explicit transform"
        )

    file_crs = None
    if _TAG_GEO_KEYS in tags:
        file_crs = _epsg_from_geokeys(tags[_TAG_GEO_KEYS])
    crs = crs or file_crs
    if crs is None:
        raise GeoreferenceError(f"{path}: no CRS tag; supply one explicitly")

    nodata = None
    if _TAG_GDAL_NODATA in tags:
        try:
            nodata = float(str(tags[_TAG_GDAL_NODATA]).strip("\x00 "))
        except ValueError:
            nodata = None
    if data.ndim == 3:
        nodata = None  # nodata applies to height grids only
    return GeoRaster(pixels=data, transform=transform, crs=crs, nodata=nodata)


def write_geotiff(path, raster: GeoRaster) -> None:
    """Write a GeoTIFF with PixelScale/Tiepoint georeferencing and EPSG geokeys."""
    t = raster.transform
    if t.scale_y >= 0:
        raise GeoreferenceError("GeoTIFF writer expects a north-up raster (scale_y < 0)")
    extratags = [
        (_TAG_PIXEL_SCALE, "d", 3, (t.scale_x, -t.scale_y, 0.0)),
        (_TAG_TIEPOINT, "d", 6, (0.0, 0.0, 0.0, t.origin_x, t.origin_y, 0.0)),
    ]
    if raster.crs.upper().startswith("EPSG:"):
        code = int(raster.crs.split(":")[1])
        geokeys = (
            1, 1, 0, 3,
            _KEY_MODEL_TYPE, 0, 1, 1,
            _KEY_RASTER_TYPE, 0, 1, 1,
            _KEY_PROJECTED_CS, 0, 1, code,
        )
        extratags.append((_TAG_GEO_KEYS, "H", len(geokeys), geokeys))
    if raster.nodata is not None:
        text = repr(float(raster.nodata))
        extratags.append((_TAG_GDAL_NODATA, "s", len(text) + 1, text))
    photometric = "rgb" if raster.bands == 3 else "minisblack"
    tifffile.imwrite(path, raster.pixels, photometric=photometric, extratags=extratags)


def dump_debug(raster: GeoRaster, png_path, sidecar_path=None) -> None:
    """PNG preview plus sidecar text file with the six affine numbers.

    Sidecar lines, in order: origin_x, scale_x, 0.0, origin_y, 0.0, scale_y
    (GDAL geotransform order), one repr'd float per line.
    """
    png_path = Path(png_path)
    if sidecar_path is None:
        sidecar_path = png_path.with_suffix(".transform.txt")
    data = raster.pixels
    if data.ndim == 2:
        finite = data[np.isfinite(data)]
        lo = float(finite.min()) if finite.size else 0.0
        hi = float(finite.max()) if finite.size else 1.0
        scale = 255.0 / (hi - lo) if hi > lo else 0.0
        img = np.clip((data - lo) * scale, 0, 255).astype(np.uint8)
    else:
        img = data.astype(np.uint8)
    Image.fromarray(img).save(png_path)
    t = raster.transform
    numbers = [t.origin_x, t.scale_x, 0.0, t.origin_y, 0.0, t.scale_y]
    Path(sidecar_path).write_text("".join(f"{repr(float(v))}\n" for v in numbers))
