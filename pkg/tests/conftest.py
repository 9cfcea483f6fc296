import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from crownstitch.raster import AffineTransform, GeoRaster


@pytest.fixture
def unit_transform():
    return AffineTransform(0.0, 0.0, 1.0, -1.0)


def make_height_raster(values, origin=(0.0, 0.0), scale=1.0, crs="EPSG:32654", nodata=None):
    arr = np.asarray(values, dtype=np.float32)
    return GeoRaster(
        pixels=arr,
        transform=AffineTransform(origin[0], origin[1], scale, -scale),
        crs=crs,
        nodata=nodata,
    )


def make_rgb_raster(width, height, origin=(0.0, 0.0), scale=1.0, crs="EPSG:32654", fill=40):
    arr = np.full((height, width, 3), fill, dtype=np.uint8)
    return GeoRaster(
        pixels=arr,
        transform=AffineTransform(origin[0], origin[1], scale, -scale),
        crs=crs,
    )


def disk_mask(height, width, cy, cx, radius):
    yy, xx = np.mgrid[0:height, 0:width]
    return (yy - cy) ** 2 + (xx - cx) ** 2 <= radius**2


def pytest_terminal_summary(terminalreporter):
    # surface the acceptance criterion status lines past output capture
    try:
        from test_acceptance import STATUS_LINES
    except ImportError:
        return
    if STATUS_LINES:
        terminalreporter.section("acceptance criteria")
        for line in STATUS_LINES:
            terminalreporter.write_line(line)
