import numpy as np
import pytest
import tifffile

from crownstitch.errors import GeoreferenceError, ValidationError
from crownstitch.geojson_io import read_feature_collection, write_feature_collection
from crownstitch.polygons import PolygonGeo
from crownstitch.raster import AffineTransform, GeoRaster
from crownstitch.raster_io import dump_debug, read_geotiff, write_geotiff

TRANSFORM = AffineTransform(500000.0, 4000000.0, 0.25, -0.25)


def height_raster(nodata=None):
    rng = np.random.default_rng(0)
    pixels = rng.uniform(0, 30, size=(40, 60)).astype(np.float32)
    return GeoRaster(pixels=pixels, transform=TRANSFORM, crs="EPSG:32654", nodata=nodata)


class TestGeoTiffRoundTrip:
    def test_single_band(self, tmp_path):
        src = height_raster()
        path = tmp_path / "dem.tif"
        write_geotiff(path, src)
        got = read_geotiff(path)
        assert np.array_equal(got.pixels, src.pixels)
        assert got.transform == src.transform
        assert got.crs == "EPSG:32654"
        assert got.nodata is None

    def test_nodata_round_trip(self, tmp_path):
        src = height_raster(nodata=-9999.0)
        path = tmp_path / "dem.tif"
        write_geotiff(path, src)
        assert read_geotiff(path).nodata == -9999.0

    def test_rgb_round_trip(self, tmp_path):
        pixels = np.random.default_rng(1).integers(0, 256, size=(32, 48, 3), dtype=np.uint8)
        src = GeoRaster(pixels=pixels, transform=TRANSFORM, crs="EPSG:32654")
        path = tmp_path / "rgb.tif"
        write_geotiff(path, src)
        got = read_geotiff(path)
        assert np.array_equal(got.pixels, pixels)
        assert got.transform == TRANSFORM

    def test_tiepoint_offset_origin(self, tmp_path):
        # a tiepoint anchored away from pixel (0,0) must still yield the
        # raster-origin transform
        path = tmp_path / "t.tif"
        tifffile.imwrite(
            path,
            np.zeros((10, 10), dtype=np.float32),
            extratags=[
                (33550, "d", 3, (0.5, 0.5, 0.0)),
                (33922, "d", 6, (4.0, 6.0, 0.0, 102.0, 97.0, 0.0)),
            ],
        )
        got = read_geotiff(path, crs="EPSG:32654")
        assert got.transform == AffineTransform(100.0, 100.0, 0.5, -0.5)

    def test_model_transformation_accepted(self, tmp_path):
        path = tmp_path / "t.tif"
        matrix = (0.5, 0.0, 0.0, 100.0, 0.0, -0.5, 0.0, 200.0, 0, 0, 0, 0, 0, 0, 0, 1)
        tifffile.imwrite(
            path,
            np.zeros((10, 10), dtype=np.float32),
            extratags=[(34264, "d", 16, matrix)],
        )
        got = read_geotiff(path, crs="EPSG:32654")
        assert got.transform == AffineTransform(100.0, 200.0, 0.5, -0.5)

    def test_rotation_rejected(self, tmp_path):
        path = tmp_path / "t.tif"
        matrix = (0.5, 0.1, 0.0, 100.0, 0.1, -0.5, 0.0, 200.0, 0, 0, 0, 0, 0, 0, 0, 1)
        tifffile.imwrite(
            path,
            np.zeros((10, 10), dtype=np.float32),
            extratags=[(34264, "d", 16, matrix)],
        )
        with pytest.raises(GeoreferenceError):
            read_geotiff(path, crs="EPSG:32654")

    def test_plain_tiff_needs_explicit_transform(self, tmp_path):
        path = tmp_path / "plain.tif"
        tifffile.imwrite(path, np.zeros((8, 8), dtype=np.float32))
        with pytest.raises(GeoreferenceError):
            read_geotiff(path, crs="EPSG:32654")
        got = read_geotiff(path, transform=TRANSFORM, crs="EPSG:32654")
        assert got.transform == TRANSFORM

    def test_missing_crs_rejected(self, tmp_path):
        path = tmp_path / "plain.tif"
        tifffile.imwrite(path, np.zeros((8, 8), dtype=np.float32))
        with pytest.raises(GeoreferenceError):
            read_geotiff(path, transform=TRANSFORM)


class TestDebugDump:
    def test_sidecar_format(self, tmp_path):
        src = height_raster()
        png = tmp_path / "dbg.png"
        dump_debug(src, png)
        assert png.exists()
        sidecar = tmp_path / "dbg.transform.txt"
        lines = sidecar.read_text().splitlines()
        assert len(lines) == 6
        got = [float(v) for v in lines]
        assert got == [500000.0, 0.25, 0.0, 4000000.0, 0.0, -0.25]
        # repr round trip exactness
        assert [repr(v) for v in got] == lines


def square(x0, y0, side, score=None, feature_id=None):
    pts = ((x0, y0), (x0 + side, y0), (x0 + side, y0 + side), (x0, y0 + side), (x0, y0))
    return PolygonGeo(exterior=pts, score=score, feature_id=feature_id)


class TestGeoJson:
    def test_round_trip(self, tmp_path):
        feats = [square(10 * i, 5, 3, score=0.5 + 0.1 * i, feature_id=f"crown_{i:05d}") for i in range(3)]
        path = tmp_path / "crowns.geojson"
        write_feature_collection(feats, path, crs="EPSG:32654")
        polys, crs = read_feature_collection(path)
        assert crs == "EPSG:32654"
        assert len(polys) == 3
        for a, b in zip(polys, feats):
            assert a.exterior == b.exterior
            assert a.score == pytest.approx(b.score)
            assert a.feature_id == b.feature_id

    def test_properties_written(self, tmp_path):
        import json

        feats = [square(0, 0, 2, score=0.75, feature_id="crown_00000")]
        path = tmp_path / "c.geojson"
        write_feature_collection(feats, path, crs="EPSG:32654")
        obj = json.loads(path.read_text())
        props = obj["features"][0]["properties"]
        assert props["id"] == "crown_00000"
        assert props["score"] == 0.75
        assert props["area_m2"] == pytest.approx(4.0)
        assert obj["crs"]["properties"]["name"] == "urn:ogc:def:crs:EPSG::32654"

    def test_invalid_features_reported_by_index(self, tmp_path):
        import json

        payload = {
            "type": "FeatureCollection",
            "crs": {"type": "name", "properties": {"name": "urn:ogc:def:crs:EPSG::32654"}},
            "features": [
                {
                    "type": "Feature",
                    "geometry": {"type": "Polygon", "coordinates": [[[0, 0], [2, 0], [2, 2], [0, 2], [0, 0]]]},
                    "properties": {},
                },
                {"type": "Feature", "geometry": {"type": "LineString", "coordinates": [[0, 0], [1, 1]]}, "properties": {}},
                {
                    "type": "Feature",
                    "geometry": {"type": "Polygon", "coordinates": [[[0, 0], [1, 1], [1, 0], [0, 1], [0, 0]]]},
                    "properties": {},
                },
            ],
        }
        path = tmp_path / "bad.geojson"
        path.write_text(json.dumps(payload))
        with pytest.raises(ValidationError) as err:
            read_feature_collection(path)
        assert "feature 1" in str(err.value)
        assert "feature 2" in str(err.value)

    def test_missing_crs(self, tmp_path):
        import json

        path = tmp_path / "c.geojson"
        path.write_text(json.dumps({"type": "FeatureCollection", "features": []}))
        with pytest.raises(ValidationError):
            read_feature_collection(path)
        assert read_feature_collection(path, crs="EPSG:4326")[1] == "EPSG:4326"
