import json
import sys
import textwrap

import numpy as np
import pytest

from conftest import disk_mask
from crownstitch.backends import (
    ExternalBackend,
    FixtureBackend,
    InstancePrediction,
    WatershedBackend,
    WatershedParams,
    watershed_segment,
)
from crownstitch.errors import BackendError, ProtocolError, ValidationError
from crownstitch.masks import rle_decode, rle_encode
from crownstitch.raster import AffineTransform, TileImage, TileRect
from oracles import oracle_watershed


def gaussian_bump(shape, cy, cx, peak, sigma):
    yy, xx = np.mgrid[0 : shape[0], 0 : shape[1]]
    return peak * np.exp(-(((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma**2)))


def as_tile(pixels, size=None):
    size = size or pixels.shape[0]
    return TileImage(
        pixels=pixels,
        transform=AffineTransform(0, 0, 1.0, -1.0),
        rect=TileRect(0, 0, size),
        valid_width=pixels.shape[1],
        valid_height=pixels.shape[0],
    )


class TestWatershedSegment:
    def test_flat_low_field_empty(self):
        chm = np.ones((128, 128), dtype=np.float32)  # below min_height 2 m
        assert watershed_segment(chm) == []

    def test_all_zero_empty(self):
        assert watershed_segment(np.zeros((64, 64))) == []

    def test_single_bump_one_instance(self):
        chm = gaussian_bump((128, 128), 64, 64, peak=15.0, sigma=12.0)
        preds = watershed_segment(chm)
        assert len(preds) == 1
        assert 0.05 <= preds[0].score <= 0.99

    def test_two_bumps_partition_above_threshold_region(self):
        chm = gaussian_bump((128, 128), 64, 34, 15.0, 12.0) + gaussian_bump(
            (128, 128), 64, 94, 15.0, 12.0
        )
        params = WatershedParams()
        preds = watershed_segment(chm, params)
        assert len(preds) == 2
        masks = [rle_decode(p.mask) for p in preds]
        assert not (masks[0] & masks[1]).any()
        import scipy.ndimage as ndimage

        smoothed = ndimage.gaussian_filter(chm, params.smoothing_sigma)
        region = smoothed >= params.min_height
        assert np.array_equal(masks[0] | masks[1], region)

    def test_matches_reference_flood(self):
        # small grid, compare against the brute-force priority flood
        chm = gaussian_bump((48, 48), 24, 12, 18.0, 6.0) + gaussian_bump(
            (48, 48), 24, 36, 14.0, 6.0
        )
        params = WatershedParams(
            smoothing_sigma=2.0, min_treetop_distance=6, min_height=2.0, min_crown_pixels=10
        )
        preds = watershed_segment(chm, params)
        assert len(preds) == 2

        import scipy.ndimage as ndimage

        smoothed = ndimage.gaussian_filter(np.asarray(chm, dtype=np.float64), 2.0)
        region = smoothed >= 2.0
        # seeds: highest smoothed pixel of each bump
        half = region.copy()
        half[:, 24:] = False
        r0, c0 = np.unravel_index(np.where(half, smoothed, -np.inf).argmax(), smoothed.shape)
        half = region.copy()
        half[:, :24] = False
        r1, c1 = np.unravel_index(np.where(half, smoothed, -np.inf).argmax(), smoothed.shape)
        labels = oracle_watershed(
            smoothed.tolist(), {(int(r0), int(c0)): 1, (int(r1), int(c1)): 2}, region.tolist()
        )
        want = [np.array(labels) == k for k in (1, 2)]
        got = [rle_decode(p.mask) for p in preds]
        for g, w in zip(got, want):
            inter = np.count_nonzero(g & w)
            union = np.count_nonzero(g | w)
            assert inter / union >= 0.995

    def test_deterministic(self):
        chm = gaussian_bump((96, 96), 40, 40, 16.0, 10.0)
        a = watershed_segment(chm)
        b = watershed_segment(chm)
        assert [(p.score, p.mask) for p in a] == [(p.score, p.mask) for p in b]

    def test_min_height_monotonic(self):
        rng = np.random.default_rng(8)
        chm = np.zeros((128, 128))
        for _ in range(4):
            cy, cx = rng.integers(20, 108, size=2)
            chm += gaussian_bump((128, 128), cy, cx, rng.uniform(5, 20), 10.0)
        counts = []
        for h in (1.0, 3.0, 6.0, 12.0):
            params = WatershedParams(min_height=h, min_crown_pixels=10)
            counts.append(len(watershed_segment(chm, params)))
        assert counts == sorted(counts, reverse=True)

    def test_score_formula(self):
        chm = gaussian_bump((96, 96), 48, 48, 30.0, 10.0)
        preds = watershed_segment(chm)
        import scipy.ndimage as ndimage

        peak = ndimage.gaussian_filter(chm, 5.0).max()
        assert preds[0].score == pytest.approx(np.clip(peak / 40.0, 0.05, 0.99))

    def test_rejects_multiband(self):
        with pytest.raises(ValidationError):
            watershed_segment(np.zeros((8, 8, 3)))

    def test_params_validation(self):
        with pytest.raises(ValidationError):
            WatershedParams(min_height=-1.0)


class TestWatershedBackend:
    def test_requires_chm(self):
        backend = WatershedBackend()
        with pytest.raises(ValidationError):
            backend.predict_tile("t", None, None)

    def test_zero_chm_tile_empty(self):
        backend = WatershedBackend()
        tile = as_tile(np.zeros((64, 64), dtype=np.float32))
        assert backend.predict_tile("t", None, tile) == []


class TestFixtureBackend:
    def test_replay(self, tmp_path):
        mask = disk_mask(32, 32, 16, 16, 6)
        preds = [InstancePrediction(score=0.7, mask=rle_encode(mask), tile_id="tile_00001")]
        FixtureBackend.store(tmp_path, "tile_00001", preds)
        backend = FixtureBackend(tmp_path)
        got = backend.predict_tile("tile_00001", None, None)
        assert len(got) == 1
        assert got[0].score == 0.7
        assert np.array_equal(rle_decode(got[0].mask), mask)

    def test_missing_tile_empty(self, tmp_path):
        backend = FixtureBackend(tmp_path)
        assert backend.predict_tile("nope", None, None) == []

    def test_missing_directory(self, tmp_path):
        with pytest.raises(ValidationError):
            FixtureBackend(tmp_path / "absent")


DUMMY_SERVER = textwrap.dedent(
    """
    import json, sys
    mode = sys.argv[1] if len(sys.argv) > 1 else "empty"
    for line in sys.stdin:
        req = json.loads(line)
        if req["type"] == "hello":
            if mode == "badproto":
                print(json.dumps({"type": "hello", "protocol": 99, "name": "bad"}))
            else:
                print(json.dumps({"type": "hello", "protocol": 1, "name": "dummy"}))
        elif req["type"] == "predict":
            w, h = req["width"], req["height"]
            if mode == "badrle":
                inst = {"score": 0.5, "rle": {"size": [h, w], "counts": [1]}}
                print(json.dumps({"type": "result", "tile_id": req["tile_id"],
                                  "instances": [inst]}))
            elif mode == "error":
                print(json.dumps({"type": "error", "message": "boom"}))
            else:
                print(json.dumps({"type": "result", "tile_id": req["tile_id"],
                                  "instances": []}))
        sys.stdout.flush()
    """
)


@pytest.fixture
def dummy_server(tmp_path):
    path = tmp_path / "server.py"
    path.write_text(DUMMY_SERVER)
    return path


class TestExternalBackend:
    def command(self, path, mode="empty"):
        return f"{sys.executable} {path} {mode}"

    def test_handshake_and_empty_predict(self, dummy_server):
        with ExternalBackend(self.command(dummy_server)) as backend:
            assert backend.name == "dummy"
            tile = as_tile(np.zeros((16, 16, 3), dtype=np.uint8))
            assert backend.predict_tile("tile_00000", tile, None) == []

    def test_protocol_mismatch_fatal(self, dummy_server):
        with pytest.raises(ProtocolError):
            ExternalBackend(self.command(dummy_server, "badproto"))

    def test_bad_rle_names_instance(self, dummy_server):
        with ExternalBackend(self.command(dummy_server, "badrle")) as backend:
            tile = as_tile(np.zeros((8, 8, 3), dtype=np.uint8))
            with pytest.raises(BackendError, match="instance 0"):
                backend.predict_tile("tile_00000", tile, None)

    def test_error_response_is_per_tile(self, dummy_server):
        with ExternalBackend(self.command(dummy_server, "error")) as backend:
            tile = as_tile(np.zeros((8, 8, 3), dtype=np.uint8))
            with pytest.raises(BackendError, match="boom"):
                backend.predict_tile("tile_00000", tile, None)

    def test_timeout(self, tmp_path):
        slow = tmp_path / "slow.py"
        slow.write_text("import time\ntime.sleep(60)\n")
        with pytest.raises((ProtocolError, BackendError)):
            ExternalBackend(f"{sys.executable} {slow}", timeout=0.5)
