import numpy as np
import pytest

from conftest import disk_mask
from crownstitch.errors import ValidationError
from crownstitch.polygons import (
    PolygonGeo,
    clip_polygon_to_rect,
    polygon_iou,
    resolve_overlaps,
    vectorize_mask,
)
from crownstitch.raster import AffineTransform
from oracles import rect_intersection_area, rect_iou

UNIT = AffineTransform(0.0, 0.0, 1.0, 1.0)


def square(x0, y0, side, score=None, feature_id=None):
    return PolygonGeo(
        exterior=((x0, y0), (x0 + side, y0), (x0 + side, y0 + side), (x0, y0 + side), (x0, y0)),
        score=score,
        feature_id=feature_id,
    )


class TestPolygonGeo:
    def test_orientation_normalized(self):
        cw = PolygonGeo(exterior=((0, 0), (0, 1), (1, 1), (1, 0), (0, 0)))
        pts = np.asarray(cw.exterior)
        x, y = pts[:, 0], pts[:, 1]
        assert 0.5 * np.sum(x[:-1] * y[1:] - x[1:] * y[:-1]) > 0

    def test_rejects_open_ring(self):
        with pytest.raises(ValidationError):
            PolygonGeo(exterior=((0, 0), (1, 0), (1, 1), (0, 1)))

    def test_rejects_self_intersection(self):
        with pytest.raises(ValidationError):
            PolygonGeo(exterior=((0, 0), (1, 1), (1, 0), (0, 1), (0, 0)))

    def test_rejects_zero_area(self):
        with pytest.raises(ValidationError):
            PolygonGeo(exterior=((0, 0), (1, 0), (2, 0), (0, 0)))

    def test_area_and_centroid(self):
        sq = square(2, 3, 4)
        assert sq.area == pytest.approx(16.0)
        assert sq.centroid == pytest.approx((4.0, 5.0))


class TestVectorizeMask:
    def test_single_pixel(self):
        mask = np.zeros((3, 3), dtype=bool)
        mask[0, 0] = True
        poly = vectorize_mask(mask, UNIT)
        assert poly.area == pytest.approx(1.0)
        assert set(poly.exterior) == {(0, 0), (1, 0), (1, 1), (0, 1)} | {(0, 0)}

    def test_solid_rectangle(self):
        mask = np.zeros((5, 5), dtype=bool)
        mask[1:3, 1:4] = True  # 3 wide, 2 tall
        poly = vectorize_mask(mask, UNIT)
        assert poly.area == pytest.approx(6.0)
        assert len(poly.exterior) == 5  # collinear vertices merged

    def test_hole_dropped(self):
        mask = np.ones((5, 5), dtype=bool)
        mask[2, 2] = False
        poly = vectorize_mask(mask, UNIT)
        assert poly.area == pytest.approx(25.0)

    def test_largest_component_kept(self):
        mask = np.zeros((10, 10), dtype=bool)
        mask[0:2, 0:2] = True  # 4 px
        mask[5:9, 5:9] = True  # 16 px
        poly = vectorize_mask(mask, UNIT)
        assert poly.area == pytest.approx(16.0)

    def test_diagonal_pixels_are_separate_components(self):
        mask = np.zeros((4, 4), dtype=bool)
        mask[0, 0] = mask[1, 1] = True
        poly = vectorize_mask(mask, UNIT)
        assert poly.area == pytest.approx(1.0)

    def test_world_transform_applied(self):
        t = AffineTransform(100.0, 200.0, 0.5, -0.5)
        mask = np.zeros((4, 4), dtype=bool)
        mask[1:3, 1:3] = True
        poly = vectorize_mask(mask, t)
        assert poly.area == pytest.approx(4 * 0.25)
        xs = [p[0] for p in poly.exterior]
        assert min(xs) == pytest.approx(100.5)

    def test_empty_mask_rejected(self):
        with pytest.raises(ValidationError):
            vectorize_mask(np.zeros((3, 3), dtype=bool), UNIT)

    def test_area_matches_pixel_count_random_blobs(self):
        rng = np.random.default_rng(21)
        for _ in range(50):
            mask = np.zeros((40, 40), dtype=bool)
            for _ in range(rng.integers(1, 4)):
                cy, cx = rng.integers(8, 32, size=2)
                mask |= disk_mask(40, 40, cy, cx, rng.integers(3, 8))
            # restrict to the largest component, which is what gets traced
            from scipy import ndimage

            labels, n = ndimage.label(mask, structure=[[0, 1, 0], [1, 1, 1], [0, 1, 0]])
            counts = np.bincount(labels.ravel())
            counts[0] = 0
            # exterior-ring area equals the hole-filled pixel count
            largest = ndimage.binary_fill_holes(labels == counts.argmax()).sum()
            poly = vectorize_mask(mask, UNIT)
            assert poly.area == pytest.approx(largest, rel=1e-6)


class TestPolygonIou:
    def test_identical(self):
        assert polygon_iou(square(0, 0, 1), square(0, 0, 1)) == pytest.approx(1.0)

    def test_half_offset_squares(self):
        assert polygon_iou(square(0, 0, 1), square(0.5, 0, 1)) == pytest.approx(1 / 3)

    def test_touching_edges(self):
        assert polygon_iou(square(0, 0, 1), square(1, 0, 1)) == 0.0

    def test_matches_rectangle_oracle(self):
        rng = np.random.default_rng(13)
        for _ in range(50):
            ax, ay, bx, by = rng.uniform(0, 5, size=4)
            sa, sb = rng.uniform(0.5, 3, size=2)
            got = polygon_iou(square(ax, ay, sa), square(bx, by, sb))
            want = rect_iou((ax, ay, ax + sa, ay + sa), (bx, by, bx + sb, by + sb))
            assert got == pytest.approx(want, abs=1e-12)


class TestClipPolygonToRect:
    def test_fully_inside_unchanged(self):
        pieces = clip_polygon_to_rect(square(1, 1, 2), (0, 0, 10, 10))
        assert len(pieces) == 1
        assert pieces[0].area == pytest.approx(4.0)

    def test_fully_outside_empty(self):
        assert clip_polygon_to_rect(square(20, 20, 2), (0, 0, 10, 10)) == []

    def test_straddling_midline(self):
        pieces = clip_polygon_to_rect(square(-0.5, 0, 1), (0, 0, 10, 10))
        assert len(pieces) == 1
        assert pieces[0].area == pytest.approx(0.5)

    def test_min_fragment_area(self):
        pieces = clip_polygon_to_rect(square(-0.9, 0, 1), (0, 0, 10, 10), min_fragment_area=0.2)
        assert pieces == []

    def test_multi_piece_concave(self):
        # U-shape dipping below the rect: clipping keeps the two prongs.
        u = PolygonGeo(
            exterior=(
                (0, 0), (1, 0), (1, -2), (2, -2), (2, 0), (3, 0),
                (3, -3), (0, -3), (0, 0),
            )
        )
        pieces = clip_polygon_to_rect(u, (-1, -1.5, 4, 0.5))
        assert len(pieces) == 2

    def test_area_conservation(self):
        rng = np.random.default_rng(31)
        for _ in range(50):
            x0, y0 = rng.uniform(-2, 2, size=2)
            side = rng.uniform(0.5, 3)
            rect = (0.0, 0.0, 2.0, 2.0)
            poly = square(x0, y0, side)
            inside = sum(p.area for p in clip_polygon_to_rect(poly, rect))
            want = rect_intersection_area((x0, y0, x0 + side, y0 + side), rect)
            assert inside == pytest.approx(want, abs=1e-9)


class TestResolveOverlaps:
    def test_disjoint_unchanged(self):
        feats = [square(0, 0, 1, score=0.9), square(5, 5, 1, score=0.8)]
        out = resolve_overlaps(feats, min_crown_area=0.0)
        assert len(out) == 2
        assert [f.area for f in out] == pytest.approx([1.0, 1.0])

    def test_contained_lower_score_dropped(self):
        feats = [square(0, 0, 4, score=0.9), square(1, 1, 1, score=0.5)]
        out = resolve_overlaps(feats, min_crown_area=0.0)
        assert len(out) == 1
        assert out[0].area == pytest.approx(16.0)

    def test_partial_overlap_l_shape(self):
        feats = [square(0, 0, 1, score=0.9), square(0.5, 0.5, 1, score=0.8)]
        out = resolve_overlaps(feats, min_crown_area=0.0)
        assert len(out) == 2
        areas = sorted(f.area for f in out)
        assert areas[0] == pytest.approx(0.75)
        assert areas[1] == pytest.approx(1.0)

    def test_highest_score_kept_whole(self):
        top = square(0, 0, 2, score=0.95)
        feats = [square(1, 1, 2, score=0.8), top, square(-1, -1, 2, score=0.7)]
        out = resolve_overlaps(feats, min_crown_area=0.0)
        best = max(out, key=lambda f: f.score)
        assert best.area == pytest.approx(4.0)
        assert set(best.exterior) == set(top.exterior)

    def test_min_area_filter(self):
        feats = [square(0, 0, 2, score=0.9), square(1.9, 0, 2, score=0.8)]
        out = resolve_overlaps(feats, min_crown_area=3.9)
        assert len(out) == 1

    def test_nested_higher_score_inside(self):
        # High-score crown strictly inside a low-score one: the remainder is
        # sliced open, stays simple, and stays disjoint from the inner crown.
        inner = square(4, 4, 2, score=0.9)
        outer = square(0, 0, 10, score=0.5)
        out = resolve_overlaps([inner, outer], min_crown_area=0.0)
        assert len(out) == 2
        total_inter = out[0].to_shapely().intersection(out[1].to_shapely()).area
        assert total_inter < 1e-6

    def test_random_disjointness_and_area(self):
        rng = np.random.default_rng(17)
        for _ in range(30):
            feats = [
                square(
                    rng.uniform(0, 4),
                    rng.uniform(0, 4),
                    rng.uniform(0.5, 2.5),
                    score=float(rng.uniform(0, 1)),
                )
                for _ in range(rng.integers(2, 8))
            ]
            out = resolve_overlaps(feats, min_crown_area=0.0)
            assert sum(f.area for f in out) <= sum(f.area for f in feats) + 1e-9
            for i in range(len(out)):
                for j in range(i + 1, len(out)):
                    inter = out[i].to_shapely().intersection(out[j].to_shapely()).area
                    assert inter < 1e-6
