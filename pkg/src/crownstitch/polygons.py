"""Crown polygons: mask vectorization, IoU, clipping, and overlap resolution.

Polygons are simple exterior rings in world coordinates (holes are dropped;
a crown is treated as simply connected). Boolean operations are delegated to
shapely; the mask-boundary tracer is our own, so vectorized polygons have
areas that agree exactly with pixel counts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.ndimage as ndimage
import shapely
import shapely.geometry as sgeom
from shapely.validation import make_valid

from .errors import ValidationError
from .raster import AffineTransform

_CROSS_STRUCTURE = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)

# Output polygons of resolve_overlaps must be pairwise disjoint to this
# intersection-area tolerance (square world units).
DISJOINT_TOL = 1e-6


def _shoelace(points: np.ndarray) -> float:
    x = points[:, 0]
    y = points[:, 1]
    return 0.5 * float(np.sum(x[:-1] * y[1:] - x[1:] * y[:-1]))


@dataclass
class PolygonGeo:
    """Simple closed exterior ring (first point repeated last), CCW oriented."""

    exterior: tuple[tuple[float, float], ...]
    score: float | None = None
    feature_id: str | None = None
    _shapely: sgeom.Polygon | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        pts = np.asarray(self.exterior, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 4:
            raise ValidationError("polygon ring needs >= 4 points including closure")
        if not np.array_equal(pts[0], pts[-1]):
            raise ValidationError("polygon ring must be closed (first point == last)")
        area = _shoelace(pts)
        if area == 0.0:
            raise ValidationError("degenerate polygon with zero area")
        if area < 0:
            pts = pts[::-1]
        poly = sgeom.Polygon(pts)
        if not poly.is_valid:
            raise ValidationError(f"polygon ring is not simple: {shapely.is_valid_reason(poly)}")
        if self.score is not None and not 0.0 <= self.score <= 1.0:
            raise ValidationError(f"score {self.score} outside [0, 1]")
        self.exterior = tuple((float(x), float(y)) for x, y in pts)
        self._shapely = poly

    @property
    def area(self) -> float:
        return abs(_shoelace(np.asarray(self.exterior)))

    @property
    def centroid(self) -> tuple[float, float]:
        c = self.to_shapely().centroid
        return (c.x, c.y)

    def to_shapely(self) -> sgeom.Polygon:
        if self._shapely is None:
            self._shapely = sgeom.Polygon(self.exterior)
        return self._shapely

    @classmethod
    def from_shapely(
        cls, poly: sgeom.Polygon, score: float | None = None, feature_id: str | None = None
    ) -> "PolygonGeo":
        """Build from a shapely polygon, keeping the exterior ring only."""
        return cls(exterior=tuple(poly.exterior.coords), score=score, feature_id=feature_id)

    def mapped(self, fn) -> "PolygonGeo":
        """Apply a coordinate mapping (x, y) -> (x', y') to every vertex."""
        return PolygonGeo(
            exterior=tuple(fn(x, y) for x, y in self.exterior),
            score=self.score,
            feature_id=self.feature_id,
        )


def _boundary_edges(mask: np.ndarray) -> dict:
    """Directed unit edges along the pixel boundary, keyed by start vertex.

    Each set pixel contributes the sides it does not share with another set
    pixel, oriented so exterior rings have positive shoelace in pixel coords.
    """
    m = np.asarray(mask, dtype=bool)
    up = np.zeros_like(m)
    up[1:, :] = m[:-1, :]
    down = np.zeros_like(m)
    down[:-1, :] = m[1:, :]
    left = np.zeros_like(m)
    left[:, 1:] = m[:, :-1]
    right = np.zeros_like(m)
    right[:, :-1] = m[:, 1:]

    edges: dict[tuple[int, int], list[tuple[int, int]]] = {}

    def add(starts_r, starts_c, dr0, dc0, dr1, dc1):
        for r, c in zip(starts_r.tolist(), starts_c.tolist()):
            edges.setdefault((c + dc0, r + dr0), []).append((c + dc1, r + dr1))

    r, c = np.nonzero(m & ~up)
    add(r, c, 0, 0, 0, 1)  # top: (c, r) -> (c+1, r)
    r, c = np.nonzero(m & ~right)
    add(r, c, 0, 1, 1, 1)  # right: (c+1, r) -> (c+1, r+1)
    r, c = np.nonzero(m & ~down)
    add(r, c, 1, 1, 1, 0)  # bottom: (c+1, r+1) -> (c, r+1)
    r, c = np.nonzero(m & ~left)
    add(r, c, 1, 0, 0, 0)  # left: (c, r+1) -> (c, r)
    return edges


def _chain_rings(edges: dict) -> list[np.ndarray]:
    """Chain directed edges into closed rings, merging collinear vertices."""
    rings = []
    while edges:
        start = next(iter(edges))
        ring = [start]
        cur = start
        prev_dir = None
        while True:
            outs = edges[cur]
            if len(outs) == 1 or prev_dir is None:
                nxt = outs.pop(0)
            else:
                # Pinch vertex: prefer the sharpest clockwise turn so the
                # traversal stays on one lobe and the ring closes.
                def turn(end):
                    d = (end[0] - cur[0], end[1] - cur[1])
                    return prev_dir[0] * d[1] - prev_dir[1] * d[0]

                nxt = min(outs, key=turn)
                outs.remove(nxt)
            if not outs:
                del edges[cur]
            prev_dir = (nxt[0] - cur[0], nxt[1] - cur[1])
            cur = nxt
            ring.append(cur)
            if cur == start:
                break
        pts = np.asarray(ring, dtype=float)
        # Merge collinear runs (all edges are axis-aligned unit steps).
        d = np.diff(pts, axis=0)
        keep = np.ones(len(pts), dtype=bool)
        keep[1:-1] = np.any(d[1:] != d[:-1], axis=1)
        pts = pts[keep]
        # The seam vertex may itself be collinear (ring started mid-edge).
        if len(pts) > 4 and np.array_equal(pts[1] - pts[0], pts[-1] - pts[-2]):
            pts = np.vstack([pts[1:-1], pts[1]])
        rings.append(pts)
    return rings


def vectorize_mask(mask: np.ndarray, transform: AffineTransform) -> PolygonGeo:
    """Exterior outline of the largest 4-connected component, in world coordinates.

    Ring vertices lie on pixel corners, so the polygon area equals the pixel
    count times the pixel area for hole-free components (holes are dropped).
    """
    m = np.asarray(mask, dtype=bool)
    if not m.any():
        raise ValidationError("cannot vectorize an empty mask")
    labels, n = ndimage.label(m, structure=_CROSS_STRUCTURE)
    if n > 1:
        counts = np.bincount(labels.ravel())
        counts[0] = 0
        m = labels == int(np.argmax(counts))
    rings = _chain_rings(_boundary_edges(m))
    exterior = max(rings, key=lambda r: abs(_shoelace(r)))
    world = [transform.pixel_to_world(px, py) for px, py in exterior]
    try:
        return PolygonGeo(exterior=tuple(world))
    except ValidationError:
        # Pinched component: fall back to shapely validity repair and keep
        # the largest simple piece.
        fixed = make_valid(sgeom.Polygon(world))
        pieces = _as_polygons(fixed)
        if not pieces:
            raise
        return PolygonGeo.from_shapely(max(pieces, key=lambda p: p.area))


def _as_polygons(geom) -> list[sgeom.Polygon]:
    if geom.is_empty:
        return []
    if isinstance(geom, sgeom.Polygon):
        return [geom]
    if hasattr(geom, "geoms"):
        out = []
        for g in geom.geoms:
            out.extend(_as_polygons(g))
        return out
    return []


def polygon_iou(a: PolygonGeo, b: PolygonGeo) -> float:
    """Area IoU of two polygons (0 for disjoint or edge-touching pairs)."""
    pa, pb = a.to_shapely(), b.to_shapely()
    if pa.area == 0 or pb.area == 0:
        raise ValidationError("polygon_iou requires non-degenerate polygons")
    inter = pa.intersection(pb).area
    if inter == 0.0:
        return 0.0
    return inter / pa.union(pb).area


def clip_polygon_to_rect(
    poly: PolygonGeo,
    rect: tuple[float, float, float, float],
    min_fragment_area: float = 0.0,
) -> list[PolygonGeo]:
    """Clip to an axis-aligned (xmin, ymin, xmax, ymax) rectangle.

    Returns zero, one, or several simple pieces; pieces smaller than
    min_fragment_area are discarded.
    """
    xmin, ymin, xmax, ymax = rect
    box = sgeom.box(xmin, ymin, xmax, ymax)
    pieces = _as_polygons(poly.to_shapely().intersection(box))
    out = []
    for p in sorted(pieces, key=lambda p: p.area, reverse=True):
        if p.area >= min_fragment_area and p.area > 0:
            out.append(PolygonGeo.from_shapely(p, score=poly.score, feature_id=poly.feature_id))
    return out


def _largest_simple_piece(geom) -> sgeom.Polygon | None:
    """Largest hole-free simple polygon contained in geom.

    Polygons with interior rings are sliced open with hairline cuts through
    each hole so the result stays disjoint from whatever carved the hole.
    """
    pieces = _as_polygons(geom)
    if not pieces:
        return None
    best = max(pieces, key=lambda p: p.area)
    if not best.interiors:
        return best
    cut_w = 1e-9 * max(best.bounds[2] - best.bounds[0], 1e-12)
    cuts = []
    ymin, ymax = best.bounds[1] - 1.0, best.bounds[3] + 1.0
    for ring in best.interiors:
        cx = sgeom.Polygon(ring).centroid.x
        cuts.append(sgeom.box(cx - cut_w, ymin, cx + cut_w, ymax))
    sliced = best.difference(shapely.union_all(cuts))
    pieces = [p for p in _as_polygons(sliced) if not p.interiors]
    if not pieces:
        return None
    return max(pieces, key=lambda p: p.area)


def resolve_overlaps(
    features: list[PolygonGeo], min_crown_area: float = 1.0
) -> list[PolygonGeo]:
    """Make crown polygons pairwise disjoint, favouring higher scores.

    Features are visited in descending score (ties: larger area, then feature
    id, then input order); each is replaced by its difference with everything
    already accepted. Multi-piece differences keep only the largest piece;
    results below min_crown_area are dropped.
    """
    order = sorted(
        range(len(features)),
        key=lambda i: (
            -(features[i].score if features[i].score is not None else 0.0),
            -features[i].area,
            features[i].feature_id or "",
            i,
        ),
    )
    accepted: list[PolygonGeo] = []
    accepted_shapely: list[sgeom.Polygon] = []
    for i in order:
        feat = features[i]
        geom = feat.to_shapely()
        for other in accepted_shapely:
            if geom.is_empty:
                break
            ob = other.bounds
            gb = geom.bounds
            if gb[0] >= ob[2] or gb[2] <= ob[0] or gb[1] >= ob[3] or gb[3] <= ob[1]:
                continue
            geom = geom.difference(other)
        piece = _largest_simple_piece(geom)
        if piece is None or piece.area < min_crown_area:
            continue
        accepted.append(
            PolygonGeo.from_shapely(piece, score=feat.score, feature_id=feat.feature_id)
        )
        accepted_shapely.append(piece)
    return accepted
