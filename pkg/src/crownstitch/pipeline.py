"""End-to-end tiled inference: predict, filter, fuse across tiles, vectorize.

Stage order follows the inference recipe: tile grid -> backend predictions ->
score filter -> tile-edge instance removal -> cross-tile IoU merging ->
polygonization -> overlap resolution -> minimum-area filter.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .backends.base import InstancePrediction, SegmentationBackend
from .errors import BackendError, PipelineError, ValidationError
from .masks import rle_decode
from .polygons import PolygonGeo, polygon_iou, resolve_overlaps, vectorize_mask
from .raster import GeoRaster, TileRect, compute_tile_grid, extract_tile


@dataclass(frozen=True)
class InferenceConfig:
    tile_size: int = 1024
    overlap: float = 0.8
    score_threshold: float = 0.3
    merge_iou: float = 0.1
    min_crown_area: float = 1.0  # m²

    def __post_init__(self):
        if not 0.0 <= self.score_threshold <= 1.0:
            raise ValidationError("score_threshold must be in [0, 1]")
        if not 0.0 <= self.merge_iou <= 1.0:
            raise ValidationError("merge_iou must be in [0, 1]")
        if not 0.0 <= self.overlap < 1.0:
            raise ValidationError("overlap must be in [0, 1)")

    def as_dict(self) -> dict:
        return {
            "tile_size": self.tile_size,
            "overlap": self.overlap,
            "score_threshold": self.score_threshold,
            "merge_iou": self.merge_iou,
            "min_crown_area": self.min_crown_area,
        }


@dataclass
class PlacedInstance:
    """Instance mask cropped to its bounding box, placed in the mosaic pixel frame."""

    score: float
    mask: np.ndarray  # bool, cropped to content
    x0: int  # mosaic pixel column of mask[:, 0]
    y0: int  # mosaic pixel row of mask[0, :]

    @property
    def bbox(self) -> tuple[int, int, int, int]:
        return (self.x0, self.y0, self.x0 + self.mask.shape[1], self.y0 + self.mask.shape[0])

    @property
    def pixel_count(self) -> int:
        return int(np.count_nonzero(self.mask))


@dataclass
class CrownFeature:
    """Final fused, georeferenced crown."""

    feature_id: str
    polygon: PolygonGeo
    score: float
    area_m2: float
    centroid: tuple[float, float]


@dataclass
class RunReport:
    tile_count: int = 0
    failed_tiles: list = field(default_factory=list)
    raw_instances: int = 0
    after_score_filter: int = 0
    after_edge_removal: int = 0
    after_merge: int = 0
    features: int = 0
    edge_dropped: int = 0
    wall_time_s: float = 0.0
    config: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def filter_by_score(
    instances: list[InstancePrediction], threshold: float
) -> list[InstancePrediction]:
    """Keep instances whose score clears the threshold (inclusive)."""
    return [inst for inst in instances if inst.score >= threshold]


def touches_forbidden_edge(mask: np.ndarray, rect: TileRect) -> bool:
    """True when the mask touches a tile edge that is not the mosaic boundary."""
    if not rect.touches_left and mask[:, 0].any():
        return True
    if not rect.touches_top and mask[0, :].any():
        return True
    if not rect.touches_right and mask[:, -1].any():
        return True
    if not rect.touches_bottom and mask[-1, :].any():
        return True
    return False


def place_instance(pred: InstancePrediction, rect: TileRect) -> PlacedInstance | None:
    """Decode a tile prediction into the mosaic frame, cropped to content."""
    mask = rle_decode(pred.mask)
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if rows.size == 0:
        return None
    r0, r1 = rows[0], rows[-1] + 1
    c0, c1 = cols[0], cols[-1] + 1
    return PlacedInstance(
        score=pred.score,
        mask=mask[r0:r1, c0:c1].copy(),
        x0=rect.x0 + int(c0),
        y0=rect.y0 + int(r0),
    )


def _placed_iou(a: PlacedInstance, b: PlacedInstance) -> float:
    ax0, ay0, ax1, ay1 = a.bbox
    bx0, by0, bx1, by1 = b.bbox
    ix0, iy0 = max(ax0, bx0), max(ay0, by0)
    ix1, iy1 = min(ax1, bx1), min(ay1, by1)
    if ix0 >= ix1 or iy0 >= iy1:
        return 0.0
    sa = a.mask[iy0 - a.y0 : iy1 - a.y0, ix0 - a.x0 : ix1 - a.x0]
    sb = b.mask[iy0 - b.y0 : iy1 - b.y0, ix0 - b.x0 : ix1 - b.x0]
    inter = int(np.count_nonzero(sa & sb))
    if inter == 0:
        return 0.0
    union = a.pixel_count + b.pixel_count - inter
    return inter / union


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def _fuse_group(members: list[PlacedInstance]) -> PlacedInstance:
    x0 = min(m.x0 for m in members)
    y0 = min(m.y0 for m in members)
    x1 = max(m.bbox[2] for m in members)
    y1 = max(m.bbox[3] for m in members)
    mask = np.zeros((y1 - y0, x1 - x0), dtype=bool)
    for m in members:
        mask[m.y0 - y0 : m.y0 - y0 + m.mask.shape[0], m.x0 - x0 : m.x0 - x0 + m.mask.shape[1]] |= m.mask
    return PlacedInstance(score=max(m.score for m in members), mask=mask, x0=x0, y0=y0)


def _canonical_order(instances: list[PlacedInstance]) -> list[PlacedInstance]:
    return sorted(
        instances, key=lambda m: (m.y0, m.x0, -m.score, m.mask.shape[0], m.mask.shape[1])
    )


def merge_instances(
    instances: list[PlacedInstance], merge_iou: float
) -> list[PlacedInstance]:
    """Fuse duplicates detected across overlapping tiles.

    Connected components of the IoU >= merge_iou graph are unioned (mask OR,
    score max); fusion repeats until no pair clears the threshold, so the
    operation is idempotent, and the canonical input ordering makes it
    independent of instance order.
    """
    current = _canonical_order(instances)
    while True:
        n = len(current)
        if n <= 1:
            return current
        uf = _UnionFind(n)
        # Candidate pairs via bbox sweep over x intervals.
        order = sorted(range(n), key=lambda i: current[i].bbox[0])
        any_merge = False
        for a_pos, i in enumerate(order):
            bi = current[i].bbox
            for j in order[a_pos + 1 :]:
                bj = current[j].bbox
                if bj[0] >= bi[2]:
                    break
                if bj[1] >= bi[3] or bj[3] <= bi[1]:
                    continue
                if _placed_iou(current[i], current[j]) >= merge_iou:
                    uf.union(i, j)
                    any_merge = True
        if not any_merge:
            return current
        groups: dict[int, list[PlacedInstance]] = {}
        for i in range(n):
            groups.setdefault(uf.find(i), []).append(current[i])
        current = _canonical_order([_fuse_group(g) for g in groups.values()])


def run_inference(
    ortho: GeoRaster,
    backend: SegmentationBackend,
    config: InferenceConfig = InferenceConfig(),
    chm: GeoRaster | None = None,
    workers: int = 1,
) -> tuple[list[CrownFeature], RunReport]:
    """Run the full tiled-inference pipeline over an orthomosaic."""
    start = time.monotonic()
    if backend.needs_chm:
        if chm is None:
            raise ValidationError(f"backend {backend.name!r} requires a CHM raster")
        if chm.pixels.shape[:2] != ortho.pixels.shape[:2] or chm.transform != ortho.transform:
            raise ValidationError("CHM must share the orthomosaic grid and transform")

    grid = compute_tile_grid(ortho.width, ortho.height, config.tile_size, config.overlap)
    report = RunReport(tile_count=len(grid), config=config.as_dict())

    def predict(indexed):
        index, rect = indexed
        tile_id = f"tile_{index:05d}"
        rgb = extract_tile(ortho, rect) if backend.needs_rgb else None
        chm_tile = extract_tile(chm, rect) if chm is not None and backend.needs_chm else None
        try:
            return index, rect, backend.predict_tile(tile_id, rgb, chm_tile), None
        except BackendError as exc:
            return index, rect, [], str(exc)

    parallel_ok = workers > 1 and not isinstance(backend, _external_backend_type())
    if parallel_ok:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(predict, enumerate(grid)))
    else:
        results = [predict(item) for item in enumerate(grid)]
    results.sort(key=lambda r: r[0])

    placed: list[PlacedInstance] = []
    for index, rect, preds, error in results:
        if error is not None:
            report.failed_tiles.append({"tile_index": index, "error": error})
            continue
        report.raw_instances += len(preds)
        kept = filter_by_score(preds, config.score_threshold)
        report.after_score_filter += len(kept)
        for pred in kept:
            mask = rle_decode(pred.mask)
            if touches_forbidden_edge(mask, rect):
                report.edge_dropped += 1
                continue
            inst = place_instance(pred, rect)
            if inst is not None:
                placed.append(inst)
    report.after_edge_removal = len(placed)
    if report.failed_tiles and len(report.failed_tiles) == len(grid):
        raise PipelineError("all tiles failed; see report for diagnostics")

    fused = merge_instances(placed, config.merge_iou)
    report.after_merge = len(fused)

    polygons = []
    for inst in fused:
        tile_transform = ortho.transform.translated(inst.x0, inst.y0)
        try:
            poly = vectorize_mask(inst.mask, tile_transform)
        except ValidationError:
            continue
        polygons.append(
            PolygonGeo(exterior=poly.exterior, score=inst.score, feature_id=None)
        )

    resolved = resolve_overlaps(polygons, min_crown_area=config.min_crown_area)
    features = [
        CrownFeature(
            feature_id=f"crown_{i:05d}",
            polygon=PolygonGeo(
                exterior=poly.exterior, score=poly.score, feature_id=f"crown_{i:05d}"
            ),
            score=poly.score if poly.score is not None else 0.0,
            area_m2=poly.area,
            centroid=poly.centroid,
        )
        for i, poly in enumerate(resolved)
    ]
    report.features = len(features)
    report.wall_time_s = time.monotonic() - start
    return features, report


def _external_backend_type():
    from .backends.external import ExternalBackend

    return ExternalBackend


def match_features_to_truth(
    features: list[CrownFeature], truth: list[PolygonGeo], iou_threshold: float = 0.5
) -> list[tuple[int, int, float]]:
    """Greedy one-to-one matching of output crowns to reference polygons."""
    pairs = []
    for i, feat in enumerate(features):
        for j, ref in enumerate(truth):
            iou = polygon_iou(feat.polygon, ref)
            if iou >= iou_threshold:
                pairs.append((iou, i, j))
    pairs.sort(reverse=True)
    used_f, used_t, out = set(), set(), []
    for iou, i, j in pairs:
        if i in used_f or j in used_t:
            continue
        used_f.add(i)
        used_t.add(j)
        out.append((i, j, iou))
    return out
