"""COCO-format tiled training dataset construction and (de)serialization."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ValidationError
from .geojson_io import read_feature_collection
from .polygons import PolygonGeo, clip_polygon_to_rect
from .raster import GeoRaster, compute_tile_grid, extract_tile

CATEGORY = {"id": 1, "name": "tree crown"}
DEFAULT_MIN_FRAGMENT_AREA = 64.0  # px², suppresses sliver fragments at tile borders
SPLIT_ROLES = ("train", "val", "test")


@dataclass
class CrownAnnotationSet:
    crowns: list[PolygonGeo]
    crs: str
    source_site: str = ""


@dataclass
class CocoDataset:
    images: list[dict]
    annotations: list[dict]
    categories: list[dict] = field(default_factory=lambda: [dict(CATEGORY)])

    def validate(self) -> None:
        if len(self.categories) != 1 or self.categories[0]["id"] != 1:
            raise ValidationError("dataset must have exactly one category (tree crown)")
        image_ids = {img["id"] for img in self.images}
        for ann in self.annotations:
            if ann["image_id"] not in image_ids:
                raise ValidationError(f"annotation {ann['id']} references missing image")
            if ann["area"] <= 0:
                raise ValidationError(f"annotation {ann['id']} has non-positive area")


def load_crown_annotations(path, crs: str | None = None, source_site: str = "") -> CrownAnnotationSet:
    """Load crown polygons from a GeoJSON FeatureCollection."""
    polys, file_crs = read_feature_collection(path, crs=crs)
    return CrownAnnotationSet(
        crowns=polys, source_site=source_site or Path(path).stem, crs=file_crs
    )


def _annotation_from_fragment(frag: PolygonGeo, ann_id: int, image_id: int) -> dict:
    pts = np.asarray(frag.exterior[:-1], dtype=float)
    xs, ys = pts[:, 0], pts[:, 1]
    seg = [float(v) for xy in pts for v in xy]
    return {
        "id": ann_id,
        "image_id": image_id,
        "category_id": 1,
        "segmentation": [seg],
        "area": float(frag.area),
        "bbox": [
            float(xs.min()),
            float(ys.min()),
            float(xs.max() - xs.min()),
            float(ys.max() - ys.min()),
        ],
        "iscrowd": 0,
    }


def build_coco_dataset(
    ortho: GeoRaster,
    crowns: CrownAnnotationSet,
    tile_size: int = 1024,
    overlap: float = 0.5,
    min_fragment_area: float = DEFAULT_MIN_FRAGMENT_AREA,
) -> tuple[CocoDataset, list]:
    """Tile the orthomosaic and clip crowns into per-tile COCO annotations.

    Returns the dataset plus the extracted tiles (same order as the image
    entries). Tiles without any crowns are kept as negative examples.
    Everything is deterministic: tile ids follow row-major grid order and
    annotation ids follow (tile, input crown, fragment) order.
    """
    if crowns.crs != ortho.crs:
        raise ValidationError(f"CRS mismatch: ortho {ortho.crs!r} vs crowns {crowns.crs!r}")
    grid = compute_tile_grid(ortho.width, ortho.height, tile_size, overlap)
    n_cols = sum(1 for r in grid if r.y0 == grid[0].y0)

    # Crowns in orthomosaic pixel coordinates, clipped per tile.
    t = ortho.transform
    pixel_crowns = [c.mapped(lambda x, y: t.world_to_pixel(x, y)) for c in crowns.crowns]

    images, annotations, tiles = [], [], []
    ann_id = 1
    for index, rect in enumerate(grid):
        row, col = divmod(index, n_cols)
        image_id = index + 1
        file_name = f"tile_{row}_{col}.png"
        images.append(
            {"id": image_id, "file_name": file_name, "width": tile_size, "height": tile_size}
        )
        tiles.append(extract_tile(ortho, rect))
        tile_box = (float(rect.x0), float(rect.y0), float(rect.x1), float(rect.y1))
        for crown in pixel_crowns:
            for frag in clip_polygon_to_rect(crown, tile_box, min_fragment_area):
                local = frag.mapped(lambda x, y: (x - rect.x0, y - rect.y0))
                annotations.append(_annotation_from_fragment(local, ann_id, image_id))
                ann_id += 1

    dataset = CocoDataset(images=images, annotations=annotations)
    dataset.validate()
    return dataset, tiles


def write_coco(dataset: CocoDataset, tiles, out_dir) -> Path:
    """Write annotations.json plus images/<file_name> PNG tiles."""
    dataset.validate()
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    for img, tile in zip(dataset.images, tiles):
        pixels = tile.pixels
        if pixels.dtype != np.uint8:
            pixels = np.clip(pixels, 0, 255).astype(np.uint8)
        Image.fromarray(pixels).save(out_dir / "images" / img["file_name"])
    payload = {
        "images": dataset.images,
        "annotations": dataset.annotations,
        "categories": dataset.categories,
    }
    path = out_dir / "annotations.json"
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def read_coco(in_dir) -> CocoDataset:
    """Read a dataset directory back; errors list any missing tile files."""
    in_dir = Path(in_dir)
    payload = json.loads((in_dir / "annotations.json").read_text())
    dataset = CocoDataset(
        images=payload["images"],
        annotations=payload["annotations"],
        categories=payload["categories"],
    )
    dataset.validate()
    missing = [
        img["file_name"]
        for img in dataset.images
        if not (in_dir / "images" / img["file_name"]).exists()
    ]
    if missing:
        raise ValidationError("missing tile files: " + ", ".join(missing))
    return dataset


@dataclass
class SplitManifest:
    """Site-level train/val/test assignment (never split by tile)."""

    roles: dict  # site -> role
    tile_counts: dict = field(default_factory=dict)  # role -> count

    def __post_init__(self):
        for site, role in self.roles.items():
            if role not in SPLIT_ROLES:
                raise ValidationError(f"site {site!r}: unknown role {role!r}")

    def to_json(self) -> str:
        return json.dumps(
            {"roles": self.roles, "tile_counts": self.tile_counts}, indent=2, sort_keys=True
        )

    @classmethod
    def from_json(cls, text: str) -> "SplitManifest":
        obj = json.loads(text)
        return cls(roles=obj["roles"], tile_counts=obj.get("tile_counts", {}))
