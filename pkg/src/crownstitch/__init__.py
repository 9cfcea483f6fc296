"""crownstitch: tree-crown instance segmentation pipeline toolkit.

Dataset construction, tiled inference with pluggable segmentation backends,
cross-tile instance fusion, polygon post-processing, canopy height models,
and COCO-protocol evaluation.
"""

from .errors import (
    BackendError,
    CrownstitchError,
    GeoreferenceError,
    PipelineError,
    ProtocolError,
    ValidationError,
)
from .masks import RlePayload, mask_iou, rle_decode, rle_encode
from .polygons import PolygonGeo, clip_polygon_to_rect, polygon_iou, resolve_overlaps, vectorize_mask
from .raster import (
    AffineTransform,
    GeoRaster,
    TileImage,
    TileRect,
    compute_chm,
    compute_tile_grid,
    extract_tile,
)
from .pipeline import (
    CrownFeature,
    InferenceConfig,
    PlacedInstance,
    RunReport,
    match_features_to_truth,
    merge_instances,
    run_inference,
)
from .evaluation import EvalItem, EvalResult, evaluate_coco, evaluate_polygons
from .dataset import (
    CocoDataset,
    CrownAnnotationSet,
    SplitManifest,
    build_coco_dataset,
    load_crown_annotations,
    read_coco,
    write_coco,
)
from .backends import (
    ExternalBackend,
    FixtureBackend,
    InstancePrediction,
    SegmentationBackend,
    WatershedBackend,
    WatershedParams,
    watershed_segment,
)
from .synthetic import SyntheticCrown, make_synthetic_forest

__version__ = "0.1.0"

__all__ = [
    "AffineTransform",
    "BackendError",
    "CocoDataset",
    "CrownAnnotationSet",
    "CrownFeature",
    "CrownstitchError",
    "EvalItem",
    "EvalResult",
    "ExternalBackend",
    "FixtureBackend",
    "GeoRaster",
    "GeoreferenceError",
    "InferenceConfig",
    "InstancePrediction",
    "PipelineError",
    "PlacedInstance",
    "PolygonGeo",
    "ProtocolError",
    "RlePayload",
    "RunReport",
    "SegmentationBackend",
    "SplitManifest",
    "SyntheticCrown",
    "TileImage",
    "TileRect",
    "ValidationError",
    "WatershedBackend",
    "WatershedParams",
    "build_coco_dataset",
    "clip_polygon_to_rect",
    "compute_chm",
    "compute_tile_grid",
    "evaluate_coco",
    "evaluate_polygons",
    "extract_tile",
    "load_crown_annotations",
    "make_synthetic_forest",
    "mask_iou",
    "match_features_to_truth",
    "merge_instances",
    "polygon_iou",
    "read_coco",
    "resolve_overlaps",
    "rle_decode",
    "rle_encode",
    "run_inference",
    "vectorize_mask",
    "watershed_segment",
    "write_coco",
]
