"""Segmentation backends: watershed baseline, fixture replay, external process."""

from .base import InstancePrediction, SegmentationBackend
from .fixture import FixtureBackend
from .watershed import WatershedBackend, WatershedParams, watershed_segment
from .external import ExternalBackend

__all__ = [
    "InstancePrediction",
    "SegmentationBackend",
    "FixtureBackend",
    "WatershedBackend",
    "WatershedParams",
    "watershed_segment",
    "ExternalBackend",
]

BUILTIN_BACKENDS = {
    "watershed": "classical CHM watershed baseline (requires --chm)",
    "fixture:<dir>": "replays stored per-tile predictions from a directory",
    'external:"<command>"': "subprocess speaking the JSON-lines wire protocol",
}
